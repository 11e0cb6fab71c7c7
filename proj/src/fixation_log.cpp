#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <string_view>

#include "foveate/error.hpp"
#include "foveate/gaze.hpp"

namespace foveate::gaze {
namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

template <typename T>
T parse_number(std::string_view text, std::size_t line, const char* field) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty()) {
    throw ParseError(line, std::string("invalid ") + field + " '" + std::string(text) + "'");
  }
  return value;
}

std::string_view strip_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace

std::vector<FixationRecord> parse_fixation_log(const std::filesystem::path& path,
                                               const std::vector<std::string>* classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open fixation log " + path.string());

  std::string raw;
  if (!std::getline(in, raw)) throw ParseError(1, "missing header");
  std::string_view header = strip_cr(raw);
  if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
  if (header != kFixationLogHeader) throw ParseError(1, "unexpected header '" + std::string(header) + "'");

  std::vector<FixationRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = strip_cr(raw);
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 7) {
      throw ParseError(line_no, "expected 7 fields, found " + std::to_string(f.size()));
    }
    FixationRecord rec;
    rec.observation_id = std::string(f[0]);
    rec.frame_index = parse_number<long long>(f[1], line_no, "frame_index");
    rec.timestamp_ms = parse_number<long long>(f[2], line_no, "timestamp_ms");
    rec.gaze_px.row = parse_number<double>(f[3], line_no, "gaze_row");
    rec.gaze_px.col = parse_number<double>(f[4], line_no, "gaze_col");
    rec.class_label = std::string(f[5]);
    rec.image_path = std::string(f[6]);
    if (rec.observation_id.empty()) throw ParseError(line_no, "empty observation_id");
    if (!std::isfinite(rec.gaze_px.row) || !std::isfinite(rec.gaze_px.col)) {
      throw ParseError(line_no, "gaze coordinates must be finite");
    }
    if (rec.class_label.empty()) throw ParseError(line_no, "empty class_label");
    if (classes && std::find(classes->begin(), classes->end(), rec.class_label) == classes->end()) {
      throw ValidationError("line " + std::to_string(line_no) + ": unknown class label '" + rec.class_label + "'");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_fixation_log(const std::filesystem::path& path, const std::vector<FixationRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << kFixationLogHeader << '\n';
  for (const auto& r : records) {
    out << r.observation_id << ',' << r.frame_index << ',' << r.timestamp_ms << ',' << r.gaze_px.row << ','
        << r.gaze_px.col << ',' << r.class_label << ',' << r.image_path << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace foveate::gaze
