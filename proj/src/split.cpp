#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "foveate/error.hpp"
#include "foveate/gaze.hpp"

namespace foveate::gaze {

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw InvalidArgument("unknown split '" + s + "'");
}

std::array<std::size_t, 3> split_counts(std::size_t n, const std::array<double, 3>& fractions) {
  const double sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("split fractions must sum to 1");
  for (double f : fractions) {
    if (f < 0.0) throw InvalidArgument("split fractions must be non-negative");
  }

  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = fractions[i] * static_cast<double>(n);
    // Guard against quotas like 179.99999999999997 for an exact 180.
    const double whole = std::floor(quota + 1e-9);
    counts[i] = static_cast<std::size_t>(whole);
    remainder[i] = std::max(0.0, quota - whole);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3, ++assigned) ++counts[order[k]];
  return counts;
}

DatasetManifest split_dataset(const std::vector<LabeledItem>& items, const std::array<double, 3>& fractions,
                              std::uint64_t seed, const std::vector<std::string>* classes) {
  DatasetManifest manifest;
  manifest.split_fractions = fractions;
  manifest.seed = seed;
  if (classes) {
    manifest.classes = *classes;
  } else {
    manifest.classes.clear();
    for (const auto& item : items) {
      if (std::find(manifest.classes.begin(), manifest.classes.end(), item.class_label) == manifest.classes.end()) {
        manifest.classes.push_back(item.class_label);
      }
    }
  }
  // Validate fractions even when there is nothing to split.
  split_counts(0, fractions);

  std::mt19937_64 rng(seed);
  for (const std::string& label : manifest.classes) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (items[i].class_label == label) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), rng);
    const auto counts = split_counts(members.size(), fractions);
    std::size_t k = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t j = 0; j < counts[s]; ++j, ++k) {
        const LabeledItem& item = items[members[k]];
        manifest.entries.push_back({item.path, item.class_label, static_cast<Split>(s)});
      }
    }
  }
  for (const auto& item : items) {
    if (std::find(manifest.classes.begin(), manifest.classes.end(), item.class_label) == manifest.classes.end()) {
      throw ValidationError("label '" + item.class_label + "' is not a manifest class");
    }
  }
  return manifest;
}

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "path,class_label,split\n";
  for (const auto& e : manifest.entries) out << e.path << ',' << e.class_label << ',' << split_name(e.split) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "missing manifest header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "path,class_label,split") throw ParseError(1, "unexpected manifest header");

  DatasetManifest manifest;
  manifest.classes.clear();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = a == std::string::npos ? a : line.find(',', a + 1);
    if (b == std::string::npos || line.find(',', b + 1) != std::string::npos) {
      throw ParseError(line_no, "expected 'path,class_label,split'");
    }
    ManifestEntry e;
    e.path = line.substr(0, a);
    e.class_label = line.substr(a + 1, b - a - 1);
    try {
      e.split = parse_split(line.substr(b + 1));
    } catch (const InvalidArgument& err) {
      throw ParseError(line_no, err.what());
    }
    if (std::find(manifest.classes.begin(), manifest.classes.end(), e.class_label) == manifest.classes.end()) {
      manifest.classes.push_back(e.class_label);
    }
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

}  // namespace foveate::gaze
