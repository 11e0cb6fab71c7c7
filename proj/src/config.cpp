#include <charconv>
#include <fstream>
#include <sstream>

#include "foveate/error.hpp"
#include "foveate/pipeline.hpp"

namespace foveate::pipeline {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end) {
    throw InvalidArgument("invalid value '" + text + "' for " + key);
  }
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw InvalidArgument("invalid boolean '" + text + "' for " + key);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_value<int>(key, trim(item)));
  return out;
}

ImageDims parse_dims(const std::string& key, const std::string& text) {
  const auto x = text.find('x');
  if (x == std::string::npos) throw InvalidArgument(key + " must look like ROWSxCOLS");
  ImageDims d{parse_value<int>(key, text.substr(0, x)), parse_value<int>(key, text.substr(x + 1))};
  if (d.rows <= 0 || d.cols <= 0) throw InvalidArgument(key + " must be positive");
  return d;
}

}  // namespace

const std::vector<std::string>& PipelineConfig::keys() {
  static const std::vector<std::string> k = {
      "node_count",    "fovea_radius", "retina_radius_px", "crop_size",      "cortical_dims",  "alpha",
      "k_fraction",    "train_fraction", "val_fraction",   "test_fraction",  "seed",           "subsample_factor",
      "grid_dims",     "sigma_grid",   "receptive_width",  "allow_padding",  "strict_homographies",
      "write_crops",   "conv_filters", "fc_widths",        "num_classes",    "dropout_rate",   "padding",
      "batch_size",    "learning_rate", "epochs"};
  return k;
}

void PipelineConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "node_count") node_count = parse_value<std::size_t>(key, value);
  else if (key == "fovea_radius") fovea_radius = parse_value<double>(key, value);
  else if (key == "retina_radius_px") retina_radius_px = parse_value<double>(key, value);
  else if (key == "crop_size") crop_size = parse_value<int>(key, value);
  else if (key == "cortical_dims") cortical_dims = parse_dims(key, value);
  else if (key == "alpha") alpha = parse_value<double>(key, value);
  else if (key == "k_fraction") k_fraction = parse_value<double>(key, value);
  else if (key == "train_fraction") split_fractions[0] = parse_value<double>(key, value);
  else if (key == "val_fraction") split_fractions[1] = parse_value<double>(key, value);
  else if (key == "test_fraction") split_fractions[2] = parse_value<double>(key, value);
  else if (key == "seed") {
    seed = parse_value<std::uint64_t>(key, value);
    train.seed = seed;
  } else if (key == "subsample_factor") {
    const int f = parse_value<int>(key, value);
    if (f < 0) throw InvalidArgument("subsample_factor must be non-negative");
    subsample_factor = f == 0 ? std::nullopt : std::optional<int>(f);
  } else if (key == "grid_dims") {
    if (value == "none") grid_dims.reset();
    else grid_dims = parse_dims(key, value);
  } else if (key == "sigma_grid") sigma_grid = parse_value<double>(key, value);
  else if (key == "receptive_width") receptive_width = parse_value<double>(key, value);
  else if (key == "allow_padding") allow_padding = parse_bool(key, value);
  else if (key == "strict_homographies") strict_homographies = parse_bool(key, value);
  else if (key == "write_crops") write_crops = parse_bool(key, value);
  else if (key == "conv_filters") network.conv_filters = parse_int_list(key, value);
  else if (key == "fc_widths") network.fc_widths = parse_int_list(key, value);
  else if (key == "num_classes") network.num_classes = parse_value<int>(key, value);
  else if (key == "dropout_rate") network.dropout_rate = parse_value<double>(key, value);
  else if (key == "padding") {
    if (value == "same") network.padding = dcnn::Padding::same;
    else if (value == "valid") network.padding = dcnn::Padding::valid;
    else throw InvalidArgument("padding must be 'same' or 'valid'");
  } else if (key == "batch_size") train.batch_size = parse_value<int>(key, value);
  else if (key == "learning_rate") train.learning_rate = parse_value<double>(key, value);
  else if (key == "epochs") train.epochs = parse_value<int>(key, value);
  else throw InvalidArgument("unknown config key '" + key + "'");
}

std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::map<std::string, std::string> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError(line_no, "empty key");
    values[key] = trim(line.substr(eq + 1));
  }
  return values;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  PipelineConfig config;
  for (const auto& [key, value] : read_config_file(path)) config.set(key, value);
  return config;
}

}  // namespace foveate::pipeline
