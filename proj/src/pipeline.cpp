#include "foveate/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "foveate/error.hpp"

namespace foveate::pipeline {
namespace fs = std::filesystem;

std::string StageError::describe() const {
  std::ostringstream os;
  os << "stage '" << stage << "' failed";
  if (!class_label.empty()) os << " for class " << class_label;
  if (cluster >= 0) os << " cluster " << cluster;
  os << ": " << message;
  return os.str();
}

namespace {

void validate(const PipelineConfig& c) {
  if (c.node_count == 0) throw InvalidArgument("node_count must be positive");
  if (!(c.fovea_radius > 0.0 && c.fovea_radius < 1.0)) throw InvalidArgument("fovea_radius must be in (0, 1)");
  if (!(c.retina_radius_px > 0.0)) throw InvalidArgument("retina_radius_px must be positive");
  if (c.crop_size < 1) throw InvalidArgument("crop_size must be positive");
  if (c.cortical_dims.rows < 4 || c.cortical_dims.cols < 8) throw InvalidArgument("cortical_dims too small");
  if (!(c.alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  if (!(c.k_fraction > 0.0)) throw InvalidArgument("k_fraction must be positive");
  if (!(c.sigma_grid > 0.0)) throw InvalidArgument("sigma_grid must be positive");
  if (!(c.receptive_width > 0.0)) throw InvalidArgument("receptive_width must be positive");
  if (c.subsample_factor && *c.subsample_factor < 1) throw InvalidArgument("subsample_factor must be positive");
}

std::string cluster_stem(const std::string& label, std::size_t cluster) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_c%03zu", cluster);
  return label + buf;
}

struct ClusterRow {
  std::string class_label;
  std::size_t cluster = 0;
  std::size_t members = 0;
  PixelPoint centroid;
  gaze::Placement placement;
};

void write_cluster_table(const fs::path& path, const std::vector<ClusterRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.precision(10);
  out << "class_label,cluster,members,centroid_row,centroid_col,crop_row0,crop_col0,crop_size,fixation_row,"
         "fixation_col,hull_outside_retina\n";
  for (const auto& r : rows) {
    out << r.class_label << ',' << r.cluster << ',' << r.members << ',' << r.centroid.row << ',' << r.centroid.col
        << ',' << r.placement.rect.row0 << ',' << r.placement.rect.col0 << ',' << r.placement.rect.rows << ','
        << r.placement.fixation_px.row << ',' << r.placement.fixation_px.col << ','
        << (r.placement.hull_outside_retina ? 1 : 0) << '\n';
  }
}

}  // namespace

cortex::CorticalImage render_cortical(const PipelineConfig& config, const retina::ImageVector& iv,
                                      const cortex::CorticalMap& map) {
  cortex::CorticalImage img = config.grid_dims ? cortex::grid_cortical_image(iv, map, config.sigma_grid, *config.grid_dims)
                                               : cortex::splat_cortical_image(iv, map, config.sigma_grid);
  if (config.subsample_factor && *config.subsample_factor > 1) img = cortex::subsample_cortical(img, *config.subsample_factor);
  return img;
}

PipelineResult run_pipeline(const PipelineConfig& config, const std::vector<fs::path>& fixation_logs,
                            const fs::path& image_dir, const fs::path& out_dir,
                            const std::map<std::string, gaze::Homography>& homographies) {
  validate(config);
  PipelineResult result;

  // Group records by class in order of first appearance across the logs.
  std::vector<std::string> classes;
  std::map<std::string, std::vector<gaze::FixationRecord>> by_class;
  for (const auto& log : fixation_logs) {
    try {
      for (auto& rec : gaze::parse_fixation_log(log)) {
        if (!by_class.contains(rec.class_label)) classes.push_back(rec.class_label);
        by_class[rec.class_label].push_back(std::move(rec));
      }
    } catch (const Error& e) {
      result.errors.push_back({"parse", "", -1, log.string() + ": " + e.what()});
    }
  }

  const retina::RetinaTessellation tess = retina::generate_tessellation(config.node_count, config.fovea_radius);
  const cortex::CorticalMap map = cortex::cortical_coordinates(tess, config.alpha, config.cortical_dims);
  const ImageDims crop_dims{config.crop_size, config.crop_size};
  const PixelPoint crop_fixation{static_cast<double>(config.crop_size / 2), static_cast<double>(config.crop_size / 2)};
  retina::FieldOptions field_opts;
  field_opts.width_factor = config.receptive_width;
  const retina::ReceptiveFieldSet fields =
      retina::compute_receptive_fields(tess, config.retina_radius_px, crop_dims, crop_fixation, field_opts);

  fs::create_directories(out_dir);
  std::vector<gaze::LabeledItem> items;
  std::vector<ClusterRow> cluster_rows;

  for (const auto& label : classes) {
    const auto& records = by_class[label];
    ClassSummary summary{label, records.size(), 0, 0};

    std::vector<PixelPoint> points;
    try {
      points = gaze::composite_fixations(records, homographies, config.strict_homographies);
    } catch (const Error& e) {
      result.errors.push_back({"composite", label, -1, e.what()});
      result.classes.push_back(summary);
      continue;
    }

    gaze::KMeansOptions kopts;
    kopts.k_fraction = config.k_fraction;
    kopts.seed = config.seed;
    gaze::ClusteringResult clustering;
    try {
      clustering = gaze::kmeans(points, kopts);
    } catch (const Error& e) {
      result.errors.push_back({"cluster", label, -1, e.what()});
      result.classes.push_back(summary);
      continue;
    }
    summary.clusters = clustering.clusters.size();

    // The composite frame is the reference image: the first record's image.
    const fs::path image_path = image_dir / records.front().image_path;
    Image image;
    try {
      if (!fs::exists(image_path)) throw IoError("missing image file " + image_path.string());
      image = read_png(image_path);
    } catch (const Error& e) {
      result.errors.push_back({"load_image", label, -1, e.what()});
      result.classes.push_back(summary);
      continue;
    }

    for (std::size_t c = 0; c < clustering.clusters.size(); ++c) {
      const auto& cluster = clustering.clusters[c];
      const std::string stem = cluster_stem(label, c);
      std::string stage = "place_retina";
      try {
        const gaze::Placement placement =
            gaze::place_retina(cluster, image.dims(), config.crop_size, config.allow_padding);
        stage = "crop";
        const Image crop = gaze::extract_crop(image, placement.rect, config.allow_padding);
        if (config.write_crops) {
          const fs::path crop_path = out_dir / "crops" / label / (stem + ".png");
          fs::create_directories(crop_path.parent_path());
          write_png(crop_path, crop);
        }
        stage = "sample";
        const retina::ImageVector iv = retina::sample(crop, fields);
        const fs::path iv_path = out_dir / "imagevectors" / label / (stem + ".riv");
        fs::create_directories(iv_path.parent_path());
        retina::write_image_vector(iv_path, iv);

        stage = "cortical";
        const cortex::CorticalImage cimg = render_cortical(config, iv, map);
        const fs::path rel = fs::path("cortical") / label / (stem + ".png");
        fs::create_directories((out_dir / rel).parent_path());
        cortex::write_cortical_png(out_dir / rel, cimg);
        cortex::write_weight_file(out_dir / "cortical" / label / (stem + ".w"), cimg);

        items.push_back({rel.generic_string(), label});
        cluster_rows.push_back({label, c, cluster.member_indices.size(), cluster.centroid_px, placement});
        ++summary.cortical_images;
      } catch (const std::exception& e) {
        result.errors.push_back({stage, label, static_cast<int>(c), e.what()});
      }
    }
    result.classes.push_back(summary);
  }

  try {
    result.manifest = gaze::split_dataset(items, config.split_fractions, config.seed, &classes);
    gaze::write_manifest(out_dir / "manifest.csv", result.manifest);
    write_cluster_table(out_dir / "clusters.csv", cluster_rows);
  } catch (const Error& e) {
    result.errors.push_back({"split", "", -1, e.what()});
  }
  return result;
}

BenchReport bench_reduction(const PipelineConfig& config) {
  BenchReport r;
  const auto crop = static_cast<std::size_t>(config.crop_size);
  r.crop_values = crop * crop * 3;
  r.cortical_values = static_cast<std::size_t>(config.cortical_dims.rows) * config.cortical_dims.cols * 3;
  r.node_values = config.node_count * 3;
  const double half = static_cast<double>(config.crop_size) / 2.0;
  r.inscribed_circle_pixels = std::numbers::pi * half * half;
  r.subsample_factor = config.subsample_factor.value_or(2);
  r.subsampled_dims = {config.cortical_dims.rows / r.subsample_factor, config.cortical_dims.cols / r.subsample_factor};
  r.gridded_dims = config.grid_dims.value_or(ImageDims{230, 345});

  const auto crop_d = static_cast<double>(r.crop_values);
  r.crop_to_cortical = crop_d / static_cast<double>(r.cortical_values);
  r.crop_to_nodes = crop_d / static_cast<double>(r.node_values);
  r.inscribed_to_nodes = r.inscribed_circle_pixels / static_cast<double>(config.node_count);
  r.crop_to_subsampled =
      crop_d / (3.0 * static_cast<double>(r.subsampled_dims.rows) * static_cast<double>(r.subsampled_dims.cols));
  r.crop_to_gridded =
      crop_d / (3.0 * static_cast<double>(r.gridded_dims.rows) * static_cast<double>(r.gridded_dims.cols));
  return r;
}

std::string format_bench(const BenchReport& r) {
  char buf[1024];
  std::snprintf(buf, sizeof buf,
                "crop values            %zu\n"
                "cortical values        %zu\n"
                "node values            %zu\n"
                "crop / cortical        %.4f\n"
                "crop / nodes           %.4f\n"
                "inscribed / nodes      %.4f\n"
                "crop / subsampled      %.4f  (factor %d -> %dx%d)\n"
                "crop / gridded         %.4f  (%dx%d)\n",
                r.crop_values, r.cortical_values, r.node_values, r.crop_to_cortical, r.crop_to_nodes,
                r.inscribed_to_nodes, r.crop_to_subsampled, r.subsample_factor, r.subsampled_dims.rows,
                r.subsampled_dims.cols, r.crop_to_gridded, r.gridded_dims.rows, r.gridded_dims.cols);
  return buf;
}

}  // namespace foveate::pipeline
