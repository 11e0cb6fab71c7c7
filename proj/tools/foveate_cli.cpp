#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "foveate/cortex.hpp"
#include "foveate/dcnn.hpp"
#include "foveate/error.hpp"
#include "foveate/gaze.hpp"
#include "foveate/pipeline.hpp"
#include "foveate/retina.hpp"

namespace fs = std::filesystem;
using namespace foveate;

namespace {

constexpr int kExitStage = 1;
constexpr int kExitUsage = 2;

// Options shared by every subcommand. Only one subcommand runs per
// invocation, so a single instance backs all of them.
struct Common {
  std::string config_path;
  std::string out_dir = ".";
  std::map<std::string, std::string> overrides;
};

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

void add_common(CLI::App* sub, Common& common) {
  sub->add_option("--config", common.config_path, "key = value config file");
  sub->add_option("--out-dir", common.out_dir, "output directory");
  for (const auto& key : pipeline::PipelineConfig::keys()) {
    sub->add_option_function<std::string>(
           dashed(key), [&common, key](const std::string& v) { common.overrides[key] = v; }, "config override")
        ->group("Config overrides");
  }
}

// Raised for bad flags or config so main can map it to exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

pipeline::PipelineConfig resolve_config(const Common& common) {
  try {
    pipeline::PipelineConfig cfg;
    if (!common.config_path.empty()) cfg = pipeline::load_config(common.config_path);
    for (const auto& [k, v] : common.overrides) cfg.set(k, v);
    return cfg;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

PixelPoint parse_point(const std::string& text) {
  const auto comma = text.find(',');
  if (comma == std::string::npos) throw UsageError("expected ROW,COL but got '" + text + "'");
  try {
    return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
  } catch (const std::exception&) {
    throw UsageError("expected ROW,COL but got '" + text + "'");
  }
}

fs::path output_path(const Common& common, const std::string& explicit_path, const std::string& fallback) {
  const fs::path p = explicit_path.empty() ? fs::path(common.out_dir) / fallback : fs::path(explicit_path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  return p;
}

retina::RetinaTessellation load_or_generate(const std::string& path, const pipeline::PipelineConfig& cfg) {
  if (!path.empty()) return retina::read_tessellation(path);
  return retina::generate_tessellation(cfg.node_count, cfg.fovea_radius);
}

retina::FieldOptions field_options(const pipeline::PipelineConfig& cfg) {
  retina::FieldOptions o;
  o.width_factor = cfg.receptive_width;
  return o;
}

std::vector<gaze::FixationRecord> read_logs(const std::vector<std::string>& logs, const std::string& only_class) {
  std::vector<gaze::FixationRecord> all;
  for (const auto& log : logs) {
    for (auto& r : gaze::parse_fixation_log(log)) {
      if (only_class.empty() || r.class_label == only_class) all.push_back(std::move(r));
    }
  }
  return all;
}

std::map<std::string, gaze::Homography> maybe_homographies(const std::string& path) {
  if (path.empty()) return {};
  return gaze::read_homographies(path);
}

dcnn::Dataset load_split(const gaze::DatasetManifest& manifest, const fs::path& root, std::optional<gaze::Split> split) {
  dcnn::Dataset data;
  data.num_classes = static_cast<int>(manifest.classes.size());
  for (const auto& e : manifest.entries) {
    if (split && e.split != *split) continue;
    const Image img = read_png(root / e.path);
    const dcnn::Shape3 shape{img.rows(), img.cols(), img.channels()};
    if (data.labels.empty()) data.shape = shape;
    else if (shape != data.shape) throw ValidationError("image " + e.path + " does not match the first image's shape");
    const auto label = std::find(manifest.classes.begin(), manifest.classes.end(), e.class_label) - manifest.classes.begin();
    data.add(img.data(), static_cast<int>(label));
  }
  return data;
}

void print_evaluation(const dcnn::Evaluation& ev, const std::vector<std::string>& classes) {
  std::printf("accuracy %.4f  macro-F1 %.4f\n", ev.accuracy, ev.macro_f1);
  for (std::size_t c = 0; c < classes.size(); ++c) std::printf("  %-10s F1 %.4f\n", classes[c].c_str(), ev.per_class_f1[c]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Foveated retina sampling, cortical mapping and DCNN training"};
  app.require_subcommand(1);
  Common common;

  // tessellate
  std::string tess_out;
  auto* tessellate = app.add_subcommand("tessellate", "Generate a retina tessellation");
  tessellate->add_option("-o,--output", tess_out, "tessellation text file");

  // fields
  std::string fields_tess, fields_out, fields_fix;
  std::vector<int> fields_dims;
  auto* fields = app.add_subcommand("fields", "Compute receptive fields and write a per-node table");
  fields->add_option("--tessellation", fields_tess);
  fields->add_option("--dims", fields_dims, "image ROWS COLS (default crop size)")->expected(2);
  fields->add_option("--fixation", fields_fix, "ROW,COL (default image centre)");
  fields->add_option("-o,--output", fields_out);

  // sample
  std::string sample_image, sample_tess, sample_fix, sample_out;
  auto* sample = app.add_subcommand("sample", "Sample an image into an imagevector");
  sample->add_option("--image", sample_image)->required();
  sample->add_option("--tessellation", sample_tess);
  sample->add_option("--fixation", sample_fix, "ROW,COL (default image centre)");
  sample->add_option("-o,--output", sample_out);

  // backproject
  std::string bp_iv, bp_tess, bp_out, bp_fix;
  std::vector<int> bp_dims;
  auto* backproject = app.add_subcommand("backproject", "Render an imagevector back into image space");
  backproject->add_option("--imagevector", bp_iv)->required();
  backproject->add_option("--tessellation", bp_tess);
  backproject->add_option("--dims", bp_dims, "canvas ROWS COLS (default crop size)")->expected(2);
  backproject->add_option("--fixation", bp_fix, "ROW,COL used when sampling (default canvas centre)");
  backproject->add_option("-o,--output", bp_out);

  // cortical / subsample / grid share inputs
  std::string cx_iv, cx_tess, cx_out;
  auto add_cortical_inputs = [&](CLI::App* sub) {
    sub->add_option("--imagevector", cx_iv)->required();
    sub->add_option("--tessellation", cx_tess);
    sub->add_option("-o,--output", cx_out);
  };
  auto* cortical = app.add_subcommand("cortical", "Splat an imagevector onto the cortical grid");
  add_cortical_inputs(cortical);
  int sub_factor = 2;
  auto* subsample = app.add_subcommand("subsample", "Cortical image reduced by a block mean");
  add_cortical_inputs(subsample);
  subsample->add_option("--factor", sub_factor);
  std::vector<int> grid_target{230, 345};
  auto* grid = app.add_subcommand("grid", "Grid an imagevector onto a smaller cortical grid");
  add_cortical_inputs(grid);
  grid->add_option("--dims", grid_target, "target ROWS COLS")->expected(2);

  // cluster
  std::vector<std::string> cl_logs;
  std::string cl_hom, cl_class;
  auto* cluster = app.add_subcommand("cluster", "Composite fixations and cluster them per class");
  cluster->add_option("--log", cl_logs, "fixation CSV (repeatable)")->required();
  cluster->add_option("--homographies", cl_hom);
  cluster->add_option("--class", cl_class, "restrict to one class");

  // crop
  std::string crop_image, crop_center, crop_hom, crop_class;
  std::vector<std::string> crop_logs;
  auto* crop = app.add_subcommand("crop", "Cut retina-sized crops around fixation clusters");
  crop->add_option("--image", crop_image)->required();
  crop->add_option("--center", crop_center, "single ROW,COL instead of clustering");
  crop->add_option("--log", crop_logs, "fixation CSV (repeatable)");
  crop->add_option("--homographies", crop_hom);
  crop->add_option("--class", crop_class);

  // split
  std::string split_scan, split_items;
  auto* split = app.add_subcommand("split", "Seeded per-class train/val/test split");
  split->add_option("--scan", split_scan, "directory of <class>/*.png");
  split->add_option("--items", split_items, "CSV with header path,class_label");

  // train
  std::string train_manifest, train_root;
  auto* train = app.add_subcommand("train", "Train the DCNN on a manifest's train split");
  train->add_option("--manifest", train_manifest)->required();
  train->add_option("--root", train_root, "base for manifest paths (default: manifest directory)");

  // eval
  std::string eval_manifest, eval_root, eval_ckpt, eval_split = "test";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on one manifest split");
  eval->add_option("--manifest", eval_manifest)->required();
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--root", eval_root);
  eval->add_option("--split", eval_split)->check(CLI::IsMember({"train", "val", "test"}));

  // pipeline
  std::vector<std::string> pl_logs;
  std::string pl_images, pl_hom;
  auto* pipe = app.add_subcommand("pipeline", "Run logs -> clusters -> crops -> imagevectors -> cortical images");
  pipe->add_option("--log", pl_logs, "fixation CSV (repeatable)")->required();
  pipe->add_option("--images", pl_images, "directory the logs' image paths are relative to")->required();
  pipe->add_option("--homographies", pl_hom);

  // bench
  auto* bench = app.add_subcommand("bench", "Report data-reduction ratios for the configured geometry");

  // viz
  std::string viz_what, viz_tess, viz_iv, viz_out;
  int viz_canvas = 1024;
  auto* viz = app.add_subcommand("viz", "Render a tessellation, backprojection or cortical image");
  viz->add_option("what", viz_what)->required()->check(CLI::IsMember({"tessellation", "backprojection", "cortical"}));
  viz->add_option("--tessellation", viz_tess);
  viz->add_option("--imagevector", viz_iv);
  viz->add_option("--canvas", viz_canvas, "tessellation canvas size");
  viz->add_option("-o,--output", viz_out);

  for (auto* sub : app.get_subcommands({})) add_common(sub, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const pipeline::PipelineConfig cfg = resolve_config(common);
    const ImageDims crop_dims{cfg.crop_size, cfg.crop_size};

    if (*tessellate) {
      const auto tess = retina::generate_tessellation(cfg.node_count, cfg.fovea_radius);
      const fs::path out = output_path(common, tess_out, "tessellation.txt");
      retina::write_tessellation(out, tess);
      std::printf("%zu nodes -> %s\n", tess.node_count(), out.string().c_str());
    } else if (*fields) {
      const auto tess = load_or_generate(fields_tess, cfg);
      const ImageDims dims = fields_dims.empty() ? crop_dims : ImageDims{fields_dims[0], fields_dims[1]};
      const PixelPoint fix = fields_fix.empty() ? PixelPoint{dims.rows / 2.0, dims.cols / 2.0} : parse_point(fields_fix);
      const auto set = retina::compute_receptive_fields(tess, cfg.retina_radius_px, dims, fix, field_options(cfg));
      const fs::path out = output_path(common, fields_out, "fields.csv");
      std::ofstream os(out);
      if (!os) throw IoError("cannot open " + out.string());
      os.precision(10);
      os << "node,center_row,center_col,sigma_px,row0,col0,rows,cols,empty\n";
      for (const auto& f : set.fields) {
        os << f.node_index << ',' << f.center_px.row << ',' << f.center_px.col << ',' << f.sigma_px << ',' << f.row0
           << ',' << f.col0 << ',' << f.rows << ',' << f.cols << ',' << (f.empty() ? 1 : 0) << '\n';
      }
      std::printf("%zu fields (%zu empty) -> %s\n", set.fields.size(), set.empty_count(), out.string().c_str());
    } else if (*sample) {
      const Image img = read_png(sample_image);
      const auto tess = load_or_generate(sample_tess, cfg);
      const PixelPoint fix = sample_fix.empty() ? PixelPoint{static_cast<double>(img.rows() / 2), static_cast<double>(img.cols() / 2)}
                                                : parse_point(sample_fix);
      const auto set = retina::compute_receptive_fields(tess, cfg.retina_radius_px, img.dims(), fix, field_options(cfg));
      const auto iv = retina::sample(img, set);
      const fs::path out = output_path(common, sample_out, "imagevector.riv");
      retina::write_image_vector(out, iv);
      std::printf("%zu nodes x %zu channels -> %s\n", iv.node_count, iv.channels, out.string().c_str());
    } else if (*backproject || (*viz && viz_what == "backprojection")) {
      const std::string& iv_path = *backproject ? bp_iv : viz_iv;
      if (iv_path.empty()) throw UsageError("--imagevector is required");
      const auto iv = retina::read_image_vector(iv_path);
      const auto tess = load_or_generate(*backproject ? bp_tess : viz_tess, cfg);
      if (tess.node_count() != iv.node_count) throw ValidationError("imagevector and tessellation node counts differ");
      const ImageDims dims = bp_dims.empty() ? crop_dims : ImageDims{bp_dims[0], bp_dims[1]};
      // Imagevector files do not carry the fixation, so it is supplied here.
      const PixelPoint fix = bp_fix.empty() ? PixelPoint{static_cast<double>(dims.rows / 2), static_cast<double>(dims.cols / 2)}
                                            : parse_point(bp_fix);
      const auto set = retina::compute_receptive_fields(tess, cfg.retina_radius_px, dims, fix, field_options(cfg));
      const auto bp = retina::backproject(iv, set, dims);
      const fs::path out = output_path(common, *backproject ? bp_out : viz_out, "backprojection.png");
      write_png(out, bp.image);
      std::printf("backprojection %dx%d -> %s\n", dims.rows, dims.cols, out.string().c_str());
    } else if (*cortical || *subsample || *grid || (*viz && viz_what == "cortical")) {
      const std::string& iv_path = *viz ? viz_iv : cx_iv;
      if (iv_path.empty()) throw UsageError("--imagevector is required");
      const auto iv = retina::read_image_vector(iv_path);
      const auto tess = load_or_generate(*viz ? viz_tess : cx_tess, cfg);
      if (tess.node_count() != iv.node_count) throw ValidationError("imagevector and tessellation node counts differ");
      const auto map = cortex::cortical_coordinates(tess, cfg.alpha, cfg.cortical_dims);
      pipeline::PipelineConfig render_cfg = cfg;
      std::string fallback = "cortical.png";
      if (*cortical || *viz) {
        render_cfg.grid_dims.reset();
        render_cfg.subsample_factor.reset();
      } else if (*subsample) {
        render_cfg.grid_dims.reset();
        render_cfg.subsample_factor = sub_factor;
        fallback = "subsampled.png";
      } else {
        render_cfg.grid_dims = ImageDims{grid_target[0], grid_target[1]};
        render_cfg.subsample_factor.reset();
        fallback = "gridded.png";
      }
      const auto img = pipeline::render_cortical(render_cfg, iv, map);
      const fs::path out = output_path(common, *viz ? viz_out : cx_out, fallback);
      cortex::write_cortical_png(out, img);
      if (!*viz) cortex::write_weight_file(fs::path(out).replace_extension(".w"), img);
      std::printf("cortical %dx%d (%zu covered) -> %s\n", img.dims.rows, img.dims.cols, img.covered_count(),
                  out.string().c_str());
    } else if (*cluster) {
      const auto records = read_logs(cl_logs, cl_class);
      const auto hs = maybe_homographies(cl_hom);
      std::vector<std::string> classes;
      for (const auto& r : records) {
        if (std::find(classes.begin(), classes.end(), r.class_label) == classes.end()) classes.push_back(r.class_label);
      }
      const fs::path out = output_path(common, "", "clusters.csv");
      std::ofstream os(out);
      if (!os) throw IoError("cannot open " + out.string());
      os.precision(10);
      os << "class_label,cluster,members,centroid_row,centroid_col,hull_vertices\n";
      for (const auto& label : classes) {
        std::vector<gaze::FixationRecord> subset;
        for (const auto& r : records) {
          if (r.class_label == label) subset.push_back(r);
        }
        const auto points = gaze::composite_fixations(subset, hs, cfg.strict_homographies);
        const auto clusters = gaze::cluster_fixations(points, cfg.k_fraction, cfg.seed);
        for (std::size_t c = 0; c < clusters.size(); ++c) {
          os << label << ',' << c << ',' << clusters[c].member_indices.size() << ',' << clusters[c].centroid_px.row
             << ',' << clusters[c].centroid_px.col << ',' << clusters[c].hull_px.size() << '\n';
        }
        std::printf("%s: %zu fixations -> %zu clusters\n", label.c_str(), points.size(), clusters.size());
      }
    } else if (*crop) {
      const Image img = read_png(crop_image);
      std::vector<gaze::FixationCluster> clusters;
      if (!crop_center.empty()) {
        gaze::FixationCluster one;
        one.centroid_px = parse_point(crop_center);
        one.hull_px = {one.centroid_px};
        clusters.push_back(one);
      } else {
        if (crop_logs.empty()) throw UsageError("crop needs --center or --log");
        const auto records = read_logs(crop_logs, crop_class);
        const auto points = gaze::composite_fixations(records, maybe_homographies(crop_hom), cfg.strict_homographies);
        clusters = gaze::cluster_fixations(points, cfg.k_fraction, cfg.seed);
      }
      for (std::size_t c = 0; c < clusters.size(); ++c) {
        const auto placement = gaze::place_retina(clusters[c], img.dims(), cfg.crop_size, cfg.allow_padding);
        char name[32];
        std::snprintf(name, sizeof name, "crop_c%03zu.png", c);
        const fs::path out = output_path(common, "", name);
        write_png(out, gaze::extract_crop(img, placement.rect, cfg.allow_padding));
        std::printf("cluster %zu: rows %d.. cols %d..%s -> %s\n", c, placement.rect.row0, placement.rect.col0,
                    placement.hull_outside_retina ? " (hull exceeds retina)" : "", out.string().c_str());
      }
    } else if (*split) {
      std::vector<gaze::LabeledItem> items;
      if (!split_scan.empty()) {
        std::vector<fs::path> class_dirs;
        for (const auto& d : fs::directory_iterator(split_scan)) {
          if (d.is_directory()) class_dirs.push_back(d.path());
        }
        std::sort(class_dirs.begin(), class_dirs.end());
        for (const auto& dir : class_dirs) {
          std::vector<fs::path> files;
          for (const auto& f : fs::directory_iterator(dir)) {
            if (f.path().extension() == ".png") files.push_back(f.path());
          }
          std::sort(files.begin(), files.end());
          for (const auto& f : files) {
            items.push_back({fs::relative(f, common.out_dir).generic_string(), dir.filename().string()});
          }
        }
      } else if (!split_items.empty()) {
        std::ifstream in(split_items);
        if (!in) throw IoError("cannot open " + split_items);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
          if (!line.empty() && line.back() == '\r') line.pop_back();
          if (line.empty()) continue;
          const auto comma = line.rfind(',');
          if (comma == std::string::npos) throw ValidationError("expected path,class_label: " + line);
          items.push_back({line.substr(0, comma), line.substr(comma + 1)});
        }
      } else {
        throw UsageError("split needs --scan or --items");
      }
      const auto manifest = gaze::split_dataset(items, cfg.split_fractions, cfg.seed);
      const fs::path out = output_path(common, "", "manifest.csv");
      gaze::write_manifest(out, manifest);
      for (const auto& label : manifest.classes) {
        std::array<std::size_t, 3> n{};
        for (const auto& e : manifest.entries) {
          if (e.class_label == label) ++n[static_cast<std::size_t>(e.split)];
        }
        std::printf("%s: %zu/%zu/%zu\n", label.c_str(), n[0], n[1], n[2]);
      }
    } else if (*train) {
      const auto manifest = gaze::read_manifest(train_manifest);
      const fs::path root = train_root.empty() ? fs::path(train_manifest).parent_path() : fs::path(train_root);
      const auto train_set = load_split(manifest, root, gaze::Split::train);
      if (train_set.size() == 0) throw ValidationError("manifest has no training items");
      dcnn::NetworkSpec spec = cfg.network;
      spec.num_classes = train_set.num_classes;
      dcnn::Network<float> net(spec, train_set.shape, cfg.seed);
      dcnn::TrainConfig tc = cfg.train;
      tc.seed = cfg.seed;
      tc.batch_size = std::min<int>(tc.batch_size, static_cast<int>(train_set.size()));
      std::printf("%zu training images %dx%dx%d, %zu parameters, %zu steps/epoch\n", train_set.size(),
                  train_set.shape.rows, train_set.shape.cols, train_set.shape.channels, net.parameter_count(),
                  dcnn::steps_per_epoch(train_set.size(), tc.batch_size));
      std::vector<dcnn::StepRecord> log;
      for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        const auto m = dcnn::train_epoch(net, train_set, tc, epoch, [&](const dcnn::StepRecord& r) { log.push_back(r); });
        std::printf("epoch %d loss %.4f accuracy %.4f\n", epoch + 1, m.loss, m.accuracy);
        std::fflush(stdout);
      }
      dcnn::save_checkpoint(output_path(common, "", "model.fnet"), net);
      dcnn::write_training_log(output_path(common, "", "training_log.csv"), log);
      const auto val = load_split(manifest, root, gaze::Split::val);
      if (val.size() > 0) {
        std::printf("validation: ");
        print_evaluation(dcnn::evaluate(net, val), manifest.classes);
      }
    } else if (*eval) {
      const auto manifest = gaze::read_manifest(eval_manifest);
      const fs::path root = eval_root.empty() ? fs::path(eval_manifest).parent_path() : fs::path(eval_root);
      const auto data = load_split(manifest, root, gaze::parse_split(eval_split));
      if (data.size() == 0) throw ValidationError("split '" + eval_split + "' is empty");
      const auto net = dcnn::load_checkpoint(eval_ckpt);
      if (net.spec().num_classes != data.num_classes) throw ValidationError("checkpoint and manifest class counts differ");
      const auto ev = dcnn::evaluate(net, data);
      print_evaluation(ev, manifest.classes);
      nlohmann::json j;
      j["split"] = eval_split;
      j["accuracy"] = ev.accuracy;
      j["macro_f1"] = ev.macro_f1;
      j["classes"] = manifest.classes;
      j["per_class_f1"] = ev.per_class_f1;
      j["confusion"] = ev.confusion;
      std::ofstream(output_path(common, "", "eval_" + eval_split + ".json")) << j.dump(2) << '\n';
    } else if (*pipe) {
      std::vector<fs::path> logs(pl_logs.begin(), pl_logs.end());
      const auto result = pipeline::run_pipeline(cfg, logs, pl_images, common.out_dir, maybe_homographies(pl_hom));
      for (const auto& c : result.classes) {
        std::printf("%s: %zu fixations, %zu clusters, %zu cortical images\n", c.class_label.c_str(), c.fixations,
                    c.clusters, c.cortical_images);
      }
      for (const auto& e : result.errors) std::fprintf(stderr, "error: %s\n", e.describe().c_str());
      return result.ok() ? 0 : kExitStage;
    } else if (*bench) {
      std::fputs(pipeline::format_bench(pipeline::bench_reduction(cfg)).c_str(), stdout);
    } else if (*viz) {
      const auto tess = load_or_generate(viz_tess, cfg);
      const auto render = pipeline::render_tessellation(tess, viz_canvas, cfg.receptive_width);
      const fs::path out = output_path(common, viz_out, "tessellation.png");
      write_png(out, render.image);
      std::printf("%zu dots -> %s\n", render.dots, out.string().c_str());
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitStage;
  }
  return 0;
}
