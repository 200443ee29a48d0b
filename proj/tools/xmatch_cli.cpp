#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "xmatch/dataset.hpp"
#include "xmatch/error.hpp"
#include "xmatch/features_io.hpp"
#include "xmatch/image.hpp"
#include "xmatch/matcher.hpp"
#include "xmatch/parallel.hpp"
#include "xmatch/pointcloud.hpp"
#include "xmatch/pose.hpp"
#include "xmatch/report.hpp"
#include "xmatch/run_config.hpp"
#include "xmatch/synth.hpp"

namespace fs = std::filesystem;
using namespace xmatch;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPipeline = 3;

const char* kVersion =
    "xmatch 1.0.0\n"
    "formats: C3DF v1 (3D features), C2DF v1 (2D features), CDS1 (dataset), CDM1 (model)\n"
    "bundle: cloud.ply, images/NNN.pgm, poses.json, manifest.json";

bool is_config_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ParseError:
    case ErrorKind::MissingProperty:
    case ErrorKind::UnsupportedFormat:
    case ErrorKind::InvalidArgument:
    case ErrorKind::IoError:
      return true;
    default:
      return false;
  }
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
}

std::string lower_extension(const std::string& path) {
  std::string ext = fs::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

RunConfig effective_config(const std::string& config_path) {
  return config_path.empty() ? RunConfig{} : load_run_config(config_path);
}

// Picks the record for image_id from a single record, an array or {"poses": [...]}.
const json& select_record(const json& doc, std::optional<int> image_id, const std::string& what) {
  const json* list = nullptr;
  if (doc.is_array()) list = &doc;
  if (doc.is_object() && doc.contains("poses")) list = &doc.at("poses");
  if (!list) return doc;
  if (!image_id) {
    if (list->size() == 1) return list->at(0);
    throw Error(ErrorKind::InvalidArgument, what + " holds several records; pass --image-id");
  }
  for (const auto& rec : *list)
    if (rec.contains("image_id") && rec.at("image_id") == *image_id) return rec;
  throw Error(ErrorKind::InvalidArgument, what + " has no record for image " + std::to_string(*image_id));
}

Intrinsics intrinsics_from_json(const json& rec) {
  try {
    Intrinsics k{rec.at("fx").get<double>(), rec.at("fy").get<double>(), rec.at("cx").get<double>(),
                 rec.at("cy").get<double>(), rec.value("skew", 0.0)};
    if (!k.valid()) throw Error(ErrorKind::InvalidArgument, "intrinsics must be finite with fx, fy > 0");
    return k;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("intrinsics: ") + e.what());
  }
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir) {
  const BenchmarkSpec spec = benchmark_spec_from_json(read_json(spec_path));
  make_benchmark(spec, out_dir);
  std::cout << "wrote bundle with " << spec.n_train << " train / " << spec.n_query << " query views to "
            << out_dir << '\n';
  return 0;
}

FeatureSet3D extract_3d(const PointCloud& cloud, const RunConfig& cfg) {
  return extract_features_3d(cloud, cfg.detector3d, cfg.descriptor3d);
}

int cmd_extract(const std::string& kind, const std::string& in, const std::string& out,
                const RunConfig& cfg) {
  const std::string ext = lower_extension(in);
  json prov;
  prov["command"] = "extract " + kind;
  if (kind == "3d") {
    if (ext != ".ply") throw Error(ErrorKind::UnsupportedFormat, "3d extraction expects a .ply file");
    const FeatureSet3D f = extract_3d(load_ply(in), cfg);
    prov["config"] = to_json(cfg)["detector3d"];
    save_features_3d(out, f, prov.dump());
    std::cout << f.size() << " 3D features\n";
  } else {
    if (ext != ".pgm" && ext != ".ppm") {
      throw Error(ErrorKind::UnsupportedFormat, "2d extraction expects a .pgm or .ppm file");
    }
    const FeatureSet2D f = extract_features_2d(load_image(in), cfg.detector2d);
    prov["config"] = to_json(cfg)["detector2d"];
    save_features_2d(out, f, prov.dump());
    std::cout << f.size() << " 2D features\n";
  }
  return 0;
}

int cmd_build_dataset(const std::string& bundle, const std::string& cloud_features,
                      const std::string& out, const RunConfig& cfg) {
  const fs::path dir(bundle);
  for (const char* name : {"manifest.json", "poses.json"}) {
    if (!fs::exists(dir / name)) throw Error(ErrorKind::IoError, "bundle lacks " + std::string(name));
  }
  const json manifest = read_json((dir / "manifest.json").string());
  const auto views = load_pose_records((dir / "poses.json").string());
  const std::string cloud_name = manifest.value("cloud", std::string("cloud.ply"));
  const PointCloud cloud = load_ply((dir / cloud_name).string());
  const FeatureSet3D f3d = cloud_features.empty() ? extract_3d(cloud, cfg) : load_features_3d(cloud_features);

  std::vector<int> train;
  try {
    train = manifest.at("train").get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("manifest: ") + e.what());
  }
  std::vector<PosedFeatures> posed(train.size());
  parallel_for(train.size(), [&](std::size_t i) {
    const int id = train[i];
    auto view = std::find_if(views.begin(), views.end(), [&](const CameraView& v) { return v.image_id == id; });
    if (view == views.end()) throw Error(ErrorKind::ParseError, "no pose for image " + std::to_string(id));
    char name[32];
    std::snprintf(name, sizeof name, "images/%03d.pgm", id);
    std::string image_path = name;
    if (manifest.contains("images") && id >= 0 && static_cast<std::size_t>(id) < manifest["images"].size()) {
      image_path = manifest["images"][id].get<std::string>();
    }
    const Image img = load_image((dir / image_path).string());
    posed[i] = {*view, extract_features_2d(img, cfg.detector2d)};
  });

  DatasetDiagnostics diag;
  const CorrespondenceDataset ds = assemble_dataset(cloud, f3d, posed, cfg.dataset, &diag);
  json prov;
  prov["command"] = "build-dataset";
  prov["config"] = to_json(cfg);
  prov["train_images"] = train;
  prov["n_features_3d"] = f3d.size();
  prov["projected_per_image"] = diag.projected_per_image;
  prov["kept_per_image"] = diag.kept_per_image;
  prov["positives_per_image"] = diag.positives_per_image;
  save_dataset(out, ds, prov.dump());
  std::cout << ds.n_pos() << " positive / " << ds.n_neg() << " negative rows\n";
  return 0;
}

int cmd_train(const std::string& dataset_path, const std::string& out, const RunConfig& cfg) {
  const CorrespondenceDataset ds = load_dataset(dataset_path);
  MatcherModel model = grid_search(ds, cfg.matcher, cfg.matcher_seed);
  model.metadata["config"] = to_json(cfg)["matcher"];
  model.metadata["n_rows"] = ds.rows();
  save_model(out, model);
  const auto& gs = model.metadata["grid_search"];
  for (const auto& c : gs["coarse"])
    if (c["selected"].get<bool>()) std::cout << "coarse: " << c.dump() << '\n';
  for (const auto& f : gs["fine"])
    if (f["selected"].get<bool>()) std::cout << "fine: " << f.dump() << '\n';
  return 0;
}

int cmd_localize(const std::string& model_path, const std::string& cloud_features,
                 const std::string& image_path, const std::string& intrinsics_path,
                 std::optional<int> image_id, const std::string& gt_path, const std::string& out,
                 const RunConfig& cfg) {
  const MatcherModel model = load_model(model_path);
  const FeatureSet3D f3d = load_features_3d(cloud_features);
  const Image img = load_image(image_path);
  const Intrinsics k = intrinsics_from_json(select_record(read_json(intrinsics_path), image_id, "intrinsics"));
  std::optional<Pose> gt;
  if (!gt_path.empty()) {
    gt = view_from_json(select_record(read_json(gt_path), image_id, "ground truth")).pose;
  }

  LocalizationRecord rec;
  rec.image_id = image_id.value_or(0);
  LocalizeConfig lc = cfg.localize;
  lc.mlesac.image_width = img.width;
  lc.mlesac.image_height = img.height;
  try {
    FeatureSet2D f2d;
    try {
      f2d = extract_features_2d(img, cfg.detector2d);
    } catch (const Error& e) {
      throw LocalizationFailed(e.kind(), e.what());
    }
    const Localization loc = localize(f2d, f3d, model, k, lc);
    rec.success = true;
    rec.pose = loc.estimate.pose;
    rec.n_matches = loc.n_matches;
    rec.n_inliers = loc.n_inliers;
    rec.mean_reproj_px = loc.estimate.mean_reprojection_error;
    if (gt) {
      rec.position_error = position_error(gt->camera_center(), rec.pose.camera_center());
      rec.rotation_error_deg = rotation_error_deg(*gt, rec.pose);
    }
  } catch (const LocalizationFailed& e) {
    rec.success = false;
    rec.failure = std::string(to_string(e.cause()));
    std::cerr << "localization failed: " << e.what() << '\n';
  }
  json j = to_json(rec);
  j["config"] = {{"detector2d", to_json(cfg)["detector2d"]},
                 {"mlesac", to_json(cfg)["mlesac"]},
                 {"localize", to_json(cfg)["localize"]}};
  write_text(out, j.dump(2) + "\n");
  std::cout << (rec.success ? "localized" : "not localized");
  if (rec.position_error) {
    std::cout << ": position error " << *rec.position_error << ", rotation error "
              << *rec.rotation_error_deg << " deg";
  }
  std::cout << '\n';
  return 0;
}

int cmd_evaluate(const std::string& results, const std::string& out, std::string format) {
  std::vector<fs::path> files;
  if (fs::is_directory(results)) {
    for (const auto& entry : fs::directory_iterator(results))
      if (entry.is_regular_file() && lower_extension(entry.path().string()) == ".json") files.push_back(entry.path());
  } else if (fs::is_regular_file(results)) {
    files.push_back(results);
  } else {
    throw Error(ErrorKind::IoError, "no results at " + results);
  }
  std::sort(files.begin(), files.end());
  std::vector<EvalRecord> records;
  for (const auto& f : files) {
    const LocalizationRecord r = localization_from_json(read_json(f.string()));
    records.push_back({r.image_id, r.success, r.position_error, r.rotation_error_deg});
    if (r.success && !r.position_error) {
      throw Error(ErrorKind::InvalidArgument, f.string() + ": localized record without ground-truth errors");
    }
  }
  const Report report = summarize(records, true);
  if (format.empty()) {
    const std::string ext = lower_extension(out);
    format = ext == ".csv" ? "csv" : ext == ".json" ? "json" : "text";
  }
  write_text(out, emit_table(report, table_format_from_string(format)));
  std::cout << emit_table(report, TableFormat::Text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2D-3D descriptor matching and camera localization"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  unsigned threads = 0;
  app.add_option("--threads", threads, "worker cap (0 = all cores); results do not depend on it");

  std::string config_path;
  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "RunConfig JSON overriding defaults")->check(CLI::ExistingFile);
  };
  std::optional<std::uint64_t> seed_flag;

  std::string spec_path, out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark bundle");
  synth->add_option("--spec", spec_path, "scene spec JSON")->required();
  synth->add_option("--out", out, "output directory")->required();

  std::string kind, in;
  auto* extract = app.add_subcommand("extract", "detect and describe keypoints");
  extract->add_option("kind", kind, "2d or 3d")->required()->check(CLI::IsMember({"2d", "3d"}));
  extract->add_option("--in", in, "PGM/PPM image or PLY cloud")->required();
  extract->add_option("--out", out, "feature file")->required();
  add_config(extract);

  std::string bundle, cloud_features;
  auto* build = app.add_subcommand("build-dataset", "build the labeled correspondence dataset");
  build->add_option("--bundle", bundle, "bundle directory")->required();
  build->add_option("--config", config_path, "RunConfig JSON")->required()->check(CLI::ExistingFile);
  build->add_option("--cloud-features", cloud_features, "precomputed C3DF file");
  build->add_option("--seed", seed_flag, "negative sampling seed");
  build->add_option("--out", out, "dataset file")->required();

  std::string dataset_path;
  auto* train = app.add_subcommand("train", "grid search and train the two-stage matcher");
  train->add_option("--dataset", dataset_path, "CDS1 dataset")->required();
  train->add_option("--seed", seed_flag, "grid search seed");
  train->add_option("--out", out, "model file")->required();
  add_config(train);

  std::string model_path, image_path, intrinsics_path, gt_path;
  std::optional<int> image_id;
  auto* loc = app.add_subcommand("localize", "estimate the pose of one query image");
  loc->add_option("--model", model_path, "CDM1 model")->required();
  loc->add_option("--cloud-features", cloud_features, "C3DF cloud features")->required();
  loc->add_option("--image", image_path, "query image")->required();
  loc->add_option("--intrinsics", intrinsics_path, "intrinsics or pose-record JSON")->required();
  loc->add_option("--image-id", image_id, "record to select from multi-record JSON");
  loc->add_option("--ground-truth", gt_path, "pose record(s) for error reporting");
  loc->add_option("--seed", seed_flag, "MLESAC seed");
  loc->add_option("--out", out, "result JSON")->required();
  add_config(loc);

  std::string results, format;
  auto* eval = app.add_subcommand("evaluate", "summarize localization results");
  eval->add_option("--results", results, "directory of result JSONs")->required();
  eval->add_option("--out", out, "report file")->required();
  eval->add_option("--format", format, "text, csv or json (default from extension)")
      ->check(CLI::IsMember({"text", "csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    set_thread_count(threads);
    RunConfig cfg = effective_config(config_path);
    if (seed_flag) {
      if (build->parsed()) cfg.dataset.seed = *seed_flag;
      if (train->parsed()) cfg.matcher_seed = *seed_flag;
      if (loc->parsed()) cfg.localize.mlesac.seed = *seed_flag;
    }
    if (synth->parsed()) return cmd_synth(spec_path, out);
    if (extract->parsed()) return cmd_extract(kind, in, out, cfg);
    if (build->parsed()) return cmd_build_dataset(bundle, cloud_features, out, cfg);
    if (train->parsed()) return cmd_train(dataset_path, out, cfg);
    if (loc->parsed()) {
      return cmd_localize(model_path, cloud_features, image_path, intrinsics_path, image_id, gt_path, out, cfg);
    }
    if (eval->parsed()) return cmd_evaluate(results, out, format);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_config_error(e.kind()) ? kExitConfig : kExitPipeline;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitPipeline;
  }
  return 0;
}
