#include "xmatch/run_config.hpp"

#include <algorithm>
#include <fstream>

#include "xmatch/error.hpp"

namespace xmatch {

void validate(const Detector2DConfig& cfg) {
  if (cfg.scales_per_octave < 1) throw Error(ErrorKind::InvalidArgument, "scales_per_octave must be >= 1");
  if (!(cfg.sigma0 > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma0 must be positive");
  if (!(cfg.input_sigma >= 0.0 && cfg.input_sigma < cfg.sigma0)) {
    throw Error(ErrorKind::InvalidArgument, "input_sigma must be in [0, sigma0)");
  }
  if (!(cfg.contrast_threshold >= 0.0)) throw Error(ErrorKind::InvalidArgument, "contrast_threshold must be >= 0");
  if (!(cfg.edge_ratio > 1.0)) throw Error(ErrorKind::InvalidArgument, "edge_ratio must be > 1");
  if (cfg.border < 1) throw Error(ErrorKind::InvalidArgument, "border must be >= 1");
}

void validate(const Detector3DConfig& cfg) {
  for (double s : cfg.scales)
    if (!(s > 0.0)) throw Error(ErrorKind::InvalidArgument, "3D detector scales must be positive");
  if (!(cfg.response_threshold >= 0.0)) throw Error(ErrorKind::InvalidArgument, "response_threshold must be >= 0");
  if (cfg.min_neighbors < 3) throw Error(ErrorKind::InvalidArgument, "min_neighbors must be >= 3");
}

void validate(const Descriptor3DConfig& cfg) {
  if (!(cfg.support_factor > 0.0) || !(cfg.gradient_factor > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "descriptor support factors must be positive");
  }
}

void validate(const RunConfig& cfg) {
  validate(cfg.detector2d);
  validate(cfg.detector3d);
  validate(cfg.descriptor3d);
  validate(cfg.dataset);
  validate(cfg.matcher);
  validate(cfg.localize);
}

namespace {

// Reads one section, rejecting keys the section does not know.
class Section {
 public:
  Section(const nlohmann::json& root, const char* name) : name_(name) {
    if (!root.contains(name)) return;
    node_ = &root.at(name);
    if (!node_->is_object()) throw Error(ErrorKind::ParseError, std::string(name) + " must be an object");
  }

  template <typename T>
  Section& get(const char* key, T& out) {
    known_.push_back(key);
    if (node_ && node_->contains(key)) {
      try {
        out = node_->at(key).get<T>();
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, name_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  void done() const {
    if (!node_) return;
    for (const auto& [key, value] : node_->items()) {
      if (std::find(known_.begin(), known_.end(), key) == known_.end()) {
        throw Error(ErrorKind::ParseError, "unknown config key " + name_ + "." + key);
      }
    }
  }

 private:
  std::string name_;
  const nlohmann::json* node_ = nullptr;
  std::vector<std::string> known_;
};

}  // namespace

RunConfig merge_run_config(const RunConfig& base, const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::ParseError, "config must be a JSON object");
  static const std::vector<std::string> sections{"detector2d", "detector3d", "dataset",
                                                 "matcher", "mlesac", "localize"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(sections.begin(), sections.end(), key) == sections.end()) {
      throw Error(ErrorKind::ParseError, "unknown config section '" + key + "'");
    }
  }
  RunConfig c = base;
  auto& d2 = c.detector2d;
  Section(j, "detector2d")
      .get("scales_per_octave", d2.scales_per_octave)
      .get("sigma0", d2.sigma0)
      .get("input_sigma", d2.input_sigma)
      .get("contrast_threshold", d2.contrast_threshold)
      .get("edge_ratio", d2.edge_ratio)
      .get("border", d2.border)
      .get("max_keypoints", d2.max_keypoints)
      .done();
  Section(j, "detector3d")
      .get("scales", c.detector3d.scales)
      .get("response_threshold", c.detector3d.response_threshold)
      .get("min_neighbors", c.detector3d.min_neighbors)
      .get("support_factor", c.descriptor3d.support_factor)
      .get("gradient_factor", c.descriptor3d.gradient_factor)
      .done();
  auto& ds = c.dataset;
  Section(j, "dataset")
      .get("alpha", ds.alpha)
      .get("beta", ds.beta)
      .get("gamma", ds.gamma)
      .get("tau", ds.tau)
      .get("depth_slack", ds.depth_slack)
      .get("negative_ratio", ds.negative_ratio)
      .get("seed", ds.seed)
      .done();
  auto& g = c.matcher;
  Section(j, "matcher")
      .get("coarse_max_splits", g.coarse_max_splits)
      .get("coarse_cost_ratios", g.coarse_cost_ratios)
      .get("fine_n_trees", g.fine_n_trees)
      .get("fine_max_splits", g.fine_max_splits)
      .get("fine_features_per_split", g.fine_features_per_split)
      .get("validation_fraction", g.validation_fraction)
      .get("min_negative_rejection", g.min_negative_rejection)
      .get("seed", c.matcher_seed)
      .done();
  auto& m = c.localize.mlesac;
  Section(j, "mlesac")
      .get("iterations", m.iterations)
      .get("inlier_threshold_px", m.inlier_threshold_px)
      .get("sigma_px", m.sigma_px)
      .get("seed", m.seed)
      .get("min_pixel_separation", m.min_pixel_separation)
      .done();
  Section(j, "localize").get("min_inliers", c.localize.min_inliers).done();
  validate(c);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open config " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, path + ": " + e.what());
  }
  return merge_run_config(RunConfig{}, j);
}

nlohmann::json to_json(const RunConfig& c) {
  const auto& d2 = c.detector2d;
  const auto& ds = c.dataset;
  const auto& g = c.matcher;
  const auto& m = c.localize.mlesac;
  return {
      {"detector2d",
       {{"scales_per_octave", d2.scales_per_octave}, {"sigma0", d2.sigma0}, {"input_sigma", d2.input_sigma},
        {"contrast_threshold", d2.contrast_threshold}, {"edge_ratio", d2.edge_ratio},
        {"border", d2.border}, {"max_keypoints", d2.max_keypoints}}},
      {"detector3d",
       {{"scales", c.detector3d.scales}, {"response_threshold", c.detector3d.response_threshold},
        {"min_neighbors", c.detector3d.min_neighbors}, {"support_factor", c.descriptor3d.support_factor},
        {"gradient_factor", c.descriptor3d.gradient_factor}}},
      {"dataset",
       {{"alpha", ds.alpha}, {"beta", ds.beta}, {"gamma", ds.gamma}, {"tau", ds.tau},
        {"depth_slack", ds.depth_slack}, {"negative_ratio", ds.negative_ratio}, {"seed", ds.seed}}},
      {"matcher",
       {{"coarse_max_splits", g.coarse_max_splits}, {"coarse_cost_ratios", g.coarse_cost_ratios},
        {"fine_n_trees", g.fine_n_trees}, {"fine_max_splits", g.fine_max_splits},
        {"fine_features_per_split", g.fine_features_per_split},
        {"validation_fraction", g.validation_fraction},
        {"min_negative_rejection", g.min_negative_rejection}, {"seed", c.matcher_seed}}},
      {"mlesac",
       {{"iterations", m.iterations}, {"inlier_threshold_px", m.inlier_threshold_px},
        {"sigma_px", m.sigma_px}, {"seed", m.seed}, {"min_pixel_separation", m.min_pixel_separation}}},
      {"localize", {{"min_inliers", c.localize.min_inliers}}},
  };
}

}  // namespace xmatch
