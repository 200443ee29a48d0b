#pragma once

#include <string>

#include "json.hpp"
#include "xmatch/dataset.hpp"
#include "xmatch/keypoints3d.hpp"
#include "xmatch/matcher.hpp"
#include "xmatch/pose.hpp"
#include "xmatch/sift.hpp"

namespace xmatch {

/// Every pipeline tunable. Sections mirror the owning modules:
/// detector2d, detector3d, dataset, matcher, mlesac, localize.
struct RunConfig {
  Detector2DConfig detector2d;
  Detector3DConfig detector3d;
  Descriptor3DConfig descriptor3d;
  DatasetConfig dataset;
  GridConfig matcher;
  std::uint64_t matcher_seed = 11;
  LocalizeConfig localize;
};

void validate(const Detector2DConfig& cfg);
void validate(const Detector3DConfig& cfg);
void validate(const Descriptor3DConfig& cfg);
void validate(const RunConfig& cfg);

/// Overlays the keys present in `j` onto `base`. Unknown sections or keys
/// and wrong types raise ParseError; the merged result is validated.
RunConfig merge_run_config(const RunConfig& base, const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace xmatch
