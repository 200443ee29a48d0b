#pragma once

#include <string>

#include "xmatch/keypoints3d.hpp"
#include "xmatch/sift.hpp"

namespace xmatch {

inline constexpr char kFeatures3DMagic[] = "C3DF";
inline constexpr char kFeatures2DMagic[] = "C2DF";
inline constexpr std::uint32_t kFeaturesVersion = 1;

// C3DF: magic, version u32, count u32, p u32; per record xyz 3xf64, scale f64,
// response f64, descriptor p x f32. C2DF: magic, version, count, q; per record
// u, v, scale, orientation 4xf64, descriptor q x f32. Both may end with the
// optional u32-length JSON provenance trailer.
void save_features_3d(const std::string& path, const FeatureSet3D& features,
                      const std::string& provenance_json = {});
FeatureSet3D load_features_3d(const std::string& path);

void save_features_2d(const std::string& path, const FeatureSet2D& features,
                      const std::string& provenance_json = {});
FeatureSet2D load_features_2d(const std::string& path);

}  // namespace xmatch
