#include "xmatch/features_io.hpp"

#include "xmatch/binary_io.hpp"
#include "xmatch/error.hpp"

namespace xmatch {

void save_features_3d(const std::string& path, const FeatureSet3D& f,
                      const std::string& provenance_json) {
  if (f.descriptors.size() != f.keypoints.size() * f.dims) {
    throw Error(ErrorKind::DimensionMismatch, "descriptor matrix does not match keypoint count");
  }
  ByteWriter w;
  w.magic(kFeatures3DMagic);
  w.u32(kFeaturesVersion);
  w.u32(static_cast<std::uint32_t>(f.size()));
  w.u32(f.dims);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto& kp = f.keypoints[i];
    w.f64(kp.position.x());
    w.f64(kp.position.y());
    w.f64(kp.position.z());
    w.f64(kp.scale);
    w.f64(kp.response);
    for (float v : f.descriptor(i)) w.f32(v);
  }
  if (!provenance_json.empty()) w.trailer(provenance_json);
  w.write_file(path);
}

FeatureSet3D load_features_3d(const std::string& path) {
  auto r = ByteReader::from_file(path);
  r.expect_magic(kFeatures3DMagic);
  if (r.u32() != kFeaturesVersion) throw Error(ErrorKind::UnsupportedFormat, path + ": version");
  const std::uint32_t count = r.u32();
  FeatureSet3D f;
  f.dims = r.u32();
  f.keypoints.reserve(count);
  f.descriptors.reserve(static_cast<std::size_t>(count) * f.dims);
  for (std::uint32_t i = 0; i < count; ++i) {
    Keypoint3D kp;
    kp.point_id = i;
    kp.position.x() = r.f64();
    kp.position.y() = r.f64();
    kp.position.z() = r.f64();
    kp.scale = r.f64();
    kp.response = r.f64();
    f.keypoints.push_back(kp);
    for (std::uint32_t k = 0; k < f.dims; ++k) f.descriptors.push_back(r.f32());
  }
  r.trailer();
  if (!r.at_end()) throw Error(ErrorKind::ParseError, path + ": trailing bytes");
  return f;
}

void save_features_2d(const std::string& path, const FeatureSet2D& f,
                      const std::string& provenance_json) {
  if (f.descriptors.size() != f.keypoints.size() * f.dims) {
    throw Error(ErrorKind::DimensionMismatch, "descriptor matrix does not match keypoint count");
  }
  ByteWriter w;
  w.magic(kFeatures2DMagic);
  w.u32(kFeaturesVersion);
  w.u32(static_cast<std::uint32_t>(f.size()));
  w.u32(f.dims);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto& kp = f.keypoints[i];
    w.f64(kp.u);
    w.f64(kp.v);
    w.f64(kp.scale);
    w.f64(kp.orientation);
    for (float v : f.descriptor(i)) w.f32(v);
  }
  if (!provenance_json.empty()) w.trailer(provenance_json);
  w.write_file(path);
}

FeatureSet2D load_features_2d(const std::string& path) {
  auto r = ByteReader::from_file(path);
  r.expect_magic(kFeatures2DMagic);
  if (r.u32() != kFeaturesVersion) throw Error(ErrorKind::UnsupportedFormat, path + ": version");
  const std::uint32_t count = r.u32();
  FeatureSet2D f;
  f.dims = r.u32();
  f.keypoints.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Keypoint2D kp;
    kp.u = r.f64();
    kp.v = r.f64();
    kp.scale = r.f64();
    kp.orientation = r.f64();
    f.keypoints.push_back(kp);
    for (std::uint32_t k = 0; k < f.dims; ++k) f.descriptors.push_back(r.f32());
  }
  r.trailer();
  if (!r.at_end()) throw Error(ErrorKind::ParseError, path + ": trailing bytes");
  return f;
}

}  // namespace xmatch
