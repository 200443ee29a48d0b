#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include <Eigen/Geometry>

#include "xmatch/geometry.hpp"
#include "xmatch/rng.hpp"

namespace testing {

using xmatch::Mat3;
using xmatch::Vec3;

inline Mat3 random_rotation(xmatch::Rng& rng) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  axis.normalize();
  return Eigen::AngleAxisd(rng.uniform(0.0, 3.14159), axis).toRotationMatrix();
}

inline xmatch::Pose random_pose(xmatch::Rng& rng, double t = 2.0) {
  xmatch::Pose p;
  p.rotation = random_rotation(rng);
  p.translation = Vec3(rng.uniform(-t, t), rng.uniform(-t, t), rng.uniform(-t, t));
  return p;
}

// Fresh directory under the system temp path, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("xmatch_test_" + tag);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out << bytes;
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
