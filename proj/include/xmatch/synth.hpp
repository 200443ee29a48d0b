#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "xmatch/geometry.hpp"
#include "xmatch/image.hpp"
#include "xmatch/pointcloud.hpp"

namespace xmatch {

enum class SceneLayout { TexturedBoxRoom, WallWithBumps, TwoWallOccluder };

std::string to_string(SceneLayout layout);
SceneLayout layout_from_string(const std::string& name);

/// Procedural scene description. The box room is centered at the origin with
/// z up; the wall layouts face the canonical camera (identity pose, looking +z)
/// with the back wall at depth extent.z.
struct SceneSpec {
  SceneLayout layout = SceneLayout::TexturedBoxRoom;
  double point_spacing = 0.05;
  std::uint64_t texture_seed = 1;
  Vec3 extent{4.0, 4.0, 3.0};

  // Value-noise texture.
  int noise_octaves = 4;
  double noise_frequency = 2.0;  // base lattice cells per unit length
  double noise_contrast = 1.0;
  bool uniform_texture = false;

  // Gaussian relief bumps on a jittered grid, each with an intensity blob at its apex.
  double bump_spacing = 0.35;  // 0 disables bumps
  double bump_sigma = 0.04;
  double bump_height = 0.05;
  double blob_sigma = 0.04;
  double blob_amplitude = 0.35;
};

void validate(const SceneSpec& spec);

/// Exact point count produced by generate_scene for the given spec.
std::size_t analytic_point_count(const SceneSpec& spec);

/// Regular-grid sampling of the layout surfaces; deterministic per spec.
PointCloud generate_scene(const SceneSpec& spec);

/// Multi-octave value noise in [0, 1].
double value_noise(const Vec3& p, std::uint64_t seed, int octaves, double frequency);

struct Rendering {
  Image image;
  std::vector<double> depth;         // +inf where uncovered
  std::vector<std::int64_t> source;  // point index per pixel, -1 where uncovered
};

/// Disc splatting: every point in front of the camera paints the pixels whose
/// centers lie within splat_radius_px of its projection; the nearest depth wins
/// and ties go to the lower point index.
Rendering render(const PointCloud& cloud, const CameraView& view, double splat_radius_px);
Image render_view(const PointCloud& cloud, const CameraView& view, double splat_radius_px);

/// Camera placement for the canonical view of a layout.
CameraView canonical_view(const SceneSpec& spec, int width, int height, double focal_px);

struct BenchmarkSpec {
  SceneSpec scene;
  std::size_t n_train = 8;
  std::size_t n_query = 4;
  std::uint64_t seed = 1;
  int image_width = 320;
  int image_height = 240;
  double focal_px = 160.0;
  double splat_radius_px = 2.0;
  double orbit_radius = 0.5;      // fraction of the half extent
  double min_coverage = 0.3;      // fraction of covered pixels per view
  std::size_t min_visible_points = 100;
};

void validate(const BenchmarkSpec& spec);
// Flat JSON object; unknown keys are rejected. Throws ParseError / InvalidArgument.
BenchmarkSpec benchmark_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BenchmarkSpec& spec);

/// Camera poses on an interior orbit looking at the scene center, in view-id order.
std::vector<CameraView> benchmark_views(const BenchmarkSpec& spec, const PointCloud& cloud);

/// True for view ids that belong to the query split (spread evenly over the orbit).
bool is_query_view(std::size_t index, std::size_t n_train, std::size_t n_query);

/// Writes cloud.ply, images/NNN.pgm, poses.json and manifest.json into dir.
void make_benchmark(const BenchmarkSpec& spec, const std::string& dir);

}  // namespace xmatch
