#include "xmatch/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "xmatch/error.hpp"
#include "xmatch/parallel.hpp"
#include "xmatch/rng.hpp"

namespace xmatch {

std::string to_string(SceneLayout layout) {
  switch (layout) {
    case SceneLayout::TexturedBoxRoom: return "textured-box-room";
    case SceneLayout::WallWithBumps: return "wall-with-bumps";
    case SceneLayout::TwoWallOccluder: return "two-wall-occluder";
  }
  return "unknown";
}

SceneLayout layout_from_string(const std::string& name) {
  for (auto l : {SceneLayout::TexturedBoxRoom, SceneLayout::WallWithBumps, SceneLayout::TwoWallOccluder})
    if (to_string(l) == name) return l;
  throw Error(ErrorKind::ParseError, "unknown layout '" + name + "'");
}

void validate(const SceneSpec& spec) {
  if (!(spec.point_spacing > 0.0)) throw Error(ErrorKind::InvalidArgument, "point_spacing must be positive");
  for (int a = 0; a < 3; ++a) {
    if (!(spec.extent[a] > 10.0 * spec.point_spacing)) {
      throw Error(ErrorKind::InvalidArgument, "extent must exceed 10 * point_spacing on every axis");
    }
  }
  if (spec.noise_octaves < 1) throw Error(ErrorKind::InvalidArgument, "noise_octaves must be >= 1");
  if (!(spec.noise_frequency > 0.0)) throw Error(ErrorKind::InvalidArgument, "noise_frequency must be positive");
  if (!(spec.noise_contrast >= 0.0)) throw Error(ErrorKind::InvalidArgument, "noise_contrast must be >= 0");
  if (!(spec.bump_spacing >= 0.0)) throw Error(ErrorKind::InvalidArgument, "bump_spacing must be >= 0");
  if (spec.bump_spacing > 0.0 && !(spec.bump_sigma > 0.0 && spec.blob_sigma > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "bump_sigma and blob_sigma must be positive");
  }
  if (!std::isfinite(spec.bump_height) || !std::isfinite(spec.blob_amplitude)) {
    throw Error(ErrorKind::InvalidArgument, "bump_height and blob_amplitude must be finite");
  }
}

namespace {

double lattice(std::int64_t x, std::int64_t y, std::int64_t z, std::uint64_t seed) {
  std::uint64_t h = derive_seed(seed, static_cast<std::uint64_t>(x));
  h = derive_seed(h, static_cast<std::uint64_t>(y));
  h = derive_seed(h, static_cast<std::uint64_t>(z));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double smooth(double t) { return t * t * (3.0 - 2.0 * t); }

double noise_octave(const Vec3& p, std::uint64_t seed) {
  const Vec3 f = p.array().floor();
  const auto ix = static_cast<std::int64_t>(f.x());
  const auto iy = static_cast<std::int64_t>(f.y());
  const auto iz = static_cast<std::int64_t>(f.z());
  const double tx = smooth(p.x() - f.x()), ty = smooth(p.y() - f.y()), tz = smooth(p.z() - f.z());
  double c[2][2];
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      c[dz][dy] = std::lerp(lattice(ix, iy + dy, iz + dz, seed), lattice(ix + 1, iy + dy, iz + dz, seed), tx);
  return std::lerp(std::lerp(c[0][0], c[0][1], ty), std::lerp(c[1][0], c[1][1], ty), tz);
}

int cells(double length, double spacing) {
  return std::max(1, static_cast<int>(std::lround(length / spacing)));
}

// One planar face: origin + a * axis_u + b * axis_v, displaced along `normal`.
struct Face {
  Vec3 origin;
  Vec3 axis_u;  // unit
  Vec3 axis_v;  // unit
  Vec3 normal;  // unit, points toward the viewer side
  double len_u;
  double len_v;
  int n_u;
  int n_v;
  int first_u;  // inclusive index ranges along each axis
  int last_u;
  int first_v;
  int last_v;
};

struct Bump {
  double u;
  double v;
  double sign;
};

std::vector<Face> faces_for(const SceneSpec& spec) {
  const double s = spec.point_spacing;
  const Vec3 h = spec.extent / 2.0;
  const Vec3 ex = Vec3::UnitX(), ey = Vec3::UnitY(), ez = Vec3::UnitZ();
  const int nx = cells(spec.extent.x(), s), ny = cells(spec.extent.y(), s), nz = cells(spec.extent.z(), s);
  std::vector<Face> faces;
  switch (spec.layout) {
    case SceneLayout::TexturedBoxRoom: {
      const double lx = spec.extent.x(), ly = spec.extent.y(), lz = spec.extent.z();
      faces.push_back({Vec3(-h.x(), -h.y(), -h.z()), ex, ey, ez, lx, ly, nx, ny, 0, nx, 0, ny});
      faces.push_back({Vec3(-h.x(), -h.y(), h.z()), ex, ey, -ez, lx, ly, nx, ny, 0, nx, 0, ny});
      faces.push_back({Vec3(-h.x(), -h.y(), -h.z()), ex, ez, ey, lx, lz, nx, nz, 0, nx, 1, nz - 1});
      faces.push_back({Vec3(-h.x(), h.y(), -h.z()), ex, ez, -ey, lx, lz, nx, nz, 0, nx, 1, nz - 1});
      faces.push_back({Vec3(-h.x(), -h.y(), -h.z()), ey, ez, ex, ly, lz, ny, nz, 1, ny - 1, 1, nz - 1});
      faces.push_back({Vec3(h.x(), -h.y(), -h.z()), ey, ez, -ex, ly, lz, ny, nz, 1, ny - 1, 1, nz - 1});
      break;
    }
    case SceneLayout::WallWithBumps:
      faces.push_back({Vec3(-h.x(), -h.y(), spec.extent.z()), ex, ey, -ez, spec.extent.x(),
                       spec.extent.y(), nx, ny, 0, nx, 0, ny});
      break;
    case SceneLayout::TwoWallOccluder: {
      faces.push_back({Vec3(-h.x(), -h.y(), spec.extent.z()), ex, ey, -ez, spec.extent.x(),
                       spec.extent.y(), nx, ny, 0, nx, 0, ny});
      const int half = std::max(1, nx / 2);
      faces.push_back({Vec3(-h.x(), -h.y(), spec.extent.z() / 2.0), ex, ey, -ez,
                       spec.extent.x() * half / nx, spec.extent.y(), half, ny, 0, half, 0, ny});
      break;
    }
  }
  return faces;
}

std::vector<Bump> bumps_for(const SceneSpec& spec, const Face& face, std::uint64_t face_seed) {
  std::vector<Bump> out;
  if (spec.bump_spacing <= 0.0) return out;
  const double margin = 3.0 * std::max(spec.bump_sigma, spec.blob_sigma);
  const int mu = static_cast<int>(std::floor((face.len_u - 2.0 * margin) / spec.bump_spacing));
  const int mv = static_cast<int>(std::floor((face.len_v - 2.0 * margin) / spec.bump_spacing));
  if (mu < 1 || mv < 1) return out;
  const double cu = (face.len_u - 2.0 * margin) / mu;
  const double cv = (face.len_v - 2.0 * margin) / mv;
  Rng rng(face_seed);
  for (int a = 0; a < mu; ++a) {
    for (int b = 0; b < mv; ++b) {
      Bump bump;
      // Apexes sit on grid nodes so the apex is itself a cloud point.
      const double du = face.len_u / face.n_u, dv = face.len_v / face.n_v;
      bump.u = du * std::round((margin + (a + 0.5 + rng.uniform(-0.25, 0.25)) * cu) / du);
      bump.v = dv * std::round((margin + (b + 0.5 + rng.uniform(-0.25, 0.25)) * cv) / dv);
      bump.sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      out.push_back(bump);
    }
  }
  return out;
}

}  // namespace

double value_noise(const Vec3& p, std::uint64_t seed, int octaves, double frequency) {
  double sum = 0.0, norm = 0.0, amp = 1.0, freq = frequency;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * noise_octave(p * freq, derive_seed(seed, static_cast<std::uint64_t>(o)));
    norm += amp;
    amp *= 0.5;
    freq *= 2.0;
  }
  return sum / norm;
}

std::size_t analytic_point_count(const SceneSpec& spec) {
  std::size_t n = 0;
  for (const auto& f : faces_for(spec)) {
    n += static_cast<std::size_t>(f.last_u - f.first_u + 1) * static_cast<std::size_t>(f.last_v - f.first_v + 1);
  }
  return n;
}

PointCloud generate_scene(const SceneSpec& spec) {
  validate(spec);
  PointCloud cloud;
  cloud.positions.reserve(analytic_point_count(spec));
  cloud.intensities.reserve(analytic_point_count(spec));
  const auto faces = faces_for(spec);
  const double bump_cut = 4.0 * spec.bump_sigma;
  const double blob_cut = 4.0 * spec.blob_sigma;
  for (std::size_t fi = 0; fi < faces.size(); ++fi) {
    const Face& f = faces[fi];
    const auto bumps = bumps_for(spec, f, derive_seed(spec.texture_seed, 1000 + fi));
    const double du = f.len_u / f.n_u, dv = f.len_v / f.n_v;
    for (int b = f.first_v; b <= f.last_v; ++b) {
      for (int a = f.first_u; a <= f.last_u; ++a) {
        const double u = a * du, v = b * dv;
        const Vec3 base = f.origin + u * f.axis_u + v * f.axis_v;
        double height = 0.0, blob = 0.0;
        for (const auto& bump : bumps) {
          const double r2 = (u - bump.u) * (u - bump.u) + (v - bump.v) * (v - bump.v);
          if (r2 < bump_cut * bump_cut) {
            height += spec.bump_height * std::exp(-r2 / (2.0 * spec.bump_sigma * spec.bump_sigma));
          }
          if (r2 < blob_cut * blob_cut) {
            blob += bump.sign * spec.blob_amplitude *
                    std::exp(-r2 / (2.0 * spec.blob_sigma * spec.blob_sigma));
          }
        }
        double intensity = 0.5;
        if (!spec.uniform_texture) {
          const double n = value_noise(base, spec.texture_seed, spec.noise_octaves, spec.noise_frequency);
          intensity = 0.5 + 2.0 * spec.noise_contrast * (n - 0.5);
        }
        intensity = std::clamp(intensity + blob, 0.0, 1.0);
        // Stored as float in PLY; round here so reloaded clouds are identical.
        cloud.add(base + height * f.normal, static_cast<double>(static_cast<float>(intensity)));
      }
    }
  }
  return cloud;
}

Rendering render(const PointCloud& cloud, const CameraView& view, double splat_radius_px) {
  Rendering out;
  const int w = view.width, h = view.height;
  out.image = Image(w, h, 0.0f);
  out.depth.assign(static_cast<std::size_t>(w) * h, std::numeric_limits<double>::infinity());
  out.source.assign(static_cast<std::size_t>(w) * h, -1);
  const auto& k = view.intrinsics;
  const double r = splat_radius_px;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 pc = view.pose.transform(cloud.positions[i]);
    if (!(pc.z() > 1e-12)) continue;
    const double u = k.fx * pc.x() / pc.z() + k.skew * pc.y() / pc.z() + k.cx;
    const double v = k.fy * pc.y() / pc.z() + k.cy;
    if (u + r < 0.0 || v + r < 0.0 || u - r > w || v - r > h) continue;
    const int x0 = std::max(0, static_cast<int>(std::floor(u - r - 0.5)));
    const int x1 = std::min(w - 1, static_cast<int>(std::ceil(u + r - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(v - r - 0.5)));
    const int y1 = std::min(h - 1, static_cast<int>(std::ceil(v + r - 0.5)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double dx = x + 0.5 - u, dy = y + 0.5 - v;
        if (dx * dx + dy * dy > r * r) continue;
        const std::size_t idx = static_cast<std::size_t>(y) * w + x;
        if (pc.z() < out.depth[idx]) {
          out.depth[idx] = pc.z();
          out.source[idx] = static_cast<std::int64_t>(i);
          out.image.pixels[idx] = static_cast<float>(cloud.intensities[i]);
        }
      }
    }
  }
  return out;
}

Image render_view(const PointCloud& cloud, const CameraView& view, double splat_radius_px) {
  return render(cloud, view, splat_radius_px).image;
}

CameraView canonical_view(const SceneSpec& spec, int width, int height, double focal_px) {
  CameraView view;
  view.width = width;
  view.height = height;
  view.intrinsics = {focal_px, focal_px, width / 2.0, height / 2.0, 0.0};
  if (spec.layout == SceneLayout::TexturedBoxRoom) {
    view.pose = Pose::look_at(Vec3::Zero(), Vec3(spec.extent.x() / 2.0, 0.0, 0.0), Vec3::UnitZ());
  }
  return view;
}

void validate(const BenchmarkSpec& spec) {
  validate(spec.scene);
  if (spec.n_train < 1 || spec.n_query < 1) {
    throw Error(ErrorKind::InvalidArgument, "n_train and n_query must be >= 1");
  }
  if (spec.n_train + spec.n_query > 1000) {
    throw Error(ErrorKind::InvalidArgument, "at most 1000 views (three-digit image names)");
  }
  if (spec.image_width < 32 || spec.image_height < 32) {
    throw Error(ErrorKind::InvalidArgument, "image sides must be >= 32");
  }
  if (!(spec.focal_px > 0.0)) throw Error(ErrorKind::InvalidArgument, "focal_px must be positive");
  if (!(spec.splat_radius_px > 0.0)) throw Error(ErrorKind::InvalidArgument, "splat_radius_px must be positive");
  if (!(spec.orbit_radius >= 0.0 && spec.orbit_radius < 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "orbit_radius must be in [0, 1)");
  }
  if (!(spec.min_coverage >= 0.0 && spec.min_coverage <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "min_coverage must be in [0, 1]");
  }
}

namespace {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

BenchmarkSpec benchmark_spec_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known{
      "layout", "point_spacing", "texture_seed", "extent", "noise_octaves", "noise_frequency",
      "noise_contrast", "uniform_texture", "bump_spacing", "bump_sigma", "bump_height",
      "blob_sigma", "blob_amplitude", "n_train", "n_query", "seed", "image_width",
      "image_height", "focal_px", "splat_radius_px", "orbit_radius", "min_coverage",
      "min_visible_points"};
  if (!j.is_object()) throw Error(ErrorKind::ParseError, "scene spec must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw Error(ErrorKind::ParseError, "unknown scene spec key '" + key + "'");
    }
  }
  BenchmarkSpec spec;
  auto& s = spec.scene;
  try {
    if (j.contains("layout")) s.layout = layout_from_string(j.at("layout").get<std::string>());
    read_opt(j, "point_spacing", s.point_spacing);
    read_opt(j, "texture_seed", s.texture_seed);
    if (j.contains("extent")) {
      const auto e = j.at("extent").get<std::vector<double>>();
      if (e.size() != 3) throw Error(ErrorKind::ParseError, "extent needs 3 values");
      s.extent = Vec3(e[0], e[1], e[2]);
    }
    read_opt(j, "noise_octaves", s.noise_octaves);
    read_opt(j, "noise_frequency", s.noise_frequency);
    read_opt(j, "noise_contrast", s.noise_contrast);
    read_opt(j, "uniform_texture", s.uniform_texture);
    read_opt(j, "bump_spacing", s.bump_spacing);
    read_opt(j, "bump_sigma", s.bump_sigma);
    read_opt(j, "bump_height", s.bump_height);
    read_opt(j, "blob_sigma", s.blob_sigma);
    read_opt(j, "blob_amplitude", s.blob_amplitude);
    read_opt(j, "n_train", spec.n_train);
    read_opt(j, "n_query", spec.n_query);
    read_opt(j, "seed", spec.seed);
    read_opt(j, "image_width", spec.image_width);
    read_opt(j, "image_height", spec.image_height);
    read_opt(j, "focal_px", spec.focal_px);
    read_opt(j, "splat_radius_px", spec.splat_radius_px);
    read_opt(j, "orbit_radius", spec.orbit_radius);
    read_opt(j, "min_coverage", spec.min_coverage);
    read_opt(j, "min_visible_points", spec.min_visible_points);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("scene spec: ") + e.what());
  }
  validate(spec);
  return spec;
}

nlohmann::json to_json(const BenchmarkSpec& spec) {
  const auto& s = spec.scene;
  return {{"layout", to_string(s.layout)},
          {"point_spacing", s.point_spacing},
          {"texture_seed", s.texture_seed},
          {"extent", {s.extent.x(), s.extent.y(), s.extent.z()}},
          {"noise_octaves", s.noise_octaves},
          {"noise_frequency", s.noise_frequency},
          {"noise_contrast", s.noise_contrast},
          {"uniform_texture", s.uniform_texture},
          {"bump_spacing", s.bump_spacing},
          {"bump_sigma", s.bump_sigma},
          {"bump_height", s.bump_height},
          {"blob_sigma", s.blob_sigma},
          {"blob_amplitude", s.blob_amplitude},
          {"n_train", spec.n_train},
          {"n_query", spec.n_query},
          {"seed", spec.seed},
          {"image_width", spec.image_width},
          {"image_height", spec.image_height},
          {"focal_px", spec.focal_px},
          {"splat_radius_px", spec.splat_radius_px},
          {"orbit_radius", spec.orbit_radius},
          {"min_coverage", spec.min_coverage},
          {"min_visible_points", spec.min_visible_points}};
}

bool is_query_view(std::size_t index, std::size_t n_train, std::size_t n_query) {
  const std::size_t n = n_train + n_query;
  return (index + 1) * n_query / n != index * n_query / n;
}

namespace {

CameraView orbit_view(const BenchmarkSpec& spec, std::size_t index, Rng& rng) {
  const auto& s = spec.scene;
  const std::size_t n = spec.n_train + spec.n_query;
  CameraView view;
  view.image_id = static_cast<int>(index);
  view.width = spec.image_width;
  view.height = spec.image_height;
  view.intrinsics = {spec.focal_px, spec.focal_px, spec.image_width / 2.0, spec.image_height / 2.0, 0.0};
  const Vec3 h = s.extent / 2.0;
  const double step = 2.0 * std::numbers::pi / static_cast<double>(n);
  const double theta = step * (static_cast<double>(index) + rng.uniform(-0.15, 0.15));
  if (s.layout == SceneLayout::TexturedBoxRoom) {
    const double r = spec.orbit_radius * std::min(h.x(), h.y()) * rng.uniform(0.9, 1.1);
    const Vec3 eye(r * std::cos(theta), r * std::sin(theta), rng.uniform(-0.1, 0.1) * h.z());
    const Vec3 target(rng.uniform(-0.05, 0.05) * h.x(), rng.uniform(-0.05, 0.05) * h.y(),
                      rng.uniform(-0.05, 0.05) * h.z());
    view.pose = Pose::look_at(eye, target, Vec3::UnitZ());
  } else {
    const double r = spec.orbit_radius * 0.5 * std::min(h.x(), h.y()) * rng.uniform(0.9, 1.1);
    const Vec3 eye(r * std::cos(theta), r * std::sin(theta), 0.0);
    view.pose = Pose::look_at(eye, Vec3(0.0, 0.0, s.extent.z()), -Vec3::UnitY());
  }
  return view;
}

std::size_t points_in_frustum(const PointCloud& cloud, const CameraView& view) {
  std::size_t n = 0;
  for (const auto& p : cloud.positions) {
    const Vec3 pc = view.pose.transform(p);
    if (!(pc.z() > 1e-12)) continue;
    if (in_frustum(project(p, view.pose, view.intrinsics), view.width, view.height)) ++n;
  }
  return n;
}

}  // namespace

std::vector<CameraView> benchmark_views(const BenchmarkSpec& spec, const PointCloud& cloud) {
  validate(spec);
  const std::size_t n = spec.n_train + spec.n_query;
  std::vector<CameraView> views(n);
  parallel_for(n, [&](std::size_t i) {
    for (std::uint64_t attempt = 0; attempt < 64; ++attempt) {
      Rng rng(derive_seed(derive_seed(spec.seed, i), attempt));
      CameraView view = orbit_view(spec, i, rng);
      const Rendering rd = render(cloud, view, spec.splat_radius_px);
      const auto covered = std::count_if(rd.source.begin(), rd.source.end(), [](auto s) { return s >= 0; });
      const double coverage = static_cast<double>(covered) / static_cast<double>(rd.source.size());
      if (coverage >= spec.min_coverage && points_in_frustum(cloud, view) >= spec.min_visible_points) {
        views[i] = view;
        return;
      }
    }
    throw Error(ErrorKind::InvalidArgument,
                "no camera placement for view " + std::to_string(i) + " reaches the required coverage");
  });
  return views;
}

void make_benchmark(const BenchmarkSpec& spec, const std::string& dir) {
  namespace fs = std::filesystem;
  const PointCloud cloud = generate_scene(spec.scene);
  const auto views = benchmark_views(spec, cloud);
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "images", ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir + ": " + ec.message());

  save_ply((fs::path(dir) / "cloud.ply").string(), cloud);
  std::vector<std::string> names(views.size());
  parallel_for(views.size(), [&](std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, "images/%03zu.pgm", i);
    names[i] = name;
    save_pgm((fs::path(dir) / name).string(), render_view(cloud, views[i], spec.splat_radius_px));
  });
  save_pose_records((fs::path(dir) / "poses.json").string(), views);

  nlohmann::json manifest;
  manifest["train"] = nlohmann::json::array();
  manifest["query"] = nlohmann::json::array();
  for (std::size_t i = 0; i < views.size(); ++i) {
    manifest[is_query_view(i, spec.n_train, spec.n_query) ? "query" : "train"].push_back(i);
  }
  manifest["images"] = names;
  manifest["cloud"] = "cloud.ply";
  manifest["poses"] = "poses.json";
  manifest["spec"] = to_json(spec);
  std::ofstream out(fs::path(dir) / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw Error(ErrorKind::IoError, "cannot write manifest in " + dir);
}

}  // namespace xmatch
