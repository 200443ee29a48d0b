#include "xmatch/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "xmatch/binary_io.hpp"
#include "xmatch/error.hpp"
#include "xmatch/parallel.hpp"
#include "xmatch/rng.hpp"

namespace xmatch {

DepthMap build_depth_map(const PointCloud& cloud, const CameraView& view) {
  DepthMap dmap{view.width, view.height,
                std::vector<double>(static_cast<std::size_t>(view.width) * view.height, kEmptyDepth)};
  for (const Vec3& p : cloud.positions) {
    const Vec3 pc = view.pose.transform(p);
    if (std::abs(pc.z()) < 1e-12) continue;
    const Projection proj = project(p, view.pose, view.intrinsics);
    if (!in_frustum(proj, view.width, view.height)) continue;
    const auto x = static_cast<int>(std::floor(proj.u));
    const auto y = static_cast<int>(std::floor(proj.v));
    double& cell = dmap.depth[static_cast<std::size_t>(y) * view.width + x];
    cell = std::min(cell, proj.depth);
  }
  return dmap;
}

ProjectedKeypointSet project_keypoints(std::span<const Vec3> positions, const CameraView& view) {
  ProjectedKeypointSet out;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (std::abs(view.pose.transform(positions[i]).z()) < 1e-12) continue;
    const Projection proj = project(positions[i], view.pose, view.intrinsics);
    if (!in_frustum(proj, view.width, view.height)) continue;
    out.push_back({static_cast<std::uint32_t>(i), proj.u, proj.v, proj.depth});
  }
  return out;
}

ProjectedKeypointSet depth_block_filter(const ProjectedKeypointSet& projected, const DepthMap& dmap,
                                        int tau, double depth_slack) {
  if (tau < 1 || tau % 2 == 0) throw Error(ErrorKind::InvalidArgument, "tau must be odd and >= 1");
  if (!(depth_slack > 0.0)) throw Error(ErrorKind::InvalidArgument, "depth_slack must be positive");
  const int half = tau / 2;
  ProjectedKeypointSet kept;
  for (const auto& kp : projected) {
    const int cx = static_cast<int>(std::floor(kp.u));
    const int cy = static_cast<int>(std::floor(kp.v));
    double block_min = kEmptyDepth;
    for (int y = std::max(0, cy - half); y <= std::min(dmap.height - 1, cy + half); ++y)
      for (int x = std::max(0, cx - half); x <= std::min(dmap.width - 1, cx + half); ++x)
        block_min = std::min(block_min, dmap.at(x, y));
    if (std::isinf(block_min)) continue;
    if (kp.depth <= block_min + depth_slack) kept.push_back(kp);
  }
  return kept;
}

std::vector<CorrespondencePair> match_keypoints(const ProjectedKeypointSet& filtered,
                                                std::span<const Vec2> keys2d, double alpha,
                                                std::uint32_t image_id) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha must be positive");
  std::vector<CorrespondencePair> candidates;
  for (const auto& p : filtered) {
    for (std::size_t k = 0; k < keys2d.size(); ++k) {
      const double d = std::hypot(p.u - keys2d[k].x(), p.v - keys2d[k].y());
      if (d < alpha) {
        candidates.push_back({{p.keypoint_id, static_cast<std::uint32_t>(k), image_id}, d});
      }
    }
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    if (a.pixel_distance != b.pixel_distance) return a.pixel_distance < b.pixel_distance;
    if (a.id.kp3d != b.id.kp3d) return a.id.kp3d < b.id.kp3d;
    return a.id.kp2d < b.id.kp2d;
  });
  std::set<std::uint32_t> used3d, used2d;
  std::vector<CorrespondencePair> out;
  for (const auto& c : candidates) {
    if (used3d.count(c.id.kp3d) || used2d.count(c.id.kp2d)) continue;
    used3d.insert(c.id.kp3d);
    used2d.insert(c.id.kp2d);
    out.push_back(c);
  }
  return out;
}

std::vector<PairId> sample_negatives(std::span<const CorrespondencePair> positives,
                                     const FeatureSet3D& features3d, std::size_t count, double beta,
                                     double gamma, std::uint64_t seed) {
  if (count == 0) throw Error(ErrorKind::InvalidArgument, "negative count must be positive");
  if (positives.empty() || features3d.size() == 0) {
    throw Error(ErrorKind::PoolExhausted, "no positives to pair against");
  }
  std::set<PairId> taken;
  for (const auto& p : positives) taken.insert(p.id);
  std::vector<PairId> out;
  Rng rng(seed);
  const std::size_t max_attempts = 100 * count;
  for (std::size_t attempt = 0; attempt < max_attempts && out.size() < count; ++attempt) {
    const auto& pos = positives[rng.index(positives.size())];
    const auto cand = static_cast<std::uint32_t>(rng.index(features3d.size()));
    const auto& truth = features3d.keypoints[pos.id.kp3d];
    if ((features3d.keypoints[cand].position - truth.position).norm() < beta) continue;
    const auto dc = features3d.descriptor(cand);
    if (is_zero_descriptor(dc)) continue;
    const auto dt = features3d.descriptor(pos.id.kp3d);
    double d2 = 0.0;
    for (std::size_t k = 0; k < dc.size(); ++k) d2 += (double(dc[k]) - dt[k]) * (double(dc[k]) - dt[k]);
    if (std::sqrt(d2) < gamma) continue;
    const PairId id{cand, pos.id.kp2d, pos.id.image_id};
    if (!taken.insert(id).second) continue;
    out.push_back(id);
  }
  if (out.size() < count) {
    throw Error(ErrorKind::PoolExhausted, "found " + std::to_string(out.size()) + " of " +
                                              std::to_string(count) + " negative pairs");
  }
  return out;
}

std::size_t CorrespondenceDataset::n_pos() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
}

void CorrespondenceDataset::append(std::span<const float> desc3d, std::span<const float> desc2d,
                                   bool positive, const PairId& id) {
  if (desc3d.size() != p || desc2d.size() != q) {
    throw Error(ErrorKind::DimensionMismatch, "descriptor sizes do not match dataset dims");
  }
  features.insert(features.end(), desc3d.begin(), desc3d.end());
  features.insert(features.end(), desc2d.begin(), desc2d.end());
  labels.push_back(positive ? 1 : 0);
  provenance.push_back(id);
}

void validate(const DatasetConfig& cfg) {
  if (!(cfg.alpha > 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha must be > 0");
  if (!(cfg.beta >= 0.0)) throw Error(ErrorKind::InvalidArgument, "beta must be >= 0");
  if (!(cfg.gamma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma must be >= 0");
  if (cfg.tau < 1 || cfg.tau % 2 == 0) throw Error(ErrorKind::InvalidArgument, "tau must be odd and >= 1");
  if (!(cfg.depth_slack > 0.0)) throw Error(ErrorKind::InvalidArgument, "depth_slack must be > 0");
  if (!(cfg.negative_ratio > 0.0)) throw Error(ErrorKind::InvalidArgument, "negative_ratio must be > 0");
}

CorrespondenceDataset assemble_dataset(const PointCloud& cloud, const FeatureSet3D& features3d,
                                       std::span<const PosedFeatures> images,
                                       const DatasetConfig& cfg, DatasetDiagnostics* diagnostics) {
  validate(cfg);
  if (images.empty()) throw Error(ErrorKind::InvalidArgument, "at least one posed image required");

  // Zero-sentinel 3D descriptors are not projected; ids keep their original index.
  std::vector<Vec3> positions;
  std::vector<std::uint32_t> position_ids;
  for (std::size_t i = 0; i < features3d.size(); ++i) {
    if (is_zero_descriptor(features3d.descriptor(i))) continue;
    positions.push_back(features3d.keypoints[i].position);
    position_ids.push_back(static_cast<std::uint32_t>(i));
  }

  struct PerImage {
    std::size_t projected = 0, kept = 0;
    std::vector<CorrespondencePair> pairs;
  };
  std::vector<PerImage> results(images.size());
  parallel_for(images.size(), [&](std::size_t n) {
    const PosedFeatures& img = images[n];
    const DepthMap dmap = build_depth_map(cloud, img.view);
    ProjectedKeypointSet projected = project_keypoints(positions, img.view);
    for (auto& p : projected) p.keypoint_id = position_ids[p.keypoint_id];
    const ProjectedKeypointSet kept = depth_block_filter(projected, dmap, cfg.tau, cfg.depth_slack);

    std::vector<Vec2> keys2d;
    std::vector<std::uint32_t> key_ids;
    for (std::size_t k = 0; k < img.features.size(); ++k) {
      if (is_zero_descriptor(img.features.descriptor(k))) continue;
      keys2d.emplace_back(img.features.keypoints[k].u, img.features.keypoints[k].v);
      key_ids.push_back(static_cast<std::uint32_t>(k));
    }
    auto pairs = match_keypoints(kept, keys2d, cfg.alpha, static_cast<std::uint32_t>(img.view.image_id));
    for (auto& p : pairs) p.id.kp2d = key_ids[p.id.kp2d];
    results[n] = {projected.size(), kept.size(), std::move(pairs)};
  });

  std::vector<CorrespondencePair> positives;
  std::vector<std::size_t> pair_image;  // index into `images` per positive
  for (std::size_t n = 0; n < results.size(); ++n) {
    for (const auto& p : results[n].pairs) {
      positives.push_back(p);
      pair_image.push_back(n);
    }
    if (diagnostics) {
      diagnostics->projected_per_image.push_back(results[n].projected);
      diagnostics->kept_per_image.push_back(results[n].kept);
      diagnostics->positives_per_image.push_back(results[n].pairs.size());
    }
  }
  if (positives.empty()) throw Error(ErrorKind::EmptyDataset, "no 2D-3D correspondences found");

  CorrespondenceDataset ds;
  ds.p = features3d.dims;
  ds.q = images.front().features.dims;
  for (std::size_t i = 0; i < positives.size(); ++i) {
    const auto& id = positives[i].id;
    ds.append(features3d.descriptor(id.kp3d), images[pair_image[i]].features.descriptor(id.kp2d),
              true, id);
  }

  const auto n_neg = static_cast<std::size_t>(std::llround(cfg.negative_ratio * positives.size()));
  if (n_neg > 0) {
    auto find_image = [&](std::uint32_t image_id) -> const PosedFeatures& {
      for (const auto& img : images)
        if (static_cast<std::uint32_t>(img.view.image_id) == image_id) return img;
      throw Error(ErrorKind::InvalidArgument, "unknown image id");
    };
    for (const PairId& id : sample_negatives(positives, features3d, n_neg, cfg.beta, cfg.gamma, cfg.seed)) {
      ds.append(features3d.descriptor(id.kp3d), find_image(id.image_id).features.descriptor(id.kp2d),
                false, id);
    }
  }
  return ds;
}

void save_dataset(const std::string& path, const CorrespondenceDataset& ds,
                  const std::string& provenance_json) {
  ByteWriter w;
  w.magic(kDatasetMagic);
  w.u32(ds.p);
  w.u32(ds.q);
  w.u32(static_cast<std::uint32_t>(ds.n_pos()));
  w.u32(static_cast<std::uint32_t>(ds.n_neg()));
  for (int pass = 1; pass >= 0; --pass) {
    for (std::size_t i = 0; i < ds.rows(); ++i) {
      if (ds.labels[i] != pass) continue;
      for (float v : ds.row(i)) w.f32(v);
      w.u8(ds.labels[i]);
      w.u32(ds.provenance[i].kp3d);
      w.u32(ds.provenance[i].kp2d);
      w.u32(ds.provenance[i].image_id);
    }
  }
  if (!provenance_json.empty()) w.trailer(provenance_json);
  w.write_file(path);
}

CorrespondenceDataset load_dataset(const std::string& path) {
  auto r = ByteReader::from_file(path);
  r.expect_magic(kDatasetMagic);
  CorrespondenceDataset ds;
  ds.p = r.u32();
  ds.q = r.u32();
  const std::uint32_t n_pos = r.u32(), n_neg = r.u32();
  const std::size_t n = static_cast<std::size_t>(n_pos) + n_neg;
  ds.features.reserve(n * ds.dims());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < ds.dims(); ++k) ds.features.push_back(r.f32());
    const std::uint8_t label = r.u8();
    if (label != (i < n_pos ? 1 : 0)) throw Error(ErrorKind::ParseError, path + ": label order");
    ds.labels.push_back(label);
    PairId id;
    id.kp3d = r.u32();
    id.kp2d = r.u32();
    id.image_id = r.u32();
    ds.provenance.push_back(id);
  }
  r.trailer();
  if (!r.at_end()) throw Error(ErrorKind::ParseError, path + ": trailing bytes");
  return ds;
}

}  // namespace xmatch
