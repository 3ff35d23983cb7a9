#include "segdesc/preprocessing.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#include "segdesc/error.hpp"

namespace segdesc {

namespace {

constexpr double kDegree = M_PI / 180.0;

void require_binary_same_dims(const VoxelizedSegment& a,
                              const VoxelizedSegment& b, const char* op) {
  if (a.stage != VoxelStage::binary || b.stage != VoxelStage::binary) {
    throw std::invalid_argument(std::string(op) + ": grids must be binary");
  }
  if (a.dims != b.dims) {
    throw std::invalid_argument(std::string(op) + ": grid dims mismatch");
  }
}

}  // namespace

PreprocessConfig::PreprocessConfig()
    : augmentation_angles{-15.0 * kDegree, -7.5 * kDegree, 0.0, 7.5 * kDegree,
                          15.0 * kDegree} {}

std::vector<Segment> euclidean_cluster(const std::vector<Point>& points,
                                       const Point& observer_position,
                                       const PreprocessConfig& cfg,
                                       int frame_index,
                                       const std::string& run_id,
                                       std::int64_t first_segment_id) {
  if (cfg.cluster_radius <= 0.0) {
    throw std::invalid_argument("euclidean_cluster: cluster_radius must be > 0");
  }
  const std::size_t n = points.size();
  std::vector<Segment> segments;
  if (n == 0) return segments;

  // Hash points into cells of side cluster_radius; neighbors can only live
  // in the 27 surrounding cells.
  const double cell = cfg.cluster_radius;
  auto key_of = [cell](const Point& p) {
    const auto kx = static_cast<std::int64_t>(std::floor(p.x / cell));
    const auto ky = static_cast<std::int64_t>(std::floor(p.y / cell));
    const auto kz = static_cast<std::int64_t>(std::floor(p.z / cell));
    return std::tuple<std::int64_t, std::int64_t, std::int64_t>(kx, ky, kz);
  };
  std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>,
           std::vector<std::size_t>>
      cells;
  for (std::size_t i = 0; i < n; ++i) cells[key_of(points[i])].push_back(i);

  const double r2 = cfg.cluster_radius * cfg.cluster_radius;
  std::vector<int> component(n, -1);
  int n_components = 0;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (component[seed] >= 0) continue;
    const int comp = n_components++;
    component[seed] = comp;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      const auto [kx, ky, kz] = key_of(points[i]);
      for (std::int64_t dx = -1; dx <= 1; ++dx) {
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
          for (std::int64_t dz = -1; dz <= 1; ++dz) {
            auto it = cells.find({kx + dx, ky + dy, kz + dz});
            if (it == cells.end()) continue;
            for (std::size_t j : it->second) {
              if (component[j] >= 0) continue;
              if (squared_distance(points[i], points[j]) <= r2) {
                component[j] = comp;
                stack.push_back(j);
              }
            }
          }
        }
      }
    }
  }

  // Components are numbered by their smallest point index, so output order
  // is deterministic.
  std::vector<std::vector<Point>> buckets(n_components);
  for (std::size_t i = 0; i < n; ++i) buckets[component[i]].push_back(points[i]);

  std::int64_t next_id = first_segment_id;
  for (auto& bucket : buckets) {
    if (static_cast<int>(bucket.size()) < cfg.min_cluster_points) continue;
    Segment s;
    s.segment_id = next_id++;
    s.points = std::move(bucket);
    s.observer_position = observer_position;
    s.frame_index = frame_index;
    s.run_id = run_id;
    segments.push_back(std::move(s));
  }
  return segments;
}

std::vector<SegmentGroup> build_groups(const std::vector<Segment>& segments,
                                       const PreprocessConfig& cfg) {
  for (std::size_t i = 1; i < segments.size(); ++i) {
    if (segments[i].frame_index < segments[i - 1].frame_index) {
      throw std::invalid_argument("build_groups: segments not sorted by frame");
    }
  }

  struct Member {
    Point centroid;
    int frame;
  };
  std::vector<SegmentGroup> groups;
  std::vector<std::vector<Member>> members;  // parallel to groups

  for (const Segment& s : segments) {
    const Point c = centroid(s);
    std::int64_t chosen = -1;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      for (const Member& m : members[g]) {
        if (m.frame < s.frame_index && distance(m.centroid, c) < cfg.d_same) {
          chosen = static_cast<std::int64_t>(g);
          break;
        }
      }
      if (chosen >= 0) break;  // groups scanned in ascending id order
    }
    if (chosen < 0) {
      chosen = static_cast<std::int64_t>(groups.size());
      groups.push_back({chosen, {}});
      members.emplace_back();
    }
    groups[chosen].member_ids.push_back(s.segment_id);
    members[chosen].push_back({c, s.frame_index});
  }
  return groups;
}

Segment align_segment(const Segment& segment) {
  const Point c = centroid(segment);
  const double dx = segment.observer_position.x - c.x;
  const double dy = segment.observer_position.y - c.y;
  if (std::hypot(dx, dy) <= 1e-6) {
    throw DataError("alignment-undefined: observer within 1e-6 m horizontally "
                    "of segment centroid (segment " +
                    std::to_string(segment.segment_id) + ")");
  }
  const RigidZRotation r{-std::atan2(dy, dx)};
  Segment out = segment;
  out.points = rotate_about_z(segment.points, r, c);
  out.observer_position = rotate_point_about_z(segment.observer_position, r, c);
  return out;
}

std::vector<Segment> augment_rotations(const Segment& segment,
                                       const std::vector<double>& angles) {
  std::vector<Segment> copies;
  copies.reserve(angles.size());
  const Point c = centroid(segment);
  for (double angle : angles) {
    Segment copy = segment;
    if (angle != 0.0) {
      const RigidZRotation r{angle};
      copy.points = rotate_about_z(segment.points, r, c);
      copy.observer_position =
          rotate_point_about_z(segment.observer_position, r, c);
    }
    copies.push_back(std::move(copy));
  }
  return copies;
}

VoxelizedSegment voxelize(const Segment& segment, const VoxelGridSpec& spec) {
  if (segment.points.empty()) {
    throw std::invalid_argument("voxelize: segment has no points");
  }
  if (spec.voxel_size <= 0.0 || spec.dims[0] < 1 || spec.dims[1] < 1 ||
      spec.dims[2] < 1) {
    throw std::invalid_argument("voxelize: invalid grid spec");
  }
  const Point c = centroid(segment);

  VoxelizedSegment v;
  v.segment_id = segment.segment_id;
  v.dims = spec.dims;
  v.stage = VoxelStage::binary;
  v.values.assign(static_cast<std::size_t>(spec.cell_count()), 0.0f);

  // Indices are taken relative to the centroid with the half-grid offset
  // added afterwards, so the centroid lands exactly in cell dims/2.
  for (const Point& p : segment.points) {
    const double fx =
        std::floor((p.x - c.x) / spec.voxel_size + spec.dims[0] / 2.0);
    const double fy =
        std::floor((p.y - c.y) / spec.voxel_size + spec.dims[1] / 2.0);
    const double fz =
        std::floor((p.z - c.z) / spec.voxel_size + spec.dims[2] / 2.0);
    if (fx < 0.0 || fy < 0.0 || fz < 0.0 || fx >= spec.dims[0] ||
        fy >= spec.dims[1] || fz >= spec.dims[2]) {
      continue;  // outlying point, discarded
    }
    v.values[static_cast<std::size_t>(spec.cell_index(
        static_cast<int>(fx), static_cast<int>(fy), static_cast<int>(fz)))] =
        1.0f;
  }
  int occupied = 0;
  for (float x : v.values) occupied += (x != 0.0f);
  v.occupied_count = occupied;
  if (occupied == 0) {
    throw DataError("empty-voxelization: all points of segment " +
                    std::to_string(segment.segment_id) +
                    " fall outside the grid");
  }
  return v;
}

int hamming_distance(const VoxelizedSegment& a, const VoxelizedSegment& b) {
  require_binary_same_dims(a, b, "hamming_distance");
  int d = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    d += (a.values[i] != b.values[i]);
  }
  return d;
}

std::vector<VoxelizedSegment> hamming_dedup(
    const std::vector<VoxelizedSegment>& group_members, int th_h) {
  if (th_h < 0) throw std::invalid_argument("hamming_dedup: th_h must be >= 0");
  std::vector<const VoxelizedSegment*> order;
  order.reserve(group_members.size());
  for (const auto& m : group_members) order.push_back(&m);
  std::sort(order.begin(), order.end(),
            [](const VoxelizedSegment* a, const VoxelizedSegment* b) {
              return a->segment_id < b->segment_id;
            });

  std::vector<VoxelizedSegment> kept;
  for (const VoxelizedSegment* m : order) {
    bool duplicate = false;
    for (const VoxelizedSegment& k : kept) {
      if (hamming_distance(*m, k) < th_h) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(*m);
  }
  return kept;
}

NormalizationStats fit_normalizer(const std::vector<VoxelizedSegment>& train,
                                  double epsilon) {
  if (train.empty()) {
    throw std::invalid_argument("fit_normalizer: empty training set");
  }
  if (epsilon <= 0.0) {
    throw std::invalid_argument("fit_normalizer: epsilon must be > 0");
  }
  const auto dims = train.front().dims;
  const std::size_t cells = train.front().values.size();
  for (const auto& v : train) {
    if (v.dims != dims) {
      throw std::invalid_argument("fit_normalizer: grid dims mismatch");
    }
    if (v.stage != VoxelStage::binary) {
      throw std::invalid_argument("fit_normalizer: inputs must be binary");
    }
  }

  NormalizationStats stats;
  stats.dims = dims;
  stats.epsilon = epsilon;
  stats.mean.assign(cells, 0.0);
  stats.stddev.assign(cells, 0.0);

  // Two-pass with compensated sums so the result does not depend on how a
  // caller might batch the reduction.
  std::vector<double> comp(cells, 0.0);
  for (const auto& v : train) {
    for (std::size_t i = 0; i < cells; ++i) {
      const double y = static_cast<double>(v.values[i]) - comp[i];
      const double t = stats.mean[i] + y;
      comp[i] = (t - stats.mean[i]) - y;
      stats.mean[i] = t;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(train.size());
  for (std::size_t i = 0; i < cells; ++i) stats.mean[i] *= inv_n;

  std::fill(comp.begin(), comp.end(), 0.0);
  for (const auto& v : train) {
    for (std::size_t i = 0; i < cells; ++i) {
      const double d = static_cast<double>(v.values[i]) - stats.mean[i];
      const double y = d * d - comp[i];
      const double t = stats.stddev[i] + y;
      comp[i] = (t - stats.stddev[i]) - y;
      stats.stddev[i] = t;
    }
  }
  for (std::size_t i = 0; i < cells; ++i) {
    stats.stddev[i] = std::sqrt(std::max(0.0, stats.stddev[i] * inv_n));
  }
  return stats;
}

VoxelizedSegment apply_normalizer(const NormalizationStats& stats,
                                  const VoxelizedSegment& v) {
  if (v.dims != stats.dims) {
    throw std::invalid_argument("apply_normalizer: grid dims mismatch");
  }
  VoxelizedSegment out = v;
  out.stage = VoxelStage::normalized;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] = static_cast<float>(
        (static_cast<double>(v.values[i]) - stats.mean[i]) /
        (stats.stddev[i] + stats.epsilon));
  }
  return out;
}

std::pair<NormalizationStats,
          std::pair<std::vector<VoxelizedSegment>, std::vector<VoxelizedSegment>>>
fit_and_apply_normalizer(const std::vector<VoxelizedSegment>& train,
                         const std::vector<VoxelizedSegment>& rest,
                         double epsilon) {
  NormalizationStats stats = fit_normalizer(train, epsilon);
  std::vector<VoxelizedSegment> train_out;
  train_out.reserve(train.size());
  for (const auto& v : train) train_out.push_back(apply_normalizer(stats, v));
  std::vector<VoxelizedSegment> rest_out;
  rest_out.reserve(rest.size());
  for (const auto& v : rest) rest_out.push_back(apply_normalizer(stats, v));
  return {std::move(stats), {std::move(train_out), std::move(rest_out)}};
}

}  // namespace segdesc
