#include "segdesc/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "segdesc/error.hpp"
#include "segdesc/rng.hpp"

namespace segdesc {

namespace {

// Planar rectangular patch with an outward normal.
struct Rect {
  Point origin;
  Point u, v;     // edge vectors, orthogonal
  Point normal;   // unit outward normal
  double area;
};

struct CylinderShell {
  Point base_center;  // center of the bottom cap
  double radius = 0.0;
  double height = 0.0;
};

struct Instance {
  std::vector<Rect> rects;
  bool has_cylinder = false;
  CylinderShell cylinder;
  double max_extent = 0.0;
  Point center;
};

Rect make_rect(Point origin, Point u, Point v, Point normal) {
  const double area = std::sqrt(u.x * u.x + u.y * u.y + u.z * u.z) *
                      std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z);
  return {origin, u, v, normal, area};
}

// Six outward faces of an axis-aligned box with min corner o.
void add_box(std::vector<Rect>& rects, Point o, double w, double d, double h) {
  rects.push_back(make_rect(o, {w, 0, 0}, {0, d, 0}, {0, 0, -1}));
  rects.push_back(make_rect({o.x, o.y, o.z + h}, {w, 0, 0}, {0, d, 0}, {0, 0, 1}));
  rects.push_back(make_rect(o, {0, d, 0}, {0, 0, h}, {-1, 0, 0}));
  rects.push_back(make_rect({o.x + w, o.y, o.z}, {0, d, 0}, {0, 0, h}, {1, 0, 0}));
  rects.push_back(make_rect(o, {w, 0, 0}, {0, 0, h}, {0, -1, 0}));
  rects.push_back(make_rect({o.x, o.y + d, o.z}, {w, 0, 0}, {0, 0, h}, {0, 1, 0}));
}

Instance make_instance(const SyntheticSpec& spec, rng::Engine& rng,
                       const Point& position) {
  const double wsum = spec.box_weight + spec.cylinder_weight +
                      spec.l_shape_weight + spec.wall_weight;
  const double pick = rng.uniform01() * wsum;

  Instance inst;
  auto extent = [&] { return rng.uniform(spec.size_min, spec.size_max); };

  if (pick < spec.box_weight) {
    const double w = extent(), d = extent(), h = extent();
    add_box(inst.rects, {position.x - w / 2, position.y - d / 2, 0}, w, d, h);
    inst.max_extent = std::max({w, d, h});
    inst.center = {position.x, position.y, h / 2};
  } else if (pick < spec.box_weight + spec.cylinder_weight) {
    const double r = extent() / 2.0, h = extent();
    inst.has_cylinder = true;
    inst.cylinder = {{position.x, position.y, 0}, r, h};
    inst.max_extent = std::max(2 * r, h);
    inst.center = {position.x, position.y, h / 2};
  } else if (pick < spec.box_weight + spec.cylinder_weight +
                        spec.l_shape_weight) {
    // Vertical L: a base box with a narrower box on top sharing part of its
    // top face; the shared sub-face is excluded on both solids.
    const double w = extent(), d = extent();
    const double h1 = extent() * 0.6 + 0.2;
    const double w2 = w * rng.uniform(0.35, 0.65);
    const double h2 = extent() * 0.6 + 0.2;
    const Point o{position.x - w / 2, position.y - d / 2, 0};
    // base box, top face only where the upper box does not sit
    inst.rects.push_back(make_rect(o, {w, 0, 0}, {0, d, 0}, {0, 0, -1}));
    inst.rects.push_back(
        make_rect({o.x + w2, o.y, o.z + h1}, {w - w2, 0, 0}, {0, d, 0}, {0, 0, 1}));
    inst.rects.push_back(make_rect(o, {0, d, 0}, {0, 0, h1}, {-1, 0, 0}));
    inst.rects.push_back(
        make_rect({o.x + w, o.y, o.z}, {0, d, 0}, {0, 0, h1}, {1, 0, 0}));
    inst.rects.push_back(make_rect(o, {w, 0, 0}, {0, 0, h1}, {0, -1, 0}));
    inst.rects.push_back(
        make_rect({o.x, o.y + d, o.z}, {w, 0, 0}, {0, 0, h1}, {0, 1, 0}));
    // upper box (no bottom face)
    inst.rects.push_back(make_rect({o.x, o.y, o.z + h1 + h2}, {w2, 0, 0},
                                   {0, d, 0}, {0, 0, 1}));
    inst.rects.push_back(
        make_rect({o.x, o.y, o.z + h1}, {0, d, 0}, {0, 0, h2}, {-1, 0, 0}));
    inst.rects.push_back(make_rect({o.x + w2, o.y, o.z + h1}, {0, d, 0},
                                   {0, 0, h2}, {1, 0, 0}));
    inst.rects.push_back(
        make_rect({o.x, o.y, o.z + h1}, {w2, 0, 0}, {0, 0, h2}, {0, -1, 0}));
    inst.rects.push_back(make_rect({o.x, o.y + d, o.z + h1}, {w2, 0, 0},
                                   {0, 0, h2}, {0, 1, 0}));
    inst.max_extent = std::max({w, d, h1 + h2});
    inst.center = {position.x, position.y, (h1 + h2) / 2};
  } else {
    const double w = extent() * 1.4, h = extent();
    const double t = 0.15;
    add_box(inst.rects, {position.x - w / 2, position.y - t / 2, 0}, w, t, h);
    inst.max_extent = std::max(w, h);
    inst.center = {position.x, position.y, h / 2};
  }
  return inst;
}

void sample_view_points(const Instance& inst, const SyntheticSpec& spec,
                        const Point& observer, rng::Engine& rng,
                        std::vector<Point>& out) {
  auto visible = [&](const Point& p, const Point& n) {
    return n.x * (observer.x - p.x) + n.y * (observer.y - p.y) +
               n.z * (observer.z - p.z) >
           0.0;
  };
  for (const Rect& r : inst.rects) {
    const long long count =
        std::llround(r.area * spec.point_density);
    for (long long i = 0; i < count; ++i) {
      const double a = rng.uniform01();
      const double b = rng.uniform01();
      const Point p{r.origin.x + a * r.u.x + b * r.v.x,
                    r.origin.y + a * r.u.y + b * r.v.y,
                    r.origin.z + a * r.u.z + b * r.v.z};
      if (visible(p, r.normal)) out.push_back(p);
    }
  }
  if (inst.has_cylinder) {
    const CylinderShell& c = inst.cylinder;
    const long long lateral =
        std::llround(2.0 * M_PI * c.radius * c.height * spec.point_density);
    for (long long i = 0; i < lateral; ++i) {
      const double theta = rng.uniform(0.0, 2.0 * M_PI);
      const double t = rng.uniform01();
      const Point n{std::cos(theta), std::sin(theta), 0.0};
      const Point p{c.base_center.x + c.radius * n.x,
                    c.base_center.y + c.radius * n.y,
                    c.base_center.z + t * c.height};
      if (visible(p, n)) out.push_back(p);
    }
    const long long cap =
        std::llround(M_PI * c.radius * c.radius * spec.point_density);
    for (long long i = 0; i < cap; ++i) {
      const double rr = c.radius * std::sqrt(rng.uniform01());
      const double theta = rng.uniform(0.0, 2.0 * M_PI);
      const Point p{c.base_center.x + rr * std::cos(theta),
                    c.base_center.y + rr * std::sin(theta),
                    c.base_center.z + c.height};
      if (visible(p, {0, 0, 1})) out.push_back(p);
    }
  }
}

}  // namespace

void SyntheticSpec::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    throw UsageError("SyntheticSpec." + field + ": " + why);
  };
  if (n_groups < 1) bad("n_groups", "must be >= 1");
  if (views_per_group < 1) bad("views_per_group", "must be >= 1");
  if (box_weight < 0 || cylinder_weight < 0 || l_shape_weight < 0 ||
      wall_weight < 0) {
    bad("primitive weights", "must be >= 0");
  }
  if (box_weight + cylinder_weight + l_shape_weight + wall_weight <= 0) {
    bad("primitive weights", "must sum to a positive value");
  }
  if (size_min <= 0) bad("size_min", "must be > 0");
  if (size_max < size_min) bad("size_max", "must be >= size_min");
  if (occlusion_fraction < 0 || occlusion_fraction > 0.6) {
    bad("occlusion_fraction", "must be in [0, 0.6]");
  }
  if (view_angle_range <= 0 || view_angle_range > 2.0 * M_PI + 1e-9) {
    bad("view_angle_range", "must be in (0, 2*pi]");
  }
  if (point_density <= 0) bad("point_density", "must be > 0");
  if (noise_sigma < 0) bad("noise_sigma", "must be >= 0");
  if (min_view_points < 1) bad("min_view_points", "must be >= 1");
  if (run_id.empty() ||
      run_id.find_first_of(" \t\n\r") != std::string::npos) {
    bad("run_id", "must be nonempty without whitespace");
  }
}

bool in_occlusion_sector(const Point& p, const Point& center, double start,
                         double fraction) {
  if (fraction <= 0.0) return false;
  double rel = std::atan2(p.y - center.y, p.x - center.x) - start;
  rel = std::fmod(rel, 2.0 * M_PI);
  if (rel < 0.0) rel += 2.0 * M_PI;
  return rel < fraction * 2.0 * M_PI;
}

GeneratedData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  GeneratedData data;
  const int per_row =
      static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.n_groups))));
  const double spacing = 15.0;

  std::int64_t next_id = 0;
  for (int g = 0; g < spec.n_groups; ++g) {
    rng::Engine group_rng(rng::mix(spec.seed, 0x9E0, static_cast<std::uint64_t>(g)));
    const Point position{(g % per_row) * spacing, (g / per_row) * spacing, 0.0};
    const Instance inst = make_instance(spec, group_rng, position);

    SegmentGroup group;
    group.group_id = g;
    for (int v = 0; v < spec.views_per_group; ++v) {
      rng::Engine view_rng(rng::mix(spec.seed, static_cast<std::uint64_t>(g),
                                    static_cast<std::uint64_t>(v)));
      const double azimuth =
          view_rng.uniform(-spec.view_angle_range / 2.0,
                           spec.view_angle_range / 2.0);
      const double dist =
          std::max(6.0, 2.2 * inst.max_extent) * view_rng.uniform(0.95, 1.25);
      const Point observer{inst.center.x + dist * std::cos(azimuth),
                           inst.center.y + dist * std::sin(azimuth), 1.6};

      std::vector<Point> points;
      sample_view_points(inst, spec, observer, view_rng, points);

      rng::Engine occ_rng(rng::mix(spec.seed, static_cast<std::uint64_t>(g),
                                   static_cast<std::uint64_t>(v),
                                   kOcclusionStreamTag));
      const double occ_start = occ_rng.uniform(0.0, 2.0 * M_PI);
      if (spec.occlusion_fraction > 0.0) {
        std::vector<Point> kept;
        kept.reserve(points.size());
        for (const Point& p : points) {
          if (!in_occlusion_sector(p, inst.center, occ_start,
                                   spec.occlusion_fraction)) {
            kept.push_back(p);
          }
        }
        points = std::move(kept);
      }

      rng::Engine noise_rng(rng::mix(spec.seed, static_cast<std::uint64_t>(g),
                                     static_cast<std::uint64_t>(v), 0x401E));
      if (spec.noise_sigma > 0.0) {
        for (Point& p : points) {
          p.x = noise_rng.normal(p.x, spec.noise_sigma);
          p.y = noise_rng.normal(p.y, spec.noise_sigma);
          p.z = noise_rng.normal(p.z, spec.noise_sigma);
        }
      }

      if (static_cast<int>(points.size()) < spec.min_view_points) {
        ++data.dropped_views;
        continue;
      }
      Segment s;
      s.segment_id = next_id++;
      s.points = std::move(points);
      s.observer_position = observer;
      s.frame_index = v;
      s.run_id = spec.run_id;
      group.member_ids.push_back(s.segment_id);
      data.segments.push_back(std::move(s));
    }
    if (group.member_ids.empty()) {
      ++data.dropped_groups;
    } else {
      data.groups.push_back(std::move(group));
    }
  }
  return data;
}

}  // namespace segdesc
