#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "segdesc/eigen_baseline.hpp"
#include "segdesc/error.hpp"
#include "segdesc/rng.hpp"

using namespace segdesc;

namespace {

Segment make_segment(std::vector<Point> points) {
  Segment s;
  s.segment_id = 1;
  s.points = std::move(points);
  s.observer_position = {20, 0, 2};
  s.run_id = "test";
  return s;
}

std::vector<Point> random_cloud(std::size_t n, std::uint64_t seed) {
  rng::Engine engine(seed);
  std::vector<Point> points;
  for (std::size_t i = 0; i < n; ++i) {
    points.push_back({engine.uniform(-2, 2), engine.uniform(-1, 1),
                      engine.uniform(-0.5, 0.5)});
  }
  return points;
}

}  // namespace

TEST_CASE("analytic 3x3 eigenvalues satisfy the characteristic polynomial") {
  CHECK(symmetric3x3_eigenvalues({3, 0, 0, 2, 0, 1}) ==
        std::array<double, 3>{3.0, 2.0, 1.0});

  rng::Engine engine(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<double, 6> m;
    for (double& v : m) v = engine.uniform(-2, 2);
    const auto eig = symmetric3x3_eigenvalues(m);
    CHECK(eig[0] >= eig[1]);
    CHECK(eig[1] >= eig[2]);
    const double trace = m[0] + m[3] + m[5];
    CHECK(std::abs(eig[0] + eig[1] + eig[2] - trace) < 1e-9);
    const double det = m[0] * (m[3] * m[5] - m[4] * m[4]) -
                       m[1] * (m[1] * m[5] - m[4] * m[2]) +
                       m[2] * (m[1] * m[4] - m[3] * m[2]);
    CHECK(std::abs(eig[0] * eig[1] * eig[2] - det) < 1e-8);
  }
}

TEST_CASE("collinear points give a rank-one covariance") {
  const Segment s =
      make_segment({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}});
  const EigenDescriptor d = eigen_descriptor(s);
  CHECK(d.linearity() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(d.planarity() == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(d.scattering() == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("points on a sphere have low anisotropy") {
  rng::Engine engine(12);
  std::vector<Point> points;
  for (int i = 0; i < 2000; ++i) {
    const double x = engine.normal(0, 1);
    const double y = engine.normal(0, 1);
    const double z = engine.normal(0, 1);
    const double r = std::sqrt(x * x + y * y + z * z);
    points.push_back({x / r, y / r, z / r});
  }
  const EigenDescriptor d = eigen_descriptor(make_segment(points));
  CHECK(d.anisotropy() < 0.1);
}

TEST_CASE("the descriptor is invariant to rotation and translation") {
  const Segment s = make_segment(random_cloud(120, 13));
  const EigenDescriptor base = eigen_descriptor(s);

  rng::Engine engine(14);
  for (int trial = 0; trial < 10; ++trial) {
    Segment moved = s;
    const double angle = engine.uniform(-M_PI, M_PI);
    moved.points = rotate_about_z(s.points, RigidZRotation{angle},
                                  {engine.uniform(-2, 2), 0, 0});
    const Point shift{engine.uniform(-30, 30), engine.uniform(-30, 30),
                      engine.uniform(-3, 3)};
    for (Point& p : moved.points) p = p + shift;
    const EigenDescriptor d = eigen_descriptor(moved);
    for (int k = 0; k < EigenDescriptor::kDim; ++k) {
      CHECK(std::abs(d.values[k] - base.values[k]) < 1e-9);
    }
  }
}

TEST_CASE("raw eigenvalues scale quadratically, features not at all") {
  const Segment s = make_segment(random_cloud(150, 15));
  const auto raw = covariance_eigenvalues(s);
  const EigenDescriptor base = eigen_descriptor(s);

  for (double scale : {0.5, 2.0, 7.5}) {
    Segment scaled = s;
    for (Point& p : scaled.points) p = p * scale;
    const auto raw2 = covariance_eigenvalues(scaled);
    for (int k = 0; k < 3; ++k) {
      CHECK(raw2[k] ==
            doctest::Approx(raw[k] * scale * scale).epsilon(1e-9));
    }
    const EigenDescriptor d = eigen_descriptor(scaled);
    for (int k = 0; k < EigenDescriptor::kDim; ++k) {
      CHECK(std::abs(d.values[k] - base.values[k]) < 1e-9);
    }
  }
}

TEST_CASE("degenerate segments are rejected") {
  CHECK_THROWS_WITH_AS(
      eigen_descriptor(make_segment({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}})),
      doctest::Contains("degenerate-segment"), DataError);
  CHECK_THROWS_WITH_AS(
      eigen_descriptor(
          make_segment({{1, 1, 1}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}, {1, 1, 1}})),
      doctest::Contains("degenerate-segment"), DataError);
}
