#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "segdesc/geometry.hpp"
#include "segdesc/rng.hpp"

using namespace segdesc;

namespace {

Segment make_segment(std::vector<Point> points) {
  Segment s;
  s.segment_id = 1;
  s.points = std::move(points);
  s.observer_position = {100.0, 0.0, 1.5};
  s.run_id = "test";
  return s;
}

std::vector<Point> random_cloud(std::size_t n, std::uint64_t seed,
                                double scale = 5.0) {
  rng::Engine engine(seed);
  std::vector<Point> points;
  points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    points.push_back({engine.uniform(-scale, scale),
                      engine.uniform(-scale, scale),
                      engine.uniform(-scale, scale)});
  }
  return points;
}

}  // namespace

TEST_CASE("centroid of two points is their midpoint") {
  const Point c = centroid(make_segment({{0, 0, 0}, {2, 0, 0}}));
  CHECK(c.x == doctest::Approx(1.0));
  CHECK(c.y == doctest::Approx(0.0));
  CHECK(c.z == doctest::Approx(0.0));
}

TEST_CASE("centroid of a single point is the point") {
  const Point c = centroid(make_segment({{1, 1, 1}}));
  CHECK(c.x == 1.0);
  CHECK(c.y == 1.0);
  CHECK(c.z == 1.0);
}

TEST_CASE("centroid matches an independent accumulation oracle") {
  const Segment s = make_segment(random_cloud(100, 42));
  // long double accumulation as the independent oracle
  long double sx = 0, sy = 0, sz = 0;
  for (const Point& p : s.points) {
    sx += p.x;
    sy += p.y;
    sz += p.z;
  }
  const Point c = centroid(s);
  CHECK(std::abs(c.x - static_cast<double>(sx / 100.0L)) < 1e-12);
  CHECK(std::abs(c.y - static_cast<double>(sy / 100.0L)) < 1e-12);
  CHECK(std::abs(c.z - static_cast<double>(sz / 100.0L)) < 1e-12);
}

TEST_CASE("centroid of an empty segment throws") {
  Segment s;
  s.points.clear();
  CHECK_THROWS_AS(centroid(s), std::invalid_argument);
}

TEST_CASE("quarter turn about the origin") {
  const auto rotated =
      rotate_about_z({{1, 0, 0}}, RigidZRotation{M_PI / 2}, {0, 0, 0});
  CHECK(rotated[0].x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(rotated[0].y == doctest::Approx(1.0));
  CHECK(rotated[0].z == 0.0);
}

TEST_CASE("zero angle leaves points unchanged") {
  const auto cloud = random_cloud(20, 7);
  const auto rotated = rotate_about_z(cloud, RigidZRotation{0.0}, {1, 2, 3});
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK(rotated[i].x == cloud[i].x);
    CHECK(rotated[i].y == cloud[i].y);
    CHECK(rotated[i].z == cloud[i].z);
  }
}

TEST_CASE("rotating by an angle then its negative restores the cloud") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cloud = random_cloud(50, seed);
    rng::Engine engine(seed + 100);
    const double angle = engine.uniform(-M_PI, M_PI);
    const Point pivot{engine.uniform(-3, 3), engine.uniform(-3, 3), 0};
    const auto there = rotate_about_z(cloud, RigidZRotation{angle}, pivot);
    const auto back = rotate_about_z(there, RigidZRotation{-angle}, pivot);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      CHECK(distance(back[i], cloud[i]) < 1e-9);
    }
  }
}

TEST_CASE("rotation preserves pairwise distances") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto cloud = random_cloud(30, seed);
    rng::Engine engine(seed + 50);
    const auto rotated = rotate_about_z(
        cloud, RigidZRotation{engine.uniform(-M_PI, M_PI)}, {1, -2, 0});
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (std::size_t j = i + 1; j < cloud.size(); ++j) {
        CHECK(std::abs(distance(cloud[i], cloud[j]) -
                       distance(rotated[i], rotated[j])) < 1e-9);
      }
    }
  }
}

TEST_CASE("rotation about the centroid preserves the centroid") {
  const Segment s = make_segment(random_cloud(64, 9));
  const Point c = centroid(s);
  Segment rotated = s;
  rotated.points = rotate_about_z(s.points, RigidZRotation{1.2345}, c);
  const Point c2 = centroid(rotated);
  CHECK(distance(c, c2) < 1e-9);
}
