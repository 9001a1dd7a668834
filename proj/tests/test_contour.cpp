#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "doctest.h"
#include "momfit/contour.hpp"
#include "momfit/svg.hpp"

using namespace momfit;

namespace {

Polynomial<double> circle(double radius) {
  Polynomial<double> p(2, 2);
  p.coeffs[p.basis.index_of(Eigen::RowVector2i(0, 0))] = radius * radius;
  p.coeffs[p.basis.index_of(Eigen::RowVector2i(2, 0))] = -1.0;
  p.coeffs[p.basis.index_of(Eigen::RowVector2i(0, 2))] = -1.0;
  return p;
}

}  // namespace

TEST_CASE("marching squares traces the unit circle accurately") {
  const auto theta = circle(1.0);
  const Vec<double> lo = Eigen::Vector2d(-1.5, -1.5);
  const Vec<double> hi = Eigen::Vector2d(1.5, 1.5);
  const auto segs = zero_level_segments(theta, lo, hi, 256);
  REQUIRE(segs.size() > 100);

  // interpolated crossings sit within O(h^2) of the true circle
  double worst = 0.0, length = 0.0;
  for (const auto& s : segs) {
    worst = std::max({worst, std::abs(s.a.norm() - 1.0), std::abs(s.b.norm() - 1.0)});
    length += (s.a - s.b).norm();
  }
  CHECK(worst < 5e-4);
  CHECK(length == doctest::Approx(2.0 * std::acos(-1.0)).epsilon(0.01));
}

TEST_CASE("a closed curve visits every vertex exactly twice") {
  const auto theta = circle(0.8);
  const Vec<double> lo = Eigen::Vector2d(-1.0, -1.0);
  const Vec<double> hi = Eigen::Vector2d(1.0, 1.0);
  const auto segs = zero_level_segments(theta, lo, hi, 64);
  // shared cell edges interpolate to bit-identical points from both sides
  std::map<std::pair<double, double>, int> degree;
  for (const auto& s : segs) {
    ++degree[std::make_pair(s.a[0], s.a[1])];
    ++degree[std::make_pair(s.b[0], s.b[1])];
  }
  for (const auto& [pt, d] : degree) CHECK(d == 2);
}

TEST_CASE("saddle cells split according to the center sign") {
  // theta = xy - 1/4 on one cell over [-1,1]^2: opposite corners inside,
  // center outside, so the two lobes must stay disconnected
  Polynomial<double> p(2, 2);
  p.coeffs[p.basis.index_of(Eigen::RowVector2i(1, 1))] = 1.0;
  p.coeffs[p.basis.index_of(Eigen::RowVector2i(0, 0))] = -0.25;
  const Vec<double> lo = Eigen::Vector2d(-1.0, -1.0);
  const Vec<double> hi = Eigen::Vector2d(1.0, 1.0);
  const auto segs = zero_level_segments(p, lo, hi, 1);
  REQUIRE(segs.size() == 2);
  // the curve xy = 1/4 lives where xy is positive, hugging the inside corners
  for (const auto& s : segs) {
    const Eigen::Vector2d mid = (s.a + s.b) / 2.0;
    CHECK(mid[0] * mid[1] > 0.0);
  }

  // flipping the constant joins the lobes; the curve xy = -1/4 moves to the
  // opposite quadrant pair, cutting off the outside corners instead
  Polynomial<double> q(2, 2);
  q.coeffs[q.basis.index_of(Eigen::RowVector2i(1, 1))] = 1.0;
  q.coeffs[q.basis.index_of(Eigen::RowVector2i(0, 0))] = 0.25;
  const auto joined = zero_level_segments(q, lo, hi, 1);
  REQUIRE(joined.size() == 2);
  for (const auto& s : joined) {
    const Eigen::Vector2d mid = (s.a + s.b) / 2.0;
    CHECK(mid[0] * mid[1] < 0.0);
  }
}

TEST_CASE("contour tracing validates its input") {
  const auto theta = circle(1.0);
  const Vec<double> lo = Eigen::Vector2d(-1.0, -1.0);
  const Vec<double> hi = Eigen::Vector2d(1.0, 1.0);
  CHECK_THROWS_AS(zero_level_segments(theta, lo, hi, 0), std::invalid_argument);
  CHECK_THROWS_AS(zero_level_segments(theta, hi, lo, 8), std::invalid_argument);
  Polynomial<double> p3(3, 2);
  CHECK_THROWS_AS(zero_level_segments(p3, lo, hi, 8), std::invalid_argument);
}

TEST_CASE("svg plots contain the scatter and the curve") {
  const auto theta = circle(1.0);
  const Vec<double> lo = Eigen::Vector2d(-1.2, -1.2);
  const Vec<double> hi = Eigen::Vector2d(1.2, 1.2);
  const auto segs = zero_level_segments(theta, lo, hi, 32);

  Mat<double> p1(2, 2), p2(1, 2);
  p1 << 0.0, 0.0, 0.5, 0.5;
  p2 << 2.0, 2.0;
  const auto path =
      (std::filesystem::temp_directory_path() / "momfit_svg_test.tmp").string();
  write_plot_svg(path, Dataset<double>(p1), Dataset<double>(p2), segs, lo, hi);

  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::remove(path.c_str());
  CHECK(text.rfind("<svg", 0) == 0);
  CHECK(text.find("<circle") != std::string::npos);
  CHECK(text.find("<path") != std::string::npos);
  CHECK(text.find("</svg>") != std::string::npos);

  CHECK_THROWS(write_plot_svg("/nonexistent/dir/plot.svg", Dataset<double>(p1),
                              Dataset<double>(p2), segs, lo, hi));
}
