#pragma once

#include <Eigen/Core>
#include <stdexcept>
#include <vector>

#include "momfit/parallel.hpp"
#include "momfit/polynomial.hpp"

namespace momfit {

template <typename Scalar>
struct Segment {
  Eigen::Matrix<Scalar, 2, 1> a;
  Eigen::Matrix<Scalar, 2, 1> b;
};

// trace {theta = 0} over [lo, hi] by marching squares on a cells x cells grid
// with linear interpolation along cell edges.  corners with theta >= 0 count
// as inside; the two ambiguous saddle cases follow the sign at the cell
// center so touching lobes do not fuse.
template <typename Scalar>
std::vector<Segment<Scalar>> zero_level_segments(const Polynomial<Scalar>& theta,
                                                 const Vec<Scalar>& lo, const Vec<Scalar>& hi,
                                                 int cells = 512) {
  if (theta.vars() != 2) throw std::invalid_argument("zero_level_segments: need 2 variables");
  if (lo.size() != 2 || hi.size() != 2 || !((hi - lo).array() > Scalar(0)).all())
    throw std::invalid_argument("zero_level_segments: invalid window");
  if (cells < 1) throw std::invalid_argument("zero_level_segments: need at least one cell");

  const Eigen::Index m = cells + 1;
  const Scalar dx = (hi[0] - lo[0]) / Scalar(cells);
  const Scalar dy = (hi[1] - lo[1]) / Scalar(cells);
  Mat<Scalar> f(m, m);  // f(i, j) = theta at (lo_x + i dx, lo_y + j dy)
  for_each_block(m, 8, [&](std::ptrdiff_t, std::ptrdiff_t beg, std::ptrdiff_t end) {
    Eigen::Matrix<Scalar, 2, 1> x;
    for (std::ptrdiff_t i = beg; i < end; ++i) {
      x[0] = lo[0] + Scalar(i) * dx;
      for (Eigen::Index j = 0; j < m; ++j) {
        x[1] = lo[1] + Scalar(j) * dy;
        f(i, j) = theta(x);
      }
    }
  });

  const auto cross = [](Scalar f0, Scalar f1) {
    const Scalar d = f0 - f1;
    if (d == Scalar(0)) return Scalar(0.5);
    const Scalar t = f0 / d;
    return t < Scalar(0) ? Scalar(0) : (t > Scalar(1) ? Scalar(1) : t);
  };

  std::vector<Segment<Scalar>> out;
  Eigen::Matrix<Scalar, 2, 1> x;
  for (Eigen::Index i = 0; i < cells; ++i) {
    const Scalar x0 = lo[0] + Scalar(i) * dx;
    for (Eigen::Index j = 0; j < cells; ++j) {
      const Scalar y0 = lo[1] + Scalar(j) * dy;
      const Scalar fbl = f(i, j), fbr = f(i + 1, j);
      const Scalar ftr = f(i + 1, j + 1), ftl = f(i, j + 1);
      int code = 0;
      if (fbl >= Scalar(0)) code |= 1;
      if (fbr >= Scalar(0)) code |= 2;
      if (ftr >= Scalar(0)) code |= 4;
      if (ftl >= Scalar(0)) code |= 8;
      if (code == 0 || code == 15) continue;

      // crossing points on the four cell edges
      const auto bottom = [&] {
        return Eigen::Matrix<Scalar, 2, 1>(x0 + dx * cross(fbl, fbr), y0);
      };
      const auto top = [&] {
        return Eigen::Matrix<Scalar, 2, 1>(x0 + dx * cross(ftl, ftr), y0 + dy);
      };
      const auto left = [&] {
        return Eigen::Matrix<Scalar, 2, 1>(x0, y0 + dy * cross(fbl, ftl));
      };
      const auto right = [&] {
        return Eigen::Matrix<Scalar, 2, 1>(x0 + dx, y0 + dy * cross(fbr, ftr));
      };

      switch (code) {
        case 1: case 14: out.push_back({left(), bottom()}); break;
        case 2: case 13: out.push_back({bottom(), right()}); break;
        case 3: case 12: out.push_back({left(), right()}); break;
        case 4: case 11: out.push_back({right(), top()}); break;
        case 6: case 9:  out.push_back({bottom(), top()}); break;
        case 7: case 8:  out.push_back({left(), top()}); break;
        case 5: case 10: {
          x[0] = x0 + dx / Scalar(2);
          x[1] = y0 + dy / Scalar(2);
          const bool center_in = theta(x) >= Scalar(0);
          // both pairings cut the cell along its other diagonal; the center
          // sign says which two corners the boundary actually isolates
          if ((code == 5) == center_in) {
            out.push_back({left(), top()});
            out.push_back({bottom(), right()});
          } else {
            out.push_back({left(), bottom()});
            out.push_back({right(), top()});
          }
          break;
        }
        default: break;
      }
    }
  }
  return out;
}

}  // namespace momfit
