#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <stdexcept>
#include <vector>

#include "momfit/dataset.hpp"
#include "momfit/parallel.hpp"

namespace momfit {

// moments of an empirical measure up to a degree: y[t] = sum_i w_i * m_t(x_i)
// for every basis monomial m_t
template <typename Scalar>
struct MomentData {
  MonomialBasis basis;
  Vec<Scalar> y;
};

// accumulate weighted monomial vectors blockwise, then combine the block
// partials with a pairwise tree.  the summation order is a function of the
// point count alone, so results are identical for any thread count.
template <typename Scalar>
MomentData<Scalar> moment_vector(const EmpiricalMeasure<Scalar>& m, int order) {
  m.validate();
  if (order < 0) throw std::invalid_argument("moment_vector: negative order");
  MonomialBasis basis(static_cast<int>(m.dim()), order);
  const Eigen::Index npts = m.size();
  constexpr std::ptrdiff_t kBlock = 256;
  const std::ptrdiff_t nblocks = (npts + kBlock - 1) / kBlock;
  std::vector<Vec<Scalar>> partial(nblocks);
  const auto& pts = m.dataset->points;
  for_each_block(npts, kBlock, [&](std::ptrdiff_t b, std::ptrdiff_t lo, std::ptrdiff_t hi) {
    Vec<Scalar> acc = Vec<Scalar>::Zero(basis.size());
    for (std::ptrdiff_t i = lo; i < hi; ++i)
      acc += m.weights[i] * basis.eval(pts.row(i).transpose());
    partial[b] = std::move(acc);
  });
  return {std::move(basis), pairwise_combine(partial, 0, nblocks)};
}

// moment matrix of order r: entry (s, t) is the moment of m_s * m_t
template <typename Scalar>
Mat<Scalar> moment_matrix(const MomentData<Scalar>& md, int r) {
  if (md.basis.degree() < 2 * r)
    throw std::invalid_argument("moment_matrix: moments only known to degree " +
                                std::to_string(md.basis.degree()) + ", need " +
                                std::to_string(2 * r));
  MonomialBasis rows(md.basis.vars(), r);
  const Eigen::Index m = rows.size();
  Mat<Scalar> M(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i; j < m; ++j) {
      const Eigen::RowVectorXi e = rows.exponent(i) + rows.exponent(j);
      M(i, j) = M(j, i) = md.y[md.basis.index_of(e)];
    }
  return M;
}

// localizing matrix of theta at order r, assembled entrywise from moments of
// theta * m_s * m_t
template <typename Scalar>
Mat<Scalar> localizing_matrix(const MomentData<Scalar>& md, const Polynomial<Scalar>& theta,
                              int r) {
  if (theta.vars() != md.basis.vars())
    throw std::invalid_argument("localizing_matrix: variable count mismatch");
  if (md.basis.degree() < 2 * r + theta.degree())
    throw std::invalid_argument("localizing_matrix: moments only known to degree " +
                                std::to_string(md.basis.degree()) + ", need " +
                                std::to_string(2 * r + theta.degree()));
  MonomialBasis rows(md.basis.vars(), r);
  const Eigen::Index m = rows.size();
  Mat<Scalar> M = Mat<Scalar>::Zero(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i; j < m; ++j) {
      Scalar v = Scalar(0);
      for (Eigen::Index g = 0; g < theta.basis.size(); ++g) {
        if (theta.coeffs[g] == Scalar(0)) continue;
        const Eigen::RowVectorXi e =
            rows.exponent(i) + rows.exponent(j) + theta.basis.exponent(g);
        v += theta.coeffs[g] * md.y[md.basis.index_of(e)];
      }
      M(i, j) = M(j, i) = v;
    }
  return M;
}

// the localizing matrix is linear in theta's coefficients: it equals
// sum_g theta_g * G[g] where G[g] is the moment matrix shifted by monomial g.
// this materializes the family once so many thetas can be assembled cheaply.
template <typename Scalar>
struct LocalizingOperator {
  MonomialBasis theta_basis;
  Eigen::Index block;               // localizing block size C(n+r, r)
  std::vector<Mat<Scalar>> shifted; // one matrix per theta coefficient

  Mat<Scalar> apply(const Vec<Scalar>& theta_coeffs) const {
    if (theta_coeffs.size() != theta_basis.size())
      throw std::invalid_argument("LocalizingOperator: coefficient length mismatch");
    Mat<Scalar> M = Mat<Scalar>::Zero(block, block);
    for (Eigen::Index g = 0; g < theta_coeffs.size(); ++g)
      if (theta_coeffs[g] != Scalar(0)) M += theta_coeffs[g] * shifted[g];
    return M;
  }
};

template <typename Scalar>
LocalizingOperator<Scalar> localizing_operator(const EmpiricalMeasure<Scalar>& m, int r,
                                               int theta_degree) {
  if (r < 0 || theta_degree < 0)
    throw std::invalid_argument("localizing_operator: negative degree");
  const MomentData<Scalar> md = moment_vector(m, 2 * r + theta_degree);
  MonomialBasis rows(md.basis.vars(), r);
  LocalizingOperator<Scalar> op{MonomialBasis(md.basis.vars(), theta_degree), rows.size(), {}};
  op.shifted.reserve(op.theta_basis.size());
  const Eigen::Index mm = rows.size();
  for (Eigen::Index g = 0; g < op.theta_basis.size(); ++g) {
    Mat<Scalar> G(mm, mm);
    for (Eigen::Index i = 0; i < mm; ++i)
      for (Eigen::Index j = i; j < mm; ++j) {
        const Eigen::RowVectorXi e =
            rows.exponent(i) + rows.exponent(j) + op.theta_basis.exponent(g);
        G(i, j) = G(j, i) = md.y[md.basis.index_of(e)];
      }
    op.shifted.push_back(std::move(G));
  }
  return op;
}

// numerical rank: count of eigenvalues above tol_rel times the largest
template <typename Scalar>
Eigen::Index numerical_rank(const Mat<Scalar>& A, Scalar tol_rel = Scalar(1e-8)) {
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(A, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const Scalar cutoff = tol_rel * std::max(ev.cwiseAbs().maxCoeff(), Scalar(0));
  if (!(cutoff > Scalar(0))) return 0;
  return (ev.array() > cutoff).count();
}

struct RankReport {
  Eigen::Index rank = 0;
  bool generic = false;
};

// a support of size C(n+r, r) is generic for order r when its moment matrix
// has full rank; smaller supports are generic when the rank equals their size
template <typename Scalar>
RankReport rank_check(const EmpiricalMeasure<Scalar>& m, int r) {
  const MomentData<Scalar> md = moment_vector(m, 2 * r);
  const Mat<Scalar> M = moment_matrix(md, r);
  const Eigen::Index want = std::min<Eigen::Index>(m.size(), M.rows());
  const Eigen::Index rank = numerical_rank(M);
  return {rank, rank == want};
}

}  // namespace momfit
