#pragma once

#include <Eigen/Core>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "momfit/basis.hpp"

namespace momfit {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// polynomial as a dense coefficient vector over a graded monomial basis
template <typename Scalar>
struct Polynomial {
  MonomialBasis basis;
  Vec<Scalar> coeffs;

  Polynomial(MonomialBasis b, Vec<Scalar> c) : basis(std::move(b)), coeffs(std::move(c)) {
    if (coeffs.size() != basis.size())
      throw std::invalid_argument("Polynomial: coefficient length must match basis size");
  }

  Polynomial(int n, int d) : basis(n, d), coeffs(Vec<Scalar>::Zero(basis.size())) {}

  int vars() const { return basis.vars(); }
  int degree() const { return basis.degree(); }

  template <typename Derived>
  Scalar operator()(const Eigen::MatrixBase<Derived>& x) const {
    return basis.eval(x).dot(coeffs);
  }

  // evaluate at many points at once; rows of pts are points
  template <typename Derived>
  Vec<Scalar> eval_rows(const Eigen::MatrixBase<Derived>& pts) const {
    Vec<Scalar> out(pts.rows());
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
      out[i] = (*this)(pts.row(i).transpose());
    return out;
  }
};

// which monomial block parameterizes the form:
//   DegreeExact:  v = monomials of degree exactly h, theta = -v'Qv + b'v + c
//   DegreeUpTo:   w = monomials of degree <= h,      theta = 1 - w'Qw
enum class FormVariant { DegreeExact, DegreeUpTo };

// shape theta(x) = -v'Qv + b'v + c (or 1 - w'Qw), a polynomial of degree 2h
template <typename Scalar>
struct QuadraticForm {
  FormVariant variant;
  int n;
  int half_degree;
  Mat<Scalar> Q;    // symmetric, size = block length
  Vec<Scalar> b;    // DegreeExact only (empty otherwise)
  Scalar c;         // DegreeExact only

  Eigen::Index block_size() const {
    return variant == FormVariant::DegreeExact ? basis_size_exact(n, half_degree)
                                               : basis_size(n, half_degree);
  }
};

namespace detail {

// monomial list the form is built over: the degree-h slab, or everything up to h
inline Eigen::MatrixXi form_block_exponents(int n, int h, FormVariant variant) {
  MonomialBasis full(n, h);
  if (variant == FormVariant::DegreeUpTo) return full.exponents();
  const Eigen::Index lo = full.degree_start(h);
  return full.exponents().bottomRows(full.size() - lo);
}

}  // namespace detail

// expand a form into plain coefficients over the degree-2h basis.  cross terms
// of Q accumulate with multiplicity 2 because Q is symmetric.
template <typename Scalar>
Polynomial<Scalar> quadratic_form_to_coeffs(const QuadraticForm<Scalar>& f) {
  const Eigen::MatrixXi block = detail::form_block_exponents(f.n, f.half_degree, f.variant);
  const Eigen::Index q = block.rows();
  if (f.Q.rows() != q || f.Q.cols() != q)
    throw std::invalid_argument("quadratic_form_to_coeffs: Q size does not match block");
  Polynomial<Scalar> p(f.n, 2 * f.half_degree);
  for (Eigen::Index i = 0; i < q; ++i) {
    for (Eigen::Index j = i; j < q; ++j) {
      const Scalar mult = i == j ? Scalar(1) : Scalar(2);
      const Eigen::RowVectorXi e = block.row(i) + block.row(j);
      p.coeffs[p.basis.index_of(e)] -= mult * f.Q(i, j);
    }
  }
  if (f.variant == FormVariant::DegreeExact) {
    if (f.b.size() != q)
      throw std::invalid_argument("quadratic_form_to_coeffs: b size does not match block");
    for (Eigen::Index i = 0; i < q; ++i)
      p.coeffs[p.basis.index_of(block.row(i))] += f.b[i];
    p.coeffs[0] += f.c;
  } else {
    p.coeffs[0] += Scalar(1);
  }
  return p;
}

// variable packing for the fitting problems: Q upper triangle row-major,
// then b, then c (DegreeExact), or just the Q triangle (DegreeUpTo)
struct FormLayout {
  FormVariant variant;
  int n;
  int half_degree;
  Eigen::Index block;  // monomial block length q
  Eigen::Index nvars;

  FormLayout(FormVariant v, int n_, int h) : variant(v), n(n_), half_degree(h) {
    block = v == FormVariant::DegreeExact ? basis_size_exact(n_, h) : basis_size(n_, h);
    const Eigen::Index tri = block * (block + 1) / 2;
    nvars = v == FormVariant::DegreeExact ? tri + block + 1 : tri;
  }

  Eigen::Index q_index(Eigen::Index i, Eigen::Index j) const {  // needs i <= j
    return i * block - i * (i - 1) / 2 + (j - i);
  }
  Eigen::Index b_offset() const { return block * (block + 1) / 2; }
  Eigen::Index c_offset() const { return b_offset() + block; }
};

template <typename Scalar>
QuadraticForm<Scalar> unpack_form(const FormLayout& L, const Vec<Scalar>& theta) {
  if (theta.size() != L.nvars)
    throw std::invalid_argument("unpack_form: variable vector length mismatch");
  QuadraticForm<Scalar> f;
  f.variant = L.variant;
  f.n = L.n;
  f.half_degree = L.half_degree;
  f.Q.setZero(L.block, L.block);
  for (Eigen::Index i = 0; i < L.block; ++i)
    for (Eigen::Index j = i; j < L.block; ++j)
      f.Q(i, j) = f.Q(j, i) = theta[L.q_index(i, j)];
  if (L.variant == FormVariant::DegreeExact) {
    f.b = theta.segment(L.b_offset(), L.block);
    f.c = theta[L.c_offset()];
  } else {
    f.b.resize(0);
    f.c = Scalar(0);
  }
  return f;
}

template <typename Scalar>
Vec<Scalar> pack_form(const FormLayout& L, const QuadraticForm<Scalar>& f) {
  Vec<Scalar> theta = Vec<Scalar>::Zero(L.nvars);
  for (Eigen::Index i = 0; i < L.block; ++i)
    for (Eigen::Index j = i; j < L.block; ++j) theta[L.q_index(i, j)] = f.Q(i, j);
  if (L.variant == FormVariant::DegreeExact) {
    theta.segment(L.b_offset(), L.block) = f.b;
    theta[L.c_offset()] = f.c;
  }
  return theta;
}

// linear map from packed form variables to polynomial coefficients over the
// degree-2h basis: coeffs(theta) = T * theta.  column k is the expansion of
// the k-th unit variable.
template <typename Scalar>
Mat<Scalar> form_coefficient_map(const FormLayout& L) {
  const Eigen::MatrixXi block = detail::form_block_exponents(L.n, L.half_degree, L.variant);
  MonomialBasis target(L.n, 2 * L.half_degree);
  Mat<Scalar> T = Mat<Scalar>::Zero(target.size(), L.nvars);
  for (Eigen::Index i = 0; i < L.block; ++i) {
    for (Eigen::Index j = i; j < L.block; ++j) {
      const Scalar mult = i == j ? Scalar(1) : Scalar(2);
      const Eigen::RowVectorXi e = block.row(i) + block.row(j);
      T(target.index_of(e), L.q_index(i, j)) = -mult;
    }
  }
  if (L.variant == FormVariant::DegreeExact) {
    for (Eigen::Index i = 0; i < L.block; ++i)
      T(target.index_of(block.row(i)), L.b_offset() + i) = Scalar(1);
    T(0, L.c_offset()) = Scalar(1);
  }
  return T;
}

// constant term the packed variables do not carry: 1 for the DegreeUpTo
// variant (theta = 1 - w'Qw), 0 otherwise
template <typename Scalar>
Vec<Scalar> form_constant_coeffs(const FormLayout& L) {
  MonomialBasis target(L.n, 2 * L.half_degree);
  Vec<Scalar> a0 = Vec<Scalar>::Zero(target.size());
  if (L.variant == FormVariant::DegreeUpTo) a0[0] = Scalar(1);
  return a0;
}

// substitute x_j -> (x_j - shift_j) / scale into every monomial, producing the
// polynomial q with q(x) = p((x - shift) / scale).  used to express a model
// fitted on normalized data in the original coordinates.
template <typename Scalar>
Polynomial<Scalar> affine_pullback(const Polynomial<Scalar>& p, const Vec<Scalar>& shift,
                                   Scalar scale) {
  if (shift.size() != p.vars())
    throw std::invalid_argument("affine_pullback: shift dimension mismatch");
  if (!(scale > Scalar(0)))
    throw std::invalid_argument("affine_pullback: scale must be positive");
  Polynomial<Scalar> out(p.vars(), p.degree());
  const Scalar inv = Scalar(1) / scale;
  struct Term {
    Eigen::RowVectorXi e;
    Scalar c;
  };
  for (Eigen::Index t = 0; t < p.basis.size(); ++t) {
    const Scalar ct = p.coeffs[t];
    if (ct == Scalar(0)) continue;
    const Eigen::RowVectorXi g = p.basis.exponent(t);
    // expand prod_j ((x_j - s_j)/sigma)^{g_j} one variable at a time
    std::vector<Term> terms{{Eigen::RowVectorXi::Zero(p.vars()), ct}};
    for (int j = 0; j < p.vars(); ++j) {
      if (g[j] == 0) continue;
      std::vector<Term> next;
      next.reserve(terms.size() * (g[j] + 1));
      for (const Term& tm : terms) {
        Scalar binom = Scalar(1);
        for (int k = 0; k <= g[j]; ++k) {
          if (k > 0) binom = binom * Scalar(g[j] - k + 1) / Scalar(k);
          Term nt = tm;
          nt.e[j] += k;
          nt.c *= binom * std::pow(inv, Scalar(k)) *
                  std::pow(-shift[j] * inv, Scalar(g[j] - k));
          next.push_back(std::move(nt));
        }
      }
      terms = std::move(next);
    }
    for (const Term& tm : terms) out.coeffs[out.basis.index_of(tm.e)] += tm.c;
  }
  return out;
}

}  // namespace momfit
