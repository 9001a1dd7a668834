#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace momfit {

// number of monomials in n variables of total degree <= d, i.e. C(n+d, d).
// throws std::overflow_error if the count does not fit in a signed 64-bit index.
inline std::int64_t basis_size(int n, int d) {
  if (n < 1) throw std::invalid_argument("basis_size: need n >= 1");
  if (d < 0) throw std::invalid_argument("basis_size: need d >= 0");
  // C(n+d, d) = prod_{i=1..d} (n+i)/i, kept exact by dividing as we go
  std::uint64_t num = 1;
  for (int i = 1; i <= d; ++i) {
    std::uint64_t next;
    if (__builtin_mul_overflow(num, static_cast<std::uint64_t>(n) + i, &next))
      throw std::overflow_error("basis_size: monomial count overflows 64 bits");
    num = next / i;  // exact: prefix products of C(n+i, i) are integers
  }
  if (num > static_cast<std::uint64_t>(INT64_MAX))
    throw std::overflow_error("basis_size: monomial count overflows 64 bits");
  return static_cast<std::int64_t>(num);
}

// number of monomials of total degree exactly d, i.e. C(n+d-1, n-1)
inline std::int64_t basis_size_exact(int n, int d) {
  if (d == 0) return 1;
  return basis_size(n, d) - basis_size(n, d - 1);
}

// monomials in n variables up to total degree d, graded ordering: ascending
// total degree, and within a degree descending lexicographic exponents, so the
// list starts 1, x1, ..., xn, x1^2, x1*x2, ...  the degree-(d-1) basis is a
// prefix of the degree-d basis.
class MonomialBasis {
 public:
  MonomialBasis(int n, int d) : n_(n), d_(d) {
    const std::int64_t count = basis_size(n, d);
    exponents_.resize(count, n);
    Eigen::RowVectorXi row = Eigen::RowVectorXi::Zero(n);
    Eigen::Index pos = 0;
    for (int deg = 0; deg <= d; ++deg) emit(row, 0, deg, pos);
    for (Eigen::Index i = 0; i < exponents_.rows(); ++i)
      index_[key(exponents_.row(i))] = i;
    build_parents();
  }

  int vars() const { return n_; }
  int degree() const { return d_; }
  Eigen::Index size() const { return exponents_.rows(); }

  // one row per monomial, entry (i, j) is the exponent of x_j in monomial i
  const Eigen::MatrixXi& exponents() const { return exponents_; }
  Eigen::RowVectorXi exponent(Eigen::Index i) const { return exponents_.row(i); }

  // position of an exponent vector in the ordering; throws if absent
  Eigen::Index index_of(const Eigen::RowVectorXi& e) const {
    auto it = index_.find(key(e));
    if (it == index_.end())
      throw std::invalid_argument("MonomialBasis: exponent vector not in basis");
    return it->second;
  }

  bool contains(const Eigen::RowVectorXi& e) const {
    return index_.find(key(e)) != index_.end();
  }

  // first monomial index with the given total degree (monomials are grouped by
  // degree, so [degree_start(k), degree_start(k+1)) is the degree-k slab)
  Eigen::Index degree_start(int deg) const {
    return deg == 0 ? 0 : basis_size(n_, deg - 1);
  }

  // evaluate all monomials at a point, in basis order.  each monomial of
  // positive degree is a parent monomial times one variable, so the whole
  // vector costs one multiply per entry.
  template <typename Derived>
  Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> eval(
      const Eigen::MatrixBase<Derived>& x) const {
    using Scalar = typename Derived::Scalar;
    if (x.size() != n_)
      throw std::invalid_argument("MonomialBasis::eval: point dimension mismatch");
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> m(size());
    m[0] = Scalar(1);
    for (Eigen::Index i = 1; i < size(); ++i)
      m[i] = m[parent_index_[i]] * x[parent_var_[i]];
    return m;
  }

 private:
  static std::string key(const Eigen::RowVectorXi& e) {
    std::string k(e.size(), '\0');
    for (Eigen::Index j = 0; j < e.size(); ++j) k[j] = static_cast<char>(e[j]);
    return k;
  }

  void emit(Eigen::RowVectorXi& row, int var, int rem, Eigen::Index& pos) {
    if (var == n_ - 1) {
      row[var] = rem;
      exponents_.row(pos++) = row;
      row[var] = 0;
      return;
    }
    for (int e = rem; e >= 0; --e) {  // descending lex within each degree
      row[var] = e;
      emit(row, var + 1, rem - e, pos);
    }
    row[var] = 0;
  }

  void build_parents() {
    parent_var_.assign(size(), 0);
    parent_index_.assign(size(), 0);
    for (Eigen::Index i = 1; i < size(); ++i) {
      Eigen::RowVectorXi e = exponents_.row(i);
      int j = 0;
      while (e[j] == 0) ++j;
      parent_var_[i] = j;
      e[j] -= 1;
      parent_index_[i] = index_.at(key(e));
    }
  }

  int n_;
  int d_;
  Eigen::MatrixXi exponents_;
  std::map<std::string, Eigen::Index> index_;
  std::vector<int> parent_var_;
  std::vector<Eigen::Index> parent_index_;
};

}  // namespace momfit
