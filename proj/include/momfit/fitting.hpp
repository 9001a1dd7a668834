#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "momfit/dataset.hpp"
#include "momfit/maxdet.hpp"
#include "momfit/moments.hpp"
#include "momfit/parallel.hpp"
#include "momfit/rng.hpp"

namespace momfit {

// what the fit optimizes: the covering volume proxy logdet Q^-1 over a
// quadratic (degree 2) or quartic (degree 4) form, or the l1 coefficient norm
enum class Objective { MaxDetEllipsoid, MaxDetQuartic, L1 };

// how dataset membership enters the program: one scalar inequality per point,
// or one localizing-matrix LMI per class
enum class ConstraintMode { PerPoint, Moment };

enum class FitStatus { Separated, Infeasible, IterationLimit };

inline const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::Separated: return "Separated";
    case FitStatus::Infeasible: return "Infeasible";
    case FitStatus::IterationLimit: return "IterationLimit";
  }
  return "?";
}

inline const char* to_string(Objective o) {
  switch (o) {
    case Objective::MaxDetEllipsoid: return "maxdet-ellipsoid";
    case Objective::MaxDetQuartic: return "maxdet-quartic";
    case Objective::L1: return "l1";
  }
  return "?";
}

// thrown when a dataset cannot support the requested volume objective
class DegenerateData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// a subproblem solve broke down; carries which outer iteration was running
class SolverFailure : public std::runtime_error {
 public:
  SolverFailure(const std::string& what, int outer)
      : std::runtime_error(what), outer_iteration(outer) {}
  int outer_iteration;
};

// one two-class fitting task.  s2 may be empty, which turns the task into
// covering s1 alone.
template <typename Scalar>
struct SeparationInstance {
  Dataset<Scalar> s1;
  Dataset<Scalar> s2;
  int degree = 2;
  int order = 0;  // relaxation order; 0 means match the degree
  Objective objective = Objective::MaxDetEllipsoid;
  FormVariant form = FormVariant::DegreeExact;

  int relaxation_order() const { return order > 0 ? order : degree; }

  void validate() const {
    if (s1.size() == 0) throw std::invalid_argument("SeparationInstance: s1 is empty");
    if (s2.size() > 0 && s2.dim() != s1.dim())
      throw std::invalid_argument("SeparationInstance: class dimensions differ");
    if (degree < 1) throw std::invalid_argument("SeparationInstance: degree must be positive");
    if (objective == Objective::MaxDetEllipsoid && degree != 2)
      throw std::invalid_argument("SeparationInstance: ellipsoid objective needs degree 2");
    if (objective == Objective::MaxDetQuartic && degree != 4)
      throw std::invalid_argument("SeparationInstance: quartic objective needs degree 4");
  }
};

template <typename Scalar>
struct OuterRecord {
  Scalar objective;
  Eigen::Index outside;  // points the candidate still misclassifies
};

template <typename Scalar>
struct FitReport {
  FitStatus status;
  Polynomial<Scalar> theta;
  Scalar objective;
  int outer_iterations;
  std::vector<Eigen::Index> support_sizes;     // points fed to each subproblem
  std::vector<OuterRecord<Scalar>> history;
  // optimum of the slack feasibility program when it was consulted, else NaN
  Scalar certificate_slack;
};

struct MainSettings {
  int max_outer = 50;
  double eval_tol = 1e-9;        // strictness margin for outside-point tests
  bool accumulate_support = false;  // keep earlier support points instead of
                                    // rebuilding the set from scratch
  SolveSettings solver;
};

// a built program plus the affine map from solver variables back to
// polynomial coefficients: coeffs = to_coeffs * vars + base_coeffs
template <typename Scalar>
struct FitProblem {
  MaxDetProblem<Scalar> problem;
  Mat<Scalar> to_coeffs;
  Vec<Scalar> base_coeffs;
  int n = 0;
  int degree = 0;
  std::optional<FormLayout> layout;  // present when vars pack a quadratic form
  Eigen::Index slack_index = -1;     // feasibility program only

  Polynomial<Scalar> decode(const Vec<Scalar>& vars) const {
    if (vars.size() != problem.nvars)
      throw std::invalid_argument("FitProblem: variable vector length mismatch");
    Polynomial<Scalar> p(n, degree);
    p.coeffs = to_coeffs * vars + base_coeffs;
    return p;
  }
};

namespace detail {

// rows of monomial evaluations, one per point; blockwise so large clouds use
// every core with a thread-independent result
template <typename Scalar>
Mat<Scalar> monomial_rows(const MonomialBasis& basis, const Mat<Scalar>& pts) {
  Mat<Scalar> M(pts.rows(), basis.size());
  for_each_block(pts.rows(), 256, [&](std::ptrdiff_t, std::ptrdiff_t lo, std::ptrdiff_t hi) {
    for (std::ptrdiff_t i = lo; i < hi; ++i)
      M.row(i) = basis.eval(pts.row(i).transpose()).transpose();
  });
  return M;
}

template <typename Scalar>
Vec<Scalar> parallel_eval(const Polynomial<Scalar>& theta, const Mat<Scalar>& pts) {
  Vec<Scalar> out(pts.rows());
  for_each_block(pts.rows(), 256, [&](std::ptrdiff_t, std::ptrdiff_t lo, std::ptrdiff_t hi) {
    for (std::ptrdiff_t i = lo; i < hi; ++i)
      out[i] = theta(pts.row(i).transpose());
  });
  return out;
}

// the volume objective is unbounded when the points lie in a proper affine
// subspace: an arbitrarily flat ellipsoid still covers them
template <typename Scalar>
void require_spanning_affine_hull(const Mat<Scalar>& pts, const char* who) {
  const Eigen::Index n = pts.cols();
  if (pts.rows() < n + 1)
    throw DegenerateData(std::string(who) + ": affine hull cannot span with " +
                         std::to_string(pts.rows()) + " points in dimension " +
                         std::to_string(n));
  const Eigen::RowVector<Scalar, Eigen::Dynamic> mean = pts.colwise().mean();
  const Mat<Scalar> centered = pts.rowwise() - mean;
  const Mat<Scalar> cov = centered.transpose() * centered;
  if (numerical_rank(cov, Scalar(1e-12)) < n)
    throw DegenerateData(std::string(who) + ": points lie in a proper affine subspace");
}

// variables packing (Q, b, c) with the volume objective logdet Q^-1:
// the det block is Q itself and the arrow block encodes 4(1-c)Q >= b b'
template <typename Scalar>
FitProblem<Scalar> init_form_problem(int n, int d, FormVariant form) {
  if (d != 2 && d != 4)
    throw std::invalid_argument("volume objectives support degree 2 or 4 polynomials");
  FitProblem<Scalar> fp;
  fp.n = n;
  fp.degree = d;
  fp.layout.emplace(form, n, d / 2);
  const FormLayout& L = *fp.layout;
  fp.problem = MaxDetProblem<Scalar>(L.nvars);
  fp.to_coeffs = form_coefficient_map<Scalar>(L);
  fp.base_coeffs = form_constant_coeffs<Scalar>(L);

  const Eigen::Index q = L.block;
  LmiBlock<Scalar> det;
  det.A0 = Mat<Scalar>::Zero(q, q);
  det.coeff.assign(L.nvars, Mat<Scalar>::Zero(q, q));
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index j = i; j < q; ++j) {
      Mat<Scalar>& E = det.coeff[L.q_index(i, j)];
      E(i, j) = E(j, i) = Scalar(1);
    }
  fp.problem.set_det(std::move(det));

  if (form == FormVariant::DegreeExact) {
    LmiBlock<Scalar> arrow;
    arrow.A0 = Mat<Scalar>::Zero(q + 1, q + 1);
    arrow.A0(q, q) = Scalar(1);
    arrow.coeff.assign(L.nvars, Mat<Scalar>::Zero(q + 1, q + 1));
    for (Eigen::Index i = 0; i < q; ++i)
      for (Eigen::Index j = i; j < q; ++j) {
        Mat<Scalar>& E = arrow.coeff[L.q_index(i, j)];
        E(i, j) = E(j, i) = Scalar(1);
      }
    for (Eigen::Index i = 0; i < q; ++i) {
      Mat<Scalar>& E = arrow.coeff[L.b_offset() + i];
      E(i, q) = E(q, i) = Scalar(0.5);
    }
    arrow.coeff[L.c_offset()](q, q) = Scalar(-1);
    fp.problem.add_block(std::move(arrow));
  }
  return fp;
}

// variables are the split coefficients theta = plus - minus, both nonnegative,
// with the linear cost sum(plus + minus)
template <typename Scalar>
FitProblem<Scalar> init_l1_problem(int n, int d) {
  FitProblem<Scalar> fp;
  fp.n = n;
  fp.degree = d;
  const Eigen::Index N = basis_size(n, d);
  fp.problem = MaxDetProblem<Scalar>(2 * N);
  fp.problem.c = Vec<Scalar>::Ones(2 * N);
  fp.problem.lower = Vec<Scalar>::Zero(2 * N);
  fp.to_coeffs.setZero(N, 2 * N);
  fp.to_coeffs.leftCols(N) = Mat<Scalar>::Identity(N, N);
  fp.to_coeffs.rightCols(N) = -Mat<Scalar>::Identity(N, N);
  fp.base_coeffs = Vec<Scalar>::Zero(N);
  return fp;
}

// scalar inequalities sign*theta(x) >= 0, one per point
template <typename Scalar>
void add_sign_rows(FitProblem<Scalar>& fp, const Mat<Scalar>& pts, Scalar sign) {
  if (pts.rows() == 0) return;
  MonomialBasis basis(fp.n, fp.degree);
  const Mat<Scalar> M = monomial_rows(basis, pts);
  fp.problem.add_rows(sign * (M * fp.base_coeffs), sign * (M * fp.to_coeffs));
}

// localizing LMI sign * M_r(theta y) >= 0.  every such matrix lives on the
// range of the measure's moment matrix, so when the support is too small for
// full rank the block is compressed onto that range; otherwise the cone would
// have no interior and the barrier could not move at all.
template <typename Scalar>
void add_localizing_block(FitProblem<Scalar>& fp, const EmpiricalMeasure<Scalar>& m, int r,
                          Scalar sign) {
  const LocalizingOperator<Scalar> op = localizing_operator(m, r, fp.degree);
  LmiBlock<Scalar> block;
  block.A0 = Mat<Scalar>::Zero(op.block, op.block);
  for (Eigen::Index t = 0; t < fp.base_coeffs.size(); ++t)
    if (fp.base_coeffs[t] != Scalar(0)) block.A0 += sign * fp.base_coeffs[t] * op.shifted[t];
  block.coeff.assign(fp.problem.nvars, Mat<Scalar>::Zero(op.block, op.block));
  for (Eigen::Index k = 0; k < fp.problem.nvars; ++k)
    for (Eigen::Index t = 0; t < fp.to_coeffs.rows(); ++t)
      if (fp.to_coeffs(t, k) != Scalar(0))
        block.coeff[k] += sign * fp.to_coeffs(t, k) * op.shifted[t];

  // shifted[0] is the plain moment matrix; its range carries every localizing
  // matrix of this measure.  directions the measure explores only weakly would
  // leave the barrier no room to move, but truncating them would weaken the
  // constraint, so each kept eigendirection is rescaled to unit strength
  // instead -- a congruence, which changes nothing about semidefiniteness.
  // rescaling a direction of relative weight lambda amplifies rounding in the
  // congruence by roughly eps/lambda, and once that passes the solver's
  // feasibility margins the rescaled constraint is pure noise that can strangle
  // a feasible program, so directions below 1e-10 of the top are dropped
  // instead of whitened.
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(op.shifted[0]);
  const Vec<Scalar>& ev = es.eigenvalues();
  const Scalar cut = Scalar(1e-10) * std::max(ev.cwiseAbs().maxCoeff(), Scalar(0));
  Eigen::Index kept = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > cut) ++kept;
  Mat<Scalar> T(op.block, kept);
  Eigen::Index col = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (ev[i] > cut) T.col(col++) = es.eigenvectors().col(i) / std::sqrt(ev[i]);
  const auto congruent = [&T](const Mat<Scalar>& A) {
    const Mat<Scalar> B = T.transpose() * A * T;
    return Mat<Scalar>(Scalar(0.5) * (B + B.transpose()));
  };
  block.A0 = congruent(block.A0);
  for (auto& A : block.coeff) A = congruent(A);
  fp.problem.add_block(std::move(block));
}

// normalization row theta(anchor) >= 1, excluding the zero polynomial from
// programs with a translation-invariant objective
template <typename Scalar>
void add_anchor_row(FitProblem<Scalar>& fp, const Vec<Scalar>& anchor) {
  MonomialBasis basis(fp.n, fp.degree);
  const Vec<Scalar> m = basis.eval(anchor);
  fp.problem.add_row(m.dot(fp.base_coeffs) - Scalar(1),
                     Vec<Scalar>(fp.to_coeffs.transpose() * m));
}

// geometric mean of the eigenvalues of the packed Q, the scale-free version of
// det Q used by the degenerate-optimum test
template <typename Scalar>
Scalar det_geomean(const FormLayout& L, const Vec<Scalar>& vars) {
  const QuadraticForm<Scalar> f = unpack_form(L, vars);
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(f.Q, Eigen::EigenvaluesOnly);
  const Vec<Scalar>& ev = es.eigenvalues();
  if ((ev.array() <= Scalar(0)).any()) return Scalar(0);
  return std::exp(ev.array().log().mean());
}

// moment-mode program over one or two measures; m2 may be null
template <typename Scalar>
FitProblem<Scalar> build_moment_core(const EmpiricalMeasure<Scalar>& m1,
                                     const EmpiricalMeasure<Scalar>* m2, int d, int r,
                                     Objective obj, FormVariant form,
                                     const Vec<Scalar>* l1_anchor) {
  m1.validate();
  const int n = static_cast<int>(m1.dim());
  FitProblem<Scalar> fp = obj == Objective::L1 ? init_l1_problem<Scalar>(n, d)
                                               : init_form_problem<Scalar>(n, d, form);
  add_localizing_block(fp, m1, r, Scalar(1));
  if (m2) {
    m2->validate();
    if (m2->dim() != m1.dim())
      throw std::invalid_argument("moment relaxation: measure dimensions differ");
    add_localizing_block(fp, *m2, r, Scalar(-1));
  }
  if (obj == Objective::L1) {
    if (!l1_anchor) throw std::invalid_argument("l1 objective needs a normalization anchor");
    add_anchor_row(fp, *l1_anchor);
  }
  return fp;
}

template <typename Scalar>
Vec<Scalar> centroid(const Mat<Scalar>& pts) {
  return pts.colwise().mean().transpose();
}

}  // namespace detail

// covering program for one dataset: minimize logdet Q^-1 over forms that are
// nonnegative on every point (per-point) or whose localizing matrix over the
// uniform measure is PSD (moment)
template <typename Scalar>
FitProblem<Scalar> build_mvce_problem(const Dataset<Scalar>& s, int d, int r,
                                      ConstraintMode mode,
                                      FormVariant form = FormVariant::DegreeExact) {
  if (s.size() == 0) throw std::invalid_argument("build_mvce_problem: empty dataset");
  detail::require_spanning_affine_hull(s.points, "build_mvce_problem");
  if (mode == ConstraintMode::Moment)
    return detail::build_moment_core<Scalar>(uniform_measure(s), nullptr, d, r,
                                             d == 2 ? Objective::MaxDetEllipsoid
                                                    : Objective::MaxDetQuartic,
                                             form, nullptr);
  FitProblem<Scalar> fp = detail::init_form_problem<Scalar>(static_cast<int>(s.dim()), d, form);
  detail::add_sign_rows(fp, s.points, Scalar(1));
  return fp;
}

// covering program straight from a measure (moment mode by construction)
template <typename Scalar>
FitProblem<Scalar> build_mvce_problem(const EmpiricalMeasure<Scalar>& m, int d, int r,
                                      FormVariant form = FormVariant::DegreeExact) {
  m.validate();
  detail::require_spanning_affine_hull(m.dataset->points, "build_mvce_problem");
  return detail::build_moment_core<Scalar>(m, nullptr, d, r,
                                           d == 2 ? Objective::MaxDetEllipsoid
                                                  : Objective::MaxDetQuartic,
                                           form, nullptr);
}

// two-class program: theta >= 0 on s1 and theta <= 0 on s2.  an empty s2
// reduces to the covering program with the identical layout.
template <typename Scalar>
FitProblem<Scalar> build_separation_problem(const Dataset<Scalar>& s1, const Dataset<Scalar>& s2,
                                            int d, int r, ConstraintMode mode,
                                            FormVariant form = FormVariant::DegreeExact) {
  if (s1.size() == 0) throw std::invalid_argument("build_separation_problem: empty class 1");
  if (s2.size() > 0 && s2.dim() != s1.dim())
    throw std::invalid_argument("build_separation_problem: class dimensions differ");
  detail::require_spanning_affine_hull(s1.points, "build_separation_problem");
  if (mode == ConstraintMode::Moment) {
    const auto m1 = uniform_measure(s1);
    if (s2.size() == 0)
      return detail::build_moment_core<Scalar>(m1, nullptr, d, r,
                                               d == 2 ? Objective::MaxDetEllipsoid
                                                      : Objective::MaxDetQuartic,
                                               form, nullptr);
    const auto m2 = uniform_measure(s2);
    return detail::build_moment_core<Scalar>(m1, &m2, d, r,
                                             d == 2 ? Objective::MaxDetEllipsoid
                                                    : Objective::MaxDetQuartic,
                                             form, nullptr);
  }
  FitProblem<Scalar> fp = detail::init_form_problem<Scalar>(static_cast<int>(s1.dim()), d, form);
  detail::add_sign_rows(fp, s1.points, Scalar(1));
  if (s2.size() > 0) detail::add_sign_rows(fp, s2.points, Scalar(-1));
  return fp;
}

// general moment relaxation over two given measures with a chosen objective.
// degree 0 picks the objective's natural degree.
template <typename Scalar>
FitProblem<Scalar> build_moment_relaxation(const EmpiricalMeasure<Scalar>& m1,
                                           const EmpiricalMeasure<Scalar>& m2, int r,
                                           Objective obj, int degree = 0,
                                           FormVariant form = FormVariant::DegreeExact) {
  int d = degree;
  if (d == 0) d = obj == Objective::MaxDetQuartic ? 4 : 2;
  std::optional<Vec<Scalar>> anchor;
  if (obj == Objective::L1) anchor = detail::centroid(m1.dataset->points);
  return detail::build_moment_core<Scalar>(m1, &m2, d, r, obj, form,
                                           anchor ? &*anchor : nullptr);
}

// slack feasibility program: minimize d over theta with theta >= 0 on s1 and
// theta <= d on s2.  the zero polynomial trivially drives d to zero, so the
// program is anchored by theta(centroid of s1) >= 1; with that normalization
// the optimum is <= 0 exactly when some admissible theta separates the
// classes, and strictly positive when none does.  all variables are boxed so
// the program stays bounded even with s2 empty.  the form variant must match
// the family being fitted, or the verdict speaks about the wrong question.
template <typename Scalar>
FitProblem<Scalar> build_feasibility_problem(const Dataset<Scalar>& s1,
                                             const Dataset<Scalar>& s2, int d,
                                             FormVariant form = FormVariant::DegreeExact) {
  if (s1.size() == 0) throw std::invalid_argument("build_feasibility_problem: empty class 1");
  if (s2.size() > 0 && s2.dim() != s1.dim())
    throw std::invalid_argument("build_feasibility_problem: class dimensions differ");
  const int n = static_cast<int>(s1.dim());
  if (d != 2 && d != 4)
    throw std::invalid_argument("build_feasibility_problem: degree must be 2 or 4");

  FitProblem<Scalar> fp;
  fp.n = n;
  fp.degree = d;
  fp.layout.emplace(form, n, d / 2);
  const FormLayout& L = *fp.layout;
  const Eigen::Index nv = L.nvars + 1;
  fp.slack_index = L.nvars;
  fp.problem = MaxDetProblem<Scalar>(nv);
  fp.problem.c = Vec<Scalar>::Zero(nv);
  fp.problem.c[fp.slack_index] = Scalar(1);
  fp.to_coeffs.setZero(basis_size(n, d), nv);
  fp.to_coeffs.leftCols(L.nvars) = form_coefficient_map<Scalar>(L);
  fp.base_coeffs = form_constant_coeffs<Scalar>(L);

  const Eigen::Index q = L.block;
  LmiBlock<Scalar> psd;
  psd.A0 = Mat<Scalar>::Zero(q, q);
  psd.coeff.assign(nv, Mat<Scalar>::Zero(q, q));
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index j = i; j < q; ++j) {
      Mat<Scalar>& E = psd.coeff[L.q_index(i, j)];
      E(i, j) = E(j, i) = Scalar(1);
    }
  fp.problem.add_block(std::move(psd));

  MonomialBasis basis(n, d);
  const Mat<Scalar> M1 = detail::monomial_rows(basis, s1.points);
  fp.problem.add_rows(M1 * fp.base_coeffs, M1 * fp.to_coeffs);
  if (s2.size() > 0) {
    const Mat<Scalar> M2 = detail::monomial_rows(basis, s2.points);
    Mat<Scalar> A = -(M2 * fp.to_coeffs);
    A.col(fp.slack_index).array() += Scalar(1);
    fp.problem.add_rows(Vec<Scalar>(-(M2 * fp.base_coeffs)), A);
  }
  // the exact-degree family is a cone, so it needs an anchor to rule out the
  // zero polynomial; 1 - w'Qw carries its own scale
  if (form == FormVariant::DegreeExact)
    detail::add_anchor_row(fp, Vec<Scalar>(detail::centroid(s1.points)));

  fp.problem.lower = Vec<Scalar>::Constant(nv, Scalar(-1e3));
  fp.problem.upper = Vec<Scalar>::Constant(nv, Scalar(1e3));
  return fp;
}

// optimal slack of the feasibility program; <= 0 means separable
template <typename Scalar>
Scalar separability_slack(const Dataset<Scalar>& s1, const Dataset<Scalar>& s2, int d,
                          const SolveSettings& settings = {},
                          FormVariant form = FormVariant::DegreeExact) {
  const FitProblem<Scalar> fp = build_feasibility_problem(s1, s2, d, form);
  const Solution<Scalar> sol = solve(fp.problem, settings);
  if (sol.status != SolveStatus::Optimal && sol.status != SolveStatus::MaxIters)
    throw SolverFailure(std::string("feasibility program solve failed: ") + sol.message, -1);
  return sol.theta[fp.slack_index];
}

// l1-cost baseline: minimize the coefficient l1 norm over polynomials that
// are nonnegative on s1 and nonpositive on s2, one scalar row per point
template <typename Scalar>
FitProblem<Scalar> build_l1_lp(const Dataset<Scalar>& s1, const Dataset<Scalar>& s2, int d) {
  if (s1.size() == 0) throw std::invalid_argument("build_l1_lp: empty class 1");
  if (s2.size() > 0 && s2.dim() != s1.dim())
    throw std::invalid_argument("build_l1_lp: class dimensions differ");
  FitProblem<Scalar> fp = detail::init_l1_problem<Scalar>(static_cast<int>(s1.dim()), d);
  detail::add_sign_rows(fp, s1.points, Scalar(1));
  if (s2.size() > 0) detail::add_sign_rows(fp, s2.points, Scalar(-1));
  detail::add_anchor_row(fp, Vec<Scalar>(detail::centroid(s1.points)));
  return fp;
}

// points the candidate misclassifies, with a strictness margin so boundary
// points do not count: theta < -tol on class 1, theta > tol on class 2
template <typename Scalar>
std::pair<Dataset<Scalar>, Dataset<Scalar>> outside_points(const Dataset<Scalar>& s1,
                                                           const Dataset<Scalar>& s2,
                                                           const Polynomial<Scalar>& theta,
                                                           Scalar eval_tol = Scalar(1e-9)) {
  if (s1.size() > 0 && theta.vars() != s1.dim())
    throw std::invalid_argument("outside_points: dimension mismatch");
  if (s2.size() > 0 && theta.vars() != s2.dim())
    throw std::invalid_argument("outside_points: dimension mismatch");
  auto collect = [&](const Dataset<Scalar>& s, Scalar sign) {
    if (s.size() == 0) return Dataset<Scalar>{};
    const Vec<Scalar> v = detail::parallel_eval(theta, s.points);
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < v.size(); ++i)
      if (sign * v[i] < -eval_tol) idx.push_back(i);
    Mat<Scalar> out(static_cast<Eigen::Index>(idx.size()), s.dim());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = s.points.row(idx[i]);
    return Dataset<Scalar>(std::move(out));
  };
  return {collect(s1, Scalar(1)), collect(s2, Scalar(-1))};
}

// replicate-then-jitter: pad each class to target_size by repeating its first
// point, then displace every point by epsilon times a random unit direction.
// the jitter makes moment matrices of the padded supports full-rank with
// probability one.
template <typename Scalar>
std::pair<Dataset<Scalar>, Dataset<Scalar>> perturb_datasets(const Dataset<Scalar>& s1,
                                                             const Dataset<Scalar>& s2,
                                                             Eigen::Index target_size,
                                                             Scalar epsilon, Rng& rng) {
  if (!(epsilon > Scalar(0)))
    throw std::invalid_argument("perturb_datasets: epsilon must be positive");
  auto one = [&](const Dataset<Scalar>& s) {
    if (s.size() == 0) return Dataset<Scalar>{};
    if (target_size < s.size())
      throw std::invalid_argument("perturb_datasets: target smaller than the dataset");
    Mat<Scalar> out(target_size, s.dim());
    out.topRows(s.size()) = s.points;
    for (Eigen::Index i = s.size(); i < target_size; ++i) out.row(i) = s.points.row(0);
    for (Eigen::Index i = 0; i < target_size; ++i)
      out.row(i) += epsilon * rng.unit_vector(s.dim()).template cast<Scalar>().transpose();
    return Dataset<Scalar>(std::move(out));
  };
  return {one(s1), one(s2)};
}

namespace detail {

// consult the slack feasibility program; positive slack proves the classes
// cannot be separated at this degree
template <typename Scalar>
Scalar consult_certificate(const SeparationInstance<Scalar>& inst, const SolveSettings& s,
                           int outer) {
  try {
    return separability_slack(inst.s1, inst.s2, inst.degree, s, inst.form);
  } catch (const SolverFailure& e) {
    throw SolverFailure(e.what(), outer);
  }
}

}  // namespace detail

// iterative support selection: solve the moment relaxation over the current
// support, collect misclassified points, and rebuild the support from them
// until nothing is misclassified.  infeasibility is decided by the slack
// feasibility program, with the inner solver's certificate and the
// degenerate-optimum test (vanishing det Q) as triggers.
template <typename Scalar>
FitReport<Scalar> run_main_algorithm(const SeparationInstance<Scalar>& inst,
                                     const MainSettings& settings = {}) {
  inst.validate();
  if (settings.max_outer < 1)
    throw std::invalid_argument("run_main_algorithm: max_outer must be positive");
  const int r = inst.relaxation_order();
  const Scalar tol = static_cast<Scalar>(settings.eval_tol);
  const bool maxdet = inst.objective != Objective::L1;
  const auto nan = std::numeric_limits<Scalar>::quiet_NaN();

  // covering volume is ill-posed on flat data; separation can still be
  // refuted, so ask the certificate before giving up
  if (maxdet) {
    try {
      detail::require_spanning_affine_hull(inst.s1.points, "run_main_algorithm");
    } catch (const DegenerateData&) {
      const Scalar slack = detail::consult_certificate(inst, settings.solver, 0);
      if (slack > Scalar(1e-7))
        return {FitStatus::Infeasible, Polynomial<Scalar>(static_cast<int>(inst.s1.dim()),
                                                          inst.degree),
                nan, 0, {}, {}, slack};
      throw;
    }
  }

  std::optional<Vec<Scalar>> l1_anchor;
  if (inst.objective == Objective::L1) l1_anchor = detail::centroid(inst.s1.points);

  const auto shared1 = std::make_shared<Dataset<Scalar>>(inst.s1);
  const auto shared2 = std::make_shared<Dataset<Scalar>>(inst.s2);
  std::vector<Eigen::Index> idx1(inst.s1.size()), idx2(inst.s2.size());
  for (Eigen::Index i = 0; i < inst.s1.size(); ++i) idx1[i] = i;
  for (Eigen::Index i = 0; i < inst.s2.size(); ++i) idx2[i] = i;

  auto support_points = [](const std::shared_ptr<Dataset<Scalar>>& all,
                           const std::vector<Eigen::Index>& idx) {
    Mat<Scalar> pts(static_cast<Eigen::Index>(idx.size()), all->dim());
    for (std::size_t i = 0; i < idx.size(); ++i)
      pts.row(static_cast<Eigen::Index>(i)) = all->points.row(idx[i]);
    return pts;
  };

  FitReport<Scalar> rep{FitStatus::IterationLimit,
                        Polynomial<Scalar>(static_cast<int>(inst.s1.dim()), inst.degree),
                        nan, 0, {}, {}, nan};

  // the support rebuild is a heuristic with no termination guarantee; on
  // non-convex level sets it can propose a support it has already tried.
  // once that happens, forgetting points can only repeat the loop, so the
  // update switches to monotone growth for the rest of the run.
  const auto support_hash = [](const std::vector<Eigen::Index>& a,
                               const std::vector<Eigen::Index>& b) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    const auto mix = [&h](std::uint64_t x) {
      x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
      x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
      h = (h ^ (x ^ (x >> 31))) * 0x100000001b3ull;
    };
    for (const Eigen::Index i : a) mix(static_cast<std::uint64_t>(i));
    mix(~std::uint64_t{0});
    for (const Eigen::Index i : b) mix(static_cast<std::uint64_t>(i));
    return h;
  };
  std::unordered_set<std::uint64_t> visited;
  bool grow = settings.accumulate_support;

  for (int k = 0; k < settings.max_outer; ++k) {
    rep.support_sizes.push_back(static_cast<Eigen::Index>(idx1.size() + idx2.size()));
    visited.insert(support_hash(idx1, idx2));

    const Mat<Scalar> p1 = support_points(shared1, idx1);
    const Mat<Scalar> p2 = support_points(shared2, idx2);
    std::optional<EmpiricalMeasure<Scalar>> m1, m2;
    if (p1.rows() > 0) m1 = uniform_measure(Dataset<Scalar>(p1));
    if (p2.rows() > 0) m2 = uniform_measure(Dataset<Scalar>(p2));
    if (!m1 && !m2)
      throw SolverFailure("support emptied out of both classes", k);

    FitProblem<Scalar> fp;
    if (m1)
      fp = detail::build_moment_core<Scalar>(*m1, m2 ? &*m2 : nullptr, inst.degree, r,
                                             inst.objective, inst.form,
                                             l1_anchor ? &*l1_anchor : nullptr);
    else {
      // everything misclassified last round came from class 2
      fp = inst.objective == Objective::L1
               ? detail::init_l1_problem<Scalar>(static_cast<int>(inst.s1.dim()), inst.degree)
               : detail::init_form_problem<Scalar>(static_cast<int>(inst.s1.dim()), inst.degree,
                                                   inst.form);
      detail::add_localizing_block(fp, *m2, r, Scalar(-1));
      if (l1_anchor) detail::add_anchor_row(fp, *l1_anchor);
    }
    // the full-set pass relies on the moment blocks alone: their looseness is
    // what exposes the active boundary.  once the support is a proper subset,
    // though, the blocks are expected to pin it exactly, and they fail at that
    // whenever the kept points crowd an algebraic curve -- the usual shape of
    // a boundary support -- because the lost rank lets the compressed block
    // leak its own points.  per-point rows on selected supports are implied
    // whenever the blocks are exact and close that gap when they are not, so
    // a rebuilt subproblem can never violate a point it was built on.
    if (static_cast<Eigen::Index>(idx1.size()) < inst.s1.size() ||
        static_cast<Eigen::Index>(idx2.size()) < inst.s2.size()) {
      detail::add_sign_rows(fp, p1, Scalar(1));
      detail::add_sign_rows(fp, p2, Scalar(-1));
    }

    const Solution<Scalar> sol = solve(fp.problem, settings.solver);
    if (sol.status == SolveStatus::NumericalFailure)
      throw SolverFailure("subproblem solver broke down: " + sol.message, k);

    if (sol.status == SolveStatus::Infeasible) {
      const Scalar slack = detail::consult_certificate(inst, settings.solver, k);
      rep.certificate_slack = slack;
      rep.outer_iterations = k + 1;
      rep.history.push_back({nan, -1});
      rep.status = slack > Scalar(1e-7) ? FitStatus::Infeasible : FitStatus::IterationLimit;
      return rep;
    }

    rep.theta = fp.decode(sol.theta);
    rep.objective = sol.objective;
    rep.outer_iterations = k + 1;

    // a vanishing det Q means only the degenerate zero set remains; confirm
    // with the certificate before declaring the classes inseparable
    if (maxdet && fp.layout && detail::det_geomean(*fp.layout, sol.theta) <= Scalar(1e-7)) {
      const Scalar slack = detail::consult_certificate(inst, settings.solver, k);
      rep.certificate_slack = slack;
      if (slack > Scalar(1e-7)) {
        rep.history.push_back({sol.objective, -1});
        rep.status = FitStatus::Infeasible;
        return rep;
      }
    }

    const Vec<Scalar> v1 = inst.s1.size() > 0 ? detail::parallel_eval(rep.theta, inst.s1.points)
                                              : Vec<Scalar>();
    const Vec<Scalar> v2 = inst.s2.size() > 0 ? detail::parallel_eval(rep.theta, inst.s2.points)
                                              : Vec<Scalar>();

    // rounding in the evaluation grows with the coefficient scale, and a fit
    // wrapped tightly around near-degenerate data can push that scale far
    // beyond any fixed tolerance.  a point only counts as misclassified when
    // it clears the noise floor of its own evaluation, or the loop would
    // chase phantom violations it can never resolve
    const Polynomial<Scalar> abs_theta(rep.theta.basis, rep.theta.coeffs.cwiseAbs());
    const Vec<Scalar> a1 =
        inst.s1.size() > 0
            ? detail::parallel_eval(abs_theta, Mat<Scalar>(inst.s1.points.cwiseAbs()))
            : Vec<Scalar>();
    const Vec<Scalar> a2 =
        inst.s2.size() > 0
            ? detail::parallel_eval(abs_theta, Mat<Scalar>(inst.s2.points.cwiseAbs()))
            : Vec<Scalar>();
    const Scalar noise = Scalar(1e-12);

    Eigen::Index outside = 0;
    for (Eigen::Index i = 0; i < v1.size(); ++i)
      if (v1[i] < -std::max(tol, noise * a1[i])) ++outside;
    for (Eigen::Index i = 0; i < v2.size(); ++i)
      if (v2[i] > std::max(tol, noise * a2[i])) ++outside;
    rep.history.push_back({sol.objective, outside});

    if (outside == 0) {
      rep.status = FitStatus::Separated;
      return rep;
    }

    // the inner solver leaves active points a hair inside the boundary, at
    // the scale of its duality gap; the rebuild threshold must be at least
    // that wide or the support loses its own contact points and cycles
    const Scalar keep = std::max(tol, Scalar(100) * static_cast<Scalar>(settings.solver.gap_tol));
    std::vector<Eigen::Index> next1, next2;
    for (Eigen::Index i = 0; i < v1.size(); ++i)
      if (v1[i] <= std::max(keep, noise * a1[i])) next1.push_back(i);
    for (Eigen::Index i = 0; i < v2.size(); ++i)
      if (v2[i] >= -std::max(keep, noise * a2[i])) next2.push_back(i);

    // a separator that clears one class by a wide margin would empty that
    // class out of the support, and the next subproblem would balloon without
    // its anchor.  each class therefore keeps at least as many points as the
    // polynomial has coefficients, preferring those nearest the boundary, so
    // the support always carries enough geometry to determine the fit.
    const auto anchor_count = basis_size(static_cast<int>(inst.s1.dim()), inst.degree);
    const auto pad = [](std::vector<Eigen::Index>& next, const Vec<Scalar>& v,
                        Eigen::Index target) {
      const Eigen::Index goal = std::min<Eigen::Index>(target, v.size());
      if (static_cast<Eigen::Index>(next.size()) >= goal) return;
      std::vector<char> taken(v.size(), 0);
      for (const Eigen::Index i : next) taken[i] = 1;
      std::vector<Eigen::Index> rest;
      for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!taken[i]) rest.push_back(i);
      const auto want = goal - static_cast<Eigen::Index>(next.size());
      std::partial_sort(rest.begin(), rest.begin() + want, rest.end(),
                        [&](Eigen::Index a, Eigen::Index b) {
                          const Scalar fa = std::abs(v[a]), fb = std::abs(v[b]);
                          return fa < fb || (fa == fb && a < b);
                        });
      next.insert(next.end(), rest.begin(), rest.begin() + want);
      std::sort(next.begin(), next.end());
    };
    pad(next1, v1, anchor_count);
    pad(next2, v2, anchor_count);

    if (!grow && visited.count(support_hash(next1, next2))) grow = true;
    if (grow) {
      auto merge = [](std::vector<Eigen::Index>& into, const std::vector<Eigen::Index>& add) {
        into.insert(into.end(), add.begin(), add.end());
        std::sort(into.begin(), into.end());
        into.erase(std::unique(into.begin(), into.end()), into.end());
      };
      const auto before = idx1.size() + idx2.size();
      merge(idx1, next1);
      merge(idx2, next2);
      // nothing new to add means the very same subproblem would repeat; the
      // certificate below gets the last word instead
      if (idx1.size() + idx2.size() == before) break;
    } else {
      idx1 = std::move(next1);
      idx2 = std::move(next2);
    }
  }

  // out of iterations; let the certificate have the last word on whether a
  // separator exists at all
  const Scalar slack = detail::consult_certificate(inst, settings.solver, settings.max_outer);
  rep.certificate_slack = slack;
  if (slack > Scalar(1e-7)) rep.status = FitStatus::Infeasible;
  return rep;
}

}  // namespace momfit
