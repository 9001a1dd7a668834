#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "momfit/polynomial.hpp"

namespace momfit {

// affine symmetric matrix B(theta) = A0 + sum_k theta_k * coeff[k]
template <typename Scalar>
struct LmiBlock {
  Mat<Scalar> A0;
  std::vector<Mat<Scalar>> coeff;

  Eigen::Index size() const { return A0.rows(); }

  Mat<Scalar> at(const Vec<Scalar>& theta) const {
    Mat<Scalar> B = A0;
    for (Eigen::Index k = 0; k < theta.size(); ++k)
      if (theta[k] != Scalar(0)) B += theta[k] * coeff[k];
    return B;
  }
};

// minimize c'theta - w*logdet G(theta)
//   s.t.  B_j(theta) >= 0 for every constraint block
//         a0_i + A_i.theta >= 0 for every scalar row
//         lower <= theta <= upper
// scalar inequalities are kept as stacked rows rather than 1x1 blocks so that
// problems with one row per data point stay cheap.
template <typename Scalar>
struct MaxDetProblem {
  Eigen::Index nvars = 0;
  Vec<Scalar> c;
  bool has_det = false;
  LmiBlock<Scalar> det;
  std::vector<LmiBlock<Scalar>> blocks;
  Vec<Scalar> row_a0;
  Mat<Scalar> row_A;
  Vec<Scalar> lower;  // empty means unbounded below
  Vec<Scalar> upper;

  explicit MaxDetProblem(Eigen::Index nv = 0)
      : nvars(nv),
        c(Vec<Scalar>::Zero(nv)),
        row_a0(0),
        row_A(0, nv) {}

  void set_det(LmiBlock<Scalar> g) {
    check_block(g, "det block");
    det = std::move(g);
    has_det = true;
  }

  void add_block(LmiBlock<Scalar> b) {
    check_block(b, "constraint block");
    if (b.size() == 1) {
      // route 1x1 matrices into the vectorized rows
      Vec<Scalar> a(nvars);
      for (Eigen::Index k = 0; k < nvars; ++k) a[k] = b.coeff[k](0, 0);
      add_row(b.A0(0, 0), a);
      return;
    }
    blocks.push_back(std::move(b));
  }

  void add_row(Scalar a0, const Vec<Scalar>& a) {
    if (a.size() != nvars)
      throw std::invalid_argument("MaxDetProblem: row coefficient length mismatch");
    row_a0.conservativeResize(row_a0.size() + 1);
    row_A.conservativeResize(row_A.rows() + 1, nvars);
    row_a0[row_a0.size() - 1] = a0;
    row_A.row(row_A.rows() - 1) = a.transpose();
  }

  // append many rows at once: values a0 + A*theta must stay positive
  void add_rows(const Vec<Scalar>& a0, const Mat<Scalar>& A) {
    if (A.cols() != nvars || A.rows() != a0.size())
      throw std::invalid_argument("MaxDetProblem: row block shape mismatch");
    const Eigen::Index old = row_a0.size();
    row_a0.conservativeResize(old + a0.size());
    row_A.conservativeResize(old + a0.size(), nvars);
    row_a0.tail(a0.size()) = a0;
    row_A.bottomRows(A.rows()) = A;
  }

  bool empty() const {
    return !has_det && blocks.empty() && row_a0.size() == 0 && lower.size() == 0 &&
           upper.size() == 0;
  }

 private:
  void check_block(const LmiBlock<Scalar>& b, const char* what) const {
    if (b.A0.rows() != b.A0.cols())
      throw std::invalid_argument(std::string("MaxDetProblem: ") + what + " not square");
    if (static_cast<Eigen::Index>(b.coeff.size()) != nvars)
      throw std::invalid_argument(std::string("MaxDetProblem: ") + what +
                                  " needs one coefficient matrix per variable");
    for (const auto& A : b.coeff)
      if (A.rows() != b.A0.rows() || A.cols() != b.A0.cols())
        throw std::invalid_argument(std::string("MaxDetProblem: ") + what +
                                    " coefficient shape mismatch");
  }
};

enum class SolveStatus { Optimal, Infeasible, MaxIters, NumericalFailure };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::MaxIters: return "MaxIters";
    case SolveStatus::NumericalFailure: return "NumericalFailure";
  }
  return "?";
}

struct SolveSettings {
  double gap_tol = 1e-8;
  double feas_tol = 1e-9;
  // per-centering cap.  a stage needs on the order of sqrt(#barrier terms)
  // steps after a tenfold t increase, so per-point programs with 1e4..1e5
  // rows legitimately spend several hundred; ordinary LMI fits use a few dozen
  int max_newton = 1000;
  double t_init = 1.0;
  double t_growth = 10.0;
  double w = 1.0;           // weight of the logdet objective term
  double auto_bound = 1e8;  // box half-width for variables without bounds
  double margin_cap = 10.0; // phase 1 stops chasing margins beyond this

  void validate() const {
    if (!(gap_tol > 0) || !(feas_tol > 0) || !(t_growth > 1) || !(w > 0) ||
        !(t_init > 0) || max_newton < 1 || !(auto_bound > 0) || !(margin_cap > 0))
      throw std::invalid_argument("SolveSettings: parameter out of range");
  }
};

template <typename Scalar>
struct KktReport {
  Scalar stationarity = std::numeric_limits<Scalar>::quiet_NaN();
  Vec<Scalar> block_min_eig;      // per constraint block
  Vec<Scalar> complementarity;    // per constraint block, trace(Z B) = size/t
  Scalar gap = std::numeric_limits<Scalar>::quiet_NaN();
};

template <typename Scalar>
struct Solution {
  SolveStatus status = SolveStatus::NumericalFailure;
  Vec<Scalar> theta;
  Scalar objective = std::numeric_limits<Scalar>::quiet_NaN();
  Scalar margin = std::numeric_limits<Scalar>::quiet_NaN();
  int iterations = 0;                   // total Newton steps
  std::vector<Scalar> outer_objectives; // objective after each centering
  Scalar t_final = std::numeric_limits<Scalar>::quiet_NaN();  // barrier parameter at exit
  KktReport<Scalar> kkt;
  std::string message;
};

enum class Phase1Verdict { StrictlyFeasible, Marginal, Infeasible };

template <typename Scalar>
struct Phase1Result {
  Phase1Verdict verdict = Phase1Verdict::Infeasible;
  SolveStatus status = SolveStatus::Optimal;  // health of the phase-1 solve itself
  Vec<Scalar> theta;                          // interior point when feasible
  Scalar slack = std::numeric_limits<Scalar>::quiet_NaN();
  std::string message;
};

namespace detail {

// uniform internal form: everything the barrier machinery touches
template <typename Scalar>
struct WorkProblem {
  Eigen::Index nv;
  Vec<Scalar> c;
  bool has_det = false;
  const LmiBlock<Scalar>* det = nullptr;
  Scalar w = 1;
  std::vector<const LmiBlock<Scalar>*> blocks;
  std::vector<LmiBlock<Scalar>> owned_blocks;  // storage for phase-1 augmentation
  Vec<Scalar> row_a0;
  Mat<Scalar> row_A;
  Vec<Scalar> lo, hi;  // always finite

  Scalar barrier_degree() const {
    Scalar m = static_cast<Scalar>(row_a0.size()) + 2 * static_cast<Scalar>(nv);
    for (const auto* b : blocks) m += static_cast<Scalar>(b->size());
    return m;
  }
};

template <typename Scalar>
struct PointEval {
  std::vector<Eigen::LLT<Mat<Scalar>>> llt;  // per block
  Eigen::LLT<Mat<Scalar>> det_llt;
  Vec<Scalar> rows;      // slack of every scalar row
  bool feasible = false;
  Scalar barrier = 0;    // full F_t value
  Scalar objective = 0;  // c'theta - w*logdet G
};

template <typename Scalar>
Scalar logdet_from_llt(const Eigen::LLT<Mat<Scalar>>& llt) {
  return Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
}

// factor all blocks at theta and evaluate F_t; feasible=false when any
// constraint leaves the interior
template <typename Scalar>
PointEval<Scalar> eval_point(const WorkProblem<Scalar>& W, Scalar t, const Vec<Scalar>& theta) {
  PointEval<Scalar> ev;
  ev.feasible = false;
  if (((theta - W.lo).array() <= Scalar(0)).any() ||
      ((W.hi - theta).array() <= Scalar(0)).any())
    return ev;
  Scalar barrier = -((theta - W.lo).array().log().sum() +
                     (W.hi - theta).array().log().sum());
  if (W.row_a0.size() > 0) {
    ev.rows = W.row_a0 + W.row_A * theta;
    if ((ev.rows.array() <= Scalar(0)).any()) return ev;
    barrier -= ev.rows.array().log().sum();
  }
  ev.llt.reserve(W.blocks.size());
  for (const auto* b : W.blocks) {
    ev.llt.emplace_back(b->at(theta));
    if (ev.llt.back().info() != Eigen::Success) return ev;
    barrier -= logdet_from_llt(ev.llt.back());
  }
  Scalar objective = W.c.dot(theta);
  if (W.has_det) {
    ev.det_llt.compute(W.det->at(theta));
    if (ev.det_llt.info() != Eigen::Success) return ev;
    objective -= W.w * logdet_from_llt(ev.det_llt);
  }
  ev.feasible = true;
  ev.objective = objective;
  ev.barrier = t * objective + barrier;
  return ev;
}

// gradient and hessian of F_t at a strictly feasible, already factored point
template <typename Scalar>
void assemble(const WorkProblem<Scalar>& W, Scalar t, const Vec<Scalar>& theta,
              const PointEval<Scalar>& ev, Vec<Scalar>& g, Mat<Scalar>& H) {
  const Eigen::Index nv = W.nv;
  g = t * W.c;
  H.setZero(nv, nv);

  // box terms
  const auto dl = (theta - W.lo).array();
  const auto du = (W.hi - theta).array();
  g.array() += Scalar(1) / du - Scalar(1) / dl;
  H.diagonal().array() += Scalar(1) / du.square() + Scalar(1) / dl.square();

  // scalar rows
  if (W.row_a0.size() > 0) {
    const Vec<Scalar> inv = ev.rows.cwiseInverse();
    g.noalias() -= W.row_A.transpose() * inv;
    const Mat<Scalar> scaled = W.row_A.array().colwise() * inv.array().square();
    H.noalias() += W.row_A.transpose() * scaled;
  }

  // matrix blocks: with S_k = L^-1 A_k L^-T, the contributions are
  // -weight*tr(S_k) to the gradient and weight*<S_k, S_l> to the hessian
  Mat<Scalar> S;
  std::vector<Mat<Scalar>> maps(nv);
  auto add_block = [&](const LmiBlock<Scalar>& b, const Eigen::LLT<Mat<Scalar>>& llt,
                       Scalar weight) {
    const auto& L = llt.matrixL();
    for (Eigen::Index k = 0; k < nv; ++k) {
      S = L.solve(b.coeff[k]);
      S = L.solve(S.transpose().eval());
      g[k] -= weight * S.trace();
      maps[k] = S;
    }
    for (Eigen::Index k = 0; k < nv; ++k)
      for (Eigen::Index l = k; l < nv; ++l) {
        const Scalar v = weight * maps[k].cwiseProduct(maps[l]).sum();
        H(k, l) += v;
        if (l != k) H(l, k) += v;
      }
  };
  for (std::size_t j = 0; j < W.blocks.size(); ++j)
    add_block(*W.blocks[j], ev.llt[j], Scalar(1));
  if (W.has_det) add_block(*W.det, ev.det_llt, t * W.w);
}

enum class CenterOutcome { Converged, Acceptable, MaxIters, Stalled };

template <typename Scalar>
struct CenterStats {
  int newton_steps = 0;
  int consecutive_stalls = 0;
};

// newton centering of F_t from a strictly feasible start.  converges on the
// gradient so the stationarity reported later is t-relative small; a decrement
// floor catches the point where double precision has nothing left to give.
template <typename Scalar>
CenterOutcome center(const WorkProblem<Scalar>& W, Scalar t, Vec<Scalar>& theta,
                     const SolveSettings& s, CenterStats<Scalar>& stats) {
  const Scalar grad_tol = Scalar(1e-10) * std::max(Scalar(1), t);
  const Scalar loose_grad = Scalar(1e-6) * std::max(Scalar(1), t);
  Vec<Scalar> g;
  Mat<Scalar> H;
  PointEval<Scalar> ev = eval_point(W, t, theta);
  if (!ev.feasible) return CenterOutcome::Stalled;
  int tiny_progress = 0;
  for (int it = 0; it < s.max_newton; ++it) {
    assemble(W, t, theta, ev, g, H);
    // one ulp of theta already moves the gradient by about lambda_max(H) times
    // the spacing, so below that resolution there is nothing left to polish
    const Scalar grad_floor = Scalar(30) * std::numeric_limits<Scalar>::epsilon() *
                              H.diagonal().maxCoeff() *
                              (Scalar(1) + theta.template lpNorm<Eigen::Infinity>());
    if (g.template lpNorm<Eigen::Infinity>() <= std::max(grad_tol, grad_floor))
      return CenterOutcome::Converged;

    // allowance for what double precision can resolve in F at this scale; the
    // armijo test must not reject progress smaller than the evaluation noise
    const Scalar noise = Scalar(10) * std::numeric_limits<Scalar>::epsilon() *
                         (Scalar(1) + std::abs(ev.barrier));
    const Scalar hscale = std::max(Scalar(1), H.diagonal().maxCoeff());

    // newton step with levenberg damping, escalated when the hessian fails to
    // factor or the damped step fails the line search
    Scalar reg = 0;
    bool moved = false;
    bool at_floor = false;
    auto escalate = [&reg] {
      reg = reg == Scalar(0) ? Scalar(1e-12) : reg * 10;
      return reg <= Scalar(1e-4);
    };
    while (!moved && !at_floor) {
      Mat<Scalar> Hr = H;
      if (reg > Scalar(0)) Hr.diagonal().array() += reg * hscale;
      Eigen::LLT<Mat<Scalar>> hllt(Hr);
      if (hllt.info() != Eigen::Success) {
        if (escalate()) continue;
        return CenterOutcome::Stalled;
      }
      Vec<Scalar> step = hllt.solve(-g);
      step += hllt.solve(-g - Hr * step);  // refresh what the factorization lost
      const Scalar dec = -g.dot(step);     // newton decrement squared
      if (!(dec > noise)) {
        // the model promises less decrease than F can even resolve, so any
        // further stepping is churn below the double precision floor
        at_floor = true;
        break;
      }
      Scalar alpha = 1;
      while (alpha >= Scalar(1e-14)) {
        const Vec<Scalar> cand = theta + alpha * step;
        PointEval<Scalar> cev = eval_point(W, t, cand);
        if (cev.feasible &&
            cev.barrier <= ev.barrier - Scalar(0.01) * alpha * dec + noise) {
          // steps that only shuffle F within its evaluation noise mean the
          // iterate sits at the numerical center already
          if (ev.barrier - cev.barrier <= noise) {
            if (++tiny_progress >= 3) at_floor = true;
          } else {
            tiny_progress = 0;
          }
          theta = cand;
          ev = std::move(cev);
          moved = true;
          break;
        }
        alpha *= Scalar(0.5);
      }
      if (!moved && !escalate()) break;
    }
    ++stats.newton_steps;
    if (at_floor) return CenterOutcome::Converged;
    if (!moved) {
      if (g.template lpNorm<Eigen::Infinity>() <= loose_grad) {
        stats.consecutive_stalls = 0;
        return CenterOutcome::Acceptable;
      }
      if (++stats.consecutive_stalls >= 5) return CenterOutcome::Stalled;
      return CenterOutcome::Acceptable;  // let the outer path try a new t
    }
    stats.consecutive_stalls = 0;
  }
  return CenterOutcome::MaxIters;
}

// minimum eigenvalue over the user constraints (blocks, rows, declared box)
template <typename Scalar>
Scalar constraint_margin(const MaxDetProblem<Scalar>& p, const Vec<Scalar>& theta) {
  Scalar m = std::numeric_limits<Scalar>::infinity();
  for (const auto& b : p.blocks) {
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(b.at(theta), Eigen::EigenvaluesOnly);
    m = std::min(m, es.eigenvalues().minCoeff());
  }
  if (p.has_det) {
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(p.det.at(theta), Eigen::EigenvaluesOnly);
    m = std::min(m, es.eigenvalues().minCoeff());
  }
  if (p.row_a0.size() > 0)
    m = std::min(m, (p.row_a0 + p.row_A * theta).minCoeff());
  for (Eigen::Index k = 0; k < p.lower.size(); ++k)
    if (std::isfinite(p.lower[k])) m = std::min(m, theta[k] - p.lower[k]);
  for (Eigen::Index k = 0; k < p.upper.size(); ++k)
    if (std::isfinite(p.upper[k])) m = std::min(m, p.upper[k] - theta[k]);
  return m;
}

template <typename Scalar>
void validate_problem(const MaxDetProblem<Scalar>& p) {
  if (p.nvars < 1) throw std::invalid_argument("MaxDetProblem: no variables");
  if (p.c.size() != p.nvars)
    throw std::invalid_argument("MaxDetProblem: objective length mismatch");
  if (p.row_A.rows() != p.row_a0.size() || p.row_A.cols() != p.nvars)
    throw std::invalid_argument("MaxDetProblem: row shapes inconsistent");
  auto check_sym = [](const Mat<Scalar>& A, const char* what) {
    if ((A - A.transpose()).cwiseAbs().maxCoeff() >
        Scalar(1e-10) * std::max(Scalar(1), A.cwiseAbs().maxCoeff()))
      throw std::invalid_argument(std::string("MaxDetProblem: ") + what + " not symmetric");
  };
  for (const auto& b : p.blocks) {
    check_sym(b.A0, "block constant");
    for (const auto& A : b.coeff) check_sym(A, "block coefficient");
  }
  if (p.has_det) {
    check_sym(p.det.A0, "det constant");
    for (const auto& A : p.det.coeff) check_sym(A, "det coefficient");
  }
  if (p.lower.size() != 0 && p.lower.size() != p.nvars)
    throw std::invalid_argument("MaxDetProblem: lower bound length mismatch");
  if (p.upper.size() != 0 && p.upper.size() != p.nvars)
    throw std::invalid_argument("MaxDetProblem: upper bound length mismatch");
  for (Eigen::Index k = 0; k < std::min(p.lower.size(), p.upper.size()); ++k)
    if (p.lower[k] >= p.upper[k])
      throw std::invalid_argument("MaxDetProblem: empty box interval");
}

template <typename Scalar>
Vec<Scalar> effective_bound(const Vec<Scalar>& user, Eigen::Index nv, Scalar fill) {
  Vec<Scalar> out = Vec<Scalar>::Constant(nv, fill);
  for (Eigen::Index k = 0; k < user.size(); ++k)
    if (std::isfinite(user[k])) out[k] = user[k];
  return out;
}

template <typename Scalar>
WorkProblem<Scalar> make_work(const MaxDetProblem<Scalar>& p, const SolveSettings& s) {
  WorkProblem<Scalar> W;
  W.nv = p.nvars;
  W.c = p.c;
  W.has_det = p.has_det;
  W.det = p.has_det ? &p.det : nullptr;
  W.w = static_cast<Scalar>(s.w);
  for (const auto& b : p.blocks) W.blocks.push_back(&b);
  W.row_a0 = p.row_a0;
  W.row_A = p.row_A;
  const Scalar B = static_cast<Scalar>(s.auto_bound);
  W.lo = effective_bound(p.lower, p.nvars, -B);
  W.hi = effective_bound(p.upper, p.nvars, B);
  return W;
}

// newton solve of H d = g with the same levenberg escalation the centering
// uses, plus one round of iterative refinement
template <typename Scalar>
bool damped_solve(const Mat<Scalar>& H, const Vec<Scalar>& g, Vec<Scalar>& d) {
  const Scalar hscale = std::max(Scalar(1), H.diagonal().maxCoeff());
  Scalar reg = 0;
  while (true) {
    Mat<Scalar> Hr = H;
    if (reg > Scalar(0)) Hr.diagonal().array() += reg * hscale;
    Eigen::LLT<Mat<Scalar>> llt(Hr);
    if (llt.info() == Eigen::Success) {
      d = llt.solve(g);
      d += llt.solve(g - H * d);
      return true;
    }
    reg = reg == Scalar(0) ? Scalar(1e-12) : reg * 10;
    if (reg > Scalar(1e-4)) return false;
  }
}

// phase 1: maximize the common margin s with every constraint shifted by -s.
// declared box bounds join the margin; the automatic safety box does not.
template <typename Scalar>
Phase1Result<Scalar> run_phase1(const MaxDetProblem<Scalar>& p, const SolveSettings& s,
                                bool stop_at_certificate) {
  const Eigen::Index nv = p.nvars;
  const Scalar B = static_cast<Scalar>(s.auto_bound);

  Phase1Result<Scalar> res;
  if (p.empty()) {
    res.verdict = Phase1Verdict::StrictlyFeasible;
    res.theta = Vec<Scalar>::Zero(nv);
    res.slack = std::numeric_limits<Scalar>::infinity();
    res.message = "no constraints";
    return res;
  }

  WorkProblem<Scalar> W;
  W.nv = nv + 1;
  W.c = Vec<Scalar>::Zero(nv + 1);
  W.c[nv] = Scalar(-1);  // maximize s

  // every block gains a -I coefficient on s; the det block participates as a
  // plain constraint so the returned point also works as a barrier start
  auto augment = [&](const LmiBlock<Scalar>& b) {
    LmiBlock<Scalar> a;
    a.A0 = b.A0;
    a.coeff = b.coeff;
    a.coeff.push_back(-Mat<Scalar>::Identity(b.size(), b.size()));
    W.owned_blocks.push_back(std::move(a));
  };
  for (const auto& b : p.blocks) augment(b);
  if (p.has_det) augment(p.det);
  for (auto& b : W.owned_blocks) W.blocks.push_back(&b);

  // scalar rows gain an s column; declared bounds become rows as well
  std::vector<Scalar> extra_a0;
  std::vector<Vec<Scalar>> extra_a;
  for (Eigen::Index k = 0; k < p.lower.size(); ++k)
    if (std::isfinite(p.lower[k])) {
      Vec<Scalar> a = Vec<Scalar>::Zero(nv + 1);
      a[k] = Scalar(1);
      a[nv] = Scalar(-1);
      extra_a0.push_back(-p.lower[k]);
      extra_a.push_back(a);
    }
  for (Eigen::Index k = 0; k < p.upper.size(); ++k)
    if (std::isfinite(p.upper[k])) {
      Vec<Scalar> a = Vec<Scalar>::Zero(nv + 1);
      a[k] = Scalar(-1);
      a[nv] = Scalar(-1);
      extra_a0.push_back(p.upper[k]);
      extra_a.push_back(a);
    }
  const Eigen::Index nrows = p.row_a0.size() + static_cast<Eigen::Index>(extra_a0.size());
  W.row_a0.resize(nrows);
  W.row_A.resize(nrows, nv + 1);
  if (p.row_a0.size() > 0) {
    W.row_a0.head(p.row_a0.size()) = p.row_a0;
    W.row_A.topLeftCorner(p.row_A.rows(), nv) = p.row_A;
    W.row_A.col(nv).head(p.row_A.rows()).setConstant(Scalar(-1));
  }
  for (std::size_t i = 0; i < extra_a0.size(); ++i) {
    W.row_a0[p.row_a0.size() + i] = extra_a0[i];
    W.row_A.row(p.row_a0.size() + i) = extra_a[i].transpose();
  }

  W.lo = Vec<Scalar>::Constant(nv + 1, -B);
  W.hi = Vec<Scalar>::Constant(nv + 1, B);
  W.hi[nv] = static_cast<Scalar>(s.margin_cap);

  // start at theta = 0 with s below the margin there
  Vec<Scalar> x = Vec<Scalar>::Zero(nv + 1);
  Scalar margin0 = std::numeric_limits<Scalar>::infinity();
  for (const auto* b : W.blocks) {
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(b->A0, Eigen::EigenvaluesOnly);
    margin0 = std::min(margin0, es.eigenvalues().minCoeff());
  }
  for (Eigen::Index i = 0; i < p.row_a0.size(); ++i)
    margin0 = std::min(margin0, p.row_a0[i]);
  for (std::size_t i = 0; i < extra_a0.size(); ++i)
    margin0 = std::min(margin0, extra_a0[i]);
  x[nv] = std::min(margin0, static_cast<Scalar>(s.margin_cap)) - Scalar(1);
  if (x[nv] <= -B) {
    res.status = SolveStatus::NumericalFailure;
    res.message = "phase 1 start outside the safety box";
    return res;
  }

  const Scalar m_total = W.barrier_degree();
  const Scalar feas = static_cast<Scalar>(s.feas_tol);
  const Scalar gap_target =
      std::min(static_cast<Scalar>(s.gap_tol), feas / Scalar(10));
  const Scalar t_final = m_total / gap_target;
  Scalar t = static_cast<Scalar>(s.t_init);
  CenterStats<Scalar> stats;
  SolveStatus health = SolveStatus::Optimal;
  while (true) {
    const CenterOutcome oc = center(W, t, x, s, stats);
    if (oc == CenterOutcome::Stalled) {
      health = SolveStatus::NumericalFailure;
      break;
    }
    if (oc == CenterOutcome::MaxIters) {
      health = SolveStatus::MaxIters;
      break;
    }
    const Scalar sval = x[nv];
    if (stop_at_certificate) {
      if (sval > feas) break;                       // interior point in hand
      if (sval + m_total / t < -feas) break;        // infeasibility certified
    }
    if (t >= t_final) break;
    t = std::min(t * static_cast<Scalar>(s.t_growth), t_final);
  }

  res.status = health;
  res.slack = x[nv];
  res.theta = x.head(nv);
  const Scalar upper_bound = x[nv] + m_total / t;
  if (health != SolveStatus::Optimal && !(res.slack > feas)) {
    res.verdict = Phase1Verdict::Marginal;
    res.message = "phase 1 did not converge";
    return res;
  }
  if (res.slack > feas) {
    res.verdict = Phase1Verdict::StrictlyFeasible;
  } else if (upper_bound < -feas) {
    res.verdict = Phase1Verdict::Infeasible;
    res.message = "largest achievable margin is negative";
  } else {
    res.verdict = Phase1Verdict::Marginal;
    res.message = "no strictly interior point within tolerance";
  }
  return res;
}

}  // namespace detail

// maximize the achievable constraint margin; slack > feas_tol yields a
// strictly interior starting point, a negative certified bound means the
// constraint system has no interior
template <typename Scalar>
Phase1Result<Scalar> phase1(const MaxDetProblem<Scalar>& p,
                            const SolveSettings& settings = {}) {
  settings.validate();
  detail::validate_problem(p);
  return detail::run_phase1(p, settings, /*stop_at_certificate=*/false);
}

// KKT residuals at theta.  the dual estimates are the barrier duals with the
// standard first-order newton correction: with d = H^-1 grad F_t, each dual is
// the barrier dual of the linearized centered point, e.g. Z_j = (B_j^-1 +
// B_j^-1 dB_j B_j^-1) / t.  those duals cancel the constraint-barrier part of
// the gradient exactly, so the reported stationarity is the linear-solve
// residual plus the curvature term the logdet objective contributes.
template <typename Scalar>
KktReport<Scalar> kkt_residuals(const MaxDetProblem<Scalar>& p, const SolveSettings& settings,
                                const Vec<Scalar>& theta, Scalar t_final) {
  KktReport<Scalar> r;
  const detail::WorkProblem<Scalar> W = detail::make_work(p, settings);
  const Scalar t = t_final;

  r.block_min_eig.resize(p.blocks.size());
  r.complementarity.resize(p.blocks.size());
  for (std::size_t j = 0; j < p.blocks.size(); ++j) {
    Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(p.blocks[j].at(theta),
                                                  Eigen::EigenvaluesOnly);
    r.block_min_eig[j] = es.eigenvalues().minCoeff();
  }

  const detail::PointEval<Scalar> ev = detail::eval_point(W, t, theta);
  if (!ev.feasible) return r;  // outside the interior nothing else is defined

  Vec<Scalar> g;
  Mat<Scalar> H;
  detail::assemble(W, t, theta, ev, g, H);
  Vec<Scalar> d = Vec<Scalar>::Zero(W.nv);
  if (!detail::damped_solve(H, g, d)) d.setZero();

  Vec<Scalar> resid = (g - H * d) / t;
  if (W.has_det) {
    // the dual correction cannot absorb the objective's own curvature; put the
    // term w * Hdet * d back so the residual stays honest
    const auto& L = ev.det_llt.matrixL();
    Mat<Scalar> dG = Mat<Scalar>::Zero(W.det->size(), W.det->size());
    for (Eigen::Index k = 0; k < W.nv; ++k)
      if (d[k] != Scalar(0)) dG += d[k] * W.det->coeff[k];
    Mat<Scalar> Sd = L.solve(dG);
    Sd = L.solve(Sd.transpose().eval());
    for (Eigen::Index k = 0; k < W.nv; ++k) {
      Mat<Scalar> Sk = L.solve(W.det->coeff[k]);
      Sk = L.solve(Sk.transpose().eval());
      resid[k] += W.w * Sk.cwiseProduct(Sd).sum();
    }
  }
  r.stationarity = resid.template lpNorm<Eigen::Infinity>();

  // complementarity of the corrected duals: <Z_j, B_j> = (m_j + tr(B^-1 dB)) / t
  Scalar gap = 0;
  for (std::size_t j = 0; j < p.blocks.size(); ++j) {
    const auto& b = p.blocks[j];
    Mat<Scalar> dB = Mat<Scalar>::Zero(b.size(), b.size());
    for (Eigen::Index k = 0; k < W.nv; ++k)
      if (d[k] != Scalar(0)) dB += d[k] * b.coeff[k];
    const Scalar corr = ev.llt[j].solve(dB).trace();
    r.complementarity[j] = (static_cast<Scalar>(b.size()) + corr) / t;
    gap += r.complementarity[j];
  }
  if (W.row_a0.size() > 0) {
    const Vec<Scalar> ratio = (W.row_A * d).cwiseQuotient(ev.rows);
    gap += (static_cast<Scalar>(W.row_a0.size()) + ratio.sum()) / t;
  }
  const auto dl = (theta - W.lo).array();
  const auto du = (W.hi - theta).array();
  gap += ((Scalar(1) + d.array() / dl).sum() + (Scalar(1) - d.array() / du).sum()) / t;
  r.gap = gap;
  return r;
}

template <typename Scalar>
KktReport<Scalar> kkt_residuals(const MaxDetProblem<Scalar>& p, const SolveSettings& settings,
                                const Solution<Scalar>& sol) {
  return kkt_residuals(p, settings, sol.theta, sol.t_final);
}

// path-following barrier solve of the maxdet problem
template <typename Scalar>
Solution<Scalar> solve(const MaxDetProblem<Scalar>& p, const SolveSettings& settings = {}) {
  settings.validate();
  detail::validate_problem(p);
  Solution<Scalar> sol;

  const Phase1Result<Scalar> ph =
      detail::run_phase1(p, settings, /*stop_at_certificate=*/true);
  if (ph.status == SolveStatus::NumericalFailure) {
    sol.status = SolveStatus::NumericalFailure;
    sol.message = "phase 1 failed: " + ph.message;
    return sol;
  }
  if (ph.verdict != Phase1Verdict::StrictlyFeasible) {
    sol.status = SolveStatus::Infeasible;
    sol.theta = ph.theta;
    sol.margin = ph.slack;
    sol.message = ph.message;
    return sol;
  }

  const detail::WorkProblem<Scalar> W = detail::make_work(p, settings);

  Vec<Scalar> theta = ph.theta;
  // pull the start off the box walls if phase 1 parked it there
  for (Eigen::Index k = 0; k < p.nvars; ++k)
    theta[k] = std::min(std::max(theta[k], W.lo[k] + Scalar(1e-6) * (W.hi[k] - W.lo[k])),
                        W.hi[k] - Scalar(1e-6) * (W.hi[k] - W.lo[k]));
  {
    const detail::PointEval<Scalar> ev = detail::eval_point(W, Scalar(1), theta);
    if (!ev.feasible) theta = ph.theta;  // clamping was not needed after all
  }

  const Scalar m_total = W.barrier_degree();
  const Scalar t_final = m_total / static_cast<Scalar>(settings.gap_tol);
  Scalar t = static_cast<Scalar>(settings.t_init);
  detail::CenterStats<Scalar> stats;
  SolveStatus status = SolveStatus::Optimal;
  while (true) {
    const detail::CenterOutcome oc = detail::center(W, t, theta, settings, stats);
    if (oc == detail::CenterOutcome::Stalled) {
      status = SolveStatus::NumericalFailure;
      sol.message = "newton stalled at t = " + std::to_string(static_cast<double>(t));
      break;
    }
    if (oc == detail::CenterOutcome::MaxIters) {
      status = SolveStatus::MaxIters;
      sol.message = "centering hit the newton iteration cap";
      break;
    }
    const detail::PointEval<Scalar> ev = detail::eval_point(W, t, theta);
    sol.outer_objectives.push_back(ev.objective);
    if (t >= t_final) break;
    t = std::min(t * static_cast<Scalar>(settings.t_growth), t_final);
  }

  sol.status = status;
  sol.theta = theta;
  sol.iterations = stats.newton_steps;
  sol.t_final = t;
  const detail::PointEval<Scalar> ev = detail::eval_point(W, t, theta);
  sol.objective = ev.objective;
  sol.margin = detail::constraint_margin(p, theta);
  sol.kkt = kkt_residuals(p, settings, theta, t);
  return sol;
}

}  // namespace momfit
