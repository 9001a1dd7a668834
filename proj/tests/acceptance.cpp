// end-to-end acceptance battery.  each numbered check prints exactly one
// pass/fail line; run with no arguments for the full battery or with a
// single number to run one check.  every tolerance is pinned right where it
// is used so the gate cannot drift.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "momfit/data_io.hpp"
#include "momfit/fitting.hpp"
#include "momfit/rng.hpp"

namespace {

using momfit::Dataset;
using momfit::Mat;
using momfit::Vec;

struct Outcome {
  bool pass = true;
  std::string note;

  void fail(const std::string& why) {
    pass = false;
    if (!note.empty()) note += "; ";
    note += why;
  }
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

Dataset<double> gaussian_cloud(momfit::Rng& rng, Eigen::Index count, Eigen::Index dim,
                               double scale, const Eigen::RowVectorXd& center) {
  Mat<double> pts(count, dim);
  for (Eigen::Index i = 0; i < count; ++i)
    pts.row(i) = center + scale * rng.gaussian_vector(dim).transpose();
  return Dataset<double>(std::move(pts));
}

// gaussian draw with tails cut at 2.5 sigma, for instances whose geometry
// must not be ruined by a single stray sample
Eigen::VectorXd clipped_gaussian(momfit::Rng& rng, Eigen::Index dim) {
  for (;;) {
    const Eigen::VectorXd g = rng.gaussian_vector(dim);
    if (g.norm() <= 2.5) return g;
  }
}

momfit::EmpiricalMeasure<double> weighted_measure(Mat<double> pts, Vec<double> w) {
  return {std::make_shared<Dataset<double>>(std::move(pts)), std::move(w)};
}

double solved_objective(const momfit::FitProblem<double>& fp, Outcome& out, const char* label,
                        momfit::SolveSettings settings = {}) {
  const auto sol = momfit::solve(fp.problem, settings);
  if (sol.status != momfit::SolveStatus::Optimal) {
    out.fail(std::string(label) + " solve ended " + momfit::to_string(sol.status));
    return std::numeric_limits<double>::quiet_NaN();
  }
  return sol.objective;
}

// ---------------------------------------------------------------------------
// 1. localizing identity: f'M_r(theta y)f equals the weighted point sum
Outcome check_localizing_identity() {
  Outcome out;
  momfit::Rng rng(101);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_u64() % 3);
    const int r = static_cast<int>(rng.next_u64() % 4);
    const int dtheta = 1 + static_cast<int>(rng.next_u64() % 4);
    const auto count = static_cast<Eigen::Index>(1 + rng.next_u64() % 50);

    Mat<double> pts(count, n);
    for (Eigen::Index i = 0; i < count; ++i) pts.row(i) = rng.gaussian_vector(n).transpose();
    Vec<double> w(count);
    for (Eigen::Index i = 0; i < count; ++i) w[i] = rng.uniform(0.1, 2.0);
    const auto m = weighted_measure(pts, w);

    const auto op = momfit::localizing_operator(m, r, dtheta);
    Vec<double> tc(op.theta_basis.size());
    for (Eigen::Index i = 0; i < tc.size(); ++i) tc[i] = rng.gaussian();
    const momfit::Polynomial<double> theta(op.theta_basis, tc);

    momfit::MonomialBasis fb(n, r);
    Vec<double> fc(fb.size());
    for (Eigen::Index i = 0; i < fc.size(); ++i) fc[i] = rng.gaussian();
    const momfit::Polynomial<double> f(fb, fc);

    const Mat<double> M = op.apply(tc);
    const double lhs = fc.dot(M * fc);
    double rhs = 0, mass = 0;
    for (Eigen::Index i = 0; i < count; ++i) {
      const Vec<double> x = m.dataset->points.row(i).transpose();
      const double fx = f(x);
      rhs += w[i] * theta(x) * fx * fx;
      mass += w[i] * std::abs(theta(x)) * fx * fx;
    }
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, mass));
  }
  if (worst > 1e-10) out.fail("worst relative identity error " + fmt(worst));
  out.note = "worst relative error " + fmt(worst);
  return out;
}

// ---------------------------------------------------------------------------
// 2. relaxation values climb with the order and stay below the per-point
//    optimum
Outcome check_relaxation_monotone() {
  Outcome out;
  for (int trial = 0; trial < 5; ++trial) {
    momfit::Rng rng(200 + static_cast<std::uint64_t>(trial));
    const auto n1 = static_cast<Eigen::Index>(6 + rng.next_u64() % 15);
    const auto n2 = static_cast<Eigen::Index>(6 + rng.next_u64() % 15);
    const auto s1 = gaussian_cloud(rng, n1, 2, 0.5, Eigen::RowVector2d(0, 0));
    const auto s2 = gaussian_cloud(rng, n2, 2, 0.3, Eigen::RowVector2d(4, 0));

    const double t2 = solved_objective(
        momfit::build_separation_problem(s1, s2, 2, 2, momfit::ConstraintMode::Moment), out,
        "order-2");
    const double t3 = solved_objective(
        momfit::build_separation_problem(s1, s2, 2, 3, momfit::ConstraintMode::Moment), out,
        "order-3");
    const double ts = solved_objective(
        momfit::build_separation_problem(s1, s2, 2, 2, momfit::ConstraintMode::PerPoint), out,
        "per-point");
    if (!out.pass) return out;
    if (t2 > t3 + 1e-6)
      out.fail("order 2 value " + fmt(t2) + " above order 3 " + fmt(t3));
    if (t3 > ts + 1e-6)
      out.fail("order 3 value " + fmt(t3) + " above per-point " + fmt(ts));
  }
  return out;
}

// ---------------------------------------------------------------------------
// 3. with one jittered point per monomial the relaxation matches the
//    per-point optimum
Outcome check_generic_exactness() {
  Outcome out;
  double worst = 0;
  const auto target = momfit::basis_size(2, 2);  // one point per monomial
  for (int seed = 0; seed < 5; ++seed) {
    momfit::Rng rng(300 + static_cast<std::uint64_t>(seed));
    const auto s1 = gaussian_cloud(rng, target, 2, 0.5, Eigen::RowVector2d(0, 0));
    const auto s2 = gaussian_cloud(rng, target, 2, 0.3, Eigen::RowVector2d(4, 0));
    const auto [p1, p2] = momfit::perturb_datasets(s1, s2, target, 1e-4, rng);

    const double tr = solved_objective(
        momfit::build_separation_problem(p1, p2, 2, 2, momfit::ConstraintMode::Moment), out,
        "relaxed");
    const double ts = solved_objective(
        momfit::build_separation_problem(p1, p2, 2, 2, momfit::ConstraintMode::PerPoint), out,
        "per-point");
    if (!out.pass) return out;
    const double rel = std::abs(tr - ts) / std::max(1.0, std::abs(ts));
    worst = std::max(worst, rel);
  }
  if (worst > 1e-5) out.fail("worst relative value gap " + fmt(worst));
  out.note = "worst relative value gap " + fmt(worst);
  return out;
}

// ---------------------------------------------------------------------------
// 4. closed-form covering ellipsoids
Outcome check_mvce_ground_truth() {
  Outcome out;
  const auto fit = [&](std::initializer_list<std::initializer_list<double>> rows,
                       momfit::ConstraintMode mode) {
    Mat<double> pts(static_cast<Eigen::Index>(rows.size()), 2);
    Eigen::Index i = 0;
    for (const auto& row : rows) {
      Eigen::Index j = 0;
      for (double v : row) pts(i, j++) = v;
      ++i;
    }
    const auto fp = momfit::build_mvce_problem(Dataset<double>(std::move(pts)), 2, 2, mode);
    const auto sol = momfit::solve(fp.problem);
    if (sol.status != momfit::SolveStatus::Optimal) out.fail("ground-truth solve failed");
    return momfit::unpack_form(*fp.layout, sol.theta);
  };

  for (const auto mode : {momfit::ConstraintMode::PerPoint, momfit::ConstraintMode::Moment}) {
    const auto diamond = fit({{1, 0}, {-1, 0}, {0, 1}, {0, -1}}, mode);
    const auto square = fit({{1, 1}, {1, -1}, {-1, 1}, {-1, -1}}, mode);
    if (!out.pass) return out;
    const double e1 = (diamond.Q - Mat<double>::Identity(2, 2)).cwiseAbs().maxCoeff();
    const double e2 = diamond.b.cwiseAbs().maxCoeff();
    const double e3 = std::abs(diamond.c - 1.0);
    const double e4 = (square.Q - 0.5 * Mat<double>::Identity(2, 2)).cwiseAbs().maxCoeff();
    const double worst = std::max({e1, e2, e3, e4});
    if (worst > 1e-6)
      out.fail(std::string(mode == momfit::ConstraintMode::Moment ? "moment" : "per-point") +
               " fit misses the closed form by " + fmt(worst));
  }
  return out;
}

// ---------------------------------------------------------------------------
// 5. the constant coefficient sits exactly on its active bound
Outcome check_activity_identity() {
  Outcome out;
  double worst = 0;
  for (int trial = 0; trial < 10; ++trial) {
    momfit::Rng rng(500 + static_cast<std::uint64_t>(trial));
    const auto count = static_cast<Eigen::Index>(10 + rng.next_u64() % 21);
    const auto s = gaussian_cloud(rng, count, 2, 1.0, Eigen::RowVector2d(0.5, -0.25));
    const auto fp = momfit::build_mvce_problem(s, 2, 2, momfit::ConstraintMode::PerPoint);
    const auto sol = momfit::solve(fp.problem);
    if (sol.status != momfit::SolveStatus::Optimal) {
      out.fail("covering solve failed");
      return out;
    }
    const auto form = momfit::unpack_form(*fp.layout, sol.theta);
    const double active = 1.0 - 0.25 * form.b.dot(form.Q.llt().solve(form.b));
    worst = std::max(worst, std::abs(form.c - active));
  }
  if (worst > 1e-6) out.fail("worst activity residual " + fmt(worst));
  out.note = "worst activity residual " + fmt(worst);
  return out;
}

// ---------------------------------------------------------------------------
// 6. support selection reproduces the full per-point optimum on 10^4-point
//    separable instances
Outcome check_support_selection_oracle() {
  Outcome out;
  for (int trial = 0; trial < 10; ++trial) {
    momfit::Rng rng(600 + static_cast<std::uint64_t>(trial));
    const double angle = rng.uniform(0.0, 2 * M_PI);
    const double dist = rng.uniform(3.0, 5.0);
    const Eigen::RowVector2d away(dist * std::cos(angle), dist * std::sin(angle));
    const auto s1 = gaussian_cloud(rng, 5000, 2, 0.5, Eigen::RowVector2d(0, 0));
    const auto s2 = gaussian_cloud(rng, 5000, 2, 0.3, away);

    momfit::SeparationInstance<double> inst{s1, s2};
    const auto rep = momfit::run_main_algorithm(inst);
    if (rep.status != momfit::FitStatus::Separated) {
      out.fail("instance " + std::to_string(trial) + " ended " + momfit::to_string(rep.status));
      continue;
    }
    if (rep.outer_iterations > 10)
      out.fail("instance " + std::to_string(trial) + " took " +
               std::to_string(rep.outer_iterations) + " outer iterations");

    double min1 = 0, max2 = 0;
    for (Eigen::Index i = 0; i < s1.size(); ++i)
      min1 = std::min(min1, rep.theta(s1.point(i)));
    for (Eigen::Index i = 0; i < s2.size(); ++i)
      max2 = std::max(max2, rep.theta(s2.point(i)));
    if (min1 < -1e-9 || max2 > 1e-9)
      out.fail("instance " + std::to_string(trial) + " violates the class inequalities");

    // the reference solve carries one barrier term per point, and centering
    // cost grows with the row count, so it gets a newton budget to match
    momfit::SolveSettings reference;
    reference.max_newton = 5000;
    const double full = solved_objective(
        momfit::build_separation_problem(s1, s2, 2, 2, momfit::ConstraintMode::PerPoint), out,
        "per-point", reference);
    if (!out.pass) return out;
    if (std::abs(rep.objective - full) > 1e-5 * std::max(1.0, std::abs(full)))
      out.fail("instance " + std::to_string(trial) + " objective off by " +
               fmt(std::abs(rep.objective - full)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// 7. covering 10^5 points stays fast and converges
Outcome check_large_covering() {
  Outcome out;
  momfit::ClusterSpec<double> spec;
  spec.n = 2;
  spec.seed = 7;
  spec.clusters.push_back({Eigen::Vector2d(0.4, 0.4), 0.0225 * Mat<double>::Identity(2, 2),
                           50000});
  spec.clusters.push_back({Eigen::Vector2d(-0.4, -0.4), 0.0225 * Mat<double>::Identity(2, 2),
                           50000});
  const auto s = momfit::generate_clusters(spec);

  momfit::SeparationInstance<double> inst{s, {}};
  const auto rep = momfit::run_main_algorithm(inst);
  if (rep.status != momfit::FitStatus::Separated)
    out.fail(std::string("covering ended ") + momfit::to_string(rep.status));
  if (rep.outer_iterations > 10)
    out.fail("took " + std::to_string(rep.outer_iterations) + " outer iterations");
  out.note = std::to_string(rep.outer_iterations) + " outer iterations";
  return out;
}

// ---------------------------------------------------------------------------
// 8. infeasible instances are recognized, and raising the degree recovers
//    the two-lobe case
Outcome check_infeasibility_detection() {
  Outcome out;

  Mat<double> a(2, 2), b(1, 2);
  a << 0, 0, 2, 0;
  b << 1, 0;
  const Dataset<double> tri1(std::move(a)), tri2(std::move(b));
  const double slack = momfit::separability_slack(tri1, tri2, 2);
  if (slack <= 1e-7) out.fail("collinear slack " + fmt(slack) + " not positive");
  momfit::SeparationInstance<double> tri{tri1, tri2};
  if (momfit::run_main_algorithm(tri).status != momfit::FitStatus::Infeasible)
    out.fail("collinear instance not flagged infeasible");

  momfit::Rng rng(800);
  Mat<double> lobes(80, 2), waist(20, 2);
  for (Eigen::Index i = 0; i < lobes.rows(); ++i) {
    const double cx = i % 2 == 0 ? 0.7 : -0.7;
    lobes.row(i) =
        Eigen::RowVector2d(cx, 0) + 0.12 * clipped_gaussian(rng, 2).transpose();
  }
  for (Eigen::Index i = 0; i < waist.rows(); ++i)
    waist.row(i) = 0.06 * clipped_gaussian(rng, 2).transpose();
  const Dataset<double> s1(std::move(lobes)), s2(std::move(waist));

  momfit::SeparationInstance<double> flat{s1, s2};
  if (momfit::run_main_algorithm(flat).status != momfit::FitStatus::Infeasible)
    out.fail("two-lobe instance not flagged infeasible at degree 2");

  momfit::SeparationInstance<double> bent{s1, s2};
  bent.degree = 4;
  bent.objective = momfit::Objective::MaxDetQuartic;
  bent.form = momfit::FormVariant::DegreeUpTo;
  const auto rep = momfit::run_main_algorithm(bent);
  if (rep.status != momfit::FitStatus::Separated)
    out.fail(std::string("two-lobe instance at degree 4 ended ") +
             momfit::to_string(rep.status));
  return out;
}

// ---------------------------------------------------------------------------
// 9. the quartic covering set is no bigger than the quadratic one
Outcome check_quartic_volume() {
  Outcome out;
  momfit::ClusterSpec<double> spec;
  spec.n = 2;
  spec.seed = 9;
  spec.clusters.push_back({Eigen::Vector2d(0.4, 0.4), 0.0225 * Mat<double>::Identity(2, 2),
                           5000});
  spec.clusters.push_back({Eigen::Vector2d(-0.4, -0.4), 0.0225 * Mat<double>::Identity(2, 2),
                           5000});
  const auto s = momfit::generate_clusters(spec);

  momfit::SeparationInstance<double> quad{s, {}};
  const auto rep2 = momfit::run_main_algorithm(quad);
  momfit::SeparationInstance<double> quart{s, {}};
  quart.degree = 4;
  quart.objective = momfit::Objective::MaxDetQuartic;
  const auto rep4 = momfit::run_main_algorithm(quart);
  if (rep2.status != momfit::FitStatus::Separated ||
      rep4.status != momfit::FitStatus::Separated) {
    out.fail("covering fits did not converge");
    return out;
  }

  const auto box = momfit::bounding_box(s.points, 0.1);
  const auto v2 = momfit::monte_carlo_volume(rep2.theta, box, 1000000, 42);
  const auto v4 = momfit::monte_carlo_volume(rep4.theta, box, 1000000, 43);
  const double band = 3.0 * std::sqrt(v2.stderr_ * v2.stderr_ + v4.stderr_ * v4.stderr_);
  if (v4.volume > v2.volume + band)
    out.fail("quartic volume " + fmt(v4.volume) + " above quadratic " +
             fmt(v2.volume) + " + " + fmt(band));
  out.note = "volumes " + fmt(v4.volume) + " vs " + fmt(v2.volume);
  return out;
}

// ---------------------------------------------------------------------------
// 10. solver health on random feasible maxdet problems
Outcome check_solver_health() {
  Outcome out;
  for (int trial = 0; trial < 20; ++trial) {
    momfit::Rng rng(1000 + static_cast<std::uint64_t>(trial));
    const auto nv = static_cast<Eigen::Index>(5 + rng.next_u64() % 26);

    const auto random_block = [&](Eigen::Index size) {
      momfit::LmiBlock<double> blk;
      Mat<double> R(size, size);
      for (Eigen::Index i = 0; i < size; ++i)
        for (Eigen::Index j = 0; j < size; ++j) R(i, j) = rng.gaussian();
      blk.A0 = Mat<double>::Identity(size, size) + 0.3 * (R * R.transpose()) / double(size);
      blk.coeff.resize(static_cast<std::size_t>(nv));
      for (auto& C : blk.coeff) {
        Mat<double> S(size, size);
        for (Eigen::Index i = 0; i < size; ++i)
          for (Eigen::Index j = 0; j < size; ++j) S(i, j) = rng.gaussian();
        C = 0.15 * (S + S.transpose());
      }
      return blk;
    };

    momfit::MaxDetProblem<double> p(nv);
    for (Eigen::Index i = 0; i < nv; ++i) p.c[i] = 0.3 * rng.gaussian();
    p.set_det(random_block(static_cast<Eigen::Index>(2 + rng.next_u64() % 7)));
    const auto nblocks = 1 + rng.next_u64() % 2;
    for (std::uint64_t j = 0; j < nblocks; ++j)
      p.add_block(random_block(static_cast<Eigen::Index>(3 + rng.next_u64() % 18)));
    const auto nrows = rng.next_u64() % 6;
    for (std::uint64_t j = 0; j < nrows; ++j) {
      Vec<double> row(nv);
      for (Eigen::Index i = 0; i < nv; ++i) row[i] = rng.gaussian();
      p.add_row(rng.uniform(0.5, 2.0), row);
    }
    p.lower = Vec<double>::Constant(nv, -3.0);
    p.upper = Vec<double>::Constant(nv, 3.0);

    // ask for one decade beyond the gate so the recomputed certificate gap
    // clears it with margin
    momfit::SolveSettings settings;
    settings.gap_tol = 1e-9;
    const auto sol = momfit::solve(p, settings);
    if (sol.status != momfit::SolveStatus::Optimal) {
      out.fail("problem " + std::to_string(trial) + " ended " + momfit::to_string(sol.status));
      continue;
    }
    if (!(sol.kkt.stationarity <= 1e-7))
      out.fail("problem " + std::to_string(trial) + " stationarity " +
               fmt(sol.kkt.stationarity));
    if (sol.kkt.block_min_eig.size() > 0 && sol.kkt.block_min_eig.minCoeff() < -1e-9)
      out.fail("problem " + std::to_string(trial) + " leaves a block indefinite");
    if (!(sol.kkt.gap <= 1e-8))
      out.fail("problem " + std::to_string(trial) + " gap " + fmt(sol.kkt.gap));

    // the analytic -logdet gradient against central differences
    const Eigen::LLT<Mat<double>> llt(p.det.at(sol.theta));
    Vec<double> analytic(nv), numeric(nv);
    for (Eigen::Index k = 0; k < nv; ++k) {
      analytic[k] = -llt.solve(p.det.coeff[k]).trace();
      const double h = 1e-5;
      Vec<double> tp = sol.theta, tm = sol.theta;
      tp[k] += h;
      tm[k] -= h;
      const auto ld = [&](const Vec<double>& th) {
        return -2.0 *
               Eigen::LLT<Mat<double>>(p.det.at(th)).matrixLLT().diagonal().array().log().sum();
      };
      numeric[k] = (ld(tp) - ld(tm)) / (2 * h);
    }
    const double rel = (analytic - numeric).cwiseAbs().maxCoeff() /
                       std::max(1.0, analytic.cwiseAbs().maxCoeff());
    if (rel > 1e-6)
      out.fail("problem " + std::to_string(trial) + " gradient off by " + fmt(rel));

    const auto again = momfit::solve(p, settings);
    if (again.theta.size() != sol.theta.size() ||
        std::memcmp(again.theta.data(), sol.theta.data(),
                    sizeof(double) * static_cast<std::size_t>(sol.theta.size())) != 0)
      out.fail("problem " + std::to_string(trial) + " is not bit-identical on rerun");
  }
  return out;
}

// ---------------------------------------------------------------------------
// 11. three variables at order four give two 35x35 localizing blocks
Outcome check_lmi_sizes() {
  Outcome out;
  // unit-scale clouds keep every genuine eigenvalue of the degree-8 moment
  // matrices above the rank cut, the same footing the fitting front end
  // guarantees by normalizing its input
  momfit::Rng rng(1100);
  const auto s1 = gaussian_cloud(rng, 40, 3, 0.6, Eigen::RowVector3d(0, 0, 0));
  const auto s2 = gaussian_cloud(rng, 40, 3, 0.6, Eigen::RowVector3d(0.3, 0, 0));
  const auto fp = momfit::build_separation_problem(s1, s2, 2, 4,
                                                   momfit::ConstraintMode::Moment);
  Eigen::Index found = 0;
  for (const auto& blk : fp.problem.blocks)
    if (blk.size() == 35) ++found;
  if (found != 2)
    out.fail("expected two 35x35 blocks, found " + std::to_string(found) + " among " +
             std::to_string(fp.problem.blocks.size()));
  return out;
}

struct Check {
  const char* name;
  std::function<Outcome()> run;
  double budget_s;  // 0 means no runtime gate
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Check> checks = {
      {"localizing identity", check_localizing_identity, 10},
      {"relaxation order monotonicity", check_relaxation_monotone, 60},
      {"exactness at generic supports", check_generic_exactness, 60},
      {"closed-form covering ellipsoids", check_mvce_ground_truth, 5},
      {"constant-coefficient activity", check_activity_identity, 0},
      {"support selection matches per-point", check_support_selection_oracle, 300},
      {"100k-point covering", check_large_covering, 600},
      {"infeasibility detection", check_infeasibility_detection, 0},
      {"quartic covering volume", check_quartic_volume, 0},
      {"solver health", check_solver_health, 0},
      {"localizing block sizes", check_lmi_sizes, 0},
  };

  int only = 0;
  if (argc > 1) {
    only = std::atoi(argv[1]);
    if (only < 1 || only > static_cast<int>(checks.size())) {
      std::fprintf(stderr, "usage: %s [1-%zu]\n", argv[0], checks.size());
      return 1;
    }
  }

  int failures = 0;
  for (std::size_t i = 0; i < checks.size(); ++i) {
    if (only != 0 && only != static_cast<int>(i) + 1) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out = checks[i].run();
    const double elapsed = seconds_since(t0);
    if (checks[i].budget_s > 0 && elapsed > checks[i].budget_s)
      out.fail("took " + fmt(elapsed) + "s, budget " +
               fmt(checks[i].budget_s) + "s");
    std::printf("[%2zu] %s  %s (%.1fs)%s%s\n", i + 1, out.pass ? "pass" : "FAIL",
                checks[i].name, elapsed, out.note.empty() ? "" : " -- ",
                out.note.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
