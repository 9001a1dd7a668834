#include <doctest.h>

#include <cmath>
#include <cstring>
#include <momfit/maxdet.hpp>
#include <momfit/rng.hpp>

using momfit::LmiBlock;
using momfit::MaxDetProblem;
using momfit::Phase1Verdict;
using momfit::Solution;
using momfit::SolveSettings;
using momfit::SolveStatus;

namespace {

MaxDetProblem<double> scalar_logdet_problem() {
  // minimize -log q subject to q <= 2
  MaxDetProblem<double> p(1);
  LmiBlock<double> g;
  g.A0 = Eigen::MatrixXd::Zero(1, 1);
  g.coeff = {Eigen::MatrixXd::Ones(1, 1)};
  p.set_det(std::move(g));
  Eigen::VectorXd a(1);
  a << -1;
  p.add_row(2.0, a);
  return p;
}

// random strictly feasible sdp: blocks A0 = W + sum theta_k A_k kept psd at a
// chosen interior point
MaxDetProblem<double> random_feasible_problem(momfit::Rng& rng, bool with_det) {
  const int nv = 2 + static_cast<int>(rng.next_u64() % 5);
  MaxDetProblem<double> p(nv);
  for (int k = 0; k < nv; ++k) p.c[k] = rng.gaussian();
  const Eigen::VectorXd hat = 0.3 * rng.gaussian_vector(nv);
  const int nblocks = 1 + static_cast<int>(rng.next_u64() % 2);
  for (int j = 0; j < nblocks; ++j) {
    const int m = 2 + static_cast<int>(rng.next_u64() % 4);
    LmiBlock<double> b;
    b.coeff.reserve(nv);
    Eigen::MatrixXd shift = Eigen::MatrixXd::Zero(m, m);
    for (int k = 0; k < nv; ++k) {
      Eigen::MatrixXd R(m, m);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) R(r, c) = rng.gaussian();
      b.coeff.push_back(0.5 * (R + R.transpose()));
      shift += hat[k] * b.coeff.back();
    }
    Eigen::MatrixXd W(m, m);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < m; ++c) W(r, c) = rng.gaussian();
    b.A0 = W * W.transpose() + Eigen::MatrixXd::Identity(m, m) - shift;
    p.add_block(std::move(b));
  }
  if (with_det) {
    const int m = 2;
    LmiBlock<double> g;
    Eigen::MatrixXd shift = Eigen::MatrixXd::Zero(m, m);
    for (int k = 0; k < nv; ++k) {
      Eigen::MatrixXd R(m, m);
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < m; ++c) R(r, c) = rng.gaussian();
      g.coeff.push_back(0.5 * (R + R.transpose()));
      shift += hat[k] * g.coeff.back();
    }
    g.A0 = 4.0 * Eigen::MatrixXd::Identity(m, m) - shift;
    p.set_det(std::move(g));
  }
  p.lower = Eigen::VectorXd::Constant(nv, -10.0);
  p.upper = Eigen::VectorXd::Constant(nv, 10.0);
  return p;
}

}  // namespace

TEST_CASE("scalar logdet problem reaches the bound") {
  const auto p = scalar_logdet_problem();
  const Solution<double> sol = momfit::solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.theta[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(sol.objective == doctest::Approx(-std::log(2.0)).epsilon(1e-6));
  CHECK(sol.kkt.stationarity <= 1e-8);
  CHECK(sol.kkt.gap <= 1e-8 + 1e-15);
}

TEST_CASE("phase 1 centers an interval") {
  // theta >= 0 as a row, theta <= 2 as a declared bound
  MaxDetProblem<double> p(1);
  Eigen::VectorXd a(1);
  a << 1;
  p.add_row(0.0, a);
  p.upper = Eigen::VectorXd::Constant(1, 2.0);
  const auto r = momfit::phase1(p);
  CHECK(r.verdict == Phase1Verdict::StrictlyFeasible);
  CHECK(r.slack == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(r.theta[0] == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("phase 1 certifies an empty interior") {
  // theta >= 1 and -theta >= 0 cannot hold together
  MaxDetProblem<double> p(1);
  Eigen::VectorXd a(1);
  a << 1;
  p.add_row(-1.0, a);
  a << -1;
  p.add_row(0.0, a);
  const auto r = momfit::phase1(p);
  CHECK(r.verdict == Phase1Verdict::Infeasible);
  CHECK(r.slack <= -0.5 + 1e-6);
  const Solution<double> sol = momfit::solve(p);
  CHECK(sol.status == SolveStatus::Infeasible);
}

TEST_CASE("phase 1 with no constraints reports unbounded slack") {
  MaxDetProblem<double> p(2);
  const auto r = momfit::phase1(p);
  CHECK(r.verdict == Phase1Verdict::StrictlyFeasible);
  CHECK(std::isinf(r.slack));
}

TEST_CASE("random sdp solutions satisfy kkt conditions") {
  momfit::Rng rng(31);
  for (int inst = 0; inst < 5; ++inst) {
    const auto p = random_feasible_problem(rng, inst % 2 == 1);
    const Solution<double> sol = momfit::solve(p);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.kkt.stationarity <= 1e-7);
    CHECK(sol.margin >= -1e-9);
    if (sol.kkt.block_min_eig.size() > 0)
      CHECK(sol.kkt.block_min_eig.minCoeff() >= -1e-9);
    CHECK(sol.kkt.gap <= 1e-8 + 1e-15);
  }
}

TEST_CASE("outer objectives decrease along the path") {
  momfit::Rng rng(32);
  const auto p = random_feasible_problem(rng, true);
  const Solution<double> sol = momfit::solve(p);
  REQUIRE(sol.status == SolveStatus::Optimal);
  for (std::size_t i = 1; i < sol.outer_objectives.size(); ++i)
    CHECK(sol.outer_objectives[i] <= sol.outer_objectives[i - 1] + 1e-10);
}

TEST_CASE("scaling all constraints leaves the optimum in place") {
  momfit::Rng rng(33);
  MaxDetProblem<double> p = random_feasible_problem(rng, false);
  const Solution<double> a = momfit::solve(p);
  MaxDetProblem<double> q = p;
  for (auto& b : q.blocks) {
    b.A0 *= 2.0;
    for (auto& A : b.coeff) A *= 2.0;
  }
  q.row_a0 *= 2.0;
  q.row_A *= 2.0;
  const Solution<double> b = momfit::solve(q);
  REQUIRE(a.status == SolveStatus::Optimal);
  REQUIRE(b.status == SolveStatus::Optimal);
  CHECK((a.theta - b.theta).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("repeat solves are bit identical") {
  momfit::Rng rng(34);
  const auto p = random_feasible_problem(rng, true);
  const Solution<double> a = momfit::solve(p);
  const Solution<double> b = momfit::solve(p);
  REQUIRE(a.theta.size() == b.theta.size());
  CHECK(std::memcmp(a.theta.data(), b.theta.data(), sizeof(double) * a.theta.size()) == 0);
  CHECK(a.objective == b.objective);
}

TEST_CASE("shape validation rejects malformed problems") {
  MaxDetProblem<double> p(2);
  Eigen::VectorXd a(1);
  a << 1;
  CHECK_THROWS_AS(p.add_row(0.0, a), std::invalid_argument);
  LmiBlock<double> b;
  b.A0 = Eigen::MatrixXd::Zero(2, 2);
  b.coeff = {Eigen::MatrixXd::Zero(2, 2)};  // one matrix for two variables
  CHECK_THROWS_AS(p.add_block(b), std::invalid_argument);
  SolveSettings s;
  s.gap_tol = -1;
  CHECK_THROWS_AS(momfit::solve(MaxDetProblem<double>(1), s), std::invalid_argument);
}
