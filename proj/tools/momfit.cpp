#include <cmath>
#include <cstdio>
#include <exception>
#include <limits>
#include <string>

#include "CLI11.hpp"
#include "momfit/contour.hpp"
#include "momfit/data_io.hpp"
#include "momfit/fitting.hpp"
#include "momfit/svg.hpp"

namespace {

using Scalar = double;
using momfit::Dataset;
using momfit::Mat;
using momfit::Vec;

int exit_code(momfit::FitStatus s) {
  switch (s) {
    case momfit::FitStatus::Separated: return 0;
    case momfit::FitStatus::Infeasible: return 2;
    case momfit::FitStatus::IterationLimit: return 3;
  }
  return 1;
}

momfit::FitStatus as_fit_status(momfit::SolveStatus s) {
  switch (s) {
    case momfit::SolveStatus::Optimal: return momfit::FitStatus::Separated;
    case momfit::SolveStatus::Infeasible: return momfit::FitStatus::Infeasible;
    default: return momfit::FitStatus::IterationLimit;
  }
}

struct FitOpts {
  std::string input, input2, out, svg, solver_config;
  bool labels = false;
  bool accumulate = false;
  int degree = 2;
  int order = 0;
  std::string mode = "moment";
  double epsilon = 1e-9;
  int max_outer = 50;
};

void add_fit_flags(CLI::App* cmd, FitOpts& o, bool separate) {
  cmd->add_option("--input", o.input, "input CSV")->required()->check(CLI::ExistingFile);
  if (separate)
    cmd->add_option("--input2", o.input2,
                    "second-class CSV; both files are then read without label columns")
        ->check(CLI::ExistingFile);
  cmd->add_flag("--labels", o.labels, "treat the last CSV column as the 1/2 class label");
  cmd->add_option("--degree", o.degree, "polynomial degree")
      ->check(CLI::IsMember({2, 4}));
  cmd->add_option("--order", o.order, "moment relaxation order (default: the degree)");
  cmd->add_option("--mode", o.mode,
                  "moment: iterative support selection; per-point: one constraint per "
                  "point; lp: l1 coefficient objective")
      ->check(CLI::IsMember({"moment", "per-point", "lp"}));
  cmd->add_flag("--accumulate-support", o.accumulate,
                "grow the support set across iterations instead of rebuilding it");
  cmd->add_option("--epsilon", o.epsilon, "classification tolerance for outside-point tests");
  cmd->add_option("--max-outer", o.max_outer, "outer iteration cap");
  cmd->add_option("--out", o.out, "model JSON output path");
  cmd->add_option("--svg", o.svg, "plot output path (2-D data only)");
  cmd->add_option("--solver-config", o.solver_config, "key = value solver settings file")
      ->check(CLI::ExistingFile);
}

void write_svg_plot(const std::string& path, const momfit::Polynomial<Scalar>& theta,
                    const Dataset<Scalar>& s1, const Dataset<Scalar>& s2) {
  if (s1.dim() != 2) throw std::runtime_error("plotting is 2-D only; this data has n = " +
                                              std::to_string(s1.dim()));
  Mat<Scalar> all(s1.size() + s2.size(), 2);
  if (s2.size() > 0)
    all << s1.points, s2.points;
  else
    all = s1.points;
  const auto box = momfit::bounding_box(all, 0.1);
  const auto curve = momfit::zero_level_segments(theta, box.lo, box.hi, 512);
  momfit::write_plot_svg(path, s1, s2, curve, box.lo, box.hi);
}

void report_margins(const momfit::Polynomial<Scalar>& theta, const Dataset<Scalar>& s1,
                    const Dataset<Scalar>& s2) {
  const Vec<Scalar> v1 = theta.eval_rows(s1.points);
  std::printf("class 1 min theta: %.6g\n", v1.minCoeff());
  if (s2.size() > 0) {
    const Vec<Scalar> v2 = theta.eval_rows(s2.points);
    std::printf("class 2 max theta: %.6g\n", v2.maxCoeff());
  }
}

int run_fit(const FitOpts& o, bool separate) {
  Dataset<Scalar> s1, s2;
  if (separate && !o.input2.empty()) {
    s1 = momfit::load_csv<Scalar>(o.input, momfit::LabelMode::None).all;
    s2 = momfit::load_csv<Scalar>(o.input2, momfit::LabelMode::None).all;
    if (s2.size() > 0 && s2.dim() != s1.dim())
      throw std::runtime_error("the two input files have different dimensions");
  } else {
    const auto data = momfit::load_csv<Scalar>(
        o.input, o.labels ? momfit::LabelMode::Present : momfit::LabelMode::Auto);
    if (separate) {
      if (!data.has_labels)
        throw std::runtime_error(
            "separate needs a label column (or --input2); none detected in " + o.input);
      s1 = data.s1;
      s2 = data.s2;
    } else {
      s1 = data.all;
    }
  }
  if (s1.size() == 0) throw std::runtime_error("class 1 is empty");

  momfit::SolveSettings solver;
  if (!o.solver_config.empty())
    solver = momfit::parse_solver_config(momfit::read_text_file(o.solver_config));

  // fit in normalized coordinates, report in the original ones
  Mat<Scalar> union_pts(s1.size() + s2.size(), s1.dim());
  if (s2.size() > 0)
    union_pts << s1.points, s2.points;
  else
    union_pts = s1.points;
  const auto [norm_union, map] = momfit::normalize_to_unit_ball(Dataset<Scalar>(union_pts));
  (void)norm_union;
  const Dataset<Scalar> ns1 = map.apply(s1);
  const Dataset<Scalar> ns2 = s2.size() > 0 ? map.apply(s2) : Dataset<Scalar>{};

  momfit::FitReport<Scalar> rep{momfit::FitStatus::IterationLimit,
                                momfit::Polynomial<Scalar>(static_cast<int>(s1.dim()), o.degree),
                                0,
                                0,
                                {},
                                {},
                                std::numeric_limits<Scalar>::quiet_NaN()};
  // quartic covering uses the exact-degree form; quartic separation needs the
  // full 1 - w'Qw family, which keeps every ellipsoid-separable pair separable
  const momfit::FormVariant form = separate && o.degree == 4
                                       ? momfit::FormVariant::DegreeUpTo
                                       : momfit::FormVariant::DegreeExact;
  int code = 1;
  if (o.mode == "moment") {
    momfit::SeparationInstance<Scalar> inst;
    inst.s1 = ns1;
    inst.s2 = ns2;
    inst.degree = o.degree;
    inst.order = o.order;
    inst.form = form;
    inst.objective = o.degree == 2 ? momfit::Objective::MaxDetEllipsoid
                                   : momfit::Objective::MaxDetQuartic;
    momfit::MainSettings ms;
    ms.max_outer = o.max_outer;
    ms.eval_tol = o.epsilon;
    ms.accumulate_support = o.accumulate;
    ms.solver = solver;
    rep = momfit::run_main_algorithm(inst, ms);
    code = exit_code(rep.status);
    std::printf("status: %s\n", momfit::to_string(rep.status));
    std::printf("objective: %.9g\n", rep.objective);
    std::printf("outer iterations: %d\n", rep.outer_iterations);
    std::printf("support sizes:");
    for (const auto sz : rep.support_sizes) std::printf(" %lld", static_cast<long long>(sz));
    std::printf("\n");
  } else {
    const int r = o.order > 0 ? o.order : o.degree;
    momfit::FitProblem<Scalar> fp =
        o.mode == "lp"
            ? momfit::build_l1_lp(ns1, ns2, o.degree)
            : (separate ? momfit::build_separation_problem(
                              ns1, ns2, o.degree, r, momfit::ConstraintMode::PerPoint, form)
                        : momfit::build_mvce_problem(ns1, o.degree, r,
                                                     momfit::ConstraintMode::PerPoint));
    const auto sol = momfit::solve(fp.problem, solver);
    if (sol.status == momfit::SolveStatus::NumericalFailure)
      throw std::runtime_error("solver failed: " + sol.message);
    rep.status = as_fit_status(sol.status);
    rep.theta = fp.decode(sol.theta);
    rep.objective = sol.objective;
    rep.outer_iterations = 1;
    rep.support_sizes = {s1.size() + s2.size()};
    rep.history = {{sol.objective, 0}};
    code = exit_code(rep.status);
    std::printf("status: %s\n", momfit::to_string(rep.status));
    std::printf("objective: %.9g\n", sol.objective);
    std::printf("newton iterations: %d\n", sol.iterations);
    std::printf("support size: %lld\n", static_cast<long long>(s1.size() + s2.size()));
  }

  if (rep.status == momfit::FitStatus::Infeasible) {
    if (std::isfinite(rep.certificate_slack))
      std::printf("infeasible: best achievable slack %.6g exceeds tolerance\n",
                  rep.certificate_slack);
    else
      std::printf("infeasible: no polynomial of this degree fits the constraints\n");
  }

  rep.theta = momfit::affine_pullback(rep.theta, map.shift, map.scale);
  if (separate && rep.status != momfit::FitStatus::Infeasible)
    report_margins(rep.theta, s1, s2);
  if (!o.out.empty()) {
    momfit::save_model_json(rep, o.out);
    std::printf("model: %s\n", o.out.c_str());
  }
  if (!o.svg.empty()) {
    write_svg_plot(o.svg, rep.theta, s1, s2);
    std::printf("plot: %s\n", o.svg.c_str());
  }
  return code;
}

momfit::ClusterSpec<Scalar> default_two_blobs() {
  momfit::ClusterSpec<Scalar> spec;
  spec.n = 2;
  momfit::Cluster<Scalar> a;
  a.mean = Eigen::Vector2d(-0.4, -0.4);
  a.covariance = 0.15 * 0.15 * Eigen::Matrix2d::Identity();
  a.count = 250;
  momfit::Cluster<Scalar> b = a;
  b.mean = Eigen::Vector2d(0.4, 0.4);
  spec.clusters = {a, b};
  return spec;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fit semi-algebraic covering and separating sets to point clouds"};
  app.require_subcommand(1);

  FitOpts cover_opts, sep_opts;
  auto* cover = app.add_subcommand("cover", "minimum-volume covering set of one point cloud");
  add_fit_flags(cover, cover_opts, /*separate=*/false);
  auto* separate = app.add_subcommand("separate", "polynomial separating two point classes");
  add_fit_flags(separate, sep_opts, /*separate=*/true);

  std::string gen_input, gen_out;
  std::uint64_t gen_seed = 0;
  bool gen_labels = false;
  auto* gen = app.add_subcommand("gen", "sample a Gaussian cluster mixture to CSV");
  gen->add_option("--input", gen_input, "cluster spec file (default: two 2-D blobs)")
      ->check(CLI::ExistingFile);
  gen->add_option("--out", gen_out, "output CSV path")->required();
  auto* seed_opt = gen->add_option("--seed", gen_seed, "override the spec seed");
  gen->add_flag("--labels", gen_labels,
                "write a two-class file (first cluster = 1, second = 2)");

  std::string plot_model, plot_input, plot_svg;
  bool plot_labels = false;
  auto* plot = app.add_subcommand("plot", "scatter plot with the model's zero level set");
  plot->add_option("--model", plot_model, "model JSON from cover or separate")
      ->required()
      ->check(CLI::ExistingFile);
  plot->add_option("--input", plot_input, "data CSV")->required()->check(CLI::ExistingFile);
  plot->add_flag("--labels", plot_labels, "treat the last CSV column as the class label");
  plot->add_option("--svg", plot_svg, "output SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (cover->parsed()) return run_fit(cover_opts, false);
    if (separate->parsed()) return run_fit(sep_opts, true);
    if (gen->parsed()) {
      auto spec = gen_input.empty()
                      ? default_two_blobs()
                      : momfit::parse_cluster_spec<Scalar>(momfit::read_text_file(gen_input));
      if (seed_opt->count() > 0) spec.seed = gen_seed;
      const auto data = momfit::generate_clusters(spec);
      if (gen_labels) {
        if (spec.clusters.size() != 2)
          throw std::runtime_error("--labels needs exactly 2 clusters, spec has " +
                                   std::to_string(spec.clusters.size()));
        const Eigen::Index n1 = spec.clusters[0].count;
        const Dataset<Scalar> s1(Mat<Scalar>(data.points.topRows(n1)));
        const Dataset<Scalar> s2(Mat<Scalar>(data.points.bottomRows(data.size() - n1)));
        momfit::save_csv(gen_out, s1, &s2);
      } else {
        momfit::save_csv(gen_out, data);
      }
      std::printf("wrote %lld points to %s\n", static_cast<long long>(data.size()),
                  gen_out.c_str());
      return 0;
    }
    if (plot->parsed()) {
      const auto theta = momfit::load_polynomial_json<Scalar>(plot_model);
      const auto data = momfit::load_csv<Scalar>(
          plot_input, plot_labels ? momfit::LabelMode::Present : momfit::LabelMode::Auto);
      if (data.all.dim() != 2 || theta.vars() != 2)
        throw std::runtime_error("plotting is 2-D only; data has n = " +
                                 std::to_string(data.all.dim()) + ", model has n = " +
                                 std::to_string(theta.vars()));
      if (data.has_labels)
        write_svg_plot(plot_svg, theta, data.s1, data.s2);
      else
        write_svg_plot(plot_svg, theta, data.all, {});
      std::printf("plot: %s\n", plot_svg.c_str());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
