#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "momfit/dataset.hpp"
#include "momfit/fitting.hpp"
#include "momfit/parallel.hpp"
#include "momfit/rng.hpp"

namespace momfit {

// y = (x - shift) / scale, the normalization applied before fitting
template <typename Scalar>
struct AffineMap {
  Vec<Scalar> shift;
  Scalar scale = 1;

  Vec<Scalar> apply(const Vec<Scalar>& x) const { return (x - shift) / scale; }
  Vec<Scalar> invert(const Vec<Scalar>& y) const { return scale * y + shift; }

  Dataset<Scalar> apply(const Dataset<Scalar>& s) const {
    Mat<Scalar> pts = (s.points.rowwise() - shift.transpose()) / scale;
    return Dataset<Scalar>(std::move(pts));
  }
};

template <typename Scalar>
struct Cluster {
  Vec<Scalar> mean;
  Mat<Scalar> covariance;
  Eigen::Index count = 0;
};

template <typename Scalar>
struct ClusterSpec {
  int n = 0;
  std::vector<Cluster<Scalar>> clusters;
  std::uint64_t seed = 0;
};

namespace detail {

// PSD square root for sampling; rejects an indefinite covariance instead of
// silently clipping real negative curvature
template <typename Scalar>
Mat<Scalar> covariance_factor(const Mat<Scalar>& cov) {
  if (cov.rows() != cov.cols() || !cov.isApprox(cov.transpose()))
    throw std::invalid_argument("covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat<Scalar>> es(cov);
  const Vec<Scalar>& ev = es.eigenvalues();
  const Scalar floor = -Scalar(1e-10) * std::max(Scalar(1), ev.cwiseAbs().maxCoeff());
  if ((ev.array() < floor).any())
    throw std::invalid_argument("covariance has a negative eigenvalue");
  return es.eigenvectors() * ev.cwiseMax(Scalar(0)).cwiseSqrt().asDiagonal();
}

}  // namespace detail

// draw every cluster with a seed derived from its index, in fixed-size chunks
// with per-chunk streams, so the result is one bit pattern for any thread count
template <typename Scalar>
Dataset<Scalar> generate_clusters(const ClusterSpec<Scalar>& spec) {
  if (spec.n < 1) throw std::invalid_argument("generate_clusters: dimension must be positive");
  Eigen::Index total = 0;
  for (const auto& c : spec.clusters) {
    if (c.count < 1) throw std::invalid_argument("generate_clusters: cluster count must be >= 1");
    if (c.mean.size() != spec.n)
      throw std::invalid_argument("generate_clusters: mean dimension mismatch");
    total += c.count;
  }
  Mat<Scalar> pts(total, spec.n);
  Rng root(spec.seed);
  Eigen::Index row = 0;
  for (std::size_t ci = 0; ci < spec.clusters.size(); ++ci) {
    const auto& c = spec.clusters[ci];
    const Mat<Scalar> F = detail::covariance_factor(c.covariance);
    Rng cluster_rng = root.derive(ci);
    const Eigen::Index base = row;
    for_each_block(c.count, 4096, [&](std::ptrdiff_t chunk, std::ptrdiff_t lo, std::ptrdiff_t hi) {
      Rng r = cluster_rng.derive(static_cast<std::uint64_t>(chunk));
      for (std::ptrdiff_t i = lo; i < hi; ++i)
        pts.row(base + i) =
            (c.mean + F * r.gaussian_vector(spec.n).template cast<Scalar>()).transpose();
    });
    row += c.count;
  }
  return Dataset<Scalar>(std::move(pts));
}

// center at the mean and divide by the farthest distance, so the cloud sits
// in the unit ball with the extreme point exactly on the sphere
template <typename Scalar>
std::pair<Dataset<Scalar>, AffineMap<Scalar>> normalize_to_unit_ball(const Dataset<Scalar>& s) {
  if (s.size() == 0) throw std::invalid_argument("normalize_to_unit_ball: empty dataset");
  AffineMap<Scalar> map;
  map.shift = s.points.colwise().mean().transpose();
  const Mat<Scalar> centered = s.points.rowwise() - map.shift.transpose();
  const Scalar radius = centered.rowwise().norm().maxCoeff();
  map.scale = radius > Scalar(0) ? radius : Scalar(1);
  return {Dataset<Scalar>(Mat<Scalar>(centered / map.scale)), map};
}

// drop every second-class point the covering set of the first class reaches;
// the fitted boundary itself witnesses that the returned pair is separable
template <typename Scalar>
Dataset<Scalar> make_separable(const Dataset<Scalar>& s1, const Dataset<Scalar>& s2, int d) {
  const auto fp = build_mvce_problem(s1, d, d, ConstraintMode::PerPoint);
  const auto sol = solve(fp.problem);
  if (sol.status != SolveStatus::Optimal && sol.status != SolveStatus::MaxIters)
    throw SolverFailure(std::string("make_separable: covering solve failed: ") + sol.message,
                        -1);
  const auto theta = fp.decode(sol.theta);
  if (s2.size() == 0) return {};
  const Vec<Scalar> v = detail::parallel_eval(theta, s2.points);
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v[i] < Scalar(0)) idx.push_back(i);
  Mat<Scalar> out(static_cast<Eigen::Index>(idx.size()), s2.dim());
  for (std::size_t i = 0; i < idx.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = s2.points.row(idx[i]);
  return Dataset<Scalar>(std::move(out));
}

template <typename Scalar>
struct SampleBox {
  Vec<Scalar> lo;
  Vec<Scalar> hi;

  Scalar volume() const { return (hi - lo).prod(); }
  void validate() const {
    if (lo.size() != hi.size() || lo.size() == 0)
      throw std::invalid_argument("SampleBox: bound dimensions differ or are empty");
    if (((hi - lo).array() <= Scalar(0)).any())
      throw std::invalid_argument("SampleBox: upper bound must exceed lower bound");
  }
};

template <typename Scalar>
struct VolumeEstimate {
  Scalar volume = 0;
  Scalar stderr_ = 0;
  long long samples = 0;
  std::uint64_t seed = 0;
};

// hit-or-miss volume of {x in box : theta(x) >= 0}.  samples are drawn in
// fixed 65536-sample chunks with chunk-derived streams and combined as exact
// integer counts, so the estimate is bit-identical for any thread count.
template <typename Scalar>
VolumeEstimate<Scalar> monte_carlo_volume(const Polynomial<Scalar>& theta,
                                          const SampleBox<Scalar>& box, long long samples,
                                          std::uint64_t seed) {
  box.validate();
  if (theta.vars() != box.lo.size())
    throw std::invalid_argument("monte_carlo_volume: dimension mismatch");
  if (samples < 1) throw std::invalid_argument("monte_carlo_volume: need at least one sample");

  const Eigen::Index n = box.lo.size();
  const Vec<Scalar> width = box.hi - box.lo;
  Rng root(seed);
  constexpr std::ptrdiff_t chunk_size = 65536;
  const auto chunks =
      static_cast<std::size_t>((samples + chunk_size - 1) / chunk_size);
  std::vector<long long> hits(chunks, 0);
  for_each_block(static_cast<std::ptrdiff_t>(samples), chunk_size,
                 [&](std::ptrdiff_t chunk, std::ptrdiff_t lo, std::ptrdiff_t hi) {
                   Rng r = root.derive(static_cast<std::uint64_t>(chunk));
                   Vec<Scalar> x(n);
                   long long h = 0;
                   for (std::ptrdiff_t i = lo; i < hi; ++i) {
                     for (Eigen::Index j = 0; j < n; ++j)
                       x[j] = box.lo[j] + width[j] * static_cast<Scalar>(r.uniform());
                     if (theta(x) >= Scalar(0)) ++h;
                   }
                   hits[static_cast<std::size_t>(chunk)] = h;
                 });
  long long total = 0;
  for (const long long h : hits) total += h;

  VolumeEstimate<Scalar> est;
  est.samples = samples;
  est.seed = seed;
  const Scalar vbox = box.volume();
  const Scalar p = static_cast<Scalar>(total) / static_cast<Scalar>(samples);
  est.volume = vbox * p;
  est.stderr_ = vbox * std::sqrt(p * (Scalar(1) - p) / static_cast<Scalar>(samples));
  return est;
}

// tight axis-aligned box around the data, each side padded by the given
// fraction of its width
template <typename Scalar>
SampleBox<Scalar> bounding_box(const Mat<Scalar>& pts, Scalar pad_fraction = Scalar(0.1)) {
  if (pts.rows() == 0) throw std::invalid_argument("bounding_box: no points");
  SampleBox<Scalar> box;
  box.lo = pts.colwise().minCoeff().transpose();
  box.hi = pts.colwise().maxCoeff().transpose();
  const Vec<Scalar> pad =
      ((box.hi - box.lo).cwiseMax(Scalar(1e-12)) * pad_fraction).eval();
  box.lo -= pad;
  box.hi += pad;
  return box;
}

enum class LabelMode { Auto, None, Present };

template <typename Scalar>
struct CsvData {
  Dataset<Scalar> all;
  Dataset<Scalar> s1;
  Dataset<Scalar> s2;
  bool has_labels = false;
};

namespace detail {

inline std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (const char ch : line) {
    if (ch == ',') {
      out.push_back(field);
      field.clear();
    } else if (ch != '\r') {
      field.push_back(ch);
    }
  }
  out.push_back(field);
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

inline bool parse_number(const std::string& tok, double& out) {
  if (tok.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(tok, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == tok.size();
}

}  // namespace detail

// one point per row, comma separated; an optional header row is detected by
// its non-numeric fields, and an optional final 1/2 column assigns classes
template <typename Scalar>
CsvData<Scalar> load_csv(const std::string& path, LabelMode labels = LabelMode::Auto) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);

  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 0;
  Eigen::Index width = -1;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto fields = detail::split_csv_row(line);
    std::vector<double> vals(fields.size());
    bool numeric = true;
    std::size_t bad = 0;
    for (std::size_t j = 0; j < fields.size(); ++j)
      if (!detail::parse_number(fields[j], vals[j])) {
        numeric = false;
        bad = j;
        break;
      }
    if (!numeric) {
      if (first_content) {  // header row
        first_content = false;
        continue;
      }
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ", column " +
                               std::to_string(bad + 1) + ": not a number: '" + fields[bad] +
                               "'");
    }
    first_content = false;
    if (width < 0) width = static_cast<Eigen::Index>(vals.size());
    if (static_cast<Eigen::Index>(vals.size()) != width)
      throw std::runtime_error(path + ": line " + std::to_string(line_no) + ": expected " +
                               std::to_string(width) + " fields, found " +
                               std::to_string(vals.size()));
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");

  bool with_labels = false;
  if (labels == LabelMode::Present) {
    if (width < 2) throw std::runtime_error(path + ": label column requires at least 2 columns");
    with_labels = true;
  } else if (labels == LabelMode::Auto && width >= 2) {
    with_labels = true;
    for (const auto& r : rows)
      if (r.back() != 1.0 && r.back() != 2.0) {
        with_labels = false;
        break;
      }
  }
  if (with_labels)
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i].back() != 1.0 && rows[i].back() != 2.0)
        throw std::runtime_error(path + ": row " + std::to_string(i + 1) +
                                 ": label must be 1 or 2");

  const Eigen::Index n = with_labels ? width - 1 : width;
  CsvData<Scalar> out;
  out.has_labels = with_labels;
  Mat<Scalar> all(static_cast<Eigen::Index>(rows.size()), n);
  Eigen::Index n1 = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j < n; ++j) all(static_cast<Eigen::Index>(i), j) = rows[i][j];
    if (with_labels && rows[i].back() == 1.0) ++n1;
  }
  if (with_labels) {
    Mat<Scalar> p1(n1, n), p2(static_cast<Eigen::Index>(rows.size()) - n1, n);
    Eigen::Index i1 = 0, i2 = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].back() == 1.0)
        p1.row(i1++) = all.row(static_cast<Eigen::Index>(i));
      else
        p2.row(i2++) = all.row(static_cast<Eigen::Index>(i));
    }
    out.s1 = Dataset<Scalar>(std::move(p1));
    out.s2 = Dataset<Scalar>(std::move(p2));
  }
  out.all = Dataset<Scalar>(std::move(all));
  return out;
}

namespace detail {

inline std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// full-precision CSV with a coordinate header; pass a second dataset to
// produce a combined two-class file with the 1/2 label column
template <typename Scalar>
void save_csv(const std::string& path, const Dataset<Scalar>& s1,
              const Dataset<Scalar>* s2 = nullptr) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const Eigen::Index n = s1.dim();
  for (Eigen::Index j = 0; j < n; ++j) out << (j ? ",x" : "x") << (j + 1);
  if (s2) out << ",label";
  out << "\n";
  auto rows = [&](const Dataset<Scalar>& s, const char* label) {
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (j) out << ",";
        out << detail::format_value(static_cast<double>(s.points(i, j)));
      }
      if (label) out << "," << label;
      out << "\n";
    }
  };
  rows(s1, s2 ? "1" : nullptr);
  if (s2) rows(*s2, "2");
  if (!out) throw std::runtime_error("write failed: " + path);
}

template <typename Scalar>
nlohmann::json polynomial_to_json(const Polynomial<Scalar>& p) {
  nlohmann::json coeffs = nlohmann::json::array();
  for (Eigen::Index t = 0; t < p.basis.size(); ++t) {
    if (p.coeffs[t] == Scalar(0)) continue;
    const Eigen::RowVectorXi e = p.basis.exponent(t);
    coeffs.push_back({{"exponents", std::vector<int>(e.data(), e.data() + e.size())},
                      {"value", static_cast<double>(p.coeffs[t])}});
  }
  return {{"n", p.vars()}, {"degree", p.degree()}, {"coeffs", std::move(coeffs)}};
}

template <typename Scalar>
Polynomial<Scalar> polynomial_from_json(const nlohmann::json& j) {
  Polynomial<Scalar> p(j.at("n").get<int>(), j.at("degree").get<int>());
  for (const auto& term : j.at("coeffs")) {
    const auto exps = term.at("exponents").get<std::vector<int>>();
    if (static_cast<Eigen::Index>(exps.size()) != p.vars())
      throw std::invalid_argument("polynomial JSON: exponent length mismatch");
    Eigen::RowVectorXi e(p.vars());
    for (Eigen::Index k = 0; k < p.vars(); ++k) e[k] = exps[static_cast<std::size_t>(k)];
    p.coeffs[p.basis.index_of(e)] = static_cast<Scalar>(term.at("value").get<double>());
  }
  return p;
}

template <typename Scalar>
nlohmann::json solution_to_json(const Solution<Scalar>& sol) {
  return {{"status", to_string(sol.status)},
          {"theta", std::vector<double>(sol.theta.data(), sol.theta.data() + sol.theta.size())},
          {"objective", static_cast<double>(sol.objective)},
          {"margin", static_cast<double>(sol.margin)},
          {"iterations", sol.iterations}};
}

template <typename Scalar>
nlohmann::json fit_report_to_json(const FitReport<Scalar>& rep) {
  nlohmann::json history = nlohmann::json::array();
  for (const auto& h : rep.history)
    history.push_back({{"objective", static_cast<double>(h.objective)},
                       {"outside", static_cast<long long>(h.outside)}});
  nlohmann::json j{{"status", to_string(rep.status)},
                   {"polynomial", polynomial_to_json(rep.theta)},
                   {"objective", static_cast<double>(rep.objective)},
                   {"outer_iterations", rep.outer_iterations},
                   {"support_sizes",
                    std::vector<long long>(rep.support_sizes.begin(), rep.support_sizes.end())},
                   {"history", std::move(history)}};
  if (std::isfinite(static_cast<double>(rep.certificate_slack)))
    j["certificate_slack"] = static_cast<double>(rep.certificate_slack);
  return j;
}

template <typename Scalar>
void save_model_json(const FitReport<Scalar>& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << fit_report_to_json(rep).dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

// accepts either a full fit report or a bare polynomial object
template <typename Scalar>
Polynomial<Scalar> load_polynomial_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  in >> j;
  return polynomial_from_json<Scalar>(j.contains("polynomial") ? j.at("polynomial") : j);
}

template <typename Scalar>
nlohmann::json volume_to_json(const VolumeEstimate<Scalar>& est) {
  return {{"volume", static_cast<double>(est.volume)},
          {"stderr", static_cast<double>(est.stderr_)},
          {"samples", est.samples},
          {"seed", est.seed}};
}

namespace detail {

struct ConfigLine {
  std::string key;
  std::string value;
};

inline std::vector<ConfigLine> parse_key_values(const std::string& text) {
  std::vector<ConfigLine> out;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    line = line.substr(b, e - b + 1);
    if (line.front() == '[') {  // section header, handled by the caller
      out.push_back({line, ""});
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    auto trim = [](std::string s) {
      const auto bb = s.find_first_not_of(" \t");
      const auto ee = s.find_last_not_of(" \t");
      return bb == std::string::npos ? std::string() : s.substr(bb, ee - bb + 1);
    };
    out.push_back({trim(line.substr(0, eq)), trim(line.substr(eq + 1))});
  }
  return out;
}

inline double config_number(const ConfigLine& kv) {
  double v = 0;
  if (!parse_number(kv.value, v))
    throw std::invalid_argument("config key '" + kv.key + "': not a number: '" + kv.value +
                                "'");
  return v;
}

}  // namespace detail

// plain key = value text; unknown keys are rejected so typos cannot silently
// fall back to defaults
inline SolveSettings parse_solver_config(const std::string& text) {
  SolveSettings s;
  for (const auto& kv : detail::parse_key_values(text)) {
    if (kv.key == "gap_tol")
      s.gap_tol = detail::config_number(kv);
    else if (kv.key == "feas_tol")
      s.feas_tol = detail::config_number(kv);
    else if (kv.key == "max_newton")
      s.max_newton = static_cast<int>(detail::config_number(kv));
    else if (kv.key == "t_growth")
      s.t_growth = detail::config_number(kv);
    else if (kv.key == "w")
      s.w = detail::config_number(kv);
    else
      throw std::invalid_argument("unknown solver config key '" + kv.key + "'");
  }
  s.validate();
  return s;
}

// cluster description as key = value lines with one [cluster] section per
// component; vectors are whitespace separated, covariances row-major
template <typename Scalar>
ClusterSpec<Scalar> parse_cluster_spec(const std::string& text) {
  ClusterSpec<Scalar> spec;
  Cluster<Scalar>* cur = nullptr;
  auto numbers = [](const std::string& v, const std::string& key) {
    std::vector<double> out;
    std::istringstream in(v);
    std::string tok;
    while (in >> tok) {
      double x = 0;
      if (!detail::parse_number(tok, x))
        throw std::invalid_argument("cluster spec key '" + key + "': not a number: '" + tok +
                                    "'");
      out.push_back(x);
    }
    return out;
  };
  for (const auto& kv : detail::parse_key_values(text)) {
    if (kv.key == "[cluster]") {
      spec.clusters.emplace_back();
      cur = &spec.clusters.back();
      continue;
    }
    if (!kv.key.empty() && kv.key.front() == '[')
      throw std::invalid_argument("cluster spec: unknown section " + kv.key);
    if (!cur) {
      if (kv.key == "n")
        spec.n = static_cast<int>(detail::config_number(kv));
      else if (kv.key == "seed")
        spec.seed = static_cast<std::uint64_t>(detail::config_number(kv));
      else
        throw std::invalid_argument("cluster spec: unknown key '" + kv.key + "'");
      continue;
    }
    if (kv.key == "mean") {
      const auto v = numbers(kv.value, kv.key);
      cur->mean = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))
                      .cast<Scalar>();
    } else if (kv.key == "cov") {
      const auto v = numbers(kv.value, kv.key);
      const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(double(v.size()))));
      if (n * n != static_cast<Eigen::Index>(v.size()))
        throw std::invalid_argument("cluster spec: cov needs n*n entries");
      cur->covariance.resize(n, n);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
          cur->covariance(i, j) = static_cast<Scalar>(v[static_cast<std::size_t>(i * n + j)]);
    } else if (kv.key == "count") {
      cur->count = static_cast<Eigen::Index>(detail::config_number(kv));
    } else {
      throw std::invalid_argument("cluster spec: unknown key '" + kv.key + "'");
    }
  }
  if (spec.n < 1) throw std::invalid_argument("cluster spec: missing dimension n");
  if (spec.clusters.empty()) throw std::invalid_argument("cluster spec: no clusters");
  return spec;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace momfit
