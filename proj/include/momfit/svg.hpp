#pragma once

#include <Eigen/Core>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "momfit/contour.hpp"
#include "momfit/dataset.hpp"

namespace momfit {

struct PlotStyle {
  int width = 760;
  int height = 760;
  double margin = 30;
  double point_radius = 2.4;
  const char* class1_color = "#2166ac";
  const char* class2_color = "#b2182b";
  const char* curve_color = "#1a1a1a";
};

namespace detail {

inline std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace detail

// scatter plot of one or two point classes with the fitted zero level set,
// drawn into the window [lo, hi] with the y axis pointing up
template <typename Scalar>
void write_plot_svg(const std::string& path, const Dataset<Scalar>& s1,
                    const Dataset<Scalar>& s2, const std::vector<Segment<Scalar>>& curve,
                    const Vec<Scalar>& lo, const Vec<Scalar>& hi,
                    const PlotStyle& style = PlotStyle{}) {
  if (lo.size() != 2 || hi.size() != 2 || !((hi - lo).array() > Scalar(0)).all())
    throw std::invalid_argument("write_plot_svg: invalid window");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);

  const double iw = style.width - 2 * style.margin;
  const double ih = style.height - 2 * style.margin;
  const auto px = [&](Scalar x) {
    return style.margin + iw * double((x - lo[0]) / (hi[0] - lo[0]));
  };
  const auto py = [&](Scalar y) {
    return style.margin + ih * double((hi[1] - y) / (hi[1] - lo[1]));
  };

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << style.width << "\" height=\""
      << style.height << "\" viewBox=\"0 0 " << style.width << " " << style.height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";

  const auto scatter = [&](const Dataset<Scalar>& s, const char* color) {
    if (s.size() == 0) return;
    out << "<g fill=\"" << color << "\" fill-opacity=\"0.75\">\n";
    for (Eigen::Index i = 0; i < s.size(); ++i)
      out << "<circle cx=\"" << detail::svg_num(px(s.points(i, 0))) << "\" cy=\""
          << detail::svg_num(py(s.points(i, 1))) << "\" r=\"" << style.point_radius << "\"/>\n";
    out << "</g>\n";
  };
  scatter(s1, style.class1_color);
  scatter(s2, style.class2_color);

  if (!curve.empty()) {
    out << "<path fill=\"none\" stroke=\"" << style.curve_color
        << "\" stroke-width=\"1.6\" d=\"";
    for (const auto& seg : curve)
      out << "M" << detail::svg_num(px(seg.a[0])) << " " << detail::svg_num(py(seg.a[1]))
          << "L" << detail::svg_num(px(seg.b[0])) << " " << detail::svg_num(py(seg.b[1]));
    out << "\"/>\n";
  }
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace momfit
