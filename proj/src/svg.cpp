#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "statbundle/cli.hpp"

namespace statbundle::cli {
namespace {

const char* kPalette[8] = {"#3366cc", "#dc3922", "#109618", "#990099",
                           "#ff9900", "#0099c6", "#dd4477", "#66aa00"};

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

std::string label(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

void text(std::ostream& out, double x, double y, const std::string& s, int size,
          const char* anchor, const char* fill = "#333333") {
  out << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-family=\"sans-serif\""
      << " font-size=\"" << size << "\" text-anchor=\"" << anchor << "\" fill=\"" << fill << "\">"
      << s << "</text>\n";
}

void line(std::ostream& out, double x1, double y1, double x2, double y2, const char* stroke,
          double width) {
  out << "<line x1=\"" << num(x1) << "\" y1=\"" << num(y1) << "\" x2=\"" << num(x2) << "\" y2=\""
      << num(y2) << "\" stroke=\"" << stroke << "\" stroke-width=\"" << width << "\"/>\n";
}

}  // namespace

void write_svg(std::ostream& out, const Flow& flow, const Trajectory& traj) {
  const std::size_t samples = traj.states.size();
  const std::size_t n =
      samples == 0 ? 0 : traj.states.front().size() / static_cast<std::size_t>(flow.slices);
  const bool ternary = n == 3;
  const int width = ternary ? 960 : 640;
  const int height = 420;

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
      << "\" fill=\"#ffffff\"/>\n";
  text(out, 20, 26, flow.name + std::string(" &#8212; ") + to_string(traj.termination), 16,
       "start", "#111111");

  if (samples == 0 || n == 0) {
    text(out, 20, 60, "no samples recorded", 13, "start");
    out << "</svg>\n";
    return;
  }

  // Probability components over time.
  const std::size_t q_off = static_cast<std::size_t>(flow.q_slice) * n;
  const double inv_n = 1.0 / static_cast<double>(n);
  const double t0 = traj.times.front();
  const double t1 = traj.times.back();
  const double t_span = std::max(t1 - t0, 1e-300);
  double p_max = 0.0;
  for (const Vec& y : traj.states)
    for (std::size_t i = 0; i < n; ++i) p_max = std::max(p_max, y[q_off + i] * inv_n);
  p_max = std::max(p_max * 1.08, 1e-12);

  const double x0 = 60.0, x1 = ternary ? 560.0 : 610.0;
  const double y0 = 52.0, y1 = 375.0;
  const auto map_x = [&](double t) { return x0 + (t - t0) / t_span * (x1 - x0); };
  const auto map_y = [&](double p) { return y1 - p / p_max * (y1 - y0); };

  line(out, x0, y1, x1, y1, "#444444", 1.0);
  line(out, x0, y0, x0, y1, "#444444", 1.0);
  for (int k = 0; k <= 4; ++k) {
    const double t = t0 + t_span * k / 4.0;
    const double p = p_max * k / 4.0;
    line(out, map_x(t), y1, map_x(t), y1 + 5, "#444444", 1.0);
    text(out, map_x(t), y1 + 20, label(t), 11, "middle");
    line(out, x0 - 5, map_y(p), x0, map_y(p), "#444444", 1.0);
    text(out, x0 - 9, map_y(p) + 4, label(p), 11, "end");
  }
  text(out, (x0 + x1) / 2.0, y1 + 38, "t", 12, "middle");
  text(out, 18, (y0 + y1) / 2.0, "probability", 12, "middle");

  for (std::size_t i = 0; i < n; ++i) {
    const char* color = kPalette[i % 8];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t r = 0; r < samples; ++r)
      out << num(map_x(traj.times[r])) << ',' << num(map_y(traj.states[r][q_off + i] * inv_n))
          << ' ';
    out << "\"/>\n";
    const double ly = y0 + 6.0 + 16.0 * static_cast<double>(i);
    line(out, x1 - 58, ly, x1 - 40, ly, color, 2.5);
    text(out, x1 - 34, ly + 4, "p" + std::to_string(i + 1), 11, "start");
  }

  if (ternary) {
    // Barycentric panel: state path inside the probability triangle.
    const double bx = 640.0, cx = 920.0, by = 380.0;
    const double ax = (bx + cx) / 2.0;
    const double ay = by - (cx - bx) * std::sqrt(3.0) / 2.0;
    out << "<polygon points=\"" << num(ax) << ',' << num(ay) << ' ' << num(bx) << ',' << num(by)
        << ' ' << num(cx) << ',' << num(by)
        << "\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>\n";
    text(out, ax, ay - 8, "p1", 12, "middle");
    text(out, bx - 6, by + 14, "p2", 12, "end");
    text(out, cx + 6, by + 14, "p3", 12, "start");

    const auto bary = [&](const Vec& y, double& px, double& py) {
      const double p1 = y[q_off] * inv_n, p2 = y[q_off + 1] * inv_n, p3 = y[q_off + 2] * inv_n;
      px = p1 * ax + p2 * bx + p3 * cx;
      py = p1 * ay + p2 * by + p3 * by;
    };
    out << "<polyline fill=\"none\" stroke=\"#3366cc\" stroke-width=\"1.5\" points=\"";
    for (const Vec& y : traj.states) {
      double px = 0.0, py = 0.0;
      bary(y, px, py);
      out << num(px) << ',' << num(py) << ' ';
    }
    out << "\"/>\n";
    double sx = 0.0, sy = 0.0, ex = 0.0, ey = 0.0;
    bary(traj.states.front(), sx, sy);
    bary(traj.states.back(), ex, ey);
    out << "<circle cx=\"" << num(sx) << "\" cy=\"" << num(sy)
        << "\" r=\"4\" fill=\"#109618\"/>\n";
    out << "<circle cx=\"" << num(ex) << "\" cy=\"" << num(ey)
        << "\" r=\"5\" fill=\"none\" stroke=\"#dc3922\" stroke-width=\"2\"/>\n";
  }

  out << "</svg>\n";
}

}  // namespace statbundle::cli
