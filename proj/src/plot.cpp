#include "mminr/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mminr/errors.hpp"

namespace mminr {
namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#e377c2", "#17becf"};

}  // namespace

void write_curves_csv(const std::vector<Curve>& curves, const std::string& x_label,
                      const std::filesystem::path& path) {
  if (curves.empty()) throw Error("write_curves_csv: no curves");
  const auto& xs = curves.front().x;
  for (const auto& c : curves) {
    if (c.x != xs || c.y.size() != xs.size())
      throw ShapeError("write_curves_csv: curve '" + c.name + "' does not share the x grid");
  }
  std::ostringstream os;
  os << x_label;
  for (const auto& c : curves) os << ',' << c.name;
  os << '\n';
  for (std::size_t i = 0; i < xs.size(); ++i) {
    os << fmt("%.17g", xs[i]);
    for (const auto& c : curves) os << ',' << (std::isnan(c.y[i]) ? "nan" : fmt("%.17g", c.y[i]));
    os << '\n';
  }
  write_text(os.str(), path);
}

std::string render_line_chart_svg(const std::vector<Curve>& curves, const ChartLabels& labels) {
  constexpr double W = 640, H = 400, left = 70, right = 150, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;

  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.x.size() && i < c.y.size(); ++i) {
      if (!std::isfinite(c.y[i])) continue;
      xmin = std::min(xmin, c.x[i]);
      xmax = std::max(xmax, c.x[i]);
      ymin = std::min(ymin, c.y[i]);
      ymax = std::max(ymax, c.y[i]);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * pw; };
  auto sy = [&](double y) { return top + (1.0 - (y - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << escape(labels.title) << "</text>\n";

  for (int k = 0; k <= 4; ++k) {
    const double yv = ymin + (ymax - ymin) * k / 4.0, py = sy(yv);
    os << "<line x1=\"" << left << "\" x2=\"" << left + pw << "\" y1=\"" << fmt("%.2f", py)
       << "\" y2=\"" << fmt("%.2f", py) << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << fmt("%.2f", py + 4)
       << "\" text-anchor=\"end\">" << fmt("%.3g", yv) << "</text>\n";
  }
  if (!curves.empty()) {
    for (double x : curves.front().x) {
      os << "<text x=\"" << fmt("%.2f", sx(x)) << "\" y=\"" << top + ph + 16
         << "\" text-anchor=\"middle\">" << fmt("%g", x) << "</text>\n";
    }
  }
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">"
     << escape(labels.x_label) << "</text>\n";
  os << "<text transform=\"translate(16," << top + ph / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << escape(labels.y_label) << "</text>\n";

  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& c = curves[ci];
    const char* color = kPalette[ci % std::size(kPalette)];
    std::string pts;
    auto flush = [&] {
      if (!pts.empty())
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\""
           << pts << "\"/>\n";
      pts.clear();
    };
    for (std::size_t i = 0; i < c.x.size() && i < c.y.size(); ++i) {
      if (!std::isfinite(c.y[i])) {
        flush();
        continue;
      }
      if (!pts.empty()) pts += ' ';
      pts += fmt("%.2f", sx(c.x[i])) + "," + fmt("%.2f", sy(c.y[i]));
      os << "<circle cx=\"" << fmt("%.2f", sx(c.x[i])) << "\" cy=\"" << fmt("%.2f", sy(c.y[i]))
         << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    flush();
    const double ly = top + 10 + 18.0 * static_cast<double>(ci);
    os << "<line x1=\"" << left + pw + 12 << "\" x2=\"" << left + pw + 32 << "\" y1=\"" << ly
       << "\" y2=\"" << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << escape(c.name)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

void write_line_chart_svg(const std::vector<Curve>& curves, const ChartLabels& labels,
                          const std::filesystem::path& path) {
  write_text(render_line_chart_svg(curves, labels), path);
}

}  // namespace mminr
