#include "atl/harness.hpp"

#include "text.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

namespace atl {

namespace {

constexpr std::array<const char*, 8> kPalette = {"#1b9e77", "#d95f02", "#7570b3", "#e7298a",
                                                 "#66a61e", "#e6ab02", "#a6761d", "#666666"};

struct Series {
  std::string label;
  std::string color;
  std::string dash;
  std::vector<std::pair<double, double>> points;
};

struct Panel {
  double x0, y0, w, h;
  std::string title;
  std::string y_label;
};

std::string num(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

void draw_panel(std::ostringstream& svg, const Panel& p, const std::vector<Series>& series, double y_min,
                double y_max) {
  double x_max = 1.0;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) x_max = std::max(x_max, x);
  if (!(y_max > y_min)) y_max = y_min + 1.0;
  auto sx = [&](double x) { return p.x0 + (x - 1.0) / std::max(1.0, x_max - 1.0) * p.w; };
  auto sy = [&](double y) { return p.y0 + p.h - (y - y_min) / (y_max - y_min) * p.h; };

  svg << "<rect x=\"" << p.x0 << "\" y=\"" << p.y0 << "\" width=\"" << p.w << "\" height=\"" << p.h
      << "\" fill=\"none\" stroke=\"#333\"/>\n";
  svg << "<text x=\"" << p.x0 + p.w / 2 << "\" y=\"" << p.y0 - 10 << "\" text-anchor=\"middle\">" << p.title
      << "</text>\n";
  svg << "<text x=\"" << p.x0 + p.w / 2 << "\" y=\"" << p.y0 + p.h + 35 << "\" text-anchor=\"middle\">sample</text>\n";
  svg << "<text transform=\"translate(" << p.x0 - 45 << "," << p.y0 + p.h / 2
      << ") rotate(-90)\" text-anchor=\"middle\">" << p.y_label << "</text>\n";
  for (int i = 0; i <= 4; ++i) {
    const double y = y_min + (y_max - y_min) * i / 4.0;
    svg << "<text x=\"" << p.x0 - 5 << "\" y=\"" << sy(y) + 4 << "\" text-anchor=\"end\" font-size=\"10\">" << num(y)
        << "</text>\n";
  }
  const int ticks = static_cast<int>(std::min(6.0, x_max - 1.0));
  for (int i = 0; i <= ticks; ++i) {
    const double x = 1.0 + (x_max - 1.0) * i / std::max(1, ticks);
    svg << "<text x=\"" << sx(x) << "\" y=\"" << p.y0 + p.h + 15 << "\" text-anchor=\"middle\" font-size=\"10\">"
        << num(std::round(x)) << "</text>\n";
  }

  for (const auto& s : series) {
    if (s.points.empty()) continue;
    svg << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"";
    if (!s.dash.empty()) svg << " stroke-dasharray=\"" << s.dash << "\"";
    svg << " points=\"";
    for (const auto& [x, y] : s.points) svg << num(sx(x)) << ',' << num(sy(std::clamp(y, y_min, y_max))) << ' ';
    svg << "\"><title>" << s.label << "</title></polyline>\n";
  }

  double ly = p.y0 + 12;
  for (const auto& s : series) {
    svg << "<line x1=\"" << p.x0 + p.w - 90 << "\" y1=\"" << ly - 4 << "\" x2=\"" << p.x0 + p.w - 70 << "\" y2=\""
        << ly - 4 << "\" stroke=\"" << s.color << "\"";
    if (!s.dash.empty()) svg << " stroke-dasharray=\"" << s.dash << "\"";
    svg << "/>\n<text x=\"" << p.x0 + p.w - 65 << "\" y=\"" << ly << "\" font-size=\"10\">" << s.label << "</text>\n";
    ly += 13;
  }
}

}  // namespace

std::string render_plot(const std::vector<ComboAggregate>& combos) {
  std::vector<Series> errors, scores;
  double err_max = 0.0;
  for (std::size_t i = 0; i < combos.size(); ++i) {
    const auto& c = combos[i];
    const std::string color = kPalette[i % kPalette.size()];
    Series e{c.combo, color, "", {}};
    std::vector<std::string> names;
    for (const auto& st : c.steps) {
      e.points.emplace_back(static_cast<double>(st.step), st.mae.mean);
      err_max = std::max(err_max, st.mae.mean);
      for (const auto& [n, s] : st.scores)
        if (std::find(names.begin(), names.end(), n) == names.end()) names.push_back(n);
    }
    errors.push_back(std::move(e));
    static constexpr std::array<const char*, 4> dashes = {"", "6,3", "2,2", "8,3,2,3"};
    for (std::size_t k = 0; k < names.size(); ++k) {
      Series s{c.combo + ":" + names[k], color, dashes[k % dashes.size()], {}};
      for (const auto& st : c.steps)
        if (const auto* sc = st.score_for(names[k]); sc && sc->count > 0)
          s.points.emplace_back(static_cast<double>(st.step), sc->mean);
      scores.push_back(std::move(s));
    }
  }

  std::ostringstream svg;
  const double width = 1100, height = 420;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  draw_panel(svg, {70, 40, 430, 320, "Mean absolute error", "MAE"}, errors, 0.0, err_max > 0 ? err_max * 1.05 : 1.0);
  draw_panel(svg, {620, 40, 430, 320, "Mean hypothesis score", "r^2"}, scores, 0.0, 1.0);
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace atl
