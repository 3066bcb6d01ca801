// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "vitdiag/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "vitdiag/errors.hpp"
#include "vitdiag/stats.hpp"

namespace vitdiag {
namespace {

constexpr double kWidth = 640, kHeight = 400;
constexpr double kLeft = 64, kRight = 150, kTop = 36, kBottom = 48;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string px(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
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

// Evenly spaced ticks on a 1/2/5 grid.
std::vector<double> ticks(double lo, double hi, int target) {
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (raw <= step) break;
  }
  std::vector<double> t;
  for (double v = std::ceil(lo / step) * step; v <= hi + 1e-9 * step; v += step) t.push_back(std::abs(v) < 1e-12 * step ? 0.0 : v);
  return t;
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& l : spec.lines) {
    for (std::size_t i = 0; i < l.x.size(); ++i) {
      x0 = std::min(x0, l.x[i]);
      x1 = std::max(x1, l.x[i]);
      y0 = std::min(y0, l.lo ? (*l.lo)[i] : l.y[i]);
      y1 = std::max(y1, l.hi ? (*l.hi)[i] : l.y[i]);
    }
  }
  if (spec.reference_y) {
    y0 = std::min(y0, *spec.reference_y);
    y1 = std::max(y1, *spec.reference_y);
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;

  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  auto sx = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto sy = [&](double y) { return kTop + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + px(kWidth) + "\" height=\"" + px(kHeight) +
       "\" viewBox=\"0 0 " + px(kWidth) + " " + px(kHeight) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + px(kLeft + pw / 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + escape(spec.title) +
       "</text>\n";
  s += "<rect x=\"" + px(kLeft) + "\" y=\"" + px(kTop) + "\" width=\"" + px(pw) + "\" height=\"" + px(ph) +
       "\" fill=\"none\" stroke=\"#444\"/>\n";

  for (double t : ticks(y0, y1, 6)) {
    s += "<line x1=\"" + px(kLeft) + "\" y1=\"" + px(sy(t)) + "\" x2=\"" + px(kLeft + pw) + "\" y2=\"" + px(sy(t)) +
         "\" stroke=\"#eee\"/>\n";
    s += "<text x=\"" + px(kLeft - 6) + "\" y=\"" + px(sy(t) + 4) + "\" text-anchor=\"end\">" + num(t) + "</text>\n";
  }
  for (double t : ticks(x0, x1, std::min(12, std::max(2, static_cast<int>(x1 - x0))))) {
    if (std::abs(t - std::round(t)) > 1e-9) continue;
    s += "<text x=\"" + px(sx(t)) + "\" y=\"" + px(kTop + ph + 16) + "\" text-anchor=\"middle\">" + num(t) + "</text>\n";
  }
  s += "<text x=\"" + px(kLeft + pw / 2) + "\" y=\"" + px(kHeight - 10) + "\" text-anchor=\"middle\">" +
       escape(spec.x_label) + "</text>\n";
  s += "<text transform=\"translate(16," + px(kTop + ph / 2) + ") rotate(-90)\" text-anchor=\"middle\">" +
       escape(spec.y_label) + "</text>\n";

  if (spec.reference_y)
    s += "<line x1=\"" + px(kLeft) + "\" y1=\"" + px(sy(*spec.reference_y)) + "\" x2=\"" + px(kLeft + pw) + "\" y2=\"" +
         px(sy(*spec.reference_y)) + "\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n";

  for (std::size_t k = 0; k < spec.lines.size(); ++k) {
    const auto& l = spec.lines[k];
    const char* color = kColors[k % std::size(kColors)];
    if (l.lo && l.hi && !l.x.empty()) {
      std::string pts;
      for (std::size_t i = 0; i < l.x.size(); ++i) pts += px(sx(l.x[i])) + "," + px(sy((*l.hi)[i])) + " ";
      for (std::size_t i = l.x.size(); i-- > 0;) pts += px(sx(l.x[i])) + "," + px(sy((*l.lo)[i])) + " ";
      s += "<polygon points=\"" + pts + "\" fill=\"" + color + "\" fill-opacity=\"0.18\" stroke=\"none\"/>\n";
    }
    std::string pts;
    for (std::size_t i = 0; i < l.x.size(); ++i) pts += px(sx(l.x[i])) + "," + px(sy(l.y[i])) + " ";
    s += "<polyline points=\"" + pts + "\" fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.8\"/>\n";
    for (std::size_t i = 0; i < l.x.size(); ++i)
      s += "<circle cx=\"" + px(sx(l.x[i])) + "\" cy=\"" + px(sy(l.y[i])) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
    const double ly = kTop + 10 + 18.0 * static_cast<double>(k);
    s += "<line x1=\"" + px(kLeft + pw + 12) + "\" y1=\"" + px(ly) + "\" x2=\"" + px(kLeft + pw + 30) + "\" y2=\"" +
         px(ly) + "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    s += "<text x=\"" + px(kLeft + pw + 36) + "\" y=\"" + px(ly + 4) + "\">" + escape(l.label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

PlotLine line_from_series(const MetricSeries& s, const std::string& label) {
  PlotLine l;
  l.label = label;
  for (int x : s.layer_indices) l.x.push_back(x);
  l.y = s.values;
  l.lo = s.ci_low;
  l.hi = s.ci_high;
  return l;
}

namespace {

// Adds a min-max normalized line when the values are not constant.
void add_normalized(PlotSpec& spec, const std::string& label, const std::vector<double>& x,
                    const std::vector<double>& y, bool inverted) {
  if (y.size() < 2) return;
  try {
    spec.lines.push_back({label, x, minmax_normalize(y, inverted), std::nullopt, std::nullopt});
  } catch (const DegenerateInputError&) {
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> report_plots(const AnalysisReport& r) {
  std::vector<std::pair<std::string, std::string>> out;
  if (r.similarity) {
    PlotSpec p;
    p.title = "Token similarity";
    p.y_label = "mean pairwise cosine";
    p.lines.push_back(line_from_series(r.similarity->raw, "raw"));
    p.lines.push_back(line_from_series(r.similarity->centered, "centered"));
    if (r.phase) p.reference_y = r.phase->threshold;
    out.emplace_back("similarity.svg", render_svg(p));
  }
  if (r.neural_collapse && r.neural_collapse->nc1.size() > 0) {
    PlotSpec p;
    p.title = "Neural Collapse";
    p.y_label = "value";
    p.lines.push_back(line_from_series(r.neural_collapse->nc1, "NC1"));
    p.lines.push_back(line_from_series(r.neural_collapse->nc2, "NC2"));
    p.lines.push_back(line_from_series(r.neural_collapse->nc3, "NC3"));
    p.lines.push_back(line_from_series(r.neural_collapse->nc4, "NC4"));
    out.emplace_back("neural_collapse.svg", render_svg(p));
  }
  if (r.info_plane && !r.info_plane->points.empty()) {
    PlotLine acc{"probe accuracy", {}, {}, std::vector<double>{}, std::vector<double>{}};
    PlotLine self{"InfoX self", {}, {}, std::nullopt, std::nullopt};
    PlotLine all{"InfoX all", {}, {}, std::nullopt, std::nullopt};
    PlotLine scr{"scrambling", {}, {}, std::nullopt, std::nullopt};
    bool has_ci = true;
    for (const auto& pt : r.info_plane->points) {
      for (auto* l : {&acc, &self, &all, &scr}) l->x.push_back(pt.layer);
      acc.y.push_back(pt.probe_acc);
      has_ci = has_ci && pt.probe_ci_low && pt.probe_ci_high;
      acc.lo->push_back(pt.probe_ci_low.value_or(pt.probe_acc));
      acc.hi->push_back(pt.probe_ci_high.value_or(pt.probe_acc));
      self.y.push_back(pt.infox_self);
      all.y.push_back(pt.infox_all);
      scr.y.push_back(pt.scrambling);
    }
    if (!has_ci) acc.lo.reset(), acc.hi.reset();
    PlotSpec p;
    p.title = "Information plane";
    p.y_label = "value";
    p.lines = {acc, self, all};
    out.emplace_back("info_plane.svg", render_svg(p));
    PlotSpec q;
    q.title = "Information Scrambling Index";
    q.y_label = "InfoX all - InfoX self";
    q.lines = {scr};
    q.reference_y = 0.0;
    out.emplace_back("scrambling.svg", render_svg(q));
  }
  if (r.attention && r.attention->aci.size() > 0) {
    PlotSpec p;
    p.title = "Attention chain";
    p.y_label = "value";
    p.lines.push_back(line_from_series(r.attention->aci, "ACI"));
    p.lines.push_back(line_from_series(r.attention->ccc, "CCC"));
    out.emplace_back("attention.svg", render_svg(p));
  }

  PlotSpec pivot;
  pivot.title = "Normalized metrics";
  pivot.y_label = "min-max normalized";
  auto xs = [](const MetricSeries& s) { return std::vector<double>(s.layer_indices.begin(), s.layer_indices.end()); };
  if (r.info_plane) {
    std::vector<double> x, acc, self;
    for (const auto& pt : r.info_plane->points) {
      x.push_back(pt.layer);
      acc.push_back(pt.probe_acc);
      self.push_back(pt.infox_self);
    }
    add_normalized(pivot, "probe accuracy", x, acc, false);
    add_normalized(pivot, "InfoX self", x, self, false);
  }
  if (r.neural_collapse) add_normalized(pivot, "NC2 (inverted)", xs(r.neural_collapse->nc2), r.neural_collapse->nc2.values, true);
  if (r.attention) {
    add_normalized(pivot, "CCC", xs(r.attention->ccc), r.attention->ccc.values, false);
    add_normalized(pivot, "ACI", xs(r.attention->aci), r.attention->aci.values, false);
  }
  if (!pivot.lines.empty()) out.emplace_back("pivot.svg", render_svg(pivot));
  return out;
}

}  // namespace vitdiag
