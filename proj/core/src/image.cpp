#include "nwc/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "nwc/errors.hpp"

namespace nwc {

namespace {

unsigned char level(float v, float vmax) {
  const float s = std::clamp(v / vmax, 0.0F, 1.0F);
  return static_cast<unsigned char>(std::lround(s * 255.0F));
}

std::vector<unsigned char> header(const char* magic, int w, int h) {
  const std::string s = std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  return {s.begin(), s.end()};
}

// white -> light blue -> blue -> green -> yellow -> red
std::array<unsigned char, 3> ramp(float v, float vmax) {
  static constexpr std::array<std::array<float, 3>, 6> stops{{{255, 255, 255},
                                                             {170, 210, 255},
                                                             {40, 90, 220},
                                                             {40, 180, 70},
                                                             {250, 220, 40},
                                                             {220, 30, 30}}};
  if (v <= 0.0F) return {255, 255, 255};
  const float s = std::clamp(v / vmax, 0.0F, 1.0F) * static_cast<float>(stops.size() - 1);
  const auto i = std::min(static_cast<std::size_t>(s), stops.size() - 2);
  const float f = s - static_cast<float>(i);
  std::array<unsigned char, 3> out{};
  for (int c = 0; c < 3; ++c) {
    out[static_cast<std::size_t>(c)] = static_cast<unsigned char>(
        std::lround(stops[i][static_cast<std::size_t>(c)] * (1.0F - f) + stops[i + 1][static_cast<std::size_t>(c)] * f));
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

std::vector<unsigned char> encode_pgm(const RasterFrame& frame, float vmax) {
  if (!(vmax > 0.0F)) throw InputDomainError("image scale must be positive");
  auto out = header("P5", frame.width(), frame.height());
  for (float v : frame.values()) out.push_back(level(v, vmax));
  return out;
}

std::vector<unsigned char> encode_ppm_montage(const std::vector<RasterFrame>& panels, float vmax, int gap_px) {
  if (panels.empty()) throw ContractError("montage needs at least one panel");
  if (!(vmax > 0.0F) || gap_px < 0) throw InputDomainError("invalid montage scale or gap");
  int h = 0;
  int w = gap_px;
  for (const auto& p : panels) {
    h = std::max(h, p.height());
    w += p.width() + gap_px;
  }
  h += 2 * gap_px;
  std::vector<unsigned char> rgb(static_cast<std::size_t>(w) * h * 3, 255);
  int x0 = gap_px;
  for (const auto& p : panels) {
    for (int y = 0; y < p.height(); ++y) {
      for (int x = 0; x < p.width(); ++x) {
        const auto c = ramp(p.at(y, x), vmax);
        const std::size_t i = (static_cast<std::size_t>(y + gap_px) * w + x0 + x) * 3;
        rgb[i] = c[0];
        rgb[i + 1] = c[1];
        rgb[i + 2] = c[2];
      }
    }
    x0 += p.width() + gap_px;
  }
  auto out = header("P6", w, h);
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

std::string line_chart_svg(const std::string& title, const std::string& x_label, const std::string& y_label,
                           const std::vector<ChartSeries>& series, double y_min, double y_max) {
  static constexpr std::array<const char*, 6> colors{"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  constexpr double W = 640;
  constexpr double H = 400;
  constexpr double L = 60;
  constexpr double R = 150;
  constexpr double T = 40;
  constexpr double B = 50;
  double x_min = 0.0;
  double x_max = 1.0;
  bool first = true;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (first) {
        x_min = x_max = x;
        first = false;
      }
      x_min = std::min(x_min, x);
      x_max = std::max(x_max, x);
    }
  }
  if (x_max <= x_min) x_max = x_min + 1.0;
  if (y_max <= y_min) y_max = y_min + 1.0;
  const auto px = [&](double x) { return L + (x - x_min) / (x_max - x_min) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - y_min) / (y_max - y_min) * (H - T - B); };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<text x=\"" + num(W / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" + escape(title) + "</text>\n";
  svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(H - B) + "\" x2=\"" + num(W - R) + "\" y2=\"" + num(H - B) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + num(L) + "\" y1=\"" + num(T) + "\" x2=\"" + num(L) + "\" y2=\"" + num(H - B) + "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double y = y_min + (y_max - y_min) * i / 5.0;
    svg += "<text x=\"" + num(L - 6) + "\" y=\"" + num(py(y) + 4) + "\" text-anchor=\"end\">" + num(y).substr(0, 4) + "</text>\n";
    const double x = x_min + (x_max - x_min) * i / 5.0;
    svg += "<text x=\"" + num(px(x)) + "\" y=\"" + num(H - B + 16) + "\" text-anchor=\"middle\">" + num(x) + "</text>\n";
  }
  svg += "<text x=\"" + num((L + W - R) / 2) + "\" y=\"" + num(H - 12) + "\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + num((T + H - B) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         num((T + H - B) / 2) + ")\">" + escape(y_label) + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = colors[k % colors.size()];
    std::string pts;
    for (const auto& [x, y] : series[k].points) {
      if (std::isnan(y)) continue;
      pts += num(px(x)) + "," + num(py(std::clamp(y, y_min, y_max))) + " ";
    }
    if (!pts.empty()) {
      pts.pop_back();
      svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    }
    const double ly = T + 16.0 * static_cast<double>(k);
    svg += "<line x1=\"" + num(W - R + 10) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(W - R + 30) + "\" y2=\"" + num(ly) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + num(W - R + 36) + "\" y=\"" + num(ly + 4) + "\">" + escape(series[k].name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace nwc
