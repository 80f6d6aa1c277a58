#include "nwc/calibrate.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "nwc/container.hpp"
#include "nwc/errors.hpp"

namespace nwc {

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

ThresholdTable::ThresholdTable(int classes, int n_lead, double fill)
    : classes_(classes), n_lead_(n_lead), theta_(static_cast<std::size_t>(std::max(classes - 1, 0)) * std::max(n_lead, 0), fill) {
  if (classes < 2 || n_lead < 1) throw ConfigError("threshold table needs K >= 2 and at least one lead");
  if (!(fill > 0.0 && fill < 1.0)) throw InputDomainError("threshold must lie in (0,1)");
}

std::size_t ThresholdTable::index(int k, int lead) const {
  if (k < 1 || k >= classes_ || lead < 0 || lead >= n_lead_) {
    throw IndexError("threshold cell (" + std::to_string(k) + "," + std::to_string(lead) + ") out of range");
  }
  return static_cast<std::size_t>(k - 1) * n_lead_ + lead;
}

double ThresholdTable::at(int k, int lead) const { return theta_[index(k, lead)]; }

void ThresholdTable::set(int k, int lead, double theta) {
  if (!(theta > 0.0 && theta < 1.0)) throw InputDomainError("threshold must lie in (0,1)");
  theta_[index(k, lead)] = theta;
}

std::string ThresholdTable::to_text() const {
  std::string out;
  for (int k = 1; k < classes_; ++k) {
    for (int l = 0; l < n_lead_; ++l) {
      out += std::to_string(k) + ' ' + std::to_string(l) + ' ' + format_number(at(k, l)) + '\n';
    }
  }
  return out;
}

ThresholdTable ThresholdTable::parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::tuple<int, int, double>> rows;
  int max_k = 0;
  int max_l = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    int k = 0;
    int l = 0;
    std::string theta_text;
    std::string extra;
    if (!(ls >> k >> l >> theta_text) || (ls >> extra)) throw FormatError("bad threshold line: " + line);
    double theta = 0.0;
    const auto res = std::from_chars(theta_text.data(), theta_text.data() + theta_text.size(), theta);
    if (res.ec != std::errc() || res.ptr != theta_text.data() + theta_text.size()) throw FormatError("bad threshold value: " + line);
    rows.emplace_back(k, l, theta);
    max_k = std::max(max_k, k);
    max_l = std::max(max_l, l);
  }
  if (rows.empty()) throw FormatError("empty threshold table");
  ThresholdTable t(max_k + 1, max_l + 1);
  if (rows.size() != t.theta_.size()) throw FormatError("threshold table is not rectangular");
  std::vector<bool> seen(t.theta_.size(), false);
  for (const auto& [k, l, theta] : rows) {
    const std::size_t i = t.index(k, l);
    if (seen[i]) throw FormatError("duplicate threshold cell");
    seen[i] = true;
    t.set(k, l, theta);
  }
  return t;
}

void ThresholdTable::save(const std::filesystem::path& path) const {
  const std::string text = to_text();
  write_file_bytes(path, std::vector<unsigned char>(text.begin(), text.end()));
}

ThresholdTable ThresholdTable::load(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse(std::string(bytes.begin(), bytes.end()));
}

double csi(const ContingencyCounts& c) {
  const std::uint64_t den = c.hits + c.misses + c.false_alarms;
  if (den == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(c.hits) / static_cast<double>(den);
}

ContingencyCounts count_events(std::span<const float> forecast, std::span<const float> observed, float threshold) {
  if (forecast.size() != observed.size()) throw ShapeError("forecast and observation differ in size");
  ContingencyCounts c;
  for (std::size_t i = 0; i < forecast.size(); ++i) c.add(forecast[i] >= threshold, observed[i] >= threshold);
  return c;
}

void tail_masses(const ForecastDistribution& dist, int row, int col, std::span<double> out) {
  double acc = 0.0;
  for (int k = dist.classes - 1; k >= 0; --k) {
    acc += dist.p(k, row, col);
    out[static_cast<std::size_t>(k)] = acc;
  }
}

RasterFrame decode_intensity(const ForecastDistribution& dist, const ThresholdTable& table, int lead,
                             const ClassBinning& binning, float resolution_km) {
  if (dist.classes != binning.classes() || table.classes() != dist.classes) {
    throw ShapeError("forecast, thresholds and binning disagree on the class count");
  }
  std::vector<float> out(static_cast<std::size_t>(dist.height) * dist.width, 0.0F);
  std::vector<double> tail(static_cast<std::size_t>(dist.classes));
  for (int r = 0; r < dist.height; ++r) {
    for (int c = 0; c < dist.width; ++c) {
      tail_masses(dist, r, c, tail);
      for (int k = dist.classes - 1; k >= 1; --k) {
        if (tail[static_cast<std::size_t>(k)] > table.at(k, lead)) {
          out[static_cast<std::size_t>(r) * dist.width + c] = binning.representative(k);
          break;
        }
      }
    }
  }
  return RasterFrame(dist.height, dist.width, resolution_km, 0, std::move(out));
}

Calibrator::Calibrator(int classes, int n_lead, ClassBinning binning)
    : classes_(classes), n_lead_(n_lead), binning_(std::move(binning)) {
  if (binning_.classes() != classes) throw ConfigError("calibrator class count disagrees with binning");
  const std::size_t cells = static_cast<std::size_t>(classes) * n_lead;
  pos_.assign(cells, std::vector<std::uint64_t>(kThetaSteps, 0));
  neg_.assign(cells, std::vector<std::uint64_t>(kThetaSteps, 0));
}

std::size_t Calibrator::cell(int k, int lead) const {
  if (k < 1 || k >= classes_ || lead < 0 || lead >= n_lead_) throw IndexError("calibration cell out of range");
  return static_cast<std::size_t>(k) * n_lead_ + lead;
}

void Calibrator::add(const ForecastDistribution& dist, std::span<const float> observed) {
  if (dist.classes != classes_) throw ShapeError("forecast class count disagrees with calibrator");
  if (observed.size() != static_cast<std::size_t>(dist.height) * dist.width) throw ShapeError("observation size mismatch");
  std::vector<double> tail(static_cast<std::size_t>(classes_));
  for (int r = 0; r < dist.height; ++r) {
    for (int c = 0; c < dist.width; ++c) {
      tail_masses(dist, r, c, tail);
      const float obs = observed[static_cast<std::size_t>(r) * dist.width + c];
      for (int k = 1; k < classes_; ++k) {
        // count of grid thresholds strictly below the tail mass
        const double p = tail[static_cast<std::size_t>(k)];
        int lo = 0;
        int hi = kThetaSteps - 1;
        while (lo < hi) {
          const int mid = (lo + hi + 1) / 2;
          if (p > theta_grid(mid)) lo = mid;
          else hi = mid - 1;
        }
        auto& hist = obs >= binning_.lower_edge(k) ? pos_[cell(k, dist.lead_idx)] : neg_[cell(k, dist.lead_idx)];
        ++hist[static_cast<std::size_t>(lo)];
      }
    }
  }
}

ContingencyCounts Calibrator::counts_at(int k, int lead, int i) const {
  const auto& pos = pos_[cell(k, lead)];
  const auto& neg = neg_[cell(k, lead)];
  ContingencyCounts c;
  for (int b = 0; b < kThetaSteps; ++b) {
    // forecast event at theta_i iff more than i - 1 thresholds were exceeded
    const bool fc = b >= i;
    const auto ub = static_cast<std::size_t>(b);
    if (fc) {
      c.hits += pos[ub];
      c.false_alarms += neg[ub];
    } else {
      c.misses += pos[ub];
      c.correct_negatives += neg[ub];
    }
  }
  return c;
}

ThresholdTable Calibrator::finish(std::vector<std::string>* warnings) const {
  ThresholdTable table(classes_, n_lead_);
  for (int k = 1; k < classes_; ++k) {
    for (int l = 0; l < n_lead_; ++l) {
      const auto base = counts_at(k, l, 1);
      if (base.hits + base.misses == 0) {
        if (warnings) {
          warnings->push_back("class " + std::to_string(k) + " lead " + std::to_string(l) +
                              " never observed in validation; threshold defaults to 0.5");
        }
        continue;
      }
      int best = 1;
      double best_csi = csi(base);
      for (int i = 2; i < kThetaSteps; ++i) {
        const double v = csi(counts_at(k, l, i));
        if (v > best_csi) {
          best_csi = v;
          best = i;
        }
      }
      table.set(k, l, theta_grid(best));
    }
  }
  return table;
}

void MetricsTable::add(const std::string& model, int lead_min, std::span<const float> forecast,
                       std::span<const float> observed, std::span<const float> thresholds) {
  for (float t : thresholds) cells_[Key{model, t, lead_min}] += count_events(forecast, observed, t);
}

void MetricsTable::merge(const MetricsTable& other) {
  for (const auto& [key, c] : other.cells_) cells_[key] += c;
}

const ContingencyCounts& MetricsTable::at(const std::string& model, float threshold, int lead_min) const {
  const auto it = cells_.find(Key{model, threshold, lead_min});
  if (it == cells_.end()) throw IndexError("no metrics for " + model);
  return it->second;
}

std::string MetricsTable::to_csv() const {
  std::string out = "model,rate_threshold_mm_h,lead_min,hits,misses,false_alarms,csi\n";
  for (const auto& [key, c] : cells_) {
    out += key.model + ',' + format_number(key.threshold_mm_h) + ',' + std::to_string(key.lead_min) + ',' +
           std::to_string(c.hits) + ',' + std::to_string(c.misses) + ',' + std::to_string(c.false_alarms) + ',' +
           format_number(csi(c)) + '\n';
  }
  return out;
}

}  // namespace nwc
