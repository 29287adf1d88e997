#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "aql/rng.hpp"

namespace aql {

inline void require_nonempty(std::span<const double> v, const char* who) {
  if (v.empty()) throw std::invalid_argument(std::string(who) + ": empty input");
}

inline double mean(std::span<const double> v) {
  require_nonempty(v, "mean");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
inline double sample_std(std::span<const double> v) {
  require_nonempty(v, "sample_std");
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double standard_error(std::span<const double> v) {
  return sample_std(v) / std::sqrt(static_cast<double>(v.size()));
}

/// Interquartile mean. Sorted value i owns the slice [i/n, (i+1)/n) of the
/// unit interval and is weighted by its overlap with [0.25, 0.75], so values
/// straddling a quartile count fractionally and exactly half the weight is kept.
inline double iqm(std::span<const double> v) {
  require_nonempty(v, "iqm");
  std::vector<double> s(v.begin(), v.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double lo = std::max(static_cast<double>(i) / n, 0.25);
    const double hi = std::min(static_cast<double>(i + 1) / n, 0.75);
    if (hi > lo) acc += (hi - lo) * s[i];
  }
  return acc / 0.5;
}

enum class Statistic { mean, iqm };

inline std::string_view to_string(Statistic s) { return s == Statistic::mean ? "mean" : "iqm"; }

inline Statistic statistic_from_string(std::string_view s) {
  if (s == "mean") return Statistic::mean;
  if (s == "iqm") return Statistic::iqm;
  throw std::invalid_argument("unknown statistic '" + std::string(s) + "'");
}

inline double compute_statistic(Statistic st, std::span<const double> v) { return st == Statistic::mean ? mean(v) : iqm(v); }

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
  require_nonempty(sorted, "quantile");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= sorted.size()) return sorted.back();
  const double f = pos - static_cast<double>(i);
  return sorted[i] + f * (sorted[i + 1] - sorted[i]);
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const noexcept { return upper - lower; }
  bool contains(double x) const noexcept { return lower <= x && x <= upper; }
  bool overlaps(const Interval& o) const noexcept { return lower <= o.upper && o.lower <= upper; }
};

/// Percentile bootstrap interval of `stat` from seeded resampling with
/// replacement. The interval is widened, if needed, to contain the point
/// estimate.
inline Interval bootstrap_ci(std::span<const double> v, std::size_t n_resamples = 2000, double level = 0.95,
                             Statistic stat = Statistic::mean, std::uint64_t seed = 0) {
  require_nonempty(v, "bootstrap_ci");
  if (n_resamples < 1000) throw std::invalid_argument("bootstrap_ci: need at least 1000 resamples");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("bootstrap_ci: level must lie in (0, 1)");
  RandomStream rng(seed);
  std::vector<double> stats(n_resamples), buf(v.size());
  for (auto& s : stats) {
    for (auto& b : buf) b = v[rng.index(v.size())];
    s = compute_statistic(stat, buf);
  }
  std::sort(stats.begin(), stats.end());
  const double alpha = 1.0 - level;
  Interval ci{quantile_sorted(stats, 0.5 * alpha), quantile_sorted(stats, 1.0 - 0.5 * alpha)};
  const double point = compute_statistic(stat, v);
  ci.lower = std::min(ci.lower, point);
  ci.upper = std::max(ci.upper, point);
  return ci;
}

/// First index after which every remaining value stays within
/// [target - band, target + band]; nullopt if the last value is outside.
inline std::optional<std::size_t> steps_to_band(std::span<const double> trace, double target, double band) {
  if (!(band > 0.0)) throw std::invalid_argument("steps_to_band: band must be positive");
  std::optional<std::size_t> entry;
  for (std::size_t i = trace.size(); i-- > 0;) {
    if (std::abs(trace[i] - target) <= band)
      entry = i;
    else
      break;
  }
  return entry;
}

/// steps_to_band over a logged trace, reported in environment steps.
inline std::optional<std::size_t> steps_to_band(std::span<const std::size_t> steps, std::span<const double> trace,
                                                double target, double band) {
  if (steps.size() != trace.size()) throw std::invalid_argument("steps_to_band: steps and trace differ in length");
  auto i = steps_to_band(trace, target, band);
  if (!i) return std::nullopt;
  return steps[*i];
}

}  // namespace aql
