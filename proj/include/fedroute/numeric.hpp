#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fedroute {

/// Neumaier-compensated accumulator. Reported metrics are accumulated with
/// this so that summation order differences stay below test tolerances.
class KahanSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }

  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_sum(std::span<const double> values) {
  KahanSum s;
  for (const double v : values) s.add(v);
  return s.value();
}

inline double compensated_mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return compensated_sum(values) / static_cast<double>(values.size());
}

/// n logarithmically spaced values from lo to hi inclusive; n >= 2, lo,hi > 0.
std::vector<double> logspace(double lo, double hi, std::size_t n);

inline bool all_finite(std::span<const double> values) {
  for (const double v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

/// Shortest exact decimal representation of a double (round-trips bit-exactly);
/// the one formatter used by every emitted numeric file.
std::string format_double(double v);

}  // namespace fedroute
