#include "fedroute/numeric.hpp"

#include <charconv>
#include <stdexcept>

namespace fedroute {

std::vector<double> logspace(double lo, double hi, std::size_t n) {
  if (n < 2) throw std::invalid_argument("logspace: need at least 2 points");
  if (lo <= 0.0 || hi <= 0.0) throw std::invalid_argument("logspace: endpoints must be positive");
  const double llo = std::log10(lo);
  const double lhi = std::log10(hi);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    out[i] = std::pow(10.0, llo + t * (lhi - llo));
  }
  out.front() = lo;  // avoid pow() round-off at the endpoints
  out.back() = hi;
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace fedroute
