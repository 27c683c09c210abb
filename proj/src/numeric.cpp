#include "sarank/numeric.hpp"

#include <array>
#include <charconv>
#include <cstdio>
#include <limits>

#include "sarank/error.hpp"

namespace sarank {

double sigmoid(double u) {
  if (u >= 0.0) {
    return 1.0 / (1.0 + std::exp(-u));
  }
  const double e = std::exp(u);
  return e / (1.0 + e);
}

double softplus(double z) {
  if (z > 35.0) {
    return z + std::exp(-z);
  }
  if (z < -35.0) {
    return std::exp(z);
  }
  return std::log1p(std::exp(z));
}

double log_sigmoid(double u) { return -softplus(-u); }

ScalarMinimum golden_section_minimize(const std::function<double(double)>& f,
                                      double lo, double hi, double tol) {
  if (!(hi >= lo) || !(tol > 0.0)) {
    throw DomainError("golden_section_minimize: invalid bracket or tolerance");
  }
  constexpr double kInvPhi = 0.6180339887498948482;
  double a = lo;
  double b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  ScalarMinimum best = fc <= fd ? ScalarMinimum{c, fc} : ScalarMinimum{d, fd};
  while (b - a > tol) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
      if (fc < best.value) best = {c, fc};
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
      if (fd < best.value) best = {d, fd};
    }
  }
  for (double end : {a, b}) {
    const double fe = f(end);
    if (fe < best.value) best = {end, fe};
  }
  return best;
}

ScalarMinimum grid_then_golden(const std::function<double(double)>& f,
                               double lo, double hi, int intervals,
                               double tol) {
  if (intervals < 1) {
    throw DomainError("grid_then_golden: need at least one interval");
  }
  const double step = (hi - lo) / intervals;
  int best_index = 0;
  double best_value = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= intervals; ++i) {
    const double u = i == intervals ? hi : lo + step * i;
    const double v = f(u);
    if (v < best_value) {
      best_value = v;
      best_index = i;
    }
  }
  const double grid_u = best_index == intervals ? hi : lo + step * best_index;
  const double left = best_index == 0 ? lo : lo + step * (best_index - 1);
  const double right = best_index >= intervals - 1 ? hi : lo + step * (best_index + 1);
  ScalarMinimum refined = golden_section_minimize(f, left, right, tol);
  if (best_value < refined.value) {
    return {grid_u, best_value};
  }
  return refined;
}

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) {
    std::snprintf(buf.data(), buf.size(), "%.17g", value);
    return buf.data();
  }
  return std::string(buf.data(), ptr);
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) {
  for (auto& s : state_) s = splitmix64(seed);
}

std::uint64_t Rng::next() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw DomainError("Rng::below: empty range");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t r = next();
  while (r >= limit) r = next();
  return r % n;
}

}  // namespace sarank
