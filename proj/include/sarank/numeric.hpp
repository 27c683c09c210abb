#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>

namespace sarank {

// Neumaier's variant of Kahan summation. Risk and gap quantities are
// differences of near-equal sums, so every expectation goes through this.
class CompensatedSum {
 public:
  void add(double value) {
    const double t = sum_ + value;
    if (std::abs(sum_) >= std::abs(value)) {
      compensation_ += (sum_ - t) + value;
    } else {
      compensation_ += (value - t) + sum_;
    }
    sum_ = t;
  }

  CompensatedSum& operator+=(double value) {
    add(value);
    return *this;
  }

  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

double sigmoid(double u);

// log(1 + exp(z)) without overflow.
double softplus(double z);

// log(sigmoid(u)).
double log_sigmoid(double u);

struct ScalarMinimum {
  double argmin = 0.0;
  double value = 0.0;
};

// Golden-section search on [lo, hi] until the bracket is shorter than tol.
// Assumes f is unimodal on the bracket; returns the best point evaluated.
ScalarMinimum golden_section_minimize(const std::function<double(double)>& f,
                                      double lo, double hi, double tol);

// Coarse grid scan with `intervals` steps over [lo, hi] followed by
// golden-section refinement around the best grid point.
ScalarMinimum grid_then_golden(const std::function<double(double)>& f,
                               double lo, double hi, int intervals, double tol);

// Shortest decimal form that round-trips (%.17g fallback). Used for every
// CSV/JSON number the harness emits so outputs are byte-stable.
std::string format_number(double value);

// SplitMix64-seeded xoshiro256** generator. Portable across standard
// libraries, unlike std::uniform_real_distribution.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next();

  // Uniform in [0, 1).
  double uniform();

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_[4];
};

}  // namespace sarank
