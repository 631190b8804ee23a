#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace cgvar {

/// The project-wide random engine. All draws go through it so that a fixed
/// seed reproduces every stream bitwise.
using Rng = std::mt19937_64;

inline constexpr double kLog2Pi = 1.8378770664093454836;

/// log(sum(exp(v))). Addends are sorted before summation so the result does
/// not depend on the order of `values`.
double log_sum_exp(std::span<const double> values);

/// log(mean(exp(v))), same ordering guarantee as log_sum_exp.
double log_mean_exp(std::span<const double> values);

/// Standard error of log(mean(exp(v))) by the delta method.
double log_mean_exp_stderr(std::span<const double> values);

struct SampleStats {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  std::size_t count = 0;

  double stderr_of_mean() const;
};

SampleStats sample_stats(std::span<const double> values);

/// Pearson correlation coefficient; 0 when either input is constant.
double pearson(std::span<const double> a, std::span<const double> b);

/// Fill `out` with i.i.d. standard normal draws.
void fill_standard_normal(Rng& rng, std::span<double> out);

double squared_norm(std::span<const double> v);

}  // namespace cgvar
