#include "cgvar/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cgvar/error.hpp"

namespace cgvar {

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) {
    return -std::numeric_limits<double>::infinity();
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double shift = sorted.back();
  if (!std::isfinite(shift)) {
    return shift;
  }
  double acc = 0.0;
  for (double v : sorted) {
    acc += std::exp(v - shift);
  }
  return shift + std::log(acc);
}

double log_mean_exp(std::span<const double> values) {
  if (values.empty()) {
    throw ArgumentError("log_mean_exp of an empty set");
  }
  return log_sum_exp(values) - std::log(static_cast<double>(values.size()));
}

double log_mean_exp_stderr(std::span<const double> values) {
  if (values.size() < 2) {
    return std::numeric_limits<double>::infinity();
  }
  const double shift = *std::max_element(values.begin(), values.end());
  std::vector<double> w(values.size());
  std::transform(values.begin(), values.end(), w.begin(),
                 [shift](double v) { return std::exp(v - shift); });
  const SampleStats s = sample_stats(w);
  return s.stderr_of_mean() / s.mean;
}

double SampleStats::stderr_of_mean() const {
  if (count < 2) {
    return std::numeric_limits<double>::infinity();
  }
  return std::sqrt(variance / static_cast<double>(count));
}

SampleStats sample_stats(std::span<const double> values) {
  SampleStats s;
  s.count = values.size();
  if (values.empty()) {
    return s;
  }
  // Welford
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (double v : values) {
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  s.mean = mean;
  s.variance = n > 1 ? m2 / static_cast<double>(n - 1) : 0.0;
  return s;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  require_shape(b.size(), a.size(), "pearson");
  const SampleStats sa = sample_stats(a);
  const SampleStats sb = sample_stats(b);
  if (sa.variance <= 0.0 || sb.variance <= 0.0) {
    return 0.0;
  }
  double cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - sa.mean) * (b[i] - sb.mean);
  }
  cov /= static_cast<double>(a.size() - 1);
  return cov / std::sqrt(sa.variance * sb.variance);
}

void fill_standard_normal(Rng& rng, std::span<double> out) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out) {
    v = normal(rng);
  }
}

double squared_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) {
    acc += x * x;
  }
  return acc;
}

}  // namespace cgvar
