#include "smh/analysis.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "smh/errors.hpp"

namespace smh {
namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTermCutoff = 1e-15;
constexpr int kMaxTerms = 1'000'000;

void check_curve_args(double dist, int k, double delta) {
  if (!(dist >= 0.0) || !std::isfinite(dist)) throw InvalidParameter("distance must be finite and >= 0");
  require_even_modulus(k);
  if (!(delta > 0.0) || !std::isfinite(delta)) throw InvalidParameter("delta must be positive");
}

// Exponent c in exp(-c) of the first series term.
double first_term_exponent(double dist, int k, double delta) {
  const double z = kPi * dist / (delta * k);
  return 2.0 * z * z;
}

}  // namespace

double expected_lee(double dist, int k, double delta) {
  check_curve_args(dist, k, delta);
  if (dist == 0.0) return 0.0;  // sum of (2j-1)^-2 is pi^2/8
  const double c = first_term_exponent(dist, k, delta);
  double sum = 0.0;
  for (int j = 1; j <= kMaxTerms; ++j) {
    const double odd = 2.0 * j - 1.0;
    const double term = std::exp(-c * odd * odd) / (odd * odd);
    sum += term;
    if (term < kTermCutoff) break;
  }
  const double value = k / 4.0 - (2.0 * k / (kPi * kPi)) * sum;
  return value < 0.0 ? 0.0 : value;
}

std::pair<double, double> expected_lee_bounds(double dist, int k, double delta) {
  check_curve_args(dist, k, delta);
  const double e = std::exp(-first_term_exponent(dist, k, delta));
  return {k / 4.0 - (k / 4.0) * e, k / 4.0 - (2.0 * k / (kPi * kPi)) * e};
}

double bias_bound(double dist, int k, double delta) {
  if (!(dist >= 0.0) || !std::isfinite(dist)) throw InvalidInput("distance must be finite and >= 0");
  require_even_modulus(k);
  if (std::abs(delta - kDefaultDelta) > 1e-12) {
    throw InvalidParameter("the bias bound is only valid at delta = sqrt(2/pi)");
  }
  if (dist == 0.0) return 0.0;
  const double kk = static_cast<double>(k);
  return dist * std::exp(-(kk * kk) / (4.0 * kPi * dist * dist));
}

int plan_k(double threshold, double epsilon_bias) {
  if (!(threshold > 0.0) || !std::isfinite(threshold)) throw InvalidParameter("threshold must be positive");
  if (!(epsilon_bias > 0.0) || !std::isfinite(epsilon_bias)) {
    throw InvalidParameter("epsilon_bias must be positive");
  }
  if (epsilon_bias >= threshold) return 2;
  // F(T, k) <= eps  <=>  k >= 2 T sqrt(pi ln(T / eps)).
  const double bound = 2.0 * threshold * std::sqrt(kPi * std::log(threshold / epsilon_bias));
  if (bound > 2147483640.0) throw InvalidParameter("required k is too large");
  int k = 2 * static_cast<int>(std::ceil(bound / 2.0));
  if (k < 2) k = 2;
  while (bias_bound(threshold, k) > epsilon_bias) k += 2;
  while (k > 2 && bias_bound(threshold, k - 2) <= epsilon_bias) k -= 2;
  return k;
}

std::int64_t plan_M(int k, double epsilon_stat, int beta) {
  require_even_modulus(k);
  if (!(epsilon_stat > 0.0) || !std::isfinite(epsilon_stat)) {
    throw InvalidParameter("epsilon_stat must be positive");
  }
  if (beta < 1) throw InvalidParameter("beta must be a positive integer");
  const double kk = static_cast<double>(k);
  const double bound =
      std::numbers::ln2 * (beta + 1.0) * kk * kk / (8.0 * epsilon_stat * epsilon_stat);
  if (bound > static_cast<double>(UINT32_MAX)) {
    throw InvalidParameter("required M exceeds 2^32 - 1 components");
  }
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(bound)));
}

ProtocolParams plan_parameters(double threshold, double epsilon, int beta) {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidParameter("epsilon must be positive");
  if (beta < 1) throw InvalidParameter("beta must be a positive integer");
  ProtocolParams params;
  params.threshold = threshold;
  params.epsilon = epsilon;
  params.beta = beta;
  params.epsilon_bias = epsilon / 2.0;
  params.epsilon_stat = epsilon / 2.0;
  params.k = plan_k(threshold, params.epsilon_bias);
  params.M = plan_M(params.k, params.epsilon_stat, beta);
  params.padding = 10 * params.M;
  return params;
}

DistanceEstimate estimate_distance(const Rational& mean_lee, int k, std::int64_t M,
                                   EstimateMode mode, const EstimateOptions& options) {
  require_even_modulus(k);
  if (M < 1) throw InvalidParameter("M must be positive");
  const double mean = to_real(mean_lee);
  if (mean_lee < 0 || mean > k / 2.0) throw InvalidInput("mean Lee distance outside [0, k/2]");
  const double margin = options.saturation_margin.value_or(k / 400.0);
  if (margin < 0.0) throw InvalidParameter("saturation margin must be >= 0");

  DistanceEstimate estimate{std::nullopt, mean_lee, k, M};
  const double cutoff = k / 4.0 - margin;
  if (mean >= cutoff) return estimate;
  if (mode == EstimateMode::Raw || mean == 0.0) {
    estimate.value = mean;
    return estimate;
  }
  // expected_lee is increasing in the distance; bracket then bisect.
  double lo = 0.0;
  double hi = std::max(1.0, 2.0 * mean);
  while (expected_lee(hi, k, options.delta) < mean) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw InvalidInput("could not bracket the inverse of the expectation curve");
  }
  for (int iter = 0; iter < 200 && hi - lo > 1e-13 * std::max(1.0, hi); ++iter) {
    const double mid = 0.5 * (lo + hi);
    if (expected_lee(mid, k, options.delta) < mean) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  estimate.value = 0.5 * (lo + hi);
  return estimate;
}

}  // namespace smh
