#pragma once

#include <cstdint>
#include <optional>
#include <utility>

#include "smh/smh.hpp"

namespace smh {

/// User intent (T, epsilon, beta) together with the derived plan (k, M, padding).
struct ProtocolParams {
  double threshold = 0.0;
  double epsilon = 0.0;
  int beta = 0;
  double epsilon_bias = 0.0;
  double epsilon_stat = 0.0;
  int k = 0;
  std::int64_t M = 0;
  /// Obfuscation padding length, 10 * M by default.
  std::int64_t padding = 0;
};

enum class EstimateMode { Raw, CurveInverted };

struct EstimateOptions {
  double delta = kDefaultDelta;
  /// Distance below k/4 at which the curve is treated as flat; k/400 when unset.
  std::optional<double> saturation_margin;
};

struct DistanceEstimate {
  /// nullopt means SATURATED: the distance is beyond the threshold.
  std::optional<double> value;
  Rational mean_lee;
  int k = 0;
  std::int64_t M = 0;

  bool saturated() const noexcept { return !value.has_value(); }
  friend bool operator==(const DistanceEstimate&, const DistanceEstimate&) = default;
};

/// E[d_Lee] for one hash component at Euclidean distance `dist`:
///   k/4 - (2k/pi^2) * sum_{j>=1} (2j-1)^-2 exp(-2 (pi dist (2j-1) / (delta k))^2).
/// Summation stops once a term drops below 1e-15, or after 10^6 terms.
double expected_lee(double dist, int k, double delta = kDefaultDelta);

/// Single-term sandwich: k/4 - (k/4) e^-c <= E <= k/4 - (2k/pi^2) e^-c.
std::pair<double, double> expected_lee_bounds(double dist, int k, double delta = kDefaultDelta);

/// F(t, k) = t exp(-k^2 / (4 pi t^2)), bounding |E[d_Lee] - t| at delta = sqrt(2/pi).
/// Any other delta is rejected.
double bias_bound(double dist, int k, double delta = kDefaultDelta);

/// Smallest even k with F(T, k) <= epsilon_bias.
int plan_k(double threshold, double epsilon_bias);

/// ceil(ln 2 (beta + 1) k^2 / (8 epsilon_stat^2)).
std::int64_t plan_M(int k, double epsilon_stat, int beta);

/// Splits epsilon evenly between bias and statistical error.
ProtocolParams plan_parameters(double threshold, double epsilon, int beta);

DistanceEstimate estimate_distance(const Rational& mean_lee, int k, std::int64_t M,
                                   EstimateMode mode, const EstimateOptions& options = {});

}  // namespace smh
