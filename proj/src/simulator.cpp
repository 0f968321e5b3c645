#include "smh/simulator.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <thread>

#include "smh/analysis.hpp"
#include "smh/errors.hpp"

namespace smh {

namespace {

void validate(const SweepSpec& spec) {
  if (spec.ks.empty()) throw InvalidParameter("sweep needs at least one k");
  for (int k : spec.ks) require_even_modulus(k);
  if (spec.trials < 1) throw InvalidParameter("trials must be >= 1");
  if (spec.M < 1 || spec.N < 1) throw InvalidParameter("M and N must be >= 1");
  if (!(spec.delta > 0.0) || !std::isfinite(spec.delta)) throw InvalidParameter("delta must be positive");
  for (double d : spec.distances) {
    if (!(d >= 0.0) || !std::isfinite(d)) throw InvalidParameter("distances must be finite and >= 0");
  }
  if (!std::is_sorted(spec.distances.begin(), spec.distances.end())) {
    throw InvalidParameter("distances must be sorted ascending");
  }
}

struct Point {
  int k;
  double distance;
};

double trial_mean_lee(const SweepSpec& spec, const Point& point, int trial) {
  const Seed trial_seed =
      derive_seed(spec.seed, "sweep",
                  {static_cast<std::uint64_t>(point.k), std::bit_cast<std::uint64_t>(point.distance),
                   static_cast<std::uint64_t>(trial)});
  DeterministicRng input_rng(derive_seed(trial_seed, "inputs"));
  const auto [x1, x2] = input_pair(spec.N, point.distance, input_rng);
  const HashKey key = generate_key(point.k, spec.M, spec.N, derive_seed(trial_seed, "key"), spec.delta);
  return to_real(mean_lee_distance(hash(key, x1), hash(key, x2)));
}

}  // namespace

std::vector<double> default_distance_grid(int k) {
  require_even_modulus(k);
  std::vector<double> grid;
  for (int i = 0; i <= 40; ++i) grid.push_back(static_cast<double>(k) * i / 40.0);
  return grid;
}

std::pair<std::vector<double>, std::vector<double>> input_pair(std::size_t n, double distance,
                                                               DeterministicRng& rng) {
  if (n == 0) throw InvalidParameter("input dimension must be >= 1");
  std::vector<double> x1(n);
  for (double& v : x1) v = rng.gaussian();
  std::vector<double> direction(n);
  double norm = 0.0;
  while (norm == 0.0) {
    for (double& v : direction) v = rng.gaussian();
    norm = std::sqrt(std::transform_reduce(direction.begin(), direction.end(), direction.begin(), 0.0));
  }
  std::vector<double> x2(n);
  for (std::size_t i = 0; i < n; ++i) x2[i] = x1[i] + distance * direction[i] / norm;
  return {std::move(x1), std::move(x2)};
}

std::vector<SweepRow> run_sweep(const SweepSpec& spec) {
  validate(spec);
  std::vector<Point> points;
  for (int k : spec.ks) {
    const auto grid = spec.distances.empty() ? default_distance_grid(k) : spec.distances;
    for (double d : grid) points.push_back({k, d});
  }

  const std::size_t trials = static_cast<std::size_t>(spec.trials);
  const std::size_t jobs = points.size() * trials;
  std::vector<double> values(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t job = next++; job < jobs; job = next++) {
      values[job] = trial_mean_lee(spec, points[job / trials], static_cast<int>(job % trials));
    }
  };
  const unsigned threads =
      std::max(1u, std::min<unsigned>(spec.threads ? spec.threads : std::thread::hardware_concurrency(),
                                      static_cast<unsigned>(std::min<std::size_t>(jobs, 256))));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  std::vector<SweepRow> rows;
  for (std::size_t p = 0; p < points.size(); ++p) {
    const double* v = values.data() + p * trials;
    double mean = 0.0;
    for (std::size_t t = 0; t < trials; ++t) mean += v[t];
    mean /= static_cast<double>(trials);
    double ss = 0.0;
    for (std::size_t t = 0; t < trials; ++t) ss += (v[t] - mean) * (v[t] - mean);
    const double sd = trials > 1 ? std::sqrt(ss / static_cast<double>(trials - 1)) : 0.0;
    const double expected = expected_lee(points[p].distance, points[p].k, spec.delta);
    rows.push_back({points[p].k, points[p].distance, mean, sd, expected, std::abs(mean - expected)});
  }
  return rows;
}

std::vector<std::pair<double, double>> theoretical_curve(int k, double delta,
                                                         const std::vector<double>& distances) {
  std::vector<std::pair<double, double>> curve;
  curve.reserve(distances.size());
  for (double d : distances) curve.emplace_back(d, expected_lee(d, k, delta));
  return curve;
}

UniformityReport uniformity_report(int k, std::size_t M, std::size_t N, const std::vector<double>& x,
                                   std::size_t samples, const Seed& seed, DitherMode dither, double delta) {
  require_even_modulus(k);
  if (M < 1 || N < 1) throw InvalidParameter("M and N must be >= 1");
  if (x.size() != N) throw DimensionMismatch("x must have length N");
  if (samples < 100 * static_cast<std::size_t>(k)) {
    throw InvalidParameter("uniformity needs at least 100 * k samples");
  }
  UniformityReport report;
  report.k = k;
  report.samples = samples;
  report.histogram.assign(static_cast<std::size_t>(k), 0);
  const std::vector<double> zeros(M, 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    HashKey key = generate_key(k, M, N, derive_seed(seed, "uniformity", {s}), delta);
    if (dither == DitherMode::Zero) {
      key = HashKey(k, delta, M, N, std::vector<double>(key.matrix().begin(), key.matrix().end()), zeros);
    }
    const HashVector h = hash(key, x);
    for (auto c : h.components()) ++report.histogram[c];
  }
  const double total = static_cast<double>(samples * M);
  const double expected = total / k;
  for (auto count : report.histogram) {
    const double diff = static_cast<double>(count) - expected;
    report.chi_square += diff * diff / expected;
  }
  const boost::math::chi_squared_distribution<double> chi(k - 1);
  report.critical_value = boost::math::quantile(chi, 0.999);
  report.pass = report.chi_square <= report.critical_value;
  return report;
}

void write_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) {
    out << fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.k, r.distance, r.mean_lee, r.std_lee,
                       r.expected_lee, r.abs_deviation);
  }
}

void emit_csv(const std::vector<SweepRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_csv(rows, out);
  out.flush();
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace smh
