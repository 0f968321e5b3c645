#pragma once

// Monte-Carlo experiments over the hash: distance sweeps against the
// expected-Lee series, and a chi-square uniformity check of hash components.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "smh/smh.hpp"

namespace smh {

struct SweepSpec {
  std::vector<int> ks{4, 8, 16};
  std::size_t M = 500;
  std::size_t N = 5000;
  /// Ascending; empty means default_distance_grid(k) for each k.
  std::vector<double> distances;
  int trials = 20;
  Seed seed{};
  double delta = kDefaultDelta;
  /// Worker threads; 0 uses the hardware concurrency.
  unsigned threads = 0;
};

struct SweepRow {
  int k = 0;
  double distance = 0.0;
  double mean_lee = 0.0;
  double std_lee = 0.0;
  double expected_lee = 0.0;
  double abs_deviation = 0.0;
};

/// 0 to k in steps of k/40.
std::vector<double> default_distance_grid(int k);

/// x1 ~ N(0, I) and x2 = x1 + distance * (uniform unit vector).
std::pair<std::vector<double>, std::vector<double>> input_pair(std::size_t n, double distance,
                                                               DeterministicRng& rng);

std::vector<SweepRow> run_sweep(const SweepSpec& spec);

std::vector<std::pair<double, double>> theoretical_curve(int k, double delta,
                                                         const std::vector<double>& distances);

enum class DitherMode { Uniform, Zero };

struct UniformityReport {
  int k = 0;
  std::size_t samples = 0;
  std::vector<std::uint64_t> histogram;
  double chi_square = 0.0;
  /// 0.999 quantile of chi-square with k - 1 degrees of freedom.
  double critical_value = 0.0;
  bool pass = false;
};

/// Hashes `x` under `samples` fresh keys and tests all M * samples components
/// against the uniform distribution on Z_k. DitherMode::Zero drops U.
UniformityReport uniformity_report(int k, std::size_t M, std::size_t N, const std::vector<double>& x,
                                   std::size_t samples, const Seed& seed,
                                   DitherMode dither = DitherMode::Uniform, double delta = kDefaultDelta);

inline constexpr const char* kCsvHeader = "k,distance,mean_lee,std_lee,expected_lee,abs_deviation";

void write_csv(const std::vector<SweepRow>& rows, std::ostream& out);
/// Throws IoError if the file cannot be written.
void emit_csv(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace smh
