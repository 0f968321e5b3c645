#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>

namespace smh {

using Seed = std::array<std::uint8_t, 32>;

/// Parses 64 hex characters into a seed; any other string is hashed with SHA-256.
Seed seed_from_string(std::string_view text);
std::string seed_to_hex(const Seed& seed);
std::optional<Seed> seed_from_hex(std::string_view hex);

/// SHA-256(seed || label || big-endian indices). Used to split one master seed
/// into independent, order-free sub-streams (per key, per trial, per role).
Seed derive_seed(const Seed& seed, std::string_view label,
                 std::initializer_list<std::uint64_t> indices = {});

/// Deterministic generator backed by the ChaCha20 (IETF) keystream.
///
/// The 32-byte seed is the cipher key and `stream` selects the nonce, so two
/// generators with the same (seed, stream) produce identical sequences on
/// every platform. Gaussians use the Box-Muller transform on two 53-bit
/// uniforms; the second variate of each pair is cached.
class DeterministicRng {
 public:
  explicit DeterministicRng(const Seed& seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform01();
  /// Uniform on [0, bound), rejection sampled, bound > 0.
  std::uint64_t uniform_below(std::uint64_t bound);
  /// Standard normal variate.
  double gaussian();

 private:
  void refill();

  std::array<std::uint8_t, 32> key_{};
  std::array<std::uint8_t, 12> nonce_{};
  std::uint32_t block_counter_ = 0;
  std::array<std::uint8_t, 1024> buffer_{};
  std::size_t position_ = 1024;
  std::optional<double> spare_gaussian_;
};

}  // namespace smh
