#pragma once

// Shared generators for unit and acceptance tests.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "smh/messages.hpp"
#include "smh/rng.hpp"
#include "smh/smh.hpp"
#include "smh/wire.hpp"

namespace smh::testing {

inline Seed seed_of(std::uint64_t n) {
  Seed base{};
  base.fill(0x42);
  return derive_seed(base, "test", {n});
}

inline SessionId random_session(DeterministicRng& rng) {
  SessionId id{};
  for (auto& b : id) b = static_cast<std::uint8_t>(rng.uniform_below(256));
  return id;
}

inline int random_k(DeterministicRng& rng) {
  switch (rng.uniform_below(4)) {
    case 0: return 2;
    case 1: return 2 * static_cast<int>(1 + rng.uniform_below(8));
    case 2: return 2 * static_cast<int>(1 + rng.uniform_below(100));
    default: return 65534;
  }
}

inline std::vector<double> random_reals(std::size_t n, DeterministicRng& rng) {
  std::vector<double> out(n);
  for (double& v : out) v = rng.gaussian();
  return out;
}

inline KeyShare random_key_share(ProtocolKind kind, DeterministicRng& rng) {
  KeyShare share;
  share.k = random_k(rng);
  share.delta = 0.1 + 2.0 * rng.uniform01();
  share.rows = static_cast<std::uint32_t>(1 + rng.uniform_below(12));
  share.cols = static_cast<std::uint32_t>(1 + rng.uniform_below(6));
  if (kind == ProtocolKind::PublicA3P) {
    MatrixDigest digest{};
    for (auto& b : digest) b = static_cast<std::uint8_t>(rng.uniform_below(256));
    share.matrix = digest;
  } else {
    share.matrix = random_reals(std::size_t{share.rows} * share.cols, rng);
  }
  share.dither.resize(share.rows);
  for (double& u : share.dither) u = rng.uniform01() * share.k;
  std::size_t padding = 0;
  if (kind == ProtocolKind::Obfuscated3P) {
    padding = 1 + rng.uniform_below(20);
    share.padding_alice = random_hash_vector(share.k, padding, rng);
    share.padding_bob = random_hash_vector(share.k, padding, rng);
  }
  if (kind == ProtocolKind::PublicA3P || kind == ProtocolKind::Obfuscated3P) {
    share.permutation = Permutation::random(share.rows + padding, rng);
  }
  return share;
}

/// A random message that the encoder accepts.
inline ProtocolMessage random_message(DeterministicRng& rng) {
  ProtocolMessage m;
  m.session = random_session(rng);
  m.kind = static_cast<ProtocolKind>(rng.uniform_below(4));
  const bool third = has_third_party(m.kind);
  const int k = random_k(rng);
  const std::size_t length = 1 + rng.uniform_below(40);
  switch (rng.uniform_below(6)) {
    case 0:
      m.sender = Role::Alice;
      m.body = random_key_share(m.kind, rng);
      break;
    case 1:
      m.sender = rng.uniform_below(2) ? Role::Bob : Role::Alice;
      if (third) {
        m.body = HashSubmission{random_hash_vector(k, length, rng)};
      } else {
        m.body = HammingOracleRequest{encode_lee_to_binary(random_hash_vector(std::min(k, 200), length, rng))};
      }
      break;
    case 2:
      if (third) {
        m.sender = Role::Charlie;
        const auto den = static_cast<std::int64_t>(1 + rng.uniform_below(1000000));
        const auto num = static_cast<std::int64_t>(rng.uniform_below(static_cast<std::uint64_t>(den) * 40));
        m.body = DistanceResult{Rational(num, den), static_cast<std::uint32_t>(rng.next_u64())};
      } else {
        m.sender = Role::Oracle;
        m.body = HammingOracleResponse{rng.next_u64(), static_cast<std::uint32_t>(rng.next_u64())};
      }
      break;
    default: {
      const Role candidates[] = {Role::Alice, Role::Bob, third ? Role::Charlie : Role::Oracle};
      m.sender = candidates[rng.uniform_below(3)];
      std::string detail(rng.uniform_below(30), ' ');
      for (char& c : detail) c = static_cast<char>('a' + rng.uniform_below(26));
      m.body = Abort{static_cast<ErrorCode>(1 + rng.uniform_below(9)), detail};
      break;
    }
  }
  return m;
}

/// Byte-level damage to a valid frame: flips, truncation, extension, or header edits.
inline std::vector<std::uint8_t> mutate(std::vector<std::uint8_t> frame, DeterministicRng& rng) {
  switch (rng.uniform_below(6)) {
    case 0: {
      const auto flips = 1 + rng.uniform_below(4);
      for (std::uint64_t i = 0; i < flips; ++i) {
        frame[rng.uniform_below(frame.size())] ^= static_cast<std::uint8_t>(1u << rng.uniform_below(8));
      }
      break;
    }
    case 1:
      frame.resize(rng.uniform_below(frame.size()));
      break;
    case 2:
      for (auto i = rng.uniform_below(8) + 1; i > 0; --i) {
        frame.push_back(static_cast<std::uint8_t>(rng.uniform_below(256)));
      }
      break;
    case 3:
      frame[kLengthPrefixSize + 1] = static_cast<std::uint8_t>(rng.uniform_below(256));
      break;
    case 4: {
      const auto pos = rng.uniform_below(frame.size());
      frame[pos] = static_cast<std::uint8_t>(rng.uniform_below(256));
      break;
    }
    default: {
      frame.resize(rng.uniform_below(64));
      for (auto& b : frame) b = static_cast<std::uint8_t>(rng.uniform_below(256));
      break;
    }
  }
  return frame;
}

}  // namespace smh::testing
