#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "smh/errors.hpp"
#include "smh/smh.hpp"

namespace smh {

enum class ProtocolKind : std::uint8_t {
  FullKey3P = 0,        // shared (k, A, U); Charlie computes the mean Lee distance
  PublicA3P = 1,        // A public, (U, permutation) secret
  TwoPartyHamming = 2,  // ring-coded hashes compared by a secure Hamming oracle
  Obfuscated3P = 3,     // hashes padded with uniform noise and permuted
};

enum class Role : std::uint8_t { Alice = 0, Bob = 1, Charlie = 2, Oracle = 3 };

std::string_view to_string(ProtocolKind kind) noexcept;
std::string_view to_string(Role role) noexcept;
std::optional<ProtocolKind> parse_kind(std::string_view text) noexcept;

inline bool has_third_party(ProtocolKind kind) noexcept {
  return kind != ProtocolKind::TwoPartyHamming;
}

using SessionId = std::array<std::uint8_t, 16>;
using MatrixDigest = std::array<std::uint8_t, 32>;

/// Content-addressed store of public projection matrices. Thread-safe.
class MatrixStore {
 public:
  struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> entries;
  };

  /// SHA-256 over (rows u32 BE, cols u32 BE, entries as binary64 BE).
  static MatrixDigest digest_of(std::size_t rows, std::size_t cols, std::span<const double> entries);

  MatrixDigest put(std::size_t rows, std::size_t cols, std::vector<double> entries);
  std::shared_ptr<const Matrix> find(const MatrixDigest& digest) const;

 private:
  mutable std::mutex mutex_;
  std::map<MatrixDigest, std::shared_ptr<const Matrix>> matrices_;
};

struct KeyShare {
  int k = 0;
  double delta = kDefaultDelta;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  /// Explicit row-major A, or a reference to a public matrix.
  std::variant<std::vector<double>, MatrixDigest> matrix;
  std::vector<double> dither;
  std::optional<Permutation> permutation;
  /// Obfuscation padding z1 (Alice) and z2 (Bob); both present or both absent.
  std::optional<HashVector> padding_alice;
  std::optional<HashVector> padding_bob;

  friend bool operator==(const KeyShare&, const KeyShare&) = default;
};

struct HashSubmission {
  HashVector hash;
  friend bool operator==(const HashSubmission&, const HashSubmission&) = default;
};

struct DistanceResult {
  Rational mean_lee;
  std::uint32_t m_effective = 0;
  friend bool operator==(const DistanceResult&, const DistanceResult&) = default;
};

struct HammingOracleRequest {
  BinaryCode code;
  friend bool operator==(const HammingOracleRequest&, const HammingOracleRequest&) = default;
};

struct HammingOracleResponse {
  std::uint64_t distance = 0;
  std::uint32_t symbols = 0;
  friend bool operator==(const HammingOracleResponse&, const HammingOracleResponse&) = default;
};

struct Abort {
  ErrorCode reason = ErrorCode::ProtocolViolation;
  std::string detail;
  friend bool operator==(const Abort&, const Abort&) = default;
};

using MessageBody = std::variant<KeyShare, HashSubmission, DistanceResult, HammingOracleRequest,
                                 HammingOracleResponse, Abort>;

std::string_view body_name(const MessageBody& body) noexcept;

struct ProtocolMessage {
  SessionId session{};
  ProtocolKind kind = ProtocolKind::FullKey3P;
  Role sender = Role::Alice;
  MessageBody body;

  friend bool operator==(const ProtocolMessage&, const ProtocolMessage&) = default;
};

struct Envelope {
  Role to;
  ProtocolMessage message;
};

}  // namespace smh
