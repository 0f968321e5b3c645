#pragma once

// End-to-end runs of one session with all roles: in-process (drive_local) or
// across TCP loopback (drive_tcp). Both derive the session id and Alice's
// secrets from the same seed, so they agree message for message.

#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "smh/protocol.hpp"
#include "smh/transport.hpp"

namespace smh {

struct TranscriptEntry {
  Role from = Role::Alice;
  Role to = Role::Alice;
  Frame frame;

  friend bool operator==(const TranscriptEntry&, const TranscriptEntry&) = default;
};

struct DriveOptions {
  /// Alice's key material; drawn from the seed when absent.
  std::optional<KeyMaterial> material;
  /// TWO_PARTY_HAMMING oracle; HonestBrokerOracle when null.
  std::shared_ptr<SecureHammingOracle> oracle;
  /// PUBLIC_A_3P store shared by Alice and Bob; created when null.
  std::shared_ptr<MatrixStore> matrices;
  /// drive_tcp only: a running Charlie (or oracle) instead of a private one.
  std::optional<Address> third_party;
};

struct RunResult {
  SessionId session{};
  DistanceEstimate alice;
  DistanceEstimate bob;
  /// The mean Lee distance reported by Charlie (three-party kinds).
  std::optional<Rational> reported_mean;
  std::vector<TranscriptEntry> transcript;
};

/// Distinct per kind so one seed can drive every kind against a shared third party.
SessionId session_id_for(const Seed& seed, ProtocolKind kind);

/// Seed of the public matrix used by PUBLIC_A_3P runs without key material.
Seed public_matrix_seed(const Seed& seed);

/// Draws the rows x cols public matrix for `matrix_seed` and stores it.
MatrixDigest publish_public_matrix(MatrixStore& store, const Seed& matrix_seed, std::size_t rows,
                                   std::size_t cols, double delta = kDefaultDelta);

/// Runs every role in this thread; every message is encoded and decoded.
/// Throws the Error matching the abort reason if the session fails.
RunResult drive_local(ProtocolKind kind, const std::vector<double>& x1, const std::vector<double>& x2,
                      const SessionConfig& config, const Seed& seed, DriveOptions options = {});

/// TWO_PARTY_HAMMING with a caller-chosen oracle. Throws OracleUnavailable
/// if the oracle is null or fails.
std::pair<DistanceEstimate, DistanceEstimate> run_two_party_hamming(
    const std::vector<double>& x1, const std::vector<double>& x2, const SessionConfig& config,
    std::shared_ptr<SecureHammingOracle> oracle, const Seed& seed,
    std::optional<KeyMaterial> material = std::nullopt);

/// Same run with each role on its own SessionHost, connected over TCP loopback.
RunResult drive_tcp(ProtocolKind kind, const std::vector<double>& x1, const std::vector<double>& x2,
                    const SessionConfig& config, const Seed& seed, DriveOptions options = {});

}  // namespace smh
