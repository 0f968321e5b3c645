#pragma once

// Role state machines for the four distance protocols.
//
// Sessions are plain values: start_session() builds one, on_message() consumes
// a state and returns its successor together with the messages to send. No
// I/O happens here; transports and drivers move Envelopes around.

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "smh/analysis.hpp"
#include "smh/messages.hpp"

namespace smh {

struct SessionConfig {
  int k = 0;
  std::int64_t M = 0;
  std::int64_t padding = 0;
  double delta = kDefaultDelta;
  EstimateMode mode = EstimateMode::Raw;
  std::optional<double> saturation_margin;

  static SessionConfig from_plan(const ProtocolParams& params, EstimateMode mode = EstimateMode::Raw);
  /// Number of components each party submits: M, or M + padding when obfuscating.
  std::int64_t submission_length(ProtocolKind kind) const;
  EstimateOptions estimate_options() const { return {delta, saturation_margin}; }
};

enum class Phase : std::uint8_t {
  AwaitKeyShare,
  AwaitBothHashes,
  AwaitSecondHash,
  AwaitOracle,
  AwaitResult,
  Done,
  Aborted,
};

std::string_view to_string(Phase phase) noexcept;

/// Optional caller-supplied key material for Alice. Missing pieces are drawn
/// from the session seed.
struct KeyMaterial {
  HashKey key;
  std::optional<Permutation> permutation;
  std::optional<HashVector> padding_alice;
  std::optional<HashVector> padding_bob;
};

struct PartyInputs {
  std::vector<double> x;
  std::optional<KeyMaterial> material;
  /// PUBLIC_A_3P: where public matrices are resolved, and which one Alice uses.
  std::shared_ptr<MatrixStore> matrices;
  std::optional<MatrixDigest> public_matrix;
};

/// What Alice and Bob hold privately. Never present in Charlie's state.
struct PartySecrets {
  std::vector<double> x;
  std::optional<HashKey> key;
  std::optional<MatrixDigest> public_matrix;
  std::optional<Permutation> permutation;
  std::optional<HashVector> padding_alice;
  std::optional<HashVector> padding_bob;
};

struct SessionState {
  SessionId session{};
  Role role = Role::Alice;
  ProtocolKind kind = ProtocolKind::FullKey3P;
  Phase phase = Phase::AwaitKeyShare;
  SessionConfig config;
  std::optional<PartySecrets> secrets;
  std::shared_ptr<MatrixStore> matrices;
  // Charlie: first submission and its sender.
  std::optional<HashVector> first_hash;
  std::optional<Role> first_sender;
  /// Mean Lee distance as reported by the third party (Charlie's d).
  std::optional<Rational> observed_mean;
  std::optional<DistanceEstimate> result;
  std::optional<ErrorCode> abort_reason;
  std::string abort_detail;

  bool finished() const noexcept { return phase == Phase::Done || phase == Phase::Aborted; }
};

struct Transition {
  SessionState state;
  std::vector<Envelope> outgoing;
  std::optional<DistanceEstimate> estimate;
  /// Set when the inbound message was rejected.
  std::optional<ErrorCode> failure;
  std::string failure_detail;
};

/// Creates a session for `role`. Alice emits her key share and first
/// submission immediately; Bob and Charlie wait.
Transition start_session(Role role, ProtocolKind kind, const SessionConfig& config,
                         PartyInputs inputs, const Seed& seed, const SessionId& session);

/// Creates the passive side of a session (Bob from a KeyShare, Charlie from a
/// HashSubmission) adopting k and M from the message. The caller then feeds
/// that same message to on_message().
SessionState accept_session(Role role, const ProtocolMessage& first, PartyInputs inputs,
                            EstimateMode mode = EstimateMode::Raw,
                            std::optional<double> saturation_margin = std::nullopt);

Transition on_message(SessionState state, const ProtocolMessage& message);

/// Locally aborts an unfinished session and notifies its peers.
Transition abort_session(SessionState state, ErrorCode code, std::string detail);

/// The roles a session exchanges messages with.
std::vector<Role> peers_of(Role role, ProtocolKind kind);

/// perm applied to the concatenation [h; z].
HashVector obfuscate_hash(const HashVector& h, const std::optional<HashVector>& padding,
                          const Permutation& perm);

/// ((M + P) d - P d_tilde) / M: the mean over the M true components.
Rational deobfuscate_distance(const Rational& d, const Rational& d_tilde, std::int64_t M,
                              std::int64_t P);

/// Computes the Hamming distance between two parties' ring codes. Implementations
/// promise to reveal nothing else; the shipped one is an in-process simulation.
class SecureHammingOracle {
 public:
  virtual ~SecureHammingOracle() = default;
  virtual std::int64_t distance(const BinaryCode& alice, const BinaryCode& bob) = 0;
};

class HonestBrokerOracle final : public SecureHammingOracle {
 public:
  std::int64_t distance(const BinaryCode& alice, const BinaryCode& bob) override;
};

/// Message-level host for a SecureHammingOracle: pairs the two requests of a
/// session and answers both parties.
class HammingBroker {
 public:
  explicit HammingBroker(std::shared_ptr<SecureHammingOracle> oracle);

  /// Returns the messages to send; rejected input yields Abort envelopes.
  std::vector<Envelope> on_message(const ProtocolMessage& message);

 private:
  struct Pending {
    std::optional<BinaryCode> alice;
    std::optional<BinaryCode> bob;
  };
  std::shared_ptr<SecureHammingOracle> oracle_;
  std::map<SessionId, Pending> pending_;
  std::set<SessionId> completed_;
};

}  // namespace smh
