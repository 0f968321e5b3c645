#pragma once

// SessionHost runs protocol sessions over any number of endpoints. Frames are
// demultiplexed by session id; one dispatcher thread owns every SessionState,
// so sessions never share mutable state.

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smh/protocol.hpp"
#include "smh/transport.hpp"

namespace smh {

struct SessionOutcome {
  SessionId session{};
  Role role = Role::Alice;
  ProtocolKind kind = ProtocolKind::FullKey3P;
  Phase phase = Phase::AwaitKeyShare;
  std::optional<DistanceEstimate> estimate;
  std::optional<Rational> observed_mean;
  std::optional<ErrorCode> abort_reason;
  std::string abort_detail;
};

struct HostEvent {
  enum class Type { FrameSent, FrameReceived, FrameRejected, SessionFinished };
  Type type = Type::FrameSent;
  SessionId session{};
  Role from = Role::Alice;
  Role to = Role::Alice;
  std::span<const std::uint8_t> frame;
  std::string detail;
};

struct HostOptions {
  /// Create Bob sessions from inbound key shares; inputs come from bob_inputs.
  bool accept_bob = false;
  std::function<PartyInputs(const KeyShare&)> bob_inputs;
  /// Create Charlie sessions from inbound hash submissions.
  bool accept_charlie = false;
  /// Non-null: answer Hamming requests as the oracle.
  std::shared_ptr<SecureHammingOracle> oracle;
  EstimateMode mode = EstimateMode::Raw;
  std::optional<double> saturation_margin;
  /// Called from the dispatcher thread.
  std::function<void(const HostEvent&)> observer;
};

class SessionHost {
 public:
  explicit SessionHost(HostOptions options);
  ~SessionHost();
  SessionHost(const SessionHost&) = delete;
  SessionHost& operator=(const SessionHost&) = delete;

  /// Starts reading from `endpoint`. Messages for the listed roles go here
  /// unless a session has learned a better route.
  void attach(std::shared_ptr<Endpoint> endpoint, std::vector<Role> default_for = {});

  /// Validates synchronously (throws Error), then runs the session.
  void start(Role role, ProtocolKind kind, const SessionConfig& config, PartyInputs inputs,
             const Seed& seed, const SessionId& session);

  /// Waits until the session for `role` has finished; nullopt on timeout.
  std::optional<SessionOutcome> wait(const SessionId& session, Role role,
                                     std::chrono::milliseconds timeout);

  std::vector<SessionOutcome> outcomes() const;

  /// Closes every endpoint and joins all threads. Idempotent.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace smh
