#include "smh/protocol.hpp"

#include <algorithm>
#include <string>
#include <utility>

namespace smh {

SessionConfig SessionConfig::from_plan(const ProtocolParams& params, EstimateMode mode) {
  SessionConfig config;
  config.k = params.k;
  config.M = params.M;
  config.padding = params.padding;
  config.mode = mode;
  return config;
}

std::int64_t SessionConfig::submission_length(ProtocolKind kind) const {
  return kind == ProtocolKind::Obfuscated3P ? M + padding : M;
}

std::string_view to_string(Phase phase) noexcept {
  switch (phase) {
    case Phase::AwaitKeyShare: return "AWAIT_KEY_SHARE";
    case Phase::AwaitBothHashes: return "AWAIT_BOTH_HASHES";
    case Phase::AwaitSecondHash: return "AWAIT_SECOND_HASH";
    case Phase::AwaitOracle: return "AWAIT_ORACLE";
    case Phase::AwaitResult: return "AWAIT_RESULT";
    case Phase::Done: return "DONE";
    case Phase::Aborted: return "ABORTED";
  }
  return "UNKNOWN";
}

std::vector<Role> peers_of(Role role, ProtocolKind kind) {
  const Role third = has_third_party(kind) ? Role::Charlie : Role::Oracle;
  switch (role) {
    case Role::Alice: return {Role::Bob, third};
    case Role::Bob: return {Role::Alice, third};
    case Role::Charlie: return {Role::Alice, Role::Bob};
    case Role::Oracle: return {Role::Alice, Role::Bob};
  }
  return {};
}

namespace {

ProtocolMessage make_message(const SessionState& state, MessageBody body) {
  return ProtocolMessage{state.session, state.kind, state.role, std::move(body)};
}

Transition reject(SessionState state, ErrorCode code, std::string detail) {
  Transition t{std::move(state)};
  t.failure = code;
  t.failure_detail = detail;
  if (!t.state.finished()) {
    t.state.phase = Phase::Aborted;
    t.state.abort_reason = code;
    t.state.abort_detail = detail;
    for (Role peer : peers_of(t.state.role, t.state.kind)) {
      t.outgoing.push_back({peer, make_message(t.state, Abort{code, detail})});
    }
  }
  return t;
}

void validate_config(const SessionConfig& config, ProtocolKind kind) {
  require_even_modulus(config.k);
  if (config.M < 1 || config.M > UINT32_MAX) throw InvalidParameter("M must be in [1, 2^32)");
  if (config.padding < 0) throw InvalidParameter("padding must be >= 0");
  if (config.submission_length(kind) > UINT32_MAX) throw InvalidParameter("submission too long");
}

// The vector a party sends to the third party (or the oracle, ring coded).
HashVector submission_of(const SessionState& state) {
  const PartySecrets& secrets = *state.secrets;
  HashVector h = hash(*secrets.key, secrets.x);
  switch (state.kind) {
    case ProtocolKind::FullKey3P:
    case ProtocolKind::TwoPartyHamming:
      return h;
    case ProtocolKind::PublicA3P:
      return apply_permutation(h, *secrets.permutation);
    case ProtocolKind::Obfuscated3P:
      return obfuscate_hash(
          h, state.role == Role::Alice ? secrets.padding_alice : secrets.padding_bob,
          *secrets.permutation);
  }
  throw InvalidParameter("unknown protocol kind");
}

Envelope submit(const SessionState& state) {
  HashVector h = submission_of(state);
  if (has_third_party(state.kind)) {
    return {Role::Charlie, make_message(state, HashSubmission{std::move(h)})};
  }
  return {Role::Oracle, make_message(state, HammingOracleRequest{encode_lee_to_binary(h)})};
}

// Checks that a key share carries exactly the pieces its protocol kind needs.
void check_key_share_shape(const KeyShare& share, ProtocolKind kind, const SessionConfig& config) {
  const bool explicit_matrix = std::holds_alternative<std::vector<double>>(share.matrix);
  const bool has_padding = share.padding_alice.has_value();
  if (share.padding_alice.has_value() != share.padding_bob.has_value()) {
    throw ProtocolViolation("key share must carry both paddings or neither");
  }
  switch (kind) {
    case ProtocolKind::FullKey3P:
    case ProtocolKind::TwoPartyHamming:
      if (!explicit_matrix || share.permutation || has_padding) {
        throw ProtocolViolation("key share shape does not match a full-key protocol");
      }
      break;
    case ProtocolKind::PublicA3P:
      if (explicit_matrix || !share.permutation || has_padding) {
        throw ProtocolViolation("public-matrix key share needs a matrix reference and permutation");
      }
      break;
    case ProtocolKind::Obfuscated3P:
      if (!explicit_matrix || !share.permutation) {
        throw ProtocolViolation("obfuscated key share needs a matrix and permutation");
      }
      break;
  }
  if (share.k != config.k) throw DimensionMismatch("key share k differs from the session");
  if (share.rows != config.M) throw DimensionMismatch("key share M differs from the session");
  if (share.permutation &&
      static_cast<std::int64_t>(share.permutation->size()) != config.submission_length(kind)) {
    throw DimensionMismatch("permutation size differs from the submission length");
  }
  if (has_padding) {
    for (const auto* z : {&*share.padding_alice, &*share.padding_bob}) {
      if (z->k() != config.k || static_cast<std::int64_t>(z->size()) != config.padding) {
        throw DimensionMismatch("padding vector does not match the session");
      }
    }
  } else if (kind == ProtocolKind::Obfuscated3P && config.padding != 0) {
    throw ProtocolViolation("obfuscated key share is missing its padding");
  }
}

HashKey key_from_share(const KeyShare& share, const SessionState& state) {
  if (const auto* entries = std::get_if<std::vector<double>>(&share.matrix)) {
    return HashKey(share.k, share.delta, share.rows, share.cols, *entries, share.dither);
  }
  const auto& digest = std::get<MatrixDigest>(share.matrix);
  auto matrix = state.matrices ? state.matrices->find(digest) : nullptr;
  if (!matrix) throw ProtocolViolation("key share references an unknown public matrix");
  if (matrix->rows != share.rows || matrix->cols != share.cols) {
    throw DimensionMismatch("public matrix dimensions differ from the key share");
  }
  return HashKey(share.k, share.delta, share.rows, share.cols, matrix->entries, share.dither);
}

DistanceEstimate finish_estimate(SessionState& state, const Rational& mean_lee) {
  DistanceEstimate estimate = estimate_distance(mean_lee, state.config.k, state.config.M,
                                                state.config.mode, state.config.estimate_options());
  state.result = estimate;
  state.phase = Phase::Done;
  return estimate;
}

Transition alice_start(SessionState state, PartyInputs inputs, const Seed& seed) {
  const SessionConfig& config = state.config;
  const std::size_t n = inputs.x.size();
  if (n == 0) throw InvalidInput("Alice needs a non-empty input vector");
  const auto rows = static_cast<std::size_t>(config.M);
  const auto total = static_cast<std::size_t>(config.submission_length(state.kind));

  PartySecrets secrets;
  secrets.x = std::move(inputs.x);
  std::optional<KeyMaterial> material = std::move(inputs.material);
  if (material) {
    const HashKey& key = material->key;
    if (key.k() != config.k || key.rows() != rows || key.cols() != n) {
      throw DimensionMismatch("supplied key does not match the session parameters");
    }
  }

  // Matrix and dither.
  if (state.kind == ProtocolKind::PublicA3P) {
    if (!state.matrices) throw InvalidParameter("public-matrix protocol needs a matrix store");
    if (material) {
      const HashKey& key = material->key;
      secrets.public_matrix = state.matrices->put(
          key.rows(), key.cols(), std::vector<double>(key.matrix().begin(), key.matrix().end()));
      secrets.key = key;
    } else {
      if (!inputs.public_matrix) throw InvalidParameter("public-matrix protocol needs a matrix reference");
      auto matrix = state.matrices->find(*inputs.public_matrix);
      if (!matrix) throw InvalidParameter("public matrix not found in the store");
      if (matrix->rows != rows || matrix->cols != n) {
        throw DimensionMismatch("public matrix dimensions differ from the session");
      }
      DeterministicRng dither_rng(derive_seed(seed, "dither"));
      secrets.public_matrix = inputs.public_matrix;
      secrets.key = HashKey(config.k, config.delta, rows, n, matrix->entries,
                            generate_dither(config.k, rows, dither_rng));
    }
  } else {
    secrets.key = material ? material->key
                           : generate_key(config.k, rows, n, derive_seed(seed, "key"), config.delta);
  }

  // Permutation.
  if (state.kind == ProtocolKind::PublicA3P || state.kind == ProtocolKind::Obfuscated3P) {
    if (material && material->permutation) {
      if (material->permutation->size() != total) {
        throw DimensionMismatch("supplied permutation has the wrong size");
      }
      secrets.permutation = material->permutation;
    } else {
      DeterministicRng perm_rng(derive_seed(seed, "permutation"));
      secrets.permutation = Permutation::random(total, perm_rng);
    }
  }

  // Padding.
  if (state.kind == ProtocolKind::Obfuscated3P && config.padding > 0) {
    const auto p = static_cast<std::size_t>(config.padding);
    if (material && material->padding_alice && material->padding_bob) {
      for (const auto* z : {&*material->padding_alice, &*material->padding_bob}) {
        if (z->k() != config.k || z->size() != p) {
          throw DimensionMismatch("supplied padding does not match the session");
        }
      }
      secrets.padding_alice = material->padding_alice;
      secrets.padding_bob = material->padding_bob;
    } else {
      DeterministicRng pad_rng(derive_seed(seed, "padding"));
      secrets.padding_alice = random_hash_vector(config.k, p, pad_rng);
      secrets.padding_bob = random_hash_vector(config.k, p, pad_rng);
    }
  }

  const HashKey& key = *secrets.key;
  KeyShare share;
  share.k = key.k();
  share.delta = key.delta();
  share.rows = static_cast<std::uint32_t>(key.rows());
  share.cols = static_cast<std::uint32_t>(key.cols());
  if (secrets.public_matrix) {
    share.matrix = *secrets.public_matrix;
  } else {
    share.matrix = std::vector<double>(key.matrix().begin(), key.matrix().end());
  }
  share.dither.assign(key.dither().begin(), key.dither().end());
  share.permutation = secrets.permutation;
  share.padding_alice = secrets.padding_alice;
  share.padding_bob = secrets.padding_bob;

  state.secrets = std::move(secrets);
  state.phase = has_third_party(state.kind) ? Phase::AwaitResult : Phase::AwaitOracle;

  Transition t{std::move(state)};
  t.outgoing.push_back({Role::Bob, make_message(t.state, std::move(share))});
  t.outgoing.push_back(submit(t.state));
  return t;
}

Transition bob_on_key_share(SessionState state, const KeyShare& share) {
  check_key_share_shape(share, state.kind, state.config);
  if (share.cols != state.secrets->x.size()) {
    throw DimensionMismatch("key share N differs from Bob's input length");
  }
  state.secrets->key = key_from_share(share, state);
  if (const auto* digest = std::get_if<MatrixDigest>(&share.matrix)) state.secrets->public_matrix = *digest;
  state.secrets->permutation = share.permutation;
  state.secrets->padding_alice = share.padding_alice;
  state.secrets->padding_bob = share.padding_bob;
  state.phase = has_third_party(state.kind) ? Phase::AwaitResult : Phase::AwaitOracle;
  Transition t{std::move(state)};
  t.outgoing.push_back(submit(t.state));
  return t;
}

Transition party_on_result(SessionState state, const DistanceResult& result) {
  const std::int64_t m_eff = state.config.submission_length(state.kind);
  if (result.m_effective != m_eff) throw DimensionMismatch("result covers the wrong number of components");
  const Rational& d = result.mean_lee;
  if (d < 0 || d > Rational(state.config.k, 2) || (m_eff % d.denominator()) != 0) {
    throw ProtocolViolation("reported mean Lee distance is impossible for this session");
  }
  Rational mean = d;
  if (state.kind == ProtocolKind::Obfuscated3P && state.config.padding > 0) {
    const auto& secrets = *state.secrets;
    const Rational d_tilde = mean_lee_distance(*secrets.padding_alice, *secrets.padding_bob);
    mean = deobfuscate_distance(d, d_tilde, state.config.M, state.config.padding);
  }
  state.observed_mean = d;
  Transition t{std::move(state)};
  t.estimate = finish_estimate(t.state, mean);
  return t;
}

Transition party_on_oracle(SessionState state, const HammingOracleResponse& response) {
  if (response.symbols != state.config.M) throw DimensionMismatch("oracle answered for the wrong length");
  const auto max_distance = static_cast<std::uint64_t>(state.config.M) * (state.config.k / 2);
  if (response.distance > max_distance) throw ProtocolViolation("oracle distance out of range");
  const Rational mean(static_cast<std::int64_t>(response.distance), state.config.M);
  Transition t{std::move(state)};
  t.estimate = finish_estimate(t.state, mean);
  return t;
}

Transition charlie_on_hash(SessionState state, Role sender, const HashVector& h) {
  if (h.k() != state.config.k || static_cast<std::int64_t>(h.size()) != state.config.M) {
    throw DimensionMismatch("submission does not match the session's k and length");
  }
  if (state.phase == Phase::AwaitBothHashes) {
    state.first_hash = h;
    state.first_sender = sender;
    state.phase = Phase::AwaitSecondHash;
    return Transition{std::move(state)};
  }
  const HashVector& alice_hash = sender == Role::Alice ? h : *state.first_hash;
  const HashVector& bob_hash = sender == Role::Alice ? *state.first_hash : h;
  const Rational mean = mean_lee_distance(alice_hash, bob_hash);
  state.observed_mean = mean;
  state.phase = Phase::Done;
  Transition t{std::move(state)};
  const DistanceResult result{mean, static_cast<std::uint32_t>(t.state.config.M)};
  t.outgoing.push_back({Role::Alice, make_message(t.state, result)});
  t.outgoing.push_back({Role::Bob, make_message(t.state, result)});
  return t;
}

Transition dispatch(SessionState state, const ProtocolMessage& message) {
  const Role sender = message.sender;
  const auto& body = message.body;
  switch (state.role) {
    case Role::Alice:
    case Role::Bob: {
      if (state.role == Role::Bob && state.phase == Phase::AwaitKeyShare) {
        if (sender == Role::Alice && std::holds_alternative<KeyShare>(body)) {
          return bob_on_key_share(std::move(state), std::get<KeyShare>(body));
        }
        break;
      }
      if (state.phase == Phase::AwaitResult && sender == Role::Charlie &&
          std::holds_alternative<DistanceResult>(body)) {
        return party_on_result(std::move(state), std::get<DistanceResult>(body));
      }
      if (state.phase == Phase::AwaitOracle && sender == Role::Oracle &&
          std::holds_alternative<HammingOracleResponse>(body)) {
        return party_on_oracle(std::move(state), std::get<HammingOracleResponse>(body));
      }
      break;
    }
    case Role::Charlie: {
      const bool expecting = state.phase == Phase::AwaitBothHashes ||
                             (state.phase == Phase::AwaitSecondHash && sender != state.first_sender);
      if (expecting && (sender == Role::Alice || sender == Role::Bob) &&
          std::holds_alternative<HashSubmission>(body)) {
        return charlie_on_hash(std::move(state), sender, std::get<HashSubmission>(body).hash);
      }
      break;
    }
    case Role::Oracle:
      break;
  }
  std::string detail = std::string(body_name(body)) + " from " + std::string(to_string(sender)) +
                       " is not expected by " + std::string(to_string(state.role)) + " in phase " +
                       std::string(to_string(state.phase));
  return reject(std::move(state), ErrorCode::ProtocolViolation, std::move(detail));
}

}  // namespace

Transition start_session(Role role, ProtocolKind kind, const SessionConfig& config,
                         PartyInputs inputs, const Seed& seed, const SessionId& session) {
  validate_config(config, kind);
  if (role == Role::Oracle) throw InvalidParameter("the oracle is not a session role");
  if (role == Role::Charlie && !has_third_party(kind)) {
    throw InvalidParameter("the two-party Hamming protocol has no third party");
  }
  if (role == Role::Charlie && (!inputs.x.empty() || inputs.material)) {
    throw ProtocolViolation("Charlie must not be given an input vector or key material");
  }

  SessionState state;
  state.session = session;
  state.role = role;
  state.kind = kind;
  state.config = config;

  switch (role) {
    case Role::Alice:
      state.matrices = inputs.matrices;
      return alice_start(std::move(state), std::move(inputs), seed);
    case Role::Bob:
      if (inputs.x.empty()) throw InvalidInput("Bob needs a non-empty input vector");
      state.matrices = inputs.matrices;
      state.secrets = PartySecrets{std::move(inputs.x)};
      state.phase = Phase::AwaitKeyShare;
      return Transition{std::move(state)};
    case Role::Charlie:
      // Charlie only ever learns the submitted length.
      state.config.M = config.submission_length(kind);
      state.config.padding = 0;
      state.phase = Phase::AwaitBothHashes;
      return Transition{std::move(state)};
    case Role::Oracle:
      break;
  }
  throw InvalidParameter("invalid role");
}

SessionState accept_session(Role role, const ProtocolMessage& first, PartyInputs inputs,
                            EstimateMode mode, std::optional<double> saturation_margin) {
  SessionState state;
  state.session = first.session;
  state.role = role;
  state.kind = first.kind;
  state.config.mode = mode;
  state.config.saturation_margin = saturation_margin;
  if (role == Role::Bob) {
    const auto* share = std::get_if<KeyShare>(&first.body);
    if (!share || first.sender != Role::Alice) {
      throw ProtocolViolation("a Bob session starts with Alice's key share");
    }
    if (inputs.x.empty()) throw InvalidInput("Bob needs a non-empty input vector");
    state.config.k = share->k;
    state.config.M = share->rows;
    state.config.padding = share->padding_alice ? static_cast<std::int64_t>(share->padding_alice->size()) : 0;
    state.config.delta = share->delta;
    state.matrices = inputs.matrices;
    state.secrets = PartySecrets{std::move(inputs.x)};
    state.phase = Phase::AwaitKeyShare;
  } else if (role == Role::Charlie) {
    const auto* submission = std::get_if<HashSubmission>(&first.body);
    if (!submission || !has_third_party(first.kind)) {
      throw ProtocolViolation("a Charlie session starts with a hash submission");
    }
    if (!inputs.x.empty() || inputs.material) {
      throw ProtocolViolation("Charlie must not be given an input vector or key material");
    }
    state.config.k = submission->hash.k();
    state.config.M = static_cast<std::int64_t>(submission->hash.size());
    state.phase = Phase::AwaitBothHashes;
  } else {
    throw InvalidParameter("only Bob and Charlie sessions are accepted from the wire");
  }
  validate_config(state.config, state.kind);
  return state;
}

Transition on_message(SessionState state, const ProtocolMessage& message) {
  if (message.session != state.session) {
    return reject(std::move(state), ErrorCode::ProtocolViolation, "message for another session");
  }
  if (message.kind != state.kind) {
    return reject(std::move(state), ErrorCode::ProtocolViolation, "message for another protocol kind");
  }
  if (state.finished()) {
    return reject(std::move(state), ErrorCode::ProtocolViolation,
                  "session already finished; message rejected");
  }
  if (const auto* abort = std::get_if<Abort>(&message.body)) {
    state.phase = Phase::Aborted;
    state.abort_reason = abort->reason;
    state.abort_detail = std::string(to_string(message.sender)) + " aborted: " + abort->detail;
    return Transition{std::move(state)};
  }
  // Keep a copy so a failure inside a handler can still abort cleanly.
  SessionState backup = state;
  try {
    return dispatch(std::move(state), message);
  } catch (const Error& e) {
    return reject(std::move(backup), e.code(), e.what());
  }
}

Transition abort_session(SessionState state, ErrorCode code, std::string detail) {
  return reject(std::move(state), code, std::move(detail));
}

HashVector obfuscate_hash(const HashVector& h, const std::optional<HashVector>& padding,
                          const Permutation& perm) {
  const std::size_t p = padding ? padding->size() : 0;
  if (padding && padding->k() != h.k()) throw DimensionMismatch("padding uses a different k");
  if (perm.size() != h.size() + p) throw DimensionMismatch("permutation size must be M + P");
  std::vector<std::uint32_t> joined(h.components().begin(), h.components().end());
  if (padding) joined.insert(joined.end(), padding->components().begin(), padding->components().end());
  return apply_permutation(HashVector(h.k(), std::move(joined)), perm);
}

Rational deobfuscate_distance(const Rational& d, const Rational& d_tilde, std::int64_t M,
                              std::int64_t P) {
  if (M < 1) throw InvalidParameter("M must be positive");
  if (P < 0) throw InvalidParameter("P must be >= 0");
  if (P == 0) return d;
  const Rational mean = (Rational(M + P) * d - Rational(P) * d_tilde) / Rational(M);
  if (mean < 0) throw InvalidInput("de-obfuscated distance is negative; inputs are inconsistent");
  return mean;
}

std::int64_t HonestBrokerOracle::distance(const BinaryCode& alice, const BinaryCode& bob) {
  return hamming_distance(alice, bob);
}

HammingBroker::HammingBroker(std::shared_ptr<SecureHammingOracle> oracle)
    : oracle_(std::move(oracle)) {}

std::vector<Envelope> HammingBroker::on_message(const ProtocolMessage& message) {
  auto reply_all = [&](MessageBody body) {
    std::vector<Envelope> out;
    for (Role to : {Role::Alice, Role::Bob}) {
      out.push_back({to, ProtocolMessage{message.session, ProtocolKind::TwoPartyHamming,
                                         Role::Oracle, body}});
    }
    return out;
  };
  auto fail = [&](ErrorCode code, const std::string& detail) {
    pending_.erase(message.session);
    completed_.insert(message.session);
    return reply_all(Abort{code, detail});
  };

  if (std::holds_alternative<Abort>(message.body)) {
    pending_.erase(message.session);
    completed_.insert(message.session);
    return {};
  }
  const auto* request = std::get_if<HammingOracleRequest>(&message.body);
  if (message.kind != ProtocolKind::TwoPartyHamming || !request ||
      (message.sender != Role::Alice && message.sender != Role::Bob)) {
    return fail(ErrorCode::ProtocolViolation, "oracle only accepts Hamming requests from Alice or Bob");
  }
  if (completed_.contains(message.session)) {
    return {{message.sender, ProtocolMessage{message.session, ProtocolKind::TwoPartyHamming, Role::Oracle,
                                             Abort{ErrorCode::ProtocolViolation, "session already answered"}}}};
  }
  Pending& pending = pending_[message.session];
  auto& slot = message.sender == Role::Alice ? pending.alice : pending.bob;
  if (slot) return fail(ErrorCode::ProtocolViolation, "duplicate Hamming request");
  slot = request->code;
  if (!pending.alice || !pending.bob) return {};

  if (!oracle_) return fail(ErrorCode::OracleUnavailable, "no secure Hamming oracle configured");
  const BinaryCode alice = *pending.alice;
  const BinaryCode bob = *pending.bob;
  if (alice.k() != bob.k() || alice.bit_count() != bob.bit_count()) {
    return fail(ErrorCode::DimensionMismatch, "ring codes differ in k or length");
  }
  std::int64_t distance = 0;
  try {
    distance = oracle_->distance(alice, bob);
  } catch (const std::exception& e) {
    return fail(ErrorCode::OracleUnavailable, e.what());
  }
  pending_.erase(message.session);
  completed_.insert(message.session);
  return reply_all(HammingOracleResponse{static_cast<std::uint64_t>(distance),
                                         static_cast<std::uint32_t>(alice.symbol_count())});
}

}  // namespace smh
