#include "smh/driver.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <map>
#include <mutex>
#include <thread>

#include "smh/host.hpp"
#include "smh/wire.hpp"

namespace smh {

namespace {

constexpr int kMaxLocalSteps = 64;
constexpr std::chrono::seconds kTcpTimeout{120};

Role third_party_of(ProtocolKind kind) { return has_third_party(kind) ? Role::Charlie : Role::Oracle; }

PartyInputs alice_inputs(ProtocolKind kind, const std::vector<double>& x1, const SessionConfig& config,
                         const Seed& seed, DriveOptions& options) {
  if (!options.matrices) options.matrices = std::make_shared<MatrixStore>();
  PartyInputs inputs;
  inputs.x = x1;
  inputs.material = options.material;
  inputs.matrices = options.matrices;
  if (kind == ProtocolKind::PublicA3P && !options.material && config.M > 0 && !x1.empty()) {
    inputs.public_matrix = publish_public_matrix(*options.matrices, public_matrix_seed(seed),
                                                 static_cast<std::size_t>(config.M), x1.size(), config.delta);
  }
  return inputs;
}

void check_inputs(const std::vector<double>& x1, const std::vector<double>& x2) {
  if (x1.size() != x2.size()) {
    throw DimensionMismatch("input vectors differ in length: " + std::to_string(x1.size()) + " vs " +
                            std::to_string(x2.size()));
  }
}

DistanceEstimate finished_estimate(Role role, Phase phase, const std::optional<DistanceEstimate>& estimate,
                                   const std::optional<ErrorCode>& reason, const std::string& detail) {
  if (phase == Phase::Aborted) {
    throw_error(reason.value_or(ErrorCode::ProtocolViolation),
                std::string(to_string(role)) + " aborted: " + detail);
  }
  if (phase != Phase::Done || !estimate) {
    throw ProtocolViolation(std::string(to_string(role)) + " stopped in phase " + std::string(to_string(phase)));
  }
  return *estimate;
}

}  // namespace

SessionId session_id_for(const Seed& seed, ProtocolKind kind) {
  const Seed digest = derive_seed(seed, "session", {static_cast<std::uint64_t>(kind)});
  SessionId session{};
  std::copy_n(digest.begin(), session.size(), session.begin());
  return session;
}

Seed public_matrix_seed(const Seed& seed) { return derive_seed(seed, "public-matrix"); }

MatrixDigest publish_public_matrix(MatrixStore& store, const Seed& matrix_seed, std::size_t rows,
                                   std::size_t cols, double delta) {
  // Only A is used; k = 2 is the cheapest valid modulus for the throwaway dither.
  const HashKey key = generate_key(2, rows, cols, matrix_seed, delta);
  return store.put(rows, cols, std::vector<double>(key.matrix().begin(), key.matrix().end()));
}

RunResult drive_local(ProtocolKind kind, const std::vector<double>& x1, const std::vector<double>& x2,
                      const SessionConfig& config, const Seed& seed, DriveOptions options) {
  check_inputs(x1, x2);
  RunResult run;
  run.session = session_id_for(seed, kind);
  PartyInputs inputs = alice_inputs(kind, x1, config, seed, options);
  HammingBroker broker(options.oracle ? options.oracle : std::make_shared<HonestBrokerOracle>());

  std::map<Role, SessionState> sessions;
  std::deque<Envelope> queue;
  Transition started = start_session(Role::Alice, kind, config, std::move(inputs), derive_seed(seed, "alice"),
                                     run.session);
  sessions[Role::Alice] = std::move(started.state);
  queue.insert(queue.end(), started.outgoing.begin(), started.outgoing.end());

  for (int step = 0; !queue.empty(); ++step) {
    if (step > kMaxLocalSteps) throw ProtocolViolation("local run did not terminate");
    Envelope envelope = std::move(queue.front());
    queue.pop_front();
    Frame frame = encode_message(envelope.message);
    const ProtocolMessage message = decode_message(frame);
    run.transcript.push_back({message.sender, envelope.to, std::move(frame)});

    if (envelope.to == Role::Oracle) {
      for (auto& reply : broker.on_message(message)) queue.push_back(std::move(reply));
      continue;
    }
    auto it = sessions.find(envelope.to);
    if (it == sessions.end()) {
      if (std::holds_alternative<Abort>(message.body)) continue;
      PartyInputs passive;
      if (envelope.to == Role::Bob) {
        passive.x = x2;
        passive.matrices = options.matrices;
      }
      SessionState state = accept_session(envelope.to, message, std::move(passive), config.mode,
                                          config.saturation_margin);
      it = sessions.emplace(envelope.to, std::move(state)).first;
    }
    Transition t = on_message(it->second, message);
    it->second = std::move(t.state);
    queue.insert(queue.end(), t.outgoing.begin(), t.outgoing.end());
  }

  for (Role role : {Role::Alice, Role::Bob}) {
    auto it = sessions.find(role);
    if (it == sessions.end()) throw ProtocolViolation(std::string(to_string(role)) + " never joined the session");
  }
  const SessionState& alice = sessions.at(Role::Alice);
  const SessionState& bob = sessions.at(Role::Bob);
  run.alice = finished_estimate(Role::Alice, alice.phase, alice.result, alice.abort_reason, alice.abort_detail);
  run.bob = finished_estimate(Role::Bob, bob.phase, bob.result, bob.abort_reason, bob.abort_detail);
  if (has_third_party(kind)) run.reported_mean = alice.observed_mean;
  return run;
}

std::pair<DistanceEstimate, DistanceEstimate> run_two_party_hamming(
    const std::vector<double>& x1, const std::vector<double>& x2, const SessionConfig& config,
    std::shared_ptr<SecureHammingOracle> oracle, const Seed& seed, std::optional<KeyMaterial> material) {
  if (!oracle) throw OracleUnavailable("no secure Hamming oracle provided");
  DriveOptions options;
  options.oracle = std::move(oracle);
  options.material = std::move(material);
  RunResult run = drive_local(ProtocolKind::TwoPartyHamming, x1, x2, config, seed, std::move(options));
  return {run.alice, run.bob};
}

RunResult drive_tcp(ProtocolKind kind, const std::vector<double>& x1, const std::vector<double>& x2,
                    const SessionConfig& config, const Seed& seed, DriveOptions options) {
  check_inputs(x1, x2);
  RunResult run;
  run.session = session_id_for(seed, kind);
  PartyInputs inputs = alice_inputs(kind, x1, config, seed, options);
  const Role third = third_party_of(kind);

  std::mutex transcript_mutex;
  auto record = [&](const HostEvent& event) {
    if (event.type != HostEvent::Type::FrameSent || event.session != run.session) return;
    std::lock_guard lock(transcript_mutex);
    run.transcript.push_back({event.from, event.to, Frame(event.frame.begin(), event.frame.end())});
  };

  struct Server {
    std::unique_ptr<TcpListener> listener;
    std::unique_ptr<SessionHost> host;
    std::thread acceptor;

    void serve() {
      acceptor = std::thread([this] {
        while (auto endpoint = listener->accept()) {
          try {
            host->attach(endpoint);
          } catch (const Error&) {
            endpoint->close();
          }
        }
      });
    }
    void shutdown() {
      if (listener) listener->shutdown();
      if (acceptor.joinable()) acceptor.join();
      if (host) host->stop();
    }
  };

  const Address loopback{"127.0.0.1", 0};
  Server third_server;
  Address third_address;
  if (options.third_party) {
    third_address = *options.third_party;
  } else {
    HostOptions third_options;
    third_options.accept_charlie = has_third_party(kind);
    if (!has_third_party(kind)) {
      third_options.oracle = options.oracle ? options.oracle : std::make_shared<HonestBrokerOracle>();
    }
    third_options.observer = record;
    third_server.listener = std::make_unique<TcpListener>(loopback);
    third_server.host = std::make_unique<SessionHost>(std::move(third_options));
    third_address = third_server.listener->local_address();
    third_server.serve();
  }

  HostOptions bob_options;
  bob_options.accept_bob = true;
  bob_options.bob_inputs = [&](const KeyShare&) {
    PartyInputs passive;
    passive.x = x2;
    passive.matrices = options.matrices;
    return passive;
  };
  bob_options.mode = config.mode;
  bob_options.saturation_margin = config.saturation_margin;
  bob_options.observer = record;
  Server bob_server;
  bob_server.listener = std::make_unique<TcpListener>(loopback);
  bob_server.host = std::make_unique<SessionHost>(std::move(bob_options));
  bob_server.serve();

  HostOptions alice_options;
  alice_options.observer = record;
  SessionHost alice(std::move(alice_options));

  auto finish = [&] {
    alice.stop();
    bob_server.shutdown();
    third_server.shutdown();
  };

  std::optional<SessionOutcome> alice_outcome;
  std::optional<SessionOutcome> bob_outcome;
  try {
    bob_server.host->attach(tcp_connect(third_address), {third});
    alice.attach(tcp_connect(bob_server.listener->local_address()), {Role::Bob});
    alice.attach(tcp_connect(third_address), {third});
    alice.start(Role::Alice, kind, config, std::move(inputs), derive_seed(seed, "alice"), run.session);
    alice_outcome = alice.wait(run.session, Role::Alice, kTcpTimeout);
    bob_outcome = bob_server.host->wait(run.session, Role::Bob, kTcpTimeout);
  } catch (...) {
    finish();
    throw;
  }
  finish();

  if (!alice_outcome || !bob_outcome) throw TransportClosed("TCP run timed out");
  run.alice = finished_estimate(Role::Alice, alice_outcome->phase, alice_outcome->estimate,
                                alice_outcome->abort_reason, alice_outcome->abort_detail);
  run.bob = finished_estimate(Role::Bob, bob_outcome->phase, bob_outcome->estimate, bob_outcome->abort_reason,
                              bob_outcome->abort_detail);
  if (has_third_party(kind)) run.reported_mean = alice_outcome->observed_mean;
  return run;
}

}  // namespace smh
