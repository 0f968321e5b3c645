#include "smh/host.hpp"

#include <fmt/format.h>

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <thread>
#include <utility>
#include <variant>

#include "smh/wire.hpp"

namespace smh {

namespace {

using SessionKey = std::pair<SessionId, Role>;

struct Inbound {
  std::shared_ptr<Endpoint> from;  // null for local delivery
  Frame frame;
};

struct Install {
  Transition transition;
};

struct Route {
  std::shared_ptr<Endpoint> endpoint;
  std::vector<Role> roles;
};

struct Closed {
  std::shared_ptr<Endpoint> endpoint;
  std::string reason;
};

using Item = std::variant<Inbound, Install, Route, Closed>;

std::vector<Role> receivers_of(const ProtocolMessage& message) {
  switch (message.body.index()) {
    case 0: return {Role::Bob};
    case 1: return {Role::Charlie};
    case 2: return {Role::Alice, Role::Bob};
    case 3: return {Role::Oracle};
    case 4: return {Role::Alice, Role::Bob};
    default: break;
  }
  std::vector<Role> all;
  for (Role r : {Role::Alice, Role::Bob, Role::Charlie, Role::Oracle}) {
    if (r != message.sender) all.push_back(r);
  }
  return all;
}

SessionOutcome outcome_of(const SessionState& state) {
  return SessionOutcome{state.session, state.role,          state.kind,         state.phase,
                        state.result,  state.observed_mean, state.abort_reason, state.abort_detail};
}

}  // namespace

struct SessionHost::Impl {
  explicit Impl(HostOptions opts) : options(std::move(opts)), broker(options.oracle) {}

  HostOptions options;
  HammingBroker broker;

  mutable std::mutex mutex;
  std::condition_variable inbox_ready;
  std::condition_variable outcome_changed;
  std::deque<Item> inbox;
  bool stopping = false;
  std::vector<std::shared_ptr<Endpoint>> endpoints;
  std::vector<std::thread> readers;
  std::map<SessionKey, SessionOutcome> outcome_table;
  std::thread dispatcher;

  // Dispatcher-owned.
  std::map<SessionKey, SessionState> sessions;
  std::map<SessionKey, std::shared_ptr<Endpoint>> routes;
  std::map<Role, std::shared_ptr<Endpoint>> defaults;

  void post(Item item) {
    std::lock_guard lock(mutex);
    inbox.push_back(std::move(item));
    inbox_ready.notify_one();
  }

  void emit(HostEvent::Type type, const SessionId& session, Role from, Role to,
            std::span<const std::uint8_t> frame, std::string detail = {}) {
    if (!options.observer) return;
    options.observer(HostEvent{type, session, from, to, frame, std::move(detail)});
  }

  void run() {
    for (;;) {
      Item item;
      {
        std::unique_lock lock(mutex);
        inbox_ready.wait(lock, [&] { return stopping || !inbox.empty(); });
        if (inbox.empty()) return;
        item = std::move(inbox.front());
        inbox.pop_front();
      }
      try {
        std::visit([&](auto& value) { handle(value); }, item);
      } catch (const std::exception& e) {
        emit(HostEvent::Type::FrameRejected, SessionId{}, Role::Alice, Role::Alice, {}, e.what());
      }
    }
  }

  void store(SessionState state) {
    const SessionKey key{state.session, state.role};
    const bool was_finished = sessions.contains(key) && sessions.at(key).finished();
    {
      std::lock_guard lock(mutex);
      outcome_table[key] = outcome_of(state);
    }
    outcome_changed.notify_all();
    if (state.finished() && !was_finished) {
      std::string detail(to_string(state.phase));
      if (state.abort_reason) {
        detail += " " + std::string(to_string(*state.abort_reason)) + ": " + state.abort_detail;
      } else if (state.result) {
        detail += " estimate=" + (state.result->value ? fmt::format("{:.9g}", *state.result->value) : "SATURATED");
        detail += fmt::format(" mean_lee={}/{}", state.result->mean_lee.numerator(), state.result->mean_lee.denominator());
      } else if (state.observed_mean) {
        detail += fmt::format(" mean_lee={}/{}", state.observed_mean->numerator(), state.observed_mean->denominator());
      }
      emit(HostEvent::Type::SessionFinished, state.session, state.role, state.role, {}, detail);
    }
    sessions.insert_or_assign(key, std::move(state));
  }

  std::shared_ptr<Endpoint> route_to(const SessionId& session, Role to) const {
    if (auto it = routes.find({session, to}); it != routes.end()) return it->second;
    if (auto it = defaults.find(to); it != defaults.end()) return it->second;
    return nullptr;
  }

  bool accepts_locally(Role role) const {
    return (role == Role::Bob && options.accept_bob) || (role == Role::Charlie && options.accept_charlie) ||
           (role == Role::Oracle && options.oracle);
  }

  void apply(Transition transition) {
    const SessionId session = transition.state.session;
    const Role self = transition.state.role;
    if (transition.failure) {
      emit(HostEvent::Type::FrameRejected, session, self, self, {}, transition.failure_detail);
    }
    store(std::move(transition.state));
    for (auto& envelope : transition.outgoing) send(envelope, SessionKey{session, self});
  }

  // Sends one envelope. `owner` is the local session that produced it, if any.
  void send(const Envelope& envelope, std::optional<SessionKey> owner) {
    const ProtocolMessage& message = envelope.message;
    Frame frame = encode_message(message);
    const bool local_target = sessions.contains({message.session, envelope.to}) ||
                              (!route_to(message.session, envelope.to) && accepts_locally(envelope.to));
    emit(HostEvent::Type::FrameSent, message.session, message.sender, envelope.to, frame);
    if (local_target) {
      post(Inbound{nullptr, std::move(frame)});
      return;
    }
    auto endpoint = route_to(message.session, envelope.to);
    std::string failure;
    if (!endpoint) {
      failure = "no route to " + std::string(to_string(envelope.to));
    } else {
      try {
        endpoint->send(frame);
        return;
      } catch (const TransportClosed& e) {
        failure = e.what();
      }
    }
    if (std::holds_alternative<Abort>(message.body) || !owner) return;
    if (auto it = sessions.find(*owner); it != sessions.end() && !it->second.finished()) {
      apply(abort_session(it->second, ErrorCode::TransportClosed, failure));
    }
  }

  // Role this host answers as when a frame cannot be tied to a local session.
  std::optional<Role> responder_for(ProtocolKind kind) const {
    if (has_third_party(kind) && options.accept_charlie) return Role::Charlie;
    if (!has_third_party(kind) && options.oracle) return Role::Oracle;
    if (options.accept_bob) return Role::Bob;
    return std::nullopt;
  }

  void reply_abort(const std::shared_ptr<Endpoint>& to, const SessionId& session, ProtocolKind kind,
                   ErrorCode code, const std::string& detail) {
    if (!to) return;
    const auto responder = responder_for(kind);
    if (!responder) return;
    try {
      const Frame frame =
          encode_message(ProtocolMessage{session, kind, *responder, Abort{code, detail.substr(0, 1024)}});
      emit(HostEvent::Type::FrameSent, session, *responder, *responder, frame, detail);
      to->send(frame);
    } catch (const Error&) {
    }
  }

  void handle(Inbound& inbound) {
    ProtocolMessage message;
    try {
      message = decode_message(inbound.frame);
    } catch (const DecodeFailure& failure) {
      on_malformed(inbound, failure);
      return;
    }
    emit(HostEvent::Type::FrameReceived, message.session, message.sender, message.sender, inbound.frame);
    if (inbound.from) routes[{message.session, message.sender}] = inbound.from;

    const bool for_oracle = options.oracle && message.kind == ProtocolKind::TwoPartyHamming &&
                            message.sender != Role::Oracle &&
                            (std::holds_alternative<HammingOracleRequest>(message.body) ||
                             (std::holds_alternative<Abort>(message.body) &&
                              !sessions.contains({message.session, Role::Alice}) &&
                              !sessions.contains({message.session, Role::Bob})));
    if (for_oracle) {
      for (auto& envelope : broker.on_message(message)) send(envelope, std::nullopt);
      return;
    }

    std::vector<SessionKey> targets;
    for (Role role : receivers_of(message)) {
      if (sessions.contains({message.session, role})) targets.push_back({message.session, role});
    }
    if (targets.empty()) {
      auto accepted = accept(inbound, message);
      if (!accepted) return;
      targets.push_back(*accepted);
    }
    for (const auto& key : targets) {
      Transition transition = on_message(sessions.at(key), message);
      // A rejection the session did not answer itself, e.g. a message for a finished session.
      const bool unanswered =
          transition.failure && transition.outgoing.empty() && !std::holds_alternative<Abort>(message.body);
      const ErrorCode code = transition.failure.value_or(ErrorCode::ProtocolViolation);
      const std::string detail = transition.failure_detail;
      apply(std::move(transition));
      if (unanswered) reply_abort(inbound.from, message.session, message.kind, code, detail);
    }
  }

  std::optional<SessionKey> accept(const Inbound& inbound, const ProtocolMessage& message) {
    std::optional<Role> role;
    if (std::holds_alternative<KeyShare>(message.body) && options.accept_bob) role = Role::Bob;
    if (std::holds_alternative<HashSubmission>(message.body) && options.accept_charlie) role = Role::Charlie;
    if (!role) {
      if (!std::holds_alternative<Abort>(message.body)) {
        emit(HostEvent::Type::FrameRejected, message.session, message.sender, message.sender, inbound.frame,
             "no session for this message");
        reply_abort(inbound.from, message.session, message.kind, ErrorCode::ProtocolViolation,
                    "unknown session");
      }
      return std::nullopt;
    }
    try {
      PartyInputs inputs;
      if (*role == Role::Bob) {
        if (!options.bob_inputs) throw InvalidParameter("this host has no input for Bob");
        inputs = options.bob_inputs(std::get<KeyShare>(message.body));
      }
      SessionState state =
          accept_session(*role, message, std::move(inputs), options.mode, options.saturation_margin);
      const SessionKey key{state.session, state.role};
      store(std::move(state));
      return key;
    } catch (const Error& e) {
      emit(HostEvent::Type::FrameRejected, message.session, message.sender, *role, inbound.frame, e.what());
      reply_abort(inbound.from, message.session, message.kind, e.code(), e.what());
      return std::nullopt;
    }
  }

  void on_malformed(const Inbound& inbound, const DecodeFailure& failure) {
    const auto header = peek_header(inbound.frame);
    const SessionId session = header ? header->session : SessionId{};
    emit(HostEvent::Type::FrameRejected, session, Role::Alice, Role::Alice, inbound.frame, failure.what());
    if (!header) return;
    std::vector<SessionKey> affected;
    for (const auto& [key, state] : sessions) {
      if (key.first == session && !state.finished()) affected.push_back(key);
    }
    for (const auto& key : affected) apply(abort_session(sessions.at(key), ErrorCode::DecodeError, failure.what()));
    if (affected.empty()) {
      reply_abort(inbound.from, session, static_cast<ProtocolKind>(header->msg_type >> 6),
                  ErrorCode::DecodeError, failure.what());
    }
  }

  void handle(Install& install) { apply(std::move(install.transition)); }

  void handle(Route& route) {
    for (Role role : route.roles) defaults[role] = route.endpoint;
  }

  void handle(Closed& closed) {
    const auto& gone = closed.endpoint;
    std::vector<SessionKey> affected;
    for (const auto& [key, state] : sessions) {
      if (state.finished()) continue;
      for (Role peer : peers_of(state.role, state.kind)) {
        if (route_to(key.first, peer) == gone) {
          affected.push_back(key);
          break;
        }
      }
    }
    std::erase_if(routes, [&](const auto& entry) { return entry.second == gone; });
    std::erase_if(defaults, [&](const auto& entry) { return entry.second == gone; });
    for (const auto& key : affected) {
      auto it = sessions.find(key);
      if (it != sessions.end() && !it->second.finished()) {
        apply(abort_session(it->second, ErrorCode::TransportClosed,
                            gone->describe() + " closed: " + closed.reason));
      }
    }
  }

  void read_loop(std::shared_ptr<Endpoint> endpoint) {
    std::string reason = "connection closed";
    try {
      while (auto frame = endpoint->receive()) post(Inbound{endpoint, std::move(*frame)});
    } catch (const Error& e) {
      reason = e.what();
      endpoint->close();
    }
    post(Closed{endpoint, reason});
  }
};

SessionHost::SessionHost(HostOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {
  impl_->dispatcher = std::thread([this] { impl_->run(); });
}

SessionHost::~SessionHost() { stop(); }

void SessionHost::attach(std::shared_ptr<Endpoint> endpoint, std::vector<Role> default_for) {
  if (!endpoint) throw InvalidParameter("cannot attach a null endpoint");
  std::lock_guard lock(impl_->mutex);
  if (impl_->stopping) throw TransportClosed("host is stopping");
  impl_->endpoints.push_back(endpoint);
  // Routes are dispatcher state, so they travel through the inbox ahead of any frame.
  impl_->inbox.push_back(Route{endpoint, std::move(default_for)});
  impl_->inbox_ready.notify_one();
  impl_->readers.emplace_back([impl = impl_.get(), endpoint] { impl->read_loop(endpoint); });
}

void SessionHost::start(Role role, ProtocolKind kind, const SessionConfig& config, PartyInputs inputs,
                        const Seed& seed, const SessionId& session) {
  Transition transition = start_session(role, kind, config, std::move(inputs), seed, session);
  impl_->post(Install{std::move(transition)});
}

std::optional<SessionOutcome> SessionHost::wait(const SessionId& session, Role role,
                                                std::chrono::milliseconds timeout) {
  std::unique_lock lock(impl_->mutex);
  const SessionKey key{session, role};
  const bool done = impl_->outcome_changed.wait_for(lock, timeout, [&] {
    auto it = impl_->outcome_table.find(key);
    return it != impl_->outcome_table.end() &&
           (it->second.phase == Phase::Done || it->second.phase == Phase::Aborted);
  });
  if (!done) return std::nullopt;
  return impl_->outcome_table.at(key);
}

std::vector<SessionOutcome> SessionHost::outcomes() const {
  std::lock_guard lock(impl_->mutex);
  std::vector<SessionOutcome> out;
  for (const auto& [key, outcome] : impl_->outcome_table) out.push_back(outcome);
  return out;
}

void SessionHost::stop() {
  std::vector<std::shared_ptr<Endpoint>> endpoints;
  {
    std::lock_guard lock(impl_->mutex);
    if (impl_->stopping) return;
    impl_->stopping = true;
    endpoints = impl_->endpoints;
    impl_->inbox_ready.notify_all();
  }
  for (auto& endpoint : endpoints) endpoint->close();
  for (auto& reader : impl_->readers) reader.join();
  if (impl_->dispatcher.joinable()) impl_->dispatcher.join();
}

}  // namespace smh
