#include <doctest.h>

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cstring>

#include "smh/driver.hpp"
#include "smh/errors.hpp"
#include "smh/protocol.hpp"
#include "smh/simulator.hpp"
#include "smh/wire.hpp"
#include "support.hpp"

using namespace smh;
using namespace smh::testing;

namespace {

constexpr ProtocolKind kAllKinds[] = {ProtocolKind::FullKey3P, ProtocolKind::PublicA3P,
                                      ProtocolKind::TwoPartyHamming, ProtocolKind::Obfuscated3P};

SessionConfig config_of(int k, std::int64_t M, std::int64_t padding = 0) {
  SessionConfig config;
  config.k = k;
  config.M = M;
  config.padding = padding;
  return config;
}

SessionId sid(std::uint8_t fill) {
  SessionId id{};
  id.fill(fill);
  return id;
}

ProtocolMessage msg(const SessionId& session, ProtocolKind kind, Role sender, MessageBody body) {
  return ProtocolMessage{session, kind, sender, std::move(body)};
}

Rational brute_mean_lee(const HashVector& a, const HashVector& b) {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int diff = std::abs(static_cast<int>(a.components()[i]) - static_cast<int>(b.components()[i]));
    total += std::min(diff, a.k() - diff);
  }
  return Rational(total, static_cast<std::int64_t>(a.size()));
}

bool contains_double(const Frame& frame, double value) {
  std::uint64_t bits;
  std::memcpy(&bits, &value, 8);
  std::uint8_t be[8];
  for (int i = 0; i < 8; ++i) be[i] = static_cast<std::uint8_t>(bits >> (56 - 8 * i));
  return std::search(frame.begin(), frame.end(), std::begin(be), std::end(be)) != frame.end();
}

std::pair<std::vector<double>, std::vector<double>> pair_at(std::size_t n, double distance, std::uint64_t s) {
  DeterministicRng rng(seed_of(s));
  return input_pair(n, distance, rng);
}

}  // namespace

TEST_SUITE("protocol") {
  TEST_CASE("Alice starts by sharing the key and submitting her hash") {
    const auto [x1, x2] = pair_at(5, 1.0, 1);
    const Transition t = start_session(Role::Alice, ProtocolKind::FullKey3P, config_of(8, 20), {.x = x1},
                                       seed_of(2), sid(1));
    CHECK(t.state.phase == Phase::AwaitResult);
    REQUIRE(t.outgoing.size() == 2);
    CHECK(t.outgoing[0].to == Role::Bob);
    CHECK(std::holds_alternative<KeyShare>(t.outgoing[0].message.body));
    CHECK(t.outgoing[1].to == Role::Charlie);
    const auto& submitted = std::get<HashSubmission>(t.outgoing[1].message.body).hash;
    CHECK(submitted == hash(*t.state.secrets->key, x1));
    const auto& share = std::get<KeyShare>(t.outgoing[0].message.body);
    CHECK(std::get<std::vector<double>>(share.matrix).size() == 100);
    CHECK_FALSE(share.permutation.has_value());
    CHECK_FALSE(share.padding_alice.has_value());
  }

  TEST_CASE("key shares carry what each protocol needs") {
    const auto [x1, x2] = pair_at(4, 1.0, 3);
    auto store = std::make_shared<MatrixStore>();
    PartyInputs pub_inputs{.x = x1, .matrices = store};
    pub_inputs.public_matrix = publish_public_matrix(*store, seed_of(4), 10, 4);
    const auto pub = start_session(Role::Alice, ProtocolKind::PublicA3P, config_of(8, 10), pub_inputs,
                                   seed_of(5), sid(2));
    const auto& pub_share = std::get<KeyShare>(pub.outgoing[0].message.body);
    CHECK(std::holds_alternative<MatrixDigest>(pub_share.matrix));
    CHECK(pub_share.permutation->size() == 10);
    CHECK_FALSE(pub_share.padding_alice.has_value());

    const auto obf = start_session(Role::Alice, ProtocolKind::Obfuscated3P, config_of(8, 10, 100), {.x = x1},
                                   seed_of(5), sid(3));
    const auto& obf_share = std::get<KeyShare>(obf.outgoing[0].message.body);
    CHECK(obf_share.permutation->size() == 110);
    CHECK(obf_share.padding_alice->size() == 100);
    CHECK(obf_share.padding_bob->size() == 100);
    CHECK(std::get<HashSubmission>(obf.outgoing[1].message.body).hash.size() == 110);
    CHECK(obf.state.secrets->padding_alice.has_value());
    CHECK(obf.state.secrets->padding_bob.has_value());

    const auto ham = start_session(Role::Alice, ProtocolKind::TwoPartyHamming, config_of(8, 10), {.x = x1},
                                   seed_of(5), sid(4));
    CHECK(ham.state.phase == Phase::AwaitOracle);
    CHECK(ham.outgoing[1].to == Role::Oracle);
    CHECK(std::get<HammingOracleRequest>(ham.outgoing[1].message.body).code.bit_count() == 40);
  }

  TEST_CASE("Charlie waits passively and rejects bad setups") {
    const Transition t = start_session(Role::Charlie, ProtocolKind::FullKey3P, config_of(8, 20), {}, seed_of(1),
                                       sid(1));
    CHECK(t.state.phase == Phase::AwaitBothHashes);
    CHECK(t.outgoing.empty());
    CHECK_FALSE(t.state.secrets.has_value());
    CHECK_THROWS_AS(start_session(Role::Charlie, ProtocolKind::TwoPartyHamming, config_of(8, 20), {}, seed_of(1),
                                  sid(1)),
                    InvalidParameter);
    CHECK_THROWS_AS(start_session(Role::Charlie, ProtocolKind::FullKey3P, config_of(8, 20), {.x = {1.0}},
                                  seed_of(1), sid(1)),
                    ProtocolViolation);
    CHECK_THROWS_AS(start_session(Role::Alice, ProtocolKind::FullKey3P, config_of(7, 20), {.x = {1.0}},
                                  seed_of(1), sid(1)),
                    InvalidParameter);
    CHECK_THROWS_AS(start_session(Role::Alice, ProtocolKind::FullKey3P, config_of(8, 0), {.x = {1.0}},
                                  seed_of(1), sid(1)),
                    InvalidParameter);
    CHECK_THROWS_AS(start_session(Role::Oracle, ProtocolKind::TwoPartyHamming, config_of(8, 2), {}, seed_of(1),
                                  sid(1)),
                    InvalidParameter);
  }

  TEST_CASE("Charlie computes the exact mean Lee distance") {
    const SessionId s = sid(9);
    Transition t = start_session(Role::Charlie, ProtocolKind::FullKey3P, config_of(6, 2), {}, seed_of(1), s);
    t = on_message(t.state, msg(s, ProtocolKind::FullKey3P, Role::Alice, HashSubmission{HashVector(6, {0, 1})}));
    CHECK(t.state.phase == Phase::AwaitSecondHash);
    CHECK(t.outgoing.empty());
    t = on_message(t.state, msg(s, ProtocolKind::FullKey3P, Role::Bob, HashSubmission{HashVector(6, {3, 5})}));
    CHECK(t.state.phase == Phase::Done);
    REQUIRE(t.outgoing.size() == 2);
    std::set<Role> recipients;
    for (const auto& e : t.outgoing) {
      recipients.insert(e.to);
      const auto& result = std::get<DistanceResult>(e.message.body);
      CHECK(result.mean_lee == Rational(5, 2));
      CHECK(result.m_effective == 2);
      CHECK(e.message.sender == Role::Charlie);
    }
    CHECK(recipients == std::set<Role>{Role::Alice, Role::Bob});

    // Replays after completion are rejected and produce nothing.
    const auto replay =
        on_message(t.state, msg(s, ProtocolKind::FullKey3P, Role::Bob, HashSubmission{HashVector(6, {3, 5})}));
    CHECK(replay.failure == ErrorCode::ProtocolViolation);
    CHECK(replay.outgoing.empty());
    CHECK(replay.state.phase == Phase::Done);
  }

  TEST_CASE("out-of-order, duplicate and wrong-sender messages abort") {
    const SessionId s = sid(5);
    const auto kind = ProtocolKind::FullKey3P;
    auto charlie = start_session(Role::Charlie, kind, config_of(6, 2), {}, seed_of(1), s).state;

    auto first = on_message(charlie, msg(s, kind, Role::Alice, HashSubmission{HashVector(6, {0, 1})}));
    auto dup = on_message(first.state, msg(s, kind, Role::Alice, HashSubmission{HashVector(6, {0, 1})}));
    CHECK(dup.failure == ErrorCode::ProtocolViolation);
    CHECK(dup.state.phase == Phase::Aborted);
    CHECK(dup.outgoing.size() == 2);
    for (const auto& e : dup.outgoing) CHECK(std::holds_alternative<Abort>(e.message.body));

    auto wrong_sender = on_message(charlie, msg(s, kind, Role::Charlie, DistanceResult{Rational(1), 2}));
    CHECK(wrong_sender.failure == ErrorCode::ProtocolViolation);

    auto wrong_length = on_message(charlie, msg(s, kind, Role::Alice, HashSubmission{HashVector(6, {0, 1, 2})}));
    CHECK(wrong_length.failure == ErrorCode::DimensionMismatch);
    auto wrong_k = on_message(charlie, msg(s, kind, Role::Alice, HashSubmission{HashVector(8, {0, 1})}));
    CHECK(wrong_k.failure == ErrorCode::DimensionMismatch);

    auto other_session = on_message(charlie, msg(sid(6), kind, Role::Alice, HashSubmission{HashVector(6, {0, 1})}));
    CHECK(other_session.failure == ErrorCode::ProtocolViolation);
    auto other_kind =
        on_message(charlie, msg(s, ProtocolKind::PublicA3P, Role::Alice, HashSubmission{HashVector(6, {0, 1})}));
    CHECK(other_kind.failure == ErrorCode::ProtocolViolation);

    // Bob receiving a result before his own submission.
    const auto [x1, x2] = pair_at(3, 1.0, 8);
    auto alice = start_session(Role::Alice, kind, config_of(6, 2), {.x = x1}, seed_of(1), s);
    SessionState bob = accept_session(Role::Bob, alice.outgoing[0].message, {.x = x2});
    CHECK(bob.phase == Phase::AwaitKeyShare);
    auto early = on_message(bob, msg(s, kind, Role::Charlie, DistanceResult{Rational(1), 2}));
    CHECK(early.failure == ErrorCode::ProtocolViolation);
    CHECK(early.state.phase == Phase::Aborted);
    REQUIRE(early.outgoing.size() == 2);
    std::set<Role> notified;
    for (const auto& e : early.outgoing) notified.insert(e.to);
    CHECK(notified == std::set<Role>{Role::Alice, Role::Charlie});

    // Key share replayed to Bob after he has it.
    auto joined = on_message(bob, alice.outgoing[0].message);
    CHECK_FALSE(joined.failure.has_value());
    CHECK(joined.state.phase == Phase::AwaitResult);
    auto again = on_message(joined.state, alice.outgoing[0].message);
    CHECK(again.failure == ErrorCode::ProtocolViolation);

    // Results that cannot come from this session.
    auto bad_m = on_message(joined.state, msg(s, kind, Role::Charlie, DistanceResult{Rational(1), 3}));
    CHECK(bad_m.failure == ErrorCode::DimensionMismatch);
    auto too_far = on_message(joined.state, msg(s, kind, Role::Charlie, DistanceResult{Rational(4), 2}));
    CHECK(too_far.failure == ErrorCode::ProtocolViolation);
    auto bad_den = on_message(joined.state, msg(s, kind, Role::Charlie, DistanceResult{Rational(1, 3), 2}));
    CHECK(bad_den.failure == ErrorCode::ProtocolViolation);

    // Dimension mismatch between Bob's input and the key share.
    SessionState short_bob = accept_session(Role::Bob, alice.outgoing[0].message, {.x = {1.0}});
    CHECK(on_message(short_bob, alice.outgoing[0].message).failure == ErrorCode::DimensionMismatch);
  }

  TEST_CASE("an Abort from a peer ends the session without a reply") {
    const SessionId s = sid(3);
    auto charlie = start_session(Role::Charlie, ProtocolKind::FullKey3P, config_of(6, 2), {}, seed_of(1), s).state;
    auto t = on_message(charlie, msg(s, ProtocolKind::FullKey3P, Role::Alice, Abort{ErrorCode::IoError, "gone"}));
    CHECK(t.state.phase == Phase::Aborted);
    CHECK(t.state.abort_reason == ErrorCode::IoError);
    CHECK(t.outgoing.empty());
    auto local = abort_session(charlie, ErrorCode::TransportClosed, "lost");
    CHECK(local.state.phase == Phase::Aborted);
    CHECK(local.outgoing.size() == 2);
  }

  TEST_CASE("transcripts have the protocol's message counts") {
    const auto [x1, x2] = pair_at(6, 0.5, 11);
    const auto config = config_of(8, 30, 300);
    struct Expect {
      ProtocolKind kind;
      int key_shares, hashes, results, requests, responses;
    };
    for (const auto& e : {Expect{ProtocolKind::FullKey3P, 1, 2, 2, 0, 0},
                          Expect{ProtocolKind::PublicA3P, 1, 2, 2, 0, 0},
                          Expect{ProtocolKind::Obfuscated3P, 1, 2, 2, 0, 0},
                          Expect{ProtocolKind::TwoPartyHamming, 1, 0, 0, 2, 2}}) {
      const RunResult run = drive_local(e.kind, x1, x2, config, seed_of(12));
      int counts[6] = {};
      for (const auto& entry : run.transcript) {
        counts[decode_message(entry.frame).body.index()]++;
      }
      CAPTURE(to_string(e.kind));
      CHECK(counts[0] == e.key_shares);
      CHECK(counts[1] == e.hashes);
      CHECK(counts[2] == e.results);
      CHECK(counts[3] == e.requests);
      CHECK(counts[4] == e.responses);
      CHECK(counts[5] == 0);
      CHECK(run.transcript.size() == 5);
    }
  }

  TEST_CASE("Charlie never receives key material or inputs") {
    const auto [x1, x2] = pair_at(7, 2.0, 13);
    for (ProtocolKind kind : {ProtocolKind::FullKey3P, ProtocolKind::PublicA3P, ProtocolKind::Obfuscated3P}) {
      DriveOptions options;
      options.matrices = std::make_shared<MatrixStore>();
      const RunResult run = drive_local(kind, x1, x2, config_of(8, 25, 250), seed_of(14), options);
      // Reconstruct Alice's secrets from the key share Bob received.
      std::optional<KeyShare> share;
      for (const auto& entry : run.transcript) {
        const ProtocolMessage m = decode_message(entry.frame);
        if (const auto* s = std::get_if<KeyShare>(&m.body)) share = *s;
      }
      REQUIRE(share.has_value());
      std::vector<double> secrets(x1.begin(), x1.end());
      secrets.insert(secrets.end(), x2.begin(), x2.end());
      secrets.insert(secrets.end(), share->dither.begin(), share->dither.end());
      if (const auto* a = std::get_if<std::vector<double>>(&share->matrix)) {
        secrets.insert(secrets.end(), a->begin(), a->end());
      } else {
        const auto matrix = options.matrices->find(std::get<MatrixDigest>(share->matrix));
        REQUIRE(matrix);
        secrets.insert(secrets.end(), matrix->entries.begin(), matrix->entries.end());
      }
      int to_charlie = 0;
      for (const auto& entry : run.transcript) {
        if (entry.to != Role::Charlie) continue;
        ++to_charlie;
        const ProtocolMessage m = decode_message(entry.frame);
        CHECK(std::holds_alternative<HashSubmission>(m.body));
        for (double v : secrets) CHECK_FALSE(contains_double(entry.frame, v));
        if (share->permutation) {
          // The permutation is a u32 list; its serialization must not appear.
          Frame perm;
          for (auto index : share->permutation->mapping()) {
            for (int i = 3; i >= 0; --i) perm.push_back(static_cast<std::uint8_t>(index >> (8 * i)));
          }
          CHECK(std::search(entry.frame.begin(), entry.frame.end(), perm.begin(), perm.end()) == entry.frame.end());
        }
      }
      CHECK(to_charlie == 2);
    }
  }

  TEST_CASE("accepted Charlie state holds no secrets") {
    const auto [x1, x2] = pair_at(3, 1.0, 15);
    auto alice = start_session(Role::Alice, ProtocolKind::Obfuscated3P, config_of(8, 4, 40), {.x = x1},
                               seed_of(1), sid(7));
    const SessionState charlie = accept_session(Role::Charlie, alice.outgoing[1].message, {});
    CHECK_FALSE(charlie.secrets.has_value());
    CHECK(charlie.config.M == 44);
    CHECK_THROWS_AS(accept_session(Role::Charlie, alice.outgoing[1].message, {.x = {1.0}}), ProtocolViolation);
    CHECK_THROWS_AS(accept_session(Role::Charlie, alice.outgoing[0].message, {}), ProtocolViolation);
    CHECK_THROWS_AS(accept_session(Role::Bob, alice.outgoing[1].message, {.x = x2}), ProtocolViolation);
  }

  TEST_CASE("identical inputs give zero in every kind") {
    const auto [x1, x2] = pair_at(9, 0.0, 16);
    for (ProtocolKind kind : kAllKinds) {
      const RunResult run = drive_local(kind, x1, x1, config_of(16, 50, 500), seed_of(17));
      CHECK(run.alice.value == 0.0);
      CHECK(run.bob.value == 0.0);
      CHECK(run.alice.mean_lee == 0);
    }
  }

  TEST_CASE("runs are deterministic") {
    const auto [x1, x2] = pair_at(9, 1.5, 18);
    for (ProtocolKind kind : kAllKinds) {
      const RunResult a = drive_local(kind, x1, x2, config_of(8, 40, 400), seed_of(19));
      const RunResult b = drive_local(kind, x1, x2, config_of(8, 40, 400), seed_of(19));
      const RunResult c = drive_local(kind, x1, x2, config_of(8, 40, 400), seed_of(20));
      CHECK(a.transcript == b.transcript);
      CHECK(a.alice == b.alice);
      CHECK(a.transcript != c.transcript);
    }
  }

  TEST_CASE("all kinds agree given shared key material") {
    for (std::uint64_t scenario = 0; scenario < 20; ++scenario) {
      DeterministicRng rng(seed_of(1000 + scenario));
      const std::size_t n = 1 + rng.uniform_below(12);
      const int k = 2 * static_cast<int>(1 + rng.uniform_below(12));
      const std::int64_t M = 1 + static_cast<std::int64_t>(rng.uniform_below(60));
      const std::int64_t P = static_cast<std::int64_t>(rng.uniform_below(3)) * M;
      const auto [x1, x2] = input_pair(n, rng.uniform01() * k, rng);
      const HashKey key = generate_key(k, static_cast<std::size_t>(M), n, seed_of(2000 + scenario));
      const Rational expected = brute_mean_lee(hash(key, x1), hash(key, x2));
      const auto config = config_of(k, M, P);
      for (ProtocolKind kind : kAllKinds) {
        DriveOptions options;
        KeyMaterial material{key};
        const std::size_t total = static_cast<std::size_t>(config.submission_length(kind));
        material.permutation = Permutation::random(total, rng);
        options.material = material;
        const RunResult run = drive_local(kind, x1, x2, config, seed_of(3000 + scenario), options);
        CAPTURE(scenario);
        CAPTURE(to_string(kind));
        CHECK(run.alice.mean_lee == expected);
        CHECK(run.bob.mean_lee == expected);
        if (has_third_party(kind)) CHECK(run.reported_mean.has_value());
      }
    }
  }

  TEST_CASE("obfuscate_hash") {
    DeterministicRng rng(seed_of(30));
    const HashVector h = random_hash_vector(8, 12, rng);
    CHECK(obfuscate_hash(h, std::nullopt, Permutation::identity(12)) == h);
    const HashVector z = random_hash_vector(8, 5, rng);
    const Permutation perm = Permutation::random(17, rng);
    const HashVector out = obfuscate_hash(h, z, perm);
    CHECK(out.size() == 17);
    std::vector<std::uint32_t> joined(h.components().begin(), h.components().end());
    joined.insert(joined.end(), z.components().begin(), z.components().end());
    CHECK(out == apply_permutation(HashVector(8, joined), perm));
    CHECK_THROWS_AS(obfuscate_hash(h, z, Permutation::identity(12)), DimensionMismatch);
    CHECK_THROWS_AS(obfuscate_hash(h, random_hash_vector(6, 5, rng), perm), DimensionMismatch);
  }

  TEST_CASE("obfuscated submissions look uniform when padding dominates") {
    const int k = 8;
    // A constant hash is the worst case: all M true components are equal.
    std::vector<std::uint64_t> histogram(k, 0);
    std::uint64_t total = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
      DeterministicRng rng(seed_of(40 + s));
      const HashVector h(k, std::vector<std::uint32_t>(10, 3));
      const HashVector z = random_hash_vector(k, 100, rng);
      for (auto c : obfuscate_hash(h, z, Permutation::random(110, rng)).components()) {
        ++histogram[c];
        ++total;
      }
    }
    double chi = 0.0;
    const double expected = static_cast<double>(total) / k;
    for (auto count : histogram) chi += (count - expected) * (count - expected) / expected;
    // Padding fraction 10/11 cannot hide a constant: the test must see it.
    const double critical = boost::math::quantile(boost::math::chi_squared_distribution<double>(k - 1), 0.999);
    CHECK(chi > critical);

    std::fill(histogram.begin(), histogram.end(), 0);
    total = 0;
    for (std::uint64_t s = 0; s < 200; ++s) {
      DeterministicRng rng(seed_of(500 + s));
      const HashKey key = generate_key(k, 10, 3, seed_of(900 + s));
      const HashVector z = random_hash_vector(k, 100, rng);
      for (auto c : obfuscate_hash(hash(key, std::vector<double>{0.1, 0.2, 0.3}), z, Permutation::random(110, rng))
                        .components()) {
        ++histogram[c];
        ++total;
      }
    }
    chi = 0.0;
    for (auto count : histogram) chi += (count - expected) * (count - expected) / expected;
    CHECK(chi <= critical);
  }

  TEST_CASE("deobfuscate_distance") {
    // Lee distances (1, 3) on the true components and (2) on the padding.
    CHECK(deobfuscate_distance(Rational(2), Rational(2), 2, 1) == Rational(2));
    CHECK(deobfuscate_distance(Rational(7, 3), Rational(5), 2, 0) == Rational(7, 3));
    CHECK_THROWS_AS(deobfuscate_distance(Rational(1), Rational(1), 0, 1), InvalidParameter);
    CHECK_THROWS_AS(deobfuscate_distance(Rational(1), Rational(1), 1, -1), InvalidParameter);
    CHECK_THROWS_AS(deobfuscate_distance(Rational(0), Rational(3), 1, 1), InvalidInput);

    DeterministicRng rng(seed_of(50));
    for (int i = 0; i < 2000; ++i) {
      const int k = 2 * static_cast<int>(1 + rng.uniform_below(40));
      const std::size_t M = 1 + rng.uniform_below(50);
      const std::size_t P = rng.uniform_below(200);
      const HashVector h1 = random_hash_vector(k, M, rng);
      const HashVector h2 = random_hash_vector(k, M, rng);
      std::optional<HashVector> z1, z2;
      Rational d_tilde(0);
      if (P > 0) {
        z1 = random_hash_vector(k, P, rng);
        z2 = random_hash_vector(k, P, rng);
        d_tilde = brute_mean_lee(*z1, *z2);
      }
      const Permutation perm = Permutation::random(M + P, rng);
      const Rational d = brute_mean_lee(obfuscate_hash(h1, z1, perm), obfuscate_hash(h2, z2, perm));
      CHECK(deobfuscate_distance(d, d_tilde, static_cast<std::int64_t>(M), static_cast<std::int64_t>(P)) ==
            brute_mean_lee(h1, h2));
    }
  }

  TEST_CASE("Charlie sees the plateau in the obfuscated protocol") {
    const int k = 8;
    const std::int64_t M = 40;
    const auto config = config_of(k, M, 10 * M);
    const double band = 3.0 * (k / 2.0) / (2.0 * std::sqrt(11.0 * M));
    int inside = 0;
    const int runs = 100;
    for (int i = 0; i < runs; ++i) {
      DeterministicRng rng(seed_of(60 + i));
      const auto x1 = random_reals(6, rng);
      const auto x2 = random_reals(6, rng);
      const RunResult run = drive_local(ProtocolKind::Obfuscated3P, x1, x2, config, seed_of(700 + i));
      REQUIRE(run.reported_mean.has_value());
      if (std::abs(to_real(*run.reported_mean) - k / 4.0) <= band) ++inside;
      CHECK(run.alice.mean_lee != *run.reported_mean);
    }
    CHECK(inside >= 99);
  }

  TEST_CASE("Hamming broker and oracle") {
    const SessionId s = sid(4);
    const auto kind = ProtocolKind::TwoPartyHamming;
    HammingBroker broker(std::make_shared<HonestBrokerOracle>());
    const auto c1 = encode_lee_to_binary(HashVector(6, {0, 1}));
    const auto c2 = encode_lee_to_binary(HashVector(6, {3, 5}));
    CHECK(broker.on_message(msg(s, kind, Role::Alice, HammingOracleRequest{c1})).empty());
    const auto replies = broker.on_message(msg(s, kind, Role::Bob, HammingOracleRequest{c2}));
    REQUIRE(replies.size() == 2);
    for (const auto& r : replies) {
      CHECK(std::get<HammingOracleResponse>(r.message.body).distance == 5);
      CHECK(std::get<HammingOracleResponse>(r.message.body).symbols == 2);
    }
    const auto late = broker.on_message(msg(s, kind, Role::Bob, HammingOracleRequest{c2}));
    REQUIRE(late.size() == 1);
    CHECK(std::holds_alternative<Abort>(late[0].message.body));

    // Alice turns d = 5 over M = 2 into the mean 5/2.
    const auto [x1, x2] = pair_at(2, 1.0, 70);
    auto alice = start_session(Role::Alice, kind, config_of(6, 2), {.x = x1}, seed_of(1), s);
    auto done = on_message(alice.state, replies[0].message);
    REQUIRE(done.estimate.has_value());
    CHECK(done.estimate->mean_lee == Rational(5, 2));
    // 5/2 is past the plateau cutoff k/4 - k/400 for k = 6.
    CHECK(done.estimate->saturated());
    auto bad = on_message(alice.state, msg(s, kind, Role::Oracle, HammingOracleResponse{7, 2}));
    CHECK(bad.failure == ErrorCode::ProtocolViolation);

    HammingBroker mismatched(std::make_shared<HonestBrokerOracle>());
    mismatched.on_message(msg(sid(8), kind, Role::Alice, HammingOracleRequest{c1}));
    const auto mm = mismatched.on_message(
        msg(sid(8), kind, Role::Bob, HammingOracleRequest{encode_lee_to_binary(HashVector(8, {1, 2}))}));
    REQUIRE(mm.size() == 2);
    CHECK(std::get<Abort>(mm[0].message.body).reason == ErrorCode::DimensionMismatch);
  }

  TEST_CASE("two-party Hamming equals the direct mean Lee distance") {
    struct FailingOracle : SecureHammingOracle {
      std::int64_t distance(const BinaryCode&, const BinaryCode&) override { throw std::runtime_error("down"); }
    };
    const auto [x1, x2] = pair_at(5, 2.0, 80);
    const HashKey key = generate_key(8, 64, 5, seed_of(81));
    const auto [a, b] = run_two_party_hamming(x1, x2, config_of(8, 64), std::make_shared<HonestBrokerOracle>(),
                                              seed_of(82), KeyMaterial{key});
    CHECK(a.mean_lee == mean_lee_distance(hash(key, x1), hash(key, x2)));
    CHECK(b.mean_lee == a.mean_lee);
    const auto [z1, z2] = run_two_party_hamming(x1, x1, config_of(8, 64), std::make_shared<HonestBrokerOracle>(),
                                                seed_of(82));
    CHECK(z1.value == 0.0);
    CHECK_THROWS_AS(run_two_party_hamming(x1, x2, config_of(8, 64), nullptr, seed_of(82)), OracleUnavailable);
    CHECK_THROWS_AS(
        run_two_party_hamming(x1, x2, config_of(8, 64), std::make_shared<FailingOracle>(), seed_of(82)),
        OracleUnavailable);
  }

  TEST_CASE("end-to-end estimate at distance 3 under the planned parameters") {
    const auto params = plan_parameters(5, 1, 10);
    CHECK(params.k == 28);
    CHECK(params.M == 2989);
    const auto config = SessionConfig::from_plan(params);
    int inside = 0;
    const int runs = 12;
    for (int i = 0; i < runs; ++i) {
      const auto [x1, x2] = pair_at(10, 3.0, 90 + i);
      const RunResult run = drive_local(ProtocolKind::FullKey3P, x1, x2, config, seed_of(190 + i));
      const double e = *run.alice.value;
      CHECK(run.bob.value == run.alice.value);
      if (e >= 2.0 && e <= 4.0) ++inside;
    }
    CHECK(inside == runs);
  }

  TEST_CASE("drive_local rejects mismatched inputs") {
    CHECK_THROWS_AS(drive_local(ProtocolKind::FullKey3P, {1.0, 2.0}, {1.0}, config_of(8, 4), seed_of(1)),
                    DimensionMismatch);
    KeyMaterial wrong{generate_key(8, 5, 2, seed_of(2))};
    DriveOptions options;
    options.material = wrong;
    CHECK_THROWS_AS(drive_local(ProtocolKind::FullKey3P, {1.0, 2.0}, {1.0, 2.0}, config_of(8, 4), seed_of(1), options),
                    DimensionMismatch);
  }
}
