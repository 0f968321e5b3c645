// smh: planning, key management, hashing, protocol runs and experiments.
//
// Output is line-oriented key=value. Exit codes: 0 success, 1 other failure,
// 2 invalid flags or inputs, 3 transport or bind failure.

#include <fmt/format.h>
#include <signal.h>

#include <CLI11.hpp>
#include <atomic>
#include <condition_variable>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "smh/analysis.hpp"
#include "smh/driver.hpp"
#include "smh/host.hpp"
#include "smh/io.hpp"
#include "smh/simulator.hpp"
#include "smh/wire.hpp"

using namespace smh;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitTransport = 3;

void print(const std::string& key, const std::string& value) { std::cout << key << '=' << value << '\n'; }

std::string real(double v) { return fmt::format("{:.9g}", v); }

std::string hex(std::span<const std::uint8_t> bytes) {
  std::string out;
  for (auto b : bytes) out += fmt::format("{:02x}", b);
  return out;
}

std::string estimate_text(const DistanceEstimate& e) { return e.value ? real(*e.value) : "SATURATED"; }

EstimateMode parse_mode(const std::string& text) {
  if (text == "raw") return EstimateMode::Raw;
  if (text == "curve") return EstimateMode::CurveInverted;
  throw InvalidParameter("mode must be raw or curve");
}

ProtocolKind parse_kind_flag(const std::string& text) {
  auto kind = parse_kind(text);
  if (!kind) throw InvalidParameter("unknown kind '" + text + "' (full-key, public-a, hamming, obfuscated)");
  return *kind;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw InvalidParameter("cannot parse integer list '" + text + "'");
    }
  }
  return out;
}

std::vector<double> parse_real_list(const std::string& text) {
  std::string lines = text;
  for (char& c : lines) {
    if (c == ',') c = '\n';
  }
  return parse_vector(lines);
}

// Session parameters from either a plan (--threshold/--epsilon/--beta) or
// explicit --k/--M/--padding.
struct ParamFlags {
  double threshold = 0.0;
  double epsilon = 0.0;
  int beta = 10;
  int k = 0;
  std::int64_t M = 0;
  std::int64_t padding = -1;
  std::string mode = "raw";
  double delta = kDefaultDelta;

  void add(CLI::App* app) {
    app->add_option("--threshold", threshold, "Distance threshold T for planning");
    app->add_option("--epsilon", epsilon, "Precision for planning");
    app->add_option("--beta", beta, "Failure probability exponent (2^-beta)");
    app->add_option("--k", k, "Modulus (overrides the plan)");
    app->add_option("--M", M, "Hash length (overrides the plan)");
    app->add_option("--padding", padding, "Obfuscation padding P (default 10*M)");
    app->add_option("--mode", mode, "Estimate mode: raw or curve");
  }

  SessionConfig config() const {
    SessionConfig c;
    if (threshold > 0.0 || epsilon > 0.0) {
      c = SessionConfig::from_plan(plan_parameters(threshold, epsilon, beta));
    }
    if (k != 0) c.k = k;
    if (M != 0) c.M = M;
    c.padding = padding >= 0 ? padding : 10 * c.M;
    if (c.k == 0 || c.M == 0) throw InvalidParameter("give --threshold/--epsilon or both --k and --M");
    c.mode = parse_mode(mode);
    c.delta = delta;
    return c;
  }
};

std::vector<double> load_vector(const std::string& path) {
  try {
    return read_vector_file(path);
  } catch (const IoError& e) {
    throw InvalidParameter(e.what());
  }
}

void print_config(const SessionConfig& c, ProtocolKind kind) {
  print("k", std::to_string(c.k));
  print("M", std::to_string(c.M));
  print("padding", std::to_string(kind == ProtocolKind::Obfuscated3P ? c.padding : 0));
}

void print_estimates(const std::string& who, const DistanceEstimate& e) {
  print(who + "_estimate", estimate_text(e));
  print(who + "_mean_lee", format_rational(e.mean_lee));
}

// Blocks SIGINT/SIGTERM in every thread; start() waits for them on a helper thread.
class SignalWaiter {
 public:
  SignalWaiter() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, nullptr);
  }
  void start(std::function<void()> on_signal) {
    std::thread([set = set_, cancelled = cancelled_, on_signal] {
      int sig = 0;
      sigwait(&set, &sig);
      if (!*cancelled) on_signal();
    }).detach();
  }
  void cancel() { *cancelled_ = true; }

 private:
  sigset_t set_;
  std::shared_ptr<std::atomic<bool>> cancelled_ = std::make_shared<std::atomic<bool>>(false);
};

int cmd_plan(double threshold, double epsilon, int beta) {
  const ProtocolParams p = plan_parameters(threshold, epsilon, beta);
  print("threshold", real(p.threshold));
  print("epsilon", real(p.epsilon));
  print("beta", std::to_string(p.beta));
  print("epsilon_bias", real(p.epsilon_bias));
  print("epsilon_stat", real(p.epsilon_stat));
  print("k", std::to_string(p.k));
  print("M", std::to_string(p.M));
  print("padding", std::to_string(p.padding));
  return 0;
}

struct RunFlags {
  std::string kind = "full-key";
  std::string x1;
  std::string x2;
  std::string transport = "local";
  std::string seed = "0";
  std::string charlie;
  std::string bob;
  ParamFlags params;
};

int run_alice_remote(ProtocolKind kind, const SessionConfig& config, const std::vector<double>& x1,
                     const Seed& seed, const Address& bob, const Address& third) {
  auto matrices = std::make_shared<MatrixStore>();
  PartyInputs inputs;
  inputs.x = x1;
  inputs.matrices = matrices;
  if (kind == ProtocolKind::PublicA3P) {
    inputs.public_matrix = publish_public_matrix(*matrices, public_matrix_seed(seed),
                                                 static_cast<std::size_t>(config.M), x1.size(), config.delta);
  }
  const SessionId session = session_id_for(seed, kind);
  SessionHost alice(HostOptions{});
  alice.attach(tcp_connect(bob), {Role::Bob});
  alice.attach(tcp_connect(third), {has_third_party(kind) ? Role::Charlie : Role::Oracle});
  alice.start(Role::Alice, kind, config, std::move(inputs), derive_seed(seed, "alice"), session);
  auto outcome = alice.wait(session, Role::Alice, std::chrono::seconds(120));
  alice.stop();
  if (!outcome) throw TransportClosed("timed out waiting for the session");
  print("session", hex(session));
  if (outcome->phase != Phase::Done || !outcome->estimate) {
    throw_error(outcome->abort_reason.value_or(ErrorCode::ProtocolViolation), "alice aborted: " + outcome->abort_detail);
  }
  print_estimates("alice", *outcome->estimate);
  if (outcome->observed_mean) print("charlie_d", format_rational(*outcome->observed_mean));
  return 0;
}

int cmd_run(const RunFlags& f) {
  const ProtocolKind kind = parse_kind_flag(f.kind);
  const SessionConfig config = f.params.config();
  const Seed seed = seed_from_string(f.seed);
  const auto x1 = load_vector(f.x1);
  if (f.transport != "local" && f.transport != "tcp") throw InvalidParameter("transport must be local or tcp");

  print("kind", std::string(to_string(kind)));
  print("transport", f.transport);
  print_config(config, kind);

  std::optional<Address> third;
  if (!f.charlie.empty()) third = Address::parse(f.charlie);
  if (!f.bob.empty()) {
    if (f.transport != "tcp" || !third) throw InvalidParameter("--bob needs --transport tcp and --charlie");
    return run_alice_remote(kind, config, x1, seed, Address::parse(f.bob), *third);
  }
  if (f.x2.empty()) throw InvalidParameter("--x2 is required unless --bob is given");
  const auto x2 = load_vector(f.x2);
  if (x1.size() != x2.size()) throw DimensionMismatch("x1 and x2 differ in length");

  DriveOptions options;
  RunResult run;
  if (f.transport == "local") {
    run = drive_local(kind, x1, x2, config, seed, std::move(options));
  } else {
    options.third_party = third;
    run = drive_tcp(kind, x1, x2, config, seed, std::move(options));
  }
  print("session", hex(run.session));
  print_estimates("alice", run.alice);
  print_estimates("bob", run.bob);
  if (run.reported_mean) print("charlie_d", format_rational(*run.reported_mean));
  print("messages", std::to_string(run.transcript.size()));
  return 0;
}

struct ServeFlags {
  std::string role = "charlie";
  std::string listen = "127.0.0.1:0";
  std::string x;
  std::string charlie;
  std::string seed = "0";
  std::string mode = "raw";
  int max_sessions = 0;
};

std::string event_line(const HostEvent& event) {
  std::string line;
  switch (event.type) {
    case HostEvent::Type::FrameSent: line = "event=sent"; break;
    case HostEvent::Type::FrameReceived: line = "event=received"; break;
    case HostEvent::Type::FrameRejected: line = "event=rejected"; break;
    case HostEvent::Type::SessionFinished: line = "event=finished"; break;
  }
  line += " session=" + hex(event.session);
  if (event.type == HostEvent::Type::SessionFinished) {
    line += " role=" + std::string(to_string(event.from));
  } else if (!event.frame.empty()) {
    line += " from=" + std::string(to_string(event.from));
    if (event.type == HostEvent::Type::FrameSent) line += " to=" + std::string(to_string(event.to));
    if (auto header = peek_header(event.frame)) line += fmt::format(" msg_type=0x{:02x}", header->msg_type);
    line += " bytes=" + std::to_string(event.frame.size());
  }
  if (!event.detail.empty()) line += " detail=\"" + event.detail + "\"";
  return line;
}

int cmd_serve(const ServeFlags& f) {
  SignalWaiter signals;
  HostOptions options;
  options.mode = parse_mode(f.mode);
  std::vector<double> x;
  std::optional<Address> upstream;
  Role role;
  if (f.role == "charlie") {
    role = Role::Charlie;
    options.accept_charlie = true;
  } else if (f.role == "oracle") {
    role = Role::Oracle;
    options.oracle = std::make_shared<HonestBrokerOracle>();
  } else if (f.role == "bob") {
    role = Role::Bob;
    if (f.x.empty() || f.charlie.empty()) throw InvalidParameter("serve --role bob needs --x and --charlie");
    x = load_vector(f.x);
    upstream = Address::parse(f.charlie);
    options.accept_bob = true;
    const Seed matrix_seed = public_matrix_seed(seed_from_string(f.seed));
    auto matrices = std::make_shared<MatrixStore>();
    options.bob_inputs = [x, matrices, matrix_seed](const KeyShare& share) {
      PartyInputs inputs;
      inputs.x = x;
      inputs.matrices = matrices;
      if (std::holds_alternative<MatrixDigest>(share.matrix)) {
        publish_public_matrix(*matrices, matrix_seed, share.rows, share.cols, share.delta);
      }
      return inputs;
    };
  } else {
    throw InvalidParameter("role must be charlie, oracle or bob");
  }

  std::mutex mutex;
  std::condition_variable changed;
  bool stop = false;
  int finished = 0;
  std::mutex log_mutex;
  options.observer = [&](const HostEvent& event) {
    {
      std::lock_guard lock(log_mutex);
      std::cout << event_line(event) << std::endl;
    }
    if (event.type == HostEvent::Type::SessionFinished) {
      std::lock_guard lock(mutex);
      ++finished;
      changed.notify_all();
    }
  };

  std::unique_ptr<TcpListener> listener;
  try {
    listener = std::make_unique<TcpListener>(Address::parse(f.listen));
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitTransport;
  }
  SessionHost host(std::move(options));
  if (upstream) {
    host.attach(tcp_connect(*upstream), {Role::Charlie, Role::Oracle});
  }
  {
    std::lock_guard lock(log_mutex);
    print("role", std::string(to_string(role)));
    print("listening", listener->local_address().to_string());
    std::cout.flush();
  }

  std::thread acceptor([&] {
    while (auto endpoint = listener->accept()) {
      try {
        host.attach(endpoint);
      } catch (const Error&) {
        endpoint->close();
      }
    }
  });
  signals.start([&] {
    std::lock_guard lock(mutex);
    stop = true;
    changed.notify_all();
  });
  {
    std::unique_lock lock(mutex);
    changed.wait(lock, [&] { return stop || (f.max_sessions > 0 && finished >= f.max_sessions); });
  }
  signals.cancel();
  listener->shutdown();
  acceptor.join();
  host.stop();
  std::lock_guard lock(log_mutex);
  print("shutdown", "ok");
  print("sessions_finished", std::to_string(finished));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Secure modular hashing: distance estimation between private vectors"};
  app.require_subcommand(1);

  double plan_threshold = 0.0;
  double plan_epsilon = 0.0;
  int plan_beta = 10;
  auto* plan = app.add_subcommand("plan", "Choose k and M for a threshold and precision");
  plan->add_option("--threshold", plan_threshold, "Distance threshold T")->required();
  plan->add_option("--epsilon", plan_epsilon, "Precision epsilon")->required();
  plan->add_option("--beta", plan_beta, "Failure probability exponent")->default_val(10);

  int key_k = 0;
  std::int64_t key_m = 0;
  std::int64_t key_n = 0;
  std::string key_seed = "0";
  std::string key_out;
  bool key_seed_form = false;
  auto* keygen = app.add_subcommand("keygen", "Generate a hash key file");
  keygen->add_option("--k", key_k, "Modulus")->required();
  keygen->add_option("--M", key_m, "Rows")->required();
  keygen->add_option("--N", key_n, "Input dimension")->required();
  keygen->add_option("--seed", key_seed, "Seed (64 hex chars or any string)");
  keygen->add_option("--out", key_out, "Output path")->required();
  keygen->add_flag("--seed-form", key_seed_form, "Write the compact seed form (not interoperable)");

  std::string hash_key;
  std::string hash_x;
  auto* hash_cmd = app.add_subcommand("hash", "Hash a vector file with a key file");
  hash_cmd->add_option("--key", hash_key, "Key file")->required();
  hash_cmd->add_option("--x", hash_x, "Vector file")->required();

  std::string est_mean;
  int est_k = 0;
  std::int64_t est_m = 0;
  std::string est_mode = "raw";
  auto* estimate = app.add_subcommand("estimate", "Estimate a distance from a mean Lee distance");
  estimate->add_option("--mean-lee", est_mean, "Mean Lee distance as a/b")->required();
  estimate->add_option("--k", est_k, "Modulus")->required();
  estimate->add_option("--M", est_m, "Hash length")->required();
  estimate->add_option("--mode", est_mode, "raw or curve");

  RunFlags run_flags;
  auto* run = app.add_subcommand("run", "Run one protocol session end to end");
  run->add_option("--kind", run_flags.kind, "full-key, public-a, hamming or obfuscated");
  run->add_option("--x1", run_flags.x1, "Alice's vector file")->required();
  run->add_option("--x2", run_flags.x2, "Bob's vector file");
  run->add_option("--transport", run_flags.transport, "local or tcp");
  run->add_option("--seed", run_flags.seed, "Seed (64 hex chars or any string)");
  run->add_option("--charlie", run_flags.charlie, "Address of a running third party")->envname("SMH_CHARLIE_ADDR");
  run->add_option("--bob", run_flags.bob, "Address of a running Bob; this process plays Alice only");
  run_flags.params.add(run);

  ServeFlags serve_flags;
  auto* serve = app.add_subcommand("serve", "Serve one role over TCP");
  serve->add_option("--role", serve_flags.role, "charlie, oracle or bob");
  serve->add_option("--listen", serve_flags.listen, "host:port (port 0 picks one)");
  serve->add_option("--x", serve_flags.x, "Bob's vector file");
  serve->add_option("--charlie", serve_flags.charlie, "Third party address for Bob")->envname("SMH_CHARLIE_ADDR");
  serve->add_option("--seed", serve_flags.seed, "Seed of the public matrix (public-a)");
  serve->add_option("--mode", serve_flags.mode, "raw or curve");
  serve->add_option("--max-sessions", serve_flags.max_sessions, "Exit after this many sessions finish");

  std::string sweep_ks = "4,8,16";
  std::size_t sweep_m = 500;
  std::size_t sweep_n = 5000;
  int sweep_trials = 20;
  std::string sweep_seed = "0";
  std::string sweep_distances;
  std::string sweep_out;
  unsigned sweep_threads = 0;
  auto* sweep = app.add_subcommand("sweep", "Monte-Carlo mean Lee distance versus distance, as CSV");
  sweep->add_option("--k", sweep_ks, "Comma-separated even moduli");
  sweep->add_option("--M", sweep_m, "Hash length");
  sweep->add_option("--N", sweep_n, "Input dimension");
  sweep->add_option("--trials", sweep_trials, "Trials per point");
  sweep->add_option("--seed", sweep_seed, "Seed");
  sweep->add_option("--distances", sweep_distances, "Comma-separated distances (default 0..k step k/40)");
  sweep->add_option("--threads", sweep_threads, "Worker threads (0 = all cores)");
  sweep->add_option("--out", sweep_out, "CSV path (default stdout)");

  int curve_k = 8;
  double curve_delta = kDefaultDelta;
  std::string curve_distances;
  auto* curve = app.add_subcommand("curve", "Tabulate the expected mean Lee distance");
  curve->add_option("--k", curve_k, "Modulus");
  curve->add_option("--delta", curve_delta, "Projection scale");
  curve->add_option("--distances", curve_distances, "Comma-separated distances (default 0..k step k/40)");

  int uni_k = 8;
  std::size_t uni_m = 1;
  std::size_t uni_n = 16;
  std::size_t uni_samples = 100000;
  std::string uni_seed = "0";
  std::string uni_x;
  bool uni_broken = false;
  auto* uniformity = app.add_subcommand("uniformity", "Chi-square test of hash component uniformity");
  uniformity->add_option("--k", uni_k, "Modulus");
  uniformity->add_option("--M", uni_m, "Hash length");
  uniformity->add_option("--N", uni_n, "Input dimension");
  uniformity->add_option("--samples", uni_samples, "Fresh keys");
  uniformity->add_option("--seed", uni_seed, "Seed");
  uniformity->add_option("--x", uni_x, "Vector file (default: Gaussian from the seed)");
  uniformity->add_flag("--broken-dither", uni_broken, "Use U = 0 (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*plan) return cmd_plan(plan_threshold, plan_epsilon, plan_beta);
    if (*keygen) {
      if (key_m < 1 || key_n < 1) throw InvalidParameter("--M and --N must be >= 1");
      const Seed seed = seed_from_string(key_seed);
      const auto rows = static_cast<std::size_t>(key_m);
      const auto cols = static_cast<std::size_t>(key_n);
      if (key_seed_form) {
        save_text(key_out, key_seed_json(key_k, rows, cols, seed));
      } else {
        save_text(key_out, key_to_json(generate_key(key_k, rows, cols, seed)));
      }
      print("k", std::to_string(key_k));
      print("M", std::to_string(key_m));
      print("N", std::to_string(key_n));
      print("key", key_out);
      print("interoperable", key_seed_form ? "false" : "true");
      return 0;
    }
    if (*hash_cmd) {
      const HashKey key = load_key(hash_key);
      const HashVector h = hash(key, load_vector(hash_x));
      std::string list;
      for (std::size_t i = 0; i < h.size(); ++i) list += (i ? "," : "") + std::to_string(h[i]);
      print("k", std::to_string(h.k()));
      print("M", std::to_string(h.size()));
      print("hash", list);
      return 0;
    }
    if (*estimate) {
      const DistanceEstimate e =
          estimate_distance(parse_rational(est_mean), est_k, est_m, parse_mode(est_mode), EstimateOptions{});
      print("estimate", estimate_text(e));
      print("mean_lee", format_rational(e.mean_lee));
      print("saturated", e.saturated() ? "true" : "false");
      return 0;
    }
    if (*run) return cmd_run(run_flags);
    if (*serve) return cmd_serve(serve_flags);
    if (*sweep) {
      SweepSpec spec;
      spec.ks = parse_int_list(sweep_ks);
      spec.M = sweep_m;
      spec.N = sweep_n;
      spec.trials = sweep_trials;
      spec.seed = seed_from_string(sweep_seed);
      spec.threads = sweep_threads;
      if (!sweep_distances.empty()) spec.distances = parse_real_list(sweep_distances);
      const auto rows = run_sweep(spec);
      if (sweep_out.empty()) {
        write_csv(rows, std::cout);
      } else {
        emit_csv(rows, sweep_out);
        print("rows", std::to_string(rows.size()));
        print("csv", sweep_out);
      }
      return 0;
    }
    if (*curve) {
      const auto distances = curve_distances.empty() ? default_distance_grid(curve_k) : parse_real_list(curve_distances);
      std::cout << "distance,expected_lee\n";
      for (const auto& [d, e] : theoretical_curve(curve_k, curve_delta, distances)) {
        std::cout << real(d) << ',' << real(e) << '\n';
      }
      return 0;
    }
    if (*uniformity) {
      const Seed seed = seed_from_string(uni_seed);
      std::vector<double> x;
      if (uni_x.empty()) {
        DeterministicRng rng(derive_seed(seed, "x"));
        x.resize(uni_n);
        for (double& v : x) v = rng.gaussian();
      } else {
        x = load_vector(uni_x);
        uni_n = x.size();
      }
      const auto report = uniformity_report(uni_k, uni_m, uni_n, x, uni_samples, seed,
                                            uni_broken ? DitherMode::Zero : DitherMode::Uniform);
      print("k", std::to_string(report.k));
      print("samples", std::to_string(report.samples));
      print("chi_square", real(report.chi_square));
      print("critical_0.999", real(report.critical_value));
      print("pass", report.pass ? "true" : "false");
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
    switch (e.code()) {
      case ErrorCode::InvalidParameter:
      case ErrorCode::InvalidInput:
      case ErrorCode::DimensionMismatch:
        return kExitUsage;
      case ErrorCode::TransportClosed:
        return kExitTransport;
      case ErrorCode::IoError:
        return *serve || (*run && run_flags.transport == "tcp") ? kExitTransport : kExitFailure;
      default:
        return kExitFailure;
    }
  }
  return kExitFailure;
}
