#include <atomic>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "secpower/bench.hpp"
#include "secpower/client.hpp"
#include "secpower/linalg.hpp"
#include "secpower/paillier.hpp"
#include "secpower/transport.hpp"
#include "secpower/worker.hpp"

namespace fs = std::filesystem;
using namespace secpower;

namespace {

constexpr int kExitAccepted = 0;
constexpr int kExitRejected = 1;
constexpr int kExitAborted = 2;
constexpr int kExitUsage = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::unique_ptr<RandomSource> make_rng(const std::optional<std::uint64_t>& seed) {
  if (seed) return std::make_unique<SeededRandom>(*seed);
  return std::make_unique<SystemRandom>();
}

std::uint16_t parse_port(const std::string& text) {
  unsigned value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || value == 0 || value > 65535) {
    throw UsageError("bad port '" + text + "'");
  }
  return static_cast<std::uint16_t>(value);
}

// ---------------------------------------------------------------- keygen

struct KeygenArgs {
  unsigned bits = 512;
  std::string out;
  bool force = false;
  std::optional<std::uint64_t> seed;
};

int cmd_keygen(const KeygenArgs& a) {
  if (a.bits < 16) throw UsageError("--bits must be at least 16");
  const fs::path priv_path = a.out;
  const fs::path pub_path = a.out + ".pub";
  if (!a.force && (fs::exists(priv_path) || fs::exists(pub_path))) {
    throw UsageError("refusing to overwrite " + priv_path.string() + " (use --force)");
  }
  auto rng = make_rng(a.seed);
  const paillier::Keypair kp = paillier::keygen(a.bits, *rng);
  paillier::write_private_key_file(priv_path, kp);
  paillier::write_public_key_file(pub_path, kp.pub);

  const mpz_class m = rng->uniform_below(kp.pub.n());
  const bool ok = paillier::decrypt(kp.priv, kp.pub, paillier::encrypt(kp.pub, m, *rng)) == m;
  std::cout << "wrote " << priv_path.string() << " and " << pub_path.string() << '\n'
            << "key id " << kp.pub.key_id() << ", " << kp.pub.bits() << "-bit modulus\n"
            << "roundtrip check: " << (ok ? "ok" : "FAILED") << '\n';
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------- solve

struct SolveArgs {
  std::string matrix;
  std::string key;
  unsigned bits = 512;
  double eps = 1e-9;
  std::size_t omega = 0;
  std::string scaling = "off";
  std::string worker = "inproc";
  std::string policy = "honest";
  bool json = false;
  std::optional<std::uint64_t> seed;
  unsigned mask_bits = 128;
  double timeout_s = 30;
};

nlohmann::json outcome_json(const client::SolveOutcome& out) {
  nlohmann::json j;
  j["verdict"] = client::to_string(out.verdict);
  j["reason"] = client::to_string(out.reason);
  j["detail"] = out.detail;
  j["rounds"] = out.rounds;
  j["transcript_digest"] = out.transcript_digest;
  if (out.verdict != client::Verdict::Aborted) {
    j["eigenvalue"] = out.result.eigenvalue;
    j["eigenvector"] = std::vector<double>(out.result.eigenvector.data(),
                                           out.result.eigenvector.data() + out.result.eigenvector.size());
    j["iterations"] = out.result.iterations;
  } else {
    j["eigenvalue"] = nullptr;
    j["eigenvector"] = nullptr;
    j["iterations"] = nullptr;
  }
  j["timings"] = {{"setup_s", out.timings.setup_seconds},
                  {"rounds_s", out.timings.round_seconds},
                  {"verify_s", out.timings.verify_seconds},
                  {"client_s", out.timings.client_seconds()},
                  {"wall_s", out.timings.wall_seconds}};
  return j;
}

void print_human(const client::SolveOutcome& out) {
  std::cout << std::setprecision(10);
  std::cout << "verdict: " << client::to_string(out.verdict) << '\n';
  if (out.verdict == client::Verdict::Aborted) {
    std::cout << "reason: " << client::to_string(out.reason) << '\n';
    if (!out.detail.empty()) std::cout << "detail: " << out.detail << '\n';
  } else {
    std::cout << "eigenvalue: " << out.result.eigenvalue << '\n' << "eigenvector:";
    for (Eigen::Index i = 0; i < out.result.eigenvector.size(); ++i) std::cout << ' ' << out.result.eigenvector(i);
    std::cout << '\n';
  }
  std::cout << "iterations: " << out.rounds << '\n';
}

int cmd_solve(const SolveArgs& a) {
  client::ProtocolConfig cfg;
  cfg.eps = a.eps;
  cfg.omega = a.omega;
  cfg.mask_bits = a.mask_bits;
  cfg.key_bits = a.bits;
  if (a.scaling != "on" && a.scaling != "off") throw UsageError("--scaling must be on or off");
  cfg.use_scaling = a.scaling == "on";
  if (!(a.timeout_s > 0)) throw UsageError("--timeout must be positive");
  cfg.receive_timeout = std::chrono::milliseconds(static_cast<long long>(a.timeout_s * 1000));
  try {
    cfg.validate();
  } catch (const client::ConfigError& e) {
    throw UsageError(e.what());
  }

  std::optional<std::pair<std::string, std::uint16_t>> remote;
  if (a.worker.rfind("tcp:", 0) == 0) {
    const std::string rest = a.worker.substr(4);
    const auto colon = rest.rfind(':');
    if (colon == std::string::npos || colon == 0) throw UsageError("--worker expects tcp:host:port");
    remote.emplace(rest.substr(0, colon), parse_port(rest.substr(colon + 1)));
    if (a.policy != "honest") throw UsageError("--policy applies to the in-process worker only");
  } else if (a.worker != "inproc") {
    throw UsageError("--worker must be inproc or tcp:host:port");
  }
  worker::AdversaryPolicy policy;
  try {
    policy = worker::parse_policy(a.policy);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  linalg::Matrix A;
  try {
    A = linalg::read_matrix_file(a.matrix);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  auto rng = make_rng(a.seed);
  paillier::Keypair keys = [&] {
    if (a.key.empty()) return paillier::keygen(cfg.key_bits, *rng);
    try {
      return paillier::read_private_key_file(a.key);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }();
  const linalg::Vector x0 = linalg::Vector::Ones(A.rows());

  client::SolveOutcome out;
  if (remote) {
    std::unique_ptr<transport::Channel> channel;
    try {
      channel = transport::connect_tcp(remote->first, remote->second, cfg.receive_timeout);
    } catch (const transport::TransportError& e) {
      out.verdict = client::Verdict::Aborted;
      out.reason = client::AbortReason::TransportError;
      out.detail = e.what();
    }
    if (channel) out = client::drive(A, x0, cfg, std::move(keys), *channel, *rng);
  } else {
    auto [client_end, worker_end] = transport::make_inprocess_pair();
    worker::WorkerState state(policy, rng->next_u64());
    std::thread worker_thread([&state, ch = worker_end.get()] { worker::serve(state, *ch); });
    try {
      out = client::drive(A, x0, cfg, std::move(keys), *client_end, *rng);
    } catch (...) {
      client_end->close();
      worker_thread.join();
      throw;
    }
    client_end->close();
    worker_thread.join();
  }

  if (a.json) {
    std::cout << outcome_json(out).dump() << '\n';
  } else {
    print_human(out);
  }
  switch (out.verdict) {
    case client::Verdict::Accepted: return kExitAccepted;
    case client::Verdict::Rejected: return kExitRejected;
    case client::Verdict::Aborted: break;
  }
  if (!a.json) std::cerr << "aborted: " << client::to_string(out.reason) << ": " << out.detail << '\n';
  return kExitAborted;
}

// ---------------------------------------------------------------- worker

struct WorkerArgs {
  std::uint16_t port = transport::kDefaultPort;
  std::string bind = "0.0.0.0";
  std::string pubkey;
  std::string policy = "honest";
  std::optional<std::uint64_t> seed;
  std::size_t max_sessions = 0;
};

int cmd_worker(const WorkerArgs& a) {
  worker::AdversaryPolicy policy;
  try {
    policy = worker::parse_policy(a.policy);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::optional<paillier::PublicKey> expected;
  if (!a.pubkey.empty()) {
    try {
      expected = paillier::read_public_key_file(a.pubkey);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }

  transport::TcpListener listener(a.port, a.bind);
  std::mutex log_mutex;
  {
    std::lock_guard lock(log_mutex);
    std::cerr << "worker listening on " << a.bind << ':' << listener.port() << " policy "
              << worker::describe(policy) << std::endl;
  }

  auto base_rng = make_rng(a.seed);
  std::vector<std::thread> sessions;
  std::size_t accepted = 0;
  while (a.max_sessions == 0 || accepted < a.max_sessions) {
    std::unique_ptr<transport::Channel> channel = listener.accept(std::chrono::seconds(1));
    if (!channel) continue;
    ++accepted;
    const std::uint64_t seed = base_rng->next_u64();
    sessions.emplace_back([&, seed, id = accepted, ch = std::move(channel)]() mutable {
      worker::WorkerState state(policy, seed, expected);
      const std::size_t rounds = worker::serve(state, *ch, std::chrono::minutes(10));
      std::lock_guard lock(log_mutex);
      std::cerr << "session " << id << ": " << rounds << " rounds served" << std::endl;
    });
  }
  for (auto& t : sessions) t.join();
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchArgs {
  std::string sizes = "50,100,200";
  std::size_t trials = 5;
  std::string out;
  unsigned bits = 512;
  double dominance = 1.5;
  std::optional<std::uint64_t> seed;
};

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size() || v == 0) {
      throw UsageError("bad size '" + item + "' in --sizes");
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--sizes is empty");
  return out;
}

int cmd_bench(const BenchArgs& a) {
  const std::vector<std::size_t> sizes = parse_sizes(a.sizes);
  if (a.trials == 0) throw UsageError("--trials must be positive");
  bench::BenchConfig cfg;
  cfg.protocol.key_bits = a.bits;
  cfg.dominance = a.dominance;
  try {
    cfg.protocol.validate();
  } catch (const client::ConfigError& e) {
    throw UsageError(e.what());
  }
  if (!(cfg.dominance > 1)) throw UsageError("--dominance must exceed 1");

  auto rng = make_rng(a.seed);
  const auto records = bench::run_benchmark(sizes, a.trials, cfg, *rng);
  bench::print_table(std::cout, bench::summarize(records));
  std::size_t invalid = 0;
  for (const auto& r : records) invalid += r.valid ? 0 : 1;
  if (invalid) std::cerr << invalid << " run(s) were not accepted and are excluded from medians\n";
  if (!a.out.empty()) {
    bench::write_report(records, a.out, cfg);
    std::cerr << "wrote " << a.out << " and " << a.out << ".json\n";
  }
  return 0;
}

// ---------------------------------------------------------------- demo

struct DemoArgs {
  std::size_t n = 16;
  std::string policy = "tamper:1:1";
  unsigned bits = 256;
  std::optional<std::uint64_t> seed;
};

int cmd_demo(const DemoArgs& a) {
  worker::AdversaryPolicy policy;
  try {
    policy = worker::parse_policy(a.policy);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.n == 0) throw UsageError("--n must be positive");
  client::ProtocolConfig cfg;
  cfg.key_bits = a.bits;
  try {
    cfg.validate();
  } catch (const client::ConfigError& e) {
    throw UsageError(e.what());
  }

  auto rng = make_rng(a.seed);
  const auto planted = linalg::make_test_matrix<double>(static_cast<Eigen::Index>(a.n), 1.5, *rng);
  const linalg::Vector x0 = linalg::Vector::Ones(planted.matrix.rows());
  const paillier::Keypair keys = paillier::keygen(cfg.key_bits, *rng);

  auto [client_end, worker_end] = transport::make_inprocess_pair();
  worker::WorkerState state(policy, rng->next_u64());
  std::thread worker_thread([&state, ch = worker_end.get()] { worker::serve(state, *ch); });
  const client::SolveOutcome out = client::drive(planted.matrix, x0, cfg, keys, *client_end, *rng);
  client_end->close();
  worker_thread.join();

  std::cout << std::setprecision(10) << "policy: " << worker::describe(policy) << '\n'
            << "planted eigenvalue: " << planted.eigenvalue << '\n';
  print_human(out);
  if (out.verdict == client::Verdict::Aborted) std::cout << "reason: " << client::to_string(out.reason) << '\n';
  switch (out.verdict) {
    case client::Verdict::Accepted: return kExitAccepted;
    case client::Verdict::Rejected: return kExitRejected;
    case client::Verdict::Aborted: break;
  }
  return kExitAborted;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outsourced dominant-eigenpair computation over Paillier encryption"};
  app.require_subcommand(1);

  KeygenArgs keygen;
  auto* kg = app.add_subcommand("keygen", "generate a Paillier key pair");
  kg->add_option("--bits", keygen.bits, "modulus size in bits")->capture_default_str();
  kg->add_option("--out", keygen.out, "private key path; the public key goes to <out>.pub")->required();
  kg->add_flag("--force", keygen.force, "overwrite existing key files");
  kg->add_option("--seed", keygen.seed, "deterministic seed (testing only)");

  SolveArgs solve;
  auto* sv = app.add_subcommand("solve", "compute the dominant eigenpair with an outsourced worker");
  sv->add_option("--matrix", solve.matrix, "matrix file")->required();
  sv->add_option("--key", solve.key, "private key file (default: fresh key of --bits)");
  sv->add_option("--bits", solve.bits, "key size when no --key is given")->capture_default_str();
  sv->add_option("--eps", solve.eps, "convergence threshold")->capture_default_str();
  sv->add_option("--omega", solve.omega, "round cap (0 = 10n + 1000)")->capture_default_str();
  sv->add_option("--scaling", solve.scaling, "per-round modular scaling: on|off")->capture_default_str();
  sv->add_option("--worker", solve.worker, "inproc | tcp:host:port")->capture_default_str();
  sv->add_option("--policy", solve.policy, "in-process worker behaviour")->capture_default_str();
  sv->add_option("--mask-bits", solve.mask_bits, "mask size in bits")->capture_default_str();
  sv->add_option("--timeout", solve.timeout_s, "receive timeout in seconds")->capture_default_str();
  sv->add_flag("--json", solve.json, "machine-readable output");
  sv->add_option("--seed", solve.seed, "deterministic seed (testing only)");

  WorkerArgs wk;
  std::string listen = std::to_string(transport::kDefaultPort);
  auto* wc = app.add_subcommand("worker", "serve encrypted matrix-vector products over TCP");
  wc->add_option("--listen", listen, "port to listen on")->capture_default_str();
  wc->add_option("--bind", wk.bind, "bind address")->capture_default_str();
  wc->add_option("--pubkey", wk.pubkey, "public key file; sessions under other keys are refused");
  wc->add_option("--policy", wk.policy, "honest | tamper:<rho>:<delta> | arbitrary | lazy")->capture_default_str();
  wc->add_option("--seed", wk.seed, "deterministic seed (testing only)");
  wc->add_option("--max-sessions", wk.max_sessions, "exit after this many sessions (0 = never)");

  BenchArgs bn;
  auto* bc = app.add_subcommand("bench", "time local versus outsourced solves");
  bc->add_option("--sizes", bn.sizes, "comma-separated matrix sizes")->capture_default_str();
  bc->add_option("--trials", bn.trials, "trials per size")->capture_default_str();
  bc->add_option("--out", bn.out, "CSV report path (JSON sidecar at <out>.json)");
  bc->add_option("--bits", bn.bits, "key size")->capture_default_str();
  bc->add_option("--dominance", bn.dominance, "eigenvalue gap of the test matrices")->capture_default_str();
  bc->add_option("--seed", bn.seed, "deterministic seed");

  DemoArgs demo;
  auto* dm = app.add_subcommand("demo", "run a planted matrix against a misbehaving worker");
  dm->add_option("--n", demo.n, "matrix size")->capture_default_str();
  dm->add_option("--policy", demo.policy, "worker policy")->capture_default_str();
  dm->add_option("--bits", demo.bits, "key size")->capture_default_str();
  dm->add_option("--seed", demo.seed, "deterministic seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*kg) return cmd_keygen(keygen);
    if (*sv) return cmd_solve(solve);
    if (*wc) {
      wk.port = parse_port(listen);
      return cmd_worker(wk);
    }
    if (*bc) return cmd_bench(bn);
    if (*dm) return cmd_demo(demo);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
