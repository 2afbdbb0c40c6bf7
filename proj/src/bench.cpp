#include "secpower/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "secpower/transport.hpp"
#include "secpower/worker.hpp"

namespace secpower::bench {

namespace {

using Clock = std::chrono::steady_clock;
using linalg::Matrix;
using linalg::Vector;

constexpr const char* kCsvHeader =
    "n,trial,t_original,t_cloud,t_client,speedup_paper,speedup_total,iterations,seed,setup_s,valid";

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Problem {
  Matrix A;
  Vector x0;
};

Problem draw_problem(std::size_t n, double dominance, RandomSource& rng) {
  auto planted = linalg::make_test_matrix<double>(static_cast<Eigen::Index>(n), dominance, rng);
  Vector x0(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < x0.size(); ++i) x0(i) = rng.uniform_real(-1, 1);
  x0 /= linalg::inf_norm(x0);
  return {std::move(planted.matrix), std::move(x0)};
}

// Average wall time of one local solve; short solves are repeated so the
// clock resolution does not dominate.
double time_local(const Problem& p, const client::ProtocolConfig& proto, double min_seconds,
                  std::size_t& iterations) {
  const std::size_t omega = proto.resolved_omega(static_cast<std::size_t>(p.A.rows()));
  std::size_t reps = 0;
  const auto start = Clock::now();
  double elapsed = 0;
  do {
    iterations = linalg::local_power_iteration(p.A, p.x0, proto.eps, omega).iterations;
    ++reps;
    elapsed = seconds_since(start);
  } while (elapsed < min_seconds);
  return elapsed / static_cast<double>(reps);
}

struct OutsourcedRun {
  client::SolveOutcome outcome;
  double worker_seconds = 0;
};

OutsourcedRun run_outsourced(const Problem& p, const client::ProtocolConfig& proto,
                             const paillier::Keypair& keys, std::uint64_t seed) {
  auto [client_end, worker_end] = transport::make_inprocess_pair();
  worker::WorkerState state(worker::Honest{}, seed);
  std::thread worker_thread([&state, ch = worker_end.get()] { worker::serve(state, *ch); });
  SeededRandom rng(seed);
  OutsourcedRun run;
  run.outcome = client::drive(p.A, p.x0, proto, keys, *client_end, rng);
  client_end->close();
  worker_thread.join();
  run.worker_seconds = state.compute_seconds();
  return run;
}

std::string format_seconds(double s) {
  std::ostringstream out;
  out << std::setprecision(4) << s;
  return out.str();
}

}  // namespace

const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {50, 0.3133, 0.3130, 0.1903, 1.6463},       {100, 1.2921, 1.2911, 0.6037, 2.1403},
      {200, 7.3012, 7.3011, 2.2261, 3.2798},      {300, 21.6815, 21.6814, 4.9284, 4.3993},
      {400, 47.5771, 47.5761, 9.1275, 5.2125},    {500, 84.9826, 84.9820, 13.3055, 6.3870},
      {750, 273.7168, 273.7161, 31.7513, 8.6206}, {1000, 485.7088, 485.7082, 51.0005, 9.5236},
  };
  return rows;
}

double median(std::vector<double> values) {
  if (values.empty()) return 0;
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

std::vector<BenchRecord> run_benchmark(const std::vector<std::size_t>& sizes, std::size_t trials,
                                       const BenchConfig& cfg, RandomSource& rng) {
  if (sizes.empty()) throw std::invalid_argument("benchmark needs at least one size");
  if (trials == 0) throw std::invalid_argument("benchmark needs at least one trial");
  cfg.protocol.validate();
  const paillier::Keypair keys = paillier::keygen(cfg.protocol.key_bits, rng);

  if (cfg.warmup) {
    SeededRandom warm_rng(rng.next_u64());
    const Problem p = draw_problem(sizes.front(), cfg.dominance, warm_rng);
    std::size_t ignored = 0;
    time_local(p, cfg.protocol, 0, ignored);
    run_outsourced(p, cfg.protocol, keys, warm_rng.next_u64());
  }

  std::vector<BenchRecord> records;
  for (const std::size_t n : sizes) {
    for (std::size_t trial = 0; trial < trials; ++trial) {
      BenchRecord rec;
      rec.n = n;
      rec.trial = trial;
      rec.seed = rng.next_u64();
      SeededRandom trial_rng(rec.seed);
      const Problem p = draw_problem(n, cfg.dominance, trial_rng);

      std::size_t local_iterations = 0;
      rec.t_original = time_local(p, cfg.protocol, cfg.min_local_seconds, local_iterations);

      const OutsourcedRun run = run_outsourced(p, cfg.protocol, keys, trial_rng.next_u64());
      rec.t_client = run.outcome.timings.client_seconds();
      rec.setup_s = run.outcome.timings.setup_seconds;
      rec.t_cloud = run.worker_seconds;
      rec.iterations = run.outcome.rounds;
      rec.valid = run.outcome.verdict == client::Verdict::Accepted;
      records.push_back(rec);
    }
  }
  return records;
}

std::vector<BenchSummary> summarize(const std::vector<BenchRecord>& records) {
  std::vector<BenchSummary> out;
  std::vector<std::size_t> order;
  for (const auto& r : records)
    if (std::find(order.begin(), order.end(), r.n) == order.end()) order.push_back(r.n);

  for (const std::size_t n : order) {
    std::vector<double> orig, cloud, cli, setup, iters;
    for (const auto& r : records) {
      if (r.n != n || !r.valid) continue;
      orig.push_back(r.t_original);
      cloud.push_back(r.t_cloud);
      cli.push_back(r.t_client);
      setup.push_back(r.setup_s);
      iters.push_back(static_cast<double>(r.iterations));
    }
    BenchSummary s;
    s.n = n;
    s.valid_trials = orig.size();
    s.t_original = median(orig);
    s.t_cloud = median(cloud);
    s.t_client = median(cli);
    s.setup_s = median(setup);
    s.iterations = static_cast<std::size_t>(std::llround(median(iters)));
    out.push_back(s);
  }
  return out;
}

double RoundProfile::median_client() const { return median(client_round_s); }
double RoundProfile::median_worker() const { return median(worker_round_s); }

RoundProfile profile_rounds(std::size_t n, std::size_t rounds, const BenchConfig& cfg,
                            const paillier::Keypair& keys, RandomSource& rng) {
  if (rounds == 0) throw std::invalid_argument("profile needs at least one round");
  const Problem p = draw_problem(n, cfg.dominance, rng);
  client::ProtocolConfig proto = cfg.protocol;
  // Keep the session iterating for the requested number of rounds.
  proto.eps = std::numeric_limits<double>::min();
  proto.omega = rounds + 1;

  RoundProfile prof;
  prof.n = n;
  auto t = Clock::now();
  auto started = client::ClientSession::setup(p.A, p.x0, proto, keys, rng);
  prof.setup_s = seconds_since(t);

  worker::WorkerState state(worker::Honest{}, rng.next_u64());
  if (state.handle(started.store).kind() != wire::Kind::Ack) {
    throw std::runtime_error("worker refused the matrix");
  }
  wire::Message request = std::move(started.first_request);
  for (std::size_t k = 0; k < rounds; ++k) {
    t = Clock::now();
    const wire::Message response = state.handle(request);
    prof.worker_round_s.push_back(seconds_since(t));

    t = Clock::now();
    auto outcome = started.session.ingest_round(response, rng);
    prof.client_round_s.push_back(seconds_since(t));
    auto* next = std::get_if<client::NextRequest>(&outcome);
    if (!next) break;
    request = std::move(next->request);
  }
  return prof;
}

double fit_loglog_exponent(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("need at least two points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw std::invalid_argument("log-log fit needs positive data");
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw std::invalid_argument("log-log fit needs distinct x values");
  return sxy / sxx;
}

void write_report(const std::vector<BenchRecord>& records, const std::filesystem::path& path,
                  const BenchConfig& cfg) {
  std::ofstream csv(path);
  if (!csv) throw std::runtime_error("cannot write " + path.string());
  csv << kCsvHeader << '\n' << std::setprecision(17);
  for (const auto& r : records) {
    csv << r.n << ',' << r.trial << ',' << r.t_original << ',' << r.t_cloud << ',' << r.t_client << ','
        << r.speedup_paper() << ',' << r.speedup_total() << ',' << r.iterations << ',' << r.seed << ','
        << r.setup_s << ',' << (r.valid ? 1 : 0) << '\n';
  }
  if (!csv.flush()) throw std::runtime_error("write failed for " + path.string());

  nlohmann::json meta;
  meta["config"] = {
      {"key_bits", cfg.protocol.key_bits},   {"frac_bits", cfg.protocol.frac_bits},
      {"mask_bits", cfg.protocol.mask_bits}, {"eps", cfg.protocol.eps},
      {"use_scaling", cfg.protocol.use_scaling}, {"verify_tol", cfg.protocol.verify_tol},
      {"dominance", cfg.dominance},          {"warmup", cfg.warmup},
      {"transport", "inprocess"},
  };
  meta["environment"] = {
      {"hardware_threads", std::thread::hardware_concurrency()},
      {"compiler", __VERSION__},
      {"gmp_version", gmp_version},
      {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                            "." + std::to_string(EIGEN_MINOR_VERSION)},
  };
  nlohmann::json ref = nlohmann::json::array();
  for (const auto& row : reference_rows()) {
    ref.push_back({{"n", row.n}, {"t_original", row.t_original}, {"t_cloud", row.t_cloud},
                   {"t_client", row.t_client}, {"speedup", row.speedup}});
  }
  meta["reference_baseline"] = ref;
  meta["records"] = records.size();

  std::filesystem::path sidecar = path;
  sidecar += ".json";
  std::ofstream js(sidecar);
  if (!js) throw std::runtime_error("cannot write " + sidecar.string());
  js << meta.dump(2) << '\n';
  if (!js.flush()) throw std::runtime_error("write failed for " + sidecar.string());
}

std::vector<BenchRecord> read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) {
    throw std::runtime_error(path.string() + ": unexpected CSV header");
  }
  std::vector<BenchRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 11) throw std::runtime_error(path.string() + ": bad row '" + line + "'");
    BenchRecord r;
    try {
      r.n = std::stoull(f[0]);
      r.trial = std::stoull(f[1]);
      r.t_original = std::stod(f[2]);
      r.t_cloud = std::stod(f[3]);
      r.t_client = std::stod(f[4]);
      r.iterations = std::stoull(f[7]);
      r.seed = std::stoull(f[8]);
      r.setup_s = std::stod(f[9]);
      r.valid = f[10] == "1";
    } catch (const std::logic_error&) {
      throw std::runtime_error(path.string() + ": bad row '" + line + "'");
    }
    out.push_back(r);
  }
  return out;
}

void print_table(std::ostream& out, const std::vector<BenchSummary>& rows) {
  const auto old_flags = out.flags();
  out << std::left << std::setw(10) << "Data" << std::right << std::setw(12) << "t_original"
      << std::setw(12) << "t_cloud" << std::setw(12) << "t_client" << std::setw(16)
      << "Client Speedup" << '\n';
  for (const auto& r : rows) {
    std::ostringstream speed;
    speed << std::setprecision(4) << r.speedup_paper();
    out << std::left << std::setw(10) << r.n << std::right << std::setw(12)
        << format_seconds(r.t_original) << std::setw(12) << format_seconds(r.t_cloud)
        << std::setw(12) << format_seconds(r.t_client) << std::setw(16) << speed.str() << '\n';
  }
  out.flags(old_flags);
}

}  // namespace secpower::bench
