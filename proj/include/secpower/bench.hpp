#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "secpower/client.hpp"
#include "secpower/random.hpp"

namespace secpower::bench {

// One (n, trial) measurement. Speedups are derived from the stored times.
struct BenchRecord {
  std::size_t n = 0;
  std::size_t trial = 0;
  double t_original = 0;  // local plaintext power iteration
  double t_cloud = 0;     // worker compute, store + all rounds
  double t_client = 0;    // setup + round processing + verification
  double setup_s = 0;     // one-time part of t_client
  std::size_t iterations = 0;
  std::uint64_t seed = 0;
  bool valid = true;      // false when the run was not Accepted

  double speedup_paper() const { return t_client > 0 ? t_original / t_client : 0; }
  double speedup_total() const {
    return t_client + t_cloud > 0 ? t_original / (t_client + t_cloud) : 0;
  }
};

struct BenchSummary {
  std::size_t n = 0;
  std::size_t valid_trials = 0;
  double t_original = 0;
  double t_cloud = 0;
  double t_client = 0;
  double setup_s = 0;
  std::size_t iterations = 0;

  double speedup_paper() const { return t_client > 0 ? t_original / t_client : 0; }
  double speedup_total() const {
    return t_client + t_cloud > 0 ? t_original / (t_client + t_cloud) : 0;
  }
};

struct BenchConfig {
  client::ProtocolConfig protocol;
  double dominance = 1.5;
  // Runs one untimed solve before the first trial.
  bool warmup = true;
  // Local solves are repeated until this much time has accumulated.
  double min_local_seconds = 0.02;
};

// Published reference timings (seconds) kept next to our own measurements.
struct ReferenceRow {
  std::size_t n;
  double t_original;
  double t_cloud;
  double t_client;
  double speedup;
};
const std::vector<ReferenceRow>& reference_rows();

// Every trial draws a fresh planted matrix and start vector. The key pair is
// generated once up front and is not part of any timing bucket.
std::vector<BenchRecord> run_benchmark(const std::vector<std::size_t>& sizes, std::size_t trials,
                                       const BenchConfig& cfg, RandomSource& rng);

// Medians over valid records, one row per n in order of first appearance.
std::vector<BenchSummary> summarize(const std::vector<BenchRecord>& records);

// Per-round costs after a single setup, used for the growth-rate fit.
struct RoundProfile {
  std::size_t n = 0;
  double setup_s = 0;
  std::vector<double> client_round_s;
  std::vector<double> worker_round_s;

  double median_client() const;
  double median_worker() const;
};
RoundProfile profile_rounds(std::size_t n, std::size_t rounds, const BenchConfig& cfg,
                            const paillier::Keypair& keys, RandomSource& rng);

// Least-squares slope of log(y) against log(x).
double fit_loglog_exponent(const std::vector<double>& x, const std::vector<double>& y);

double median(std::vector<double> values);

// Writes `path` (CSV) and `path` + ".json" (config and environment).
void write_report(const std::vector<BenchRecord>& records, const std::filesystem::path& path,
                  const BenchConfig& cfg);
std::vector<BenchRecord> read_report(const std::filesystem::path& path);

// Data | t_original | t_cloud | t_client | Client Speedup
void print_table(std::ostream& out, const std::vector<BenchSummary>& rows);

}  // namespace secpower::bench
