#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "secpower/linalg.hpp"
#include "secpower/random.hpp"
#include "secpower/transport.hpp"

#ifndef SECPOWER_CLI
#error "SECPOWER_CLI must name the built command-line binary"
#endif

namespace fs = std::filesystem;
using namespace secpower;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(SECPOWER_CLI) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  Result r;
  std::array<char, 4096> buf;
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), pipe)) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("secpower_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_diag21() const {
    std::ofstream(path("diag.txt")) << "2\n2 0\n0 1\n";
    return path("diag.txt");
  }

  // Writes a planted 16x16 matrix and returns its dominant eigenvalue.
  double write_planted(const std::string& name, std::uint64_t seed, double scale = 1.0) const {
    SeededRandom rng(seed);
    const auto planted = linalg::make_test_matrix<double>(16, 1.5, rng);
    linalg::write_matrix_file(path(name), linalg::Matrix(planted.matrix * scale));
    return planted.eigenvalue * scale;
  }

  std::string key(unsigned bits = 256) const {
    const std::string k = path("key");
    if (!fs::exists(k)) {
      const Result r = run("keygen --bits " + std::to_string(bits) + " --out " + k + " --seed 1");
      if (r.code != 0) throw std::runtime_error(r.out);
    }
    return k;
  }

  fs::path dir_;
};

std::uint16_t free_port() {
  transport::TcpListener l(0, "127.0.0.1");
  return l.port();
}

// Starts `secpower worker` for a single session; pclose waits for it.
struct BackgroundWorker {
  FILE* pipe = nullptr;
  std::uint16_t port = 0;

  explicit BackgroundWorker(const std::string& extra) {
    port = free_port();
    const std::string cmd = std::string(SECPOWER_CLI) + " worker --bind 127.0.0.1 --listen " +
                            std::to_string(port) + " --max-sessions 1 " + extra + " 2>&1";
    pipe = ::popen(cmd.c_str(), "r");
    char line[512];
    // Blocks until the listener is up.
    if (!pipe || !std::fgets(line, sizeof(line), pipe)) throw std::runtime_error("worker did not start");
    if (std::string(line).find("listening") == std::string::npos) throw std::runtime_error(line);
  }
  std::string finish() {
    std::string rest;
    char buf[512];
    while (std::fgets(buf, sizeof(buf), pipe)) rest += buf;
    ::pclose(pipe);
    pipe = nullptr;
    return rest;
  }
  ~BackgroundWorker() {
    if (pipe) ::pclose(pipe);
  }
};

}  // namespace

TEST_F(Cli, KeygenWritesBothFilesAndChecksRoundTrip) {
  const Result r = run("keygen --bits 512 --out " + path("k"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(path("k")));
  EXPECT_TRUE(fs::exists(path("k.pub")));
  EXPECT_NE(r.out.find("roundtrip check: ok"), std::string::npos) << r.out;
  EXPECT_EQ((fs::status(path("k")).permissions() & fs::perms::all), fs::perms::owner_read | fs::perms::owner_write);

  const Result again = run("keygen --bits 512 --out " + path("k"));
  EXPECT_EQ(again.code, 3);
  EXPECT_NE(again.out.find("--force"), std::string::npos);
  EXPECT_EQ(run("keygen --bits 128 --out " + path("k") + " --force").code, 0);
}

TEST_F(Cli, KeygenRejectsTinyKeys) {
  const Result r = run("keygen --bits 8 --out " + path("k"));
  EXPECT_EQ(r.code, 3);
  EXPECT_FALSE(fs::exists(path("k")));
}

TEST_F(Cli, SolveDiagonalInProcess) {
  const Result r = run("solve --matrix " + write_diag21() + " --key " + key() + " --seed 3");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("verdict: accepted"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("eigenvalue: 2\n"), std::string::npos) << r.out;
}

TEST_F(Cli, SolveJsonSchema) {
  const Result r = run("solve --json --matrix " + write_diag21() + " --key " + key() + " --seed 3 --scaling on");
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = nlohmann::json::parse(r.out);
  for (const char* k : {"verdict", "reason", "detail", "rounds", "transcript_digest", "eigenvalue",
                        "eigenvector", "iterations", "timings"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  EXPECT_EQ(j["verdict"], "accepted");
  EXPECT_EQ(j["eigenvector"].size(), 2u);
  EXPECT_EQ(nlohmann::json::parse(j.dump()), j);
}

TEST_F(Cli, PlantedEigenvalueRecovered) {
  const double lambda = write_planted("p.txt", 77);
  const Result r = run("solve --json --matrix " + path("p.txt") + " --key " + key() + " --seed 4");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NEAR(nlohmann::json::parse(r.out)["eigenvalue"].get<double>(), lambda, 1e-6);
}

TEST_F(Cli, UnreachableWorkerAborts) {
  const Result r = run("solve --matrix " + write_diag21() + " --key " + key() + " --timeout 2 --worker tcp:127.0.0.1:" +
                       std::to_string(free_port()));
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("transport_error"), std::string::npos) << r.out;
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("solve --matrix " + path("missing.txt")).code, 3);
  EXPECT_EQ(run("solve --matrix " + write_diag21() + " --scaling maybe").code, 3);
  EXPECT_EQ(run("solve --matrix " + write_diag21() + " --worker udp:x").code, 3);
  EXPECT_EQ(run("solve").code, 3);
  EXPECT_EQ(run("").code, 3);
  EXPECT_EQ(run("worker --policy evil").code, 3);
}

TEST_F(Cli, RemoteHonestWorkerAccepted) {
  const std::string k = key();
  BackgroundWorker worker("--pubkey " + k + ".pub --policy honest --seed 5");
  const Result r = run("solve --matrix " + write_diag21() + " --key " + k + " --seed 6 --worker tcp:127.0.0.1:" +
                       std::to_string(worker.port));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(worker.finish().find("30 rounds served"), std::string::npos);
}

// A bias of 1.0 is small next to this matrix's spectral gap, so the biased
// iteration settles on a wrong fixed point instead of cycling to the cap.
TEST_F(Cli, RemoteTamperingWorkerRejected) {
  write_planted("p.txt", 5, 100.0);
  BackgroundWorker worker("--policy tamper:1.0:1.0 --seed 7");
  const Result r = run("solve --matrix " + path("p.txt") + " --key " + key() + " --seed 8 --worker tcp:127.0.0.1:" +
                       std::to_string(worker.port));
  EXPECT_EQ(r.code, 1) << r.out;
  worker.finish();
}

TEST_F(Cli, ArbitraryWorkerNeverAccepted) {
  write_planted("p.txt", 6);
  const std::string k = key();
  for (int seed = 0; seed < 5; ++seed) {
    const Result r = run("solve --matrix " + path("p.txt") + " --key " + k + " --policy arbitrary --seed " +
                         std::to_string(seed));
    EXPECT_TRUE(r.code == 1 || r.code == 2) << r.out;
  }
}

TEST_F(Cli, WorkerRefusesPrivateKeyFile) {
  const Result r = run("worker --listen " + std::to_string(free_port()) + " --pubkey " + key());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("private"), std::string::npos) << r.out;
}

TEST_F(Cli, BenchSmokeWithoutReport) {
  const Result r = run("bench --sizes 4 --trials 1 --bits 256 --seed 1");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("Client Speedup"), std::string::npos);
  std::size_t rows = 0;
  std::istringstream in(r.out);
  for (std::string line; std::getline(in, line);) rows += line.rfind("4 ", 0) == 0 ? 1 : 0;
  EXPECT_EQ(rows, 1u) << r.out;
  EXPECT_TRUE(fs::is_empty(dir_));
}

TEST_F(Cli, BenchWritesReport) {
  const Result r = run("bench --sizes 3,4 --trials 2 --bits 256 --seed 1 --out " + path("r.csv"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(path("r.csv")));
  EXPECT_TRUE(fs::exists(path("r.csv.json")));
}
