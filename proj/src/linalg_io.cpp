#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <sstream>
#include <string>

#include "secpower/linalg.hpp"

namespace secpower::linalg {

Matrix read_matrix(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw LinalgError("matrix file: missing dimension line");
  std::istringstream header(line);
  long long n = 0;
  std::string extra;
  if (!(header >> n) || (header >> extra) || n < 1) {
    throw LinalgError("matrix file: first line must hold a positive dimension");
  }
  Matrix A(n, n);
  for (long long i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw LinalgError("matrix file: expected " + std::to_string(n) + " rows");
    std::istringstream row(line);
    for (long long j = 0; j < n; ++j) {
      std::string token;
      if (!(row >> token)) throw LinalgError("matrix file: row " + std::to_string(i + 1) + " is short");
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(token, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != token.size() || !std::isfinite(v)) {
        throw LinalgError("matrix file: bad entry '" + token + "'");
      }
      A(i, j) = v;
    }
    if (row >> extra) throw LinalgError("matrix file: row " + std::to_string(i + 1) + " is long");
  }
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      throw LinalgError("matrix file: trailing content after last row");
    }
  }
  return A;
}

Matrix read_matrix_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LinalgError("cannot open matrix file " + path.string());
  return read_matrix(in);
}

void write_matrix(std::ostream& out, const Matrix& A) {
  if (A.rows() != A.cols()) throw DimensionMismatch("matrix must be square");
  out << A.rows() << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) out << (j ? " " : "") << A(i, j);
    out << '\n';
  }
}

void write_matrix_file(const std::filesystem::path& path, const Matrix& A) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw LinalgError("cannot open " + path.string() + " for writing");
  write_matrix(out, A);
}

}  // namespace secpower::linalg
