#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

// Plaintext dense linear algebra and the local power-iteration reference.
namespace secpower::linalg {

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RealVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = DenseMatrix<double>;
using Vector = RealVector<double>;

class LinalgError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionMismatch : public LinalgError {
 public:
  using LinalgError::LinalgError;
};

// A*x^k vanished or the start vector was zero.
class ZeroIterate : public LinalgError {
 public:
  using LinalgError::LinalgError;
};

template <typename Scalar>
struct EigenResult {
  Scalar eigenvalue{};
  RealVector<Scalar> eigenvector;
  std::size_t iterations = 0;
  bool converged = false;
};

template <typename Scalar>
struct SignedMax {
  Scalar value{};
  Eigen::Index index = 0;
};

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw LinalgError(std::string(what) + " has non-finite entries");
}

template <typename DerivedA, typename DerivedX>
RealVector<typename DerivedA::Scalar> matvec(const Eigen::MatrixBase<DerivedA>& A,
                                             const Eigen::MatrixBase<DerivedX>& x) {
  if (A.cols() != x.size()) throw DimensionMismatch("matvec: dimension mismatch");
  return A * x;
}

// Component of largest magnitude with its sign; ties go to the lowest index.
template <typename Derived>
SignedMax<typename Derived::Scalar> inf_norm_signed(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  SignedMax<Scalar> best;
  Scalar best_abs = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Scalar a = std::abs(x(i));
    if (a > best_abs) {
      best_abs = a;
      best = {x(i), i};
    }
  }
  if (best_abs == Scalar(0)) throw ZeroIterate("inf_norm_signed: zero vector");
  return best;
}

template <typename Derived>
typename Derived::Scalar inf_norm(const Eigen::MatrixBase<Derived>& x) {
  return x.size() == 0 ? typename Derived::Scalar(0) : x.template lpNorm<Eigen::Infinity>();
}

// Induced infinity norm (maximum absolute row sum).
template <typename Derived>
typename Derived::Scalar matrix_inf_norm(const Eigen::MatrixBase<Derived>& A) {
  return A.rows() == 0 ? typename Derived::Scalar(0) : A.cwiseAbs().rowwise().sum().maxCoeff();
}

struct NoObserver {
  template <typename V>
  void operator()(std::size_t, const V&) const {}
};

// Power iteration x^{k+1} = A x^k / s_k, s_k the signed dominant component of
// A x^k. Stops when ||x^k - x^{k+1}||_inf <= eps (converged) or after omega
// products. The observer sees (k + 1, x^{k+1}) for every emitted iterate.
template <typename Scalar, typename Observer = NoObserver>
EigenResult<Scalar> local_power_iteration(const DenseMatrix<Scalar>& A,
                                          const RealVector<Scalar>& x0, Scalar eps,
                                          std::size_t omega, Observer&& observe = {}) {
  if (A.rows() != A.cols() || A.rows() < 1) throw DimensionMismatch("matrix must be square, n >= 1");
  if (x0.size() != A.cols()) throw DimensionMismatch("start vector length mismatch");
  if (!(eps > 0)) throw LinalgError("eps must be positive");
  if (omega < 1) throw LinalgError("omega must be at least 1");
  require_finite(A, "matrix");
  require_finite(x0, "start vector");
  if (x0.isZero(0)) throw ZeroIterate("start vector is zero");

  EigenResult<Scalar> out;
  RealVector<Scalar> x = x0;
  RealVector<Scalar> y(x.size());
  for (std::size_t k = 0; k < omega; ++k) {
    y.noalias() = A * x;
    const auto dominant = inf_norm_signed(y);
    y /= dominant.value;
    const Scalar step = (x - y).template lpNorm<Eigen::Infinity>();
    x.swap(y);
    observe(k + 1, x);
    out.eigenvalue = dominant.value;
    out.iterations = k + 1;
    if (step <= eps) {
      out.converged = true;
      break;
    }
  }
  out.eigenvector = std::move(x);
  return out;
}

enum class Basis { RandomWellConditioned, Identity };

template <typename Scalar>
struct PlantedEigenpair {
  DenseMatrix<Scalar> matrix;
  Scalar eigenvalue{};
  RealVector<Scalar> eigenvector;
};

// A = Q D Q^-1 with d_0 the dominant eigenvalue (|d_0| in [1, 2), random sign)
// and max_{i>0} |d_i| = |d_0| / dominance. Q = U S with U Haar-orthogonal and S
// diagonal in [1, 2], so cond_2(Q) <= 2.
template <typename Scalar = double, typename Rng>
PlantedEigenpair<Scalar> make_test_matrix(Eigen::Index n, Scalar dominance, Rng& rng,
                                          Basis basis = Basis::RandomWellConditioned) {
  if (n < 1) throw LinalgError("dimension must be positive");
  if (!(dominance > 1)) throw LinalgError("dominance ratio must exceed 1");

  std::uniform_real_distribution<Scalar> unit(0, 1);
  std::normal_distribution<Scalar> gauss(0, 1);
  auto sign = [&] { return unit(rng) < Scalar(0.5) ? Scalar(-1) : Scalar(1); };

  RealVector<Scalar> d(n);
  const Scalar lead = sign() * (1 + unit(rng));
  const Scalar second = std::abs(lead) / dominance;
  d(0) = lead;
  if (n > 1) d(1) = sign() * second;
  for (Eigen::Index i = 2; i < n; ++i) d(i) = (2 * unit(rng) - 1) * second;

  DenseMatrix<Scalar> Q = DenseMatrix<Scalar>::Identity(n, n);
  DenseMatrix<Scalar> Q_inv = DenseMatrix<Scalar>::Identity(n, n);
  if (basis == Basis::RandomWellConditioned) {
    DenseMatrix<Scalar> G(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) G(i, j) = gauss(rng);
    Eigen::HouseholderQR<DenseMatrix<Scalar>> qr(G);
    DenseMatrix<Scalar> U = qr.householderQ();
    const RealVector<Scalar> r_diag = qr.matrixQR().diagonal();
    for (Eigen::Index j = 0; j < n; ++j)
      if (r_diag(j) < 0) U.col(j) *= Scalar(-1);
    RealVector<Scalar> s(n);
    for (Eigen::Index j = 0; j < n; ++j) s(j) = 1 + unit(rng);
    Q = U * s.asDiagonal();
    Q_inv = s.cwiseInverse().asDiagonal() * U.transpose();
  }

  PlantedEigenpair<Scalar> out;
  out.matrix = Q * d.asDiagonal() * Q_inv;
  out.eigenvalue = lead;
  out.eigenvector = Q.col(0);
  return out;
}

// Text format: line 1 holds n, then n lines of n whitespace-separated reals.
Matrix read_matrix(std::istream& in);
Matrix read_matrix_file(const std::filesystem::path& path);
void write_matrix(std::ostream& out, const Matrix& A);
void write_matrix_file(const std::filesystem::path& path, const Matrix& A);

}  // namespace secpower::linalg
