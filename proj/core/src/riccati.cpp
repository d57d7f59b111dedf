#include "gpstab/riccati.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "gpstab/errors.hpp"

namespace gpstab {

namespace {

Eigen::MatrixXd symmetrize(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Gain from the stable eigenvectors of the Hamiltonian, or an empty matrix
// if the subspace is unusable.
Eigen::MatrixXd hamiltonian_seed(const Eigen::MatrixXd& A, const Eigen::MatrixXd& S,
                                 const Eigen::MatrixXd& Q) {
  const Eigen::Index n = A.rows();
  Eigen::MatrixXd h(2 * n, 2 * n);
  h << A, -S, -Q, -A.transpose();
  Eigen::EigenSolver<Eigen::MatrixXd> es(h);
  if (es.info() != Eigen::Success) return {};
  Eigen::MatrixXcd stable(2 * n, n);
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < 2 * n; ++i) {
    if (es.eigenvalues()[i].real() < 0.0) {
      if (count == n) return {};
      stable.col(count++) = es.eigenvectors().col(i);
    }
  }
  if (count != n) return {};
  const Eigen::MatrixXcd u1 = stable.topRows(n);
  const Eigen::MatrixXcd u2 = stable.bottomRows(n);
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(u1);
  if (!lu.isInvertible()) return {};
  const Eigen::MatrixXd p = (u2 * lu.inverse()).real();
  if (!p.allFinite()) return {};
  return symmetrize(p);
}

// Bass's construction of a stabilizing gain for a stabilizable pair.
Eigen::MatrixXd bass_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  const Eigen::Index n = A.rows();
  const double beta = 1.0 + A.cwiseAbs().rowwise().sum().maxCoeff();
  const Eigen::MatrixXd shifted = -(A + beta * Eigen::MatrixXd::Identity(n, n)).transpose();
  // (A + βI) Z + Z (A + βI)^T = 2 B B^T
  const Eigen::MatrixXd z = solve_lyapunov(shifted, 2.0 * B * B.transpose());
  return B.transpose() * z.completeOrthogonalDecomposition().pseudoInverse();
}

}  // namespace

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || Q.rows() != n || Q.cols() != n) {
    throw std::invalid_argument("solve_lyapunov: dimension mismatch");
  }
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
  // vec(A^T X + X A) = (I ⊗ A^T + A^T ⊗ I) vec(X)
  Eigen::MatrixXd op = Eigen::MatrixXd::Zero(n * n, n * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      op.block(i * n, j * n, n, n) += eye(i, j) * A.transpose();
      op.block(i * n, j * n, n, n) += A(j, i) * eye;
    }
  }
  const Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(Q.data(), n * n);
  const Eigen::VectorXd x = op.fullPivLu().solve(rhs);
  return symmetrize(Eigen::Map<const Eigen::MatrixXd>(x.data(), n, n));
}

bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol) {
  const Eigen::Index n = A.rows();
  Eigen::EigenSolver<Eigen::MatrixXd> es(A);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::complex<double> lambda = es.eigenvalues()[i];
    if (lambda.real() < -tol) continue;
    Eigen::MatrixXcd m(n, n + B.cols());
    m.leftCols(n) = A.cast<std::complex<double>>() -
                    lambda * Eigen::MatrixXcd::Identity(n, n);
    m.rightCols(B.cols()) = B.cast<std::complex<double>>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv[n - 1] <= tol * std::max(1.0, sv[0])) return false;
  }
  return true;
}

bool is_hurwitz(const Eigen::MatrixXd& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  return (es.eigenvalues().real().array() < 0.0).all();
}

Eigen::MatrixXd care_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                              const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                              const Eigen::MatrixXd& P) {
  return A.transpose() * P + P * A - P * B * R.llt().solve(B.transpose()) * P + Q;
}

CareSolution solve_care(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || B.rows() != n || Q.rows() != n || Q.cols() != n ||
      R.rows() != B.cols() || R.cols() != B.cols()) {
    throw std::invalid_argument("solve_care: dimension mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> r_llt(R);
  if (r_llt.info() != Eigen::Success) throw NotPositiveDefinite("solve_care: R is not positive definite");
  if (!is_stabilizable(A, B)) throw NotStabilizable("(A, B) is not stabilizable");

  const Eigen::MatrixXd r_inv_bt = r_llt.solve(B.transpose());
  const Eigen::MatrixXd s = B * r_inv_bt;

  Eigen::MatrixXd k;
  const Eigen::MatrixXd seed = hamiltonian_seed(A, s, Q);
  if (seed.size() != 0 && is_hurwitz(A - B * (r_inv_bt * seed))) {
    k = r_inv_bt * seed;
  } else {
    k = bass_gain(A, B);
    if (!is_hurwitz(A - B * k)) throw RiccatiDiverged("could not find a stabilizing initial gain");
  }

  CareSolution sol;
  Eigen::MatrixXd p = seed.size() != 0 ? seed : Eigen::MatrixXd::Zero(n, n);
  double last_change = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= 100; ++it) {
    const Eigen::MatrixXd ak = A - B * k;
    const Eigen::MatrixXd next = solve_lyapunov(ak, Q + k.transpose() * R * k);
    if (!next.allFinite()) throw RiccatiDiverged("Newton–Kleinman produced non-finite iterates");
    const double change = (next - p).cwiseAbs().maxCoeff();
    p = next;
    k = r_inv_bt * p;
    sol.newton_iterations = it;
    const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
    if (change <= 1e-13 * scale) break;
    // Quadratic convergence has ended in round-off noise.
    if (change <= 1e-8 * scale && change >= last_change) break;
    last_change = change;
    if (it == 100) throw RiccatiDiverged("Newton–Kleinman did not converge in 100 iterations");
  }
  sol.P = p;
  sol.K = k;
  sol.residual = care_residual(A, B, Q, R, p).cwiseAbs().maxCoeff();
  return sol;
}

}  // namespace gpstab
