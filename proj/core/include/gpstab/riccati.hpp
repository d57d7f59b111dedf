#pragma once

#include <Eigen/Dense>

namespace gpstab {

// Solves A^T X + X A + Q = 0 (dense Kronecker form; meant for small n).
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

// Hautus test: rank [A - λI, B] = n at every eigenvalue with Re λ >= -tol.
bool is_stabilizable(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double tol = 1e-8);

bool is_hurwitz(const Eigen::MatrixXd& A);

// A^T P + P A - P B R^{-1} B^T P + Q
Eigen::MatrixXd care_residual(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                              const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R,
                              const Eigen::MatrixXd& P);

struct CareSolution {
  Eigen::MatrixXd P;
  Eigen::MatrixXd K;  // R^{-1} B^T P
  int newton_iterations = 0;
  double residual = 0.0;  // max-abs entry of care_residual
};

// Stabilizing solution of the continuous algebraic Riccati equation. The
// stable invariant subspace of the Hamiltonian seeds Newton–Kleinman
// iteration. Throws NotStabilizable or RiccatiDiverged (100 iterations).
CareSolution solve_care(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                        const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

}  // namespace gpstab
