#pragma once

#include <Eigen/Dense>

#include "gpstab/geometry.hpp"

namespace gpstab {

/// Gaussian kernel  amplitude * exp(-1/2 (x-c)^T diag(inv_lengthscale) (x-c)).
struct KernelSpec {
  Point center;
  double amplitude = 1.0;
  // Diagonal of the inverse length-scale matrix; all entries positive.
  Eigen::VectorXd inv_lengthscale;
};

// Validates amplitude > 0 and a positive diagonal; throws std::invalid_argument.
KernelSpec make_kernel(Point center, double amplitude, Eigen::VectorXd inv_lengthscale);

/// Lower/upper deviation of a function from its linear interpolant on a simplex.
/// Both entries are nonnegative: -lower <= f - interp(f) <= upper.
struct BoundPair {
  double lower = 0.0;
  double upper = 0.0;
};

double kernel_eval(const KernelSpec& k, const Point& x);
Eigen::VectorXd kernel_grad(const KernelSpec& k, const Point& x);

// Largest eigenvalue of the (diagonal) inverse length-scale matrix.
double lambda_max(const KernelSpec& k);

// Largest eigenvalue of a general symmetric matrix by power iteration on a
// shifted PSD operator. Not used by the pipeline, which keeps Σ_w diagonal.
double lambda_max_symmetric(const Eigen::MatrixXd& m, double tolerance = 1e-12,
                            int max_iterations = 10000);

// Closed-form second-order bounds for a kernel on a simplex with
// `vertex_count` vertices and half-diameter tau:
//   lower = exp(-3/2) (N-1) amplitude lambda_max tau^2
//   upper =           (N-1) amplitude lambda_max tau^2 / 2
BoundPair kernel_bounds(double amplitude, double lambda_max, double tau, Eigen::Index vertex_count);
BoundPair kernel_simplex_bounds(const KernelSpec& k, const Simplex& s);

/// A family of Gaussian kernels sharing amplitude and length scales, one per
/// center (row of `centers`). Both the GP mean and the value function are
/// linear combinations over such a set.
class KernelSet {
 public:
  KernelSet() = default;
  KernelSet(Eigen::MatrixXd centers, double amplitude, Eigen::VectorXd inv_lengthscale);

  Eigen::Index size() const { return centers_.rows(); }
  Eigen::Index dimension() const { return centers_.cols(); }
  const Eigen::MatrixXd& centers() const { return centers_; }
  double amplitude() const { return amplitude_; }
  const Eigen::VectorXd& inv_lengthscale() const { return inv_lengthscale_; }
  double lambda_max() const { return inv_lengthscale_.maxCoeff(); }

  KernelSpec kernel(Eigen::Index i) const;

  // [K^(1)(x), ..., K^(D)(x)]
  Eigen::VectorXd values(const Point& x) const;
  // Column i is the gradient of K^(i) at x (n x D).
  Eigen::MatrixXd gradients(const Point& x) const;
  // Gradients given precomputed kernel values at x.
  Eigen::MatrixXd gradients(const Point& x, const Eigen::VectorXd& values) const;

  // Kernel matrix between the centers (no noise term).
  Eigen::MatrixXd self_gram() const;

 private:
  Eigen::MatrixXd centers_;
  double amplitude_ = 1.0;
  Eigen::VectorXd inv_lengthscale_;
};

}  // namespace gpstab
