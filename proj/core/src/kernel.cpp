#include "gpstab/kernel.hpp"

#include <cmath>
#include <stdexcept>

namespace gpstab {

KernelSpec make_kernel(Point center, double amplitude, Eigen::VectorXd inv_lengthscale) {
  if (!(amplitude > 0.0)) throw std::invalid_argument("kernel amplitude must be positive");
  if (inv_lengthscale.size() != center.size()) {
    throw std::invalid_argument("kernel length-scale dimension mismatch");
  }
  if (!(inv_lengthscale.array() > 0.0).all()) {
    throw std::invalid_argument("inverse length-scales must be positive");
  }
  return KernelSpec{std::move(center), amplitude, std::move(inv_lengthscale)};
}

double kernel_eval(const KernelSpec& k, const Point& x) {
  const Eigen::VectorXd d = x - k.center;
  return k.amplitude * std::exp(-0.5 * d.dot(k.inv_lengthscale.cwiseProduct(d)));
}

Eigen::VectorXd kernel_grad(const KernelSpec& k, const Point& x) {
  const Eigen::VectorXd d = x - k.center;
  const Eigen::VectorXd scaled = k.inv_lengthscale.cwiseProduct(d);
  return -scaled * (k.amplitude * std::exp(-0.5 * d.dot(scaled)));
}

double lambda_max(const KernelSpec& k) { return k.inv_lengthscale.maxCoeff(); }

double lambda_max_symmetric(const Eigen::MatrixXd& m, double tolerance, int max_iterations) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument("lambda_max_symmetric: need a nonempty square matrix");
  }
  // Shift by the Gershgorin radius so the operator is PSD and its dominant
  // eigenvalue is lambda_max + shift.
  const double shift = m.cwiseAbs().rowwise().sum().maxCoeff();
  const Eigen::MatrixXd shifted = m + shift * Eigen::MatrixXd::Identity(m.rows(), m.cols());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(m.rows()) / std::sqrt(static_cast<double>(m.rows()));
  double estimate = v.dot(shifted * v);
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::VectorXd w = shifted * v;
    const double norm = w.norm();
    if (norm == 0.0) break;
    v = w / norm;
    const double next = v.dot(shifted * v);
    if (std::abs(next - estimate) <= tolerance * std::max(1.0, std::abs(next))) {
      estimate = next;
      break;
    }
    estimate = next;
  }
  return estimate - shift;
}

BoundPair kernel_bounds(double amplitude, double lambda_max, double tau, Eigen::Index vertex_count) {
  const double common = static_cast<double>(vertex_count - 1) * amplitude * lambda_max * tau * tau;
  return BoundPair{std::exp(-1.5) * common, common / 2.0};
}

BoundPair kernel_simplex_bounds(const KernelSpec& k, const Simplex& s) {
  if (s.dimension() != k.center.size()) {
    throw std::invalid_argument("kernel_simplex_bounds: dimension mismatch");
  }
  return kernel_bounds(k.amplitude, lambda_max(k), s.tau(), s.vertex_count());
}

KernelSet::KernelSet(Eigen::MatrixXd centers, double amplitude, Eigen::VectorXd inv_lengthscale)
    : centers_(std::move(centers)), amplitude_(amplitude), inv_lengthscale_(std::move(inv_lengthscale)) {
  if (!(amplitude_ > 0.0)) throw std::invalid_argument("kernel amplitude must be positive");
  if (inv_lengthscale_.size() != centers_.cols() || !(inv_lengthscale_.array() > 0.0).all()) {
    throw std::invalid_argument("inverse length-scales must be positive, one per dimension");
  }
}

KernelSpec KernelSet::kernel(Eigen::Index i) const {
  return KernelSpec{centers_.row(i).transpose(), amplitude_, inv_lengthscale_};
}

Eigen::VectorXd KernelSet::values(const Point& x) const {
  const Eigen::MatrixXd diff = centers_.rowwise() - x.transpose();
  const Eigen::VectorXd quad = diff.cwiseAbs2() * inv_lengthscale_;
  return amplitude_ * (-0.5 * quad.array()).exp().matrix();
}

Eigen::MatrixXd KernelSet::gradients(const Point& x) const { return gradients(x, values(x)); }

Eigen::MatrixXd KernelSet::gradients(const Point& x, const Eigen::VectorXd& values) const {
  // d K^(i)/dx = -Σ_w^{-1} (x - x^(i)) K^(i)(x)
  Eigen::MatrixXd g = (x.transpose().replicate(size(), 1) - centers_).transpose();
  g = -(inv_lengthscale_.asDiagonal() * g);
  return g * values.asDiagonal();
}

Eigen::MatrixXd KernelSet::self_gram() const {
  const Eigen::Index d = size();
  Eigen::MatrixXd k(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    k(i, i) = amplitude_;
    for (Eigen::Index j = i + 1; j < d; ++j) {
      const Eigen::VectorXd diff = (centers_.row(i) - centers_.row(j)).transpose();
      k(i, j) = k(j, i) = amplitude_ * std::exp(-0.5 * diff.dot(inv_lengthscale_.cwiseProduct(diff)));
    }
  }
  return k;
}

}  // namespace gpstab
