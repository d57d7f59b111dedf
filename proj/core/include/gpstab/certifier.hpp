#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gpstab/controller.hpp"
#include "gpstab/expr.hpp"
#include "gpstab/geometry.hpp"

namespace gpstab {

/// Per-kernel affine coefficients of the closed loop at x:
///   p̂(x) = Σ_i P^(i)(x) K^(i)(x),   f̂(x) - g R^{-1} g^T p̂(x) = Σ_i A^(i)(x) K^(i)(x).
struct ClosedLoopCoeffs {
  Eigen::VectorXd P;
  Eigen::VectorXd A;
};

ClosedLoopCoeffs closed_loop_coeffs(const ClosedLoopModel& m, const Point& x, Eigen::Index i);

// Lower bound of V̂ on the simplex.
double value_lower_bound(const ClosedLoopModel& m, const Simplex& s);
// Upper bound of H_V̇ on the simplex.
double vdot_upper_bound(const ClosedLoopModel& m, const Simplex& s);

// Both bounds with their vertex values and ε terms.
struct SimplexBounds {
  SimplexBound value;
  SimplexBound vdot;
};
SimplexBounds simplex_bounds(const ClosedLoopModel& m, const Simplex& s);

// The same quantities as generic expressions, for cross-checking:
//   p_j   = Σ_i Linear(P^(i)_j) K^(i)
//   fcl_j = Σ_i Linear(A^(i)_j) K^(i)
//   H_V̇  = Σ_j p_j fcl_j
std::vector<BoundExpr> value_gradient_exprs(const ClosedLoopModel& m);
std::vector<BoundExpr> closed_loop_field_exprs(const ClosedLoopModel& m);
BoundExpr lyapunov_derivative_expr(const ClosedLoopModel& m);

struct SimplexVerdict {
  double V_lower = 0.0;
  double Hdot_upper = 0.0;
  bool certified = false;
  bool contains_origin = false;
  std::uint32_t pieces = 1;  // leaves of the refinement that produced the bounds
};

struct CertifyOptions {
  // Certified means V_lower > margin and Hdot_upper < -margin.
  double margin = 0.0;
  unsigned threads = 1;
  // An uncertified simplex whose vertices all satisfy the strict conditions
  // is bisected along its longest edge, recursively, up to this depth. The
  // simplex's bounds become the min/max over the pieces. 0 disables it.
  int max_refinement_depth = 0;
};

/// Verdicts for every simplex of a triangulation (indexed by simplex id),
/// plus the connected certified region around the origin.
///
/// The origin bucket is the connected set of uncertified simplices that
/// contains the origin; bounds cannot be strict there. The region is the set
/// of certified simplices reachable from the bucket through shared facets of
/// certified simplices. `level` is the smallest V_lower over uncertified
/// simplices outside the bucket and over simplices touching the box boundary,
/// so {V̂ < level} ∩ region is an estimate of a certified sublevel set.
struct StabilityCertificate {
  Box box;
  Eigen::VectorXd grid_step;
  std::vector<SimplexVerdict> verdicts;
  std::vector<std::uint8_t> origin_bucket;
  std::vector<std::uint8_t> in_region;
  std::size_t certified_count = 0;
  std::size_t origin_count = 0;  // simplices containing the origin
  std::size_t bucket_count = 0;
  std::size_t region_count = 0;
  double certified_fraction = 0.0;
  double level = 0.0;
  bool bucket_reaches_boundary = false;
  double eps_value_lower = 0.0;  // shared ε of V̂ on every simplex
  double max_abs_hdot_upper = 0.0;
  std::string controller_hash;
};

StabilityCertificate certify(const ClosedLoopModel& m, const Triangulation& t,
                             const CertifyOptions& options = {});

// Bounds over a simplex from recursive longest-edge bisection: a piece is
// split while it is not certified (at `margin`), its vertices still satisfy
// the strict conditions and the depth allows. If every piece certifies the
// result is the min/max over the pieces; otherwise it is the unsplit bound.
struct RefinedBounds {
  double V_lower = 0.0;
  double Hdot_upper = 0.0;
  std::uint32_t pieces = 1;
  bool certified = false;
};
RefinedBounds refined_bounds(const ClosedLoopModel& m, const Simplex& s, int max_depth, double margin = 0.0);

// Lower bound of V̂ on the simplex, bisecting until the bound reaches
// `target` or the depth runs out.
double refined_value_lower_bound(const ClosedLoopModel& m, const Simplex& s, int max_depth, double target);

// Stable 64-bit FNV-1a hash of α, the kernel parameters and g, as hex.
std::string controller_hash(const ClosedLoopModel& m);

}  // namespace gpstab
