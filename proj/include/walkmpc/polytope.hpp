#pragma once

// Convex sets used for tube tightening: axis-aligned boxes, zonotopes
// (center + generators, closed under linear maps and Minkowski sums) and
// halfspace polytopes {x : H x <= h}.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

namespace walkmpc {

struct Box {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static Box symmetric(const Eigen::VectorXd& half_width) { return {-half_width, half_width}; }
  Eigen::Index dim() const { return lower.size(); }
  Eigen::VectorXd center() const { return 0.5 * (lower + upper); }
  Eigen::VectorXd half_width() const { return 0.5 * (upper - lower); }
  /// Throws DomainError on size mismatch, non-finite bounds, or lower > upper.
  void validate() const;
};

struct Zonotope {
  Eigen::VectorXd center;
  Eigen::MatrixXd generators;  // n x k, one generator per column

  static Zonotope point(const Eigen::VectorXd& x) { return {x, Eigen::MatrixXd(x.size(), 0)}; }
  Eigen::Index dim() const { return center.size(); }
  Eigen::Index num_generators() const { return generators.cols(); }
};

struct HPolytope {
  Eigen::MatrixXd H;
  Eigen::VectorXd h;

  Eigen::Index dim() const { return H.cols(); }
  Eigen::Index num_rows() const { return h.size(); }
  bool contains(const Eigen::VectorXd& x, double tol = 0.0) const;
  static HPolytope from_box(const Box& b);
};

Zonotope box_to_zonotope(const Box& b);
Zonotope linear_map(const Zonotope& z, const Eigen::MatrixXd& M);
Zonotope minkowski_sum(const Zonotope& a, const Zonotope& b);
Zonotope scale(const Zonotope& z, double factor);

/// h_Z(d) = d'c + sum_k |d' g_k|.
double support(const Zonotope& z, const Eigen::VectorXd& d);
double support(const Box& b, const Eigen::VectorXd& d);

struct PontryaginResult {
  HPolytope set;
  bool empty = false;
};

/// X minus Z in the Pontryagin sense, row by row through support functions.
/// Emptiness is reported, never thrown.
PontryaginResult pontryagin_diff(const HPolytope& X, const Zonotope& Z);

/// True if {H x <= h} has a point (Phase-I LP).
bool is_empty(const HPolytope& X);

/// Exact minimal RPI set W + A W + ... + A^(k-1) W for nilpotent A
/// (A^k = 0, k <= n). Throws PreconditionError otherwise.
Zonotope mrpi_exact_nilpotent(const Eigen::MatrixXd& A_K, const Box& W);

struct MrpiApproximation {
  Zonotope set;
  int s = 0;           // number of partial-sum terms
  double alpha = 0.0;  // A^s W contained in alpha W
};

/// Outer eps-approximation of the minimal RPI set:
///   F_s = sum_{j<s} A^j W,  A^s W in alpha W,  Omega in F_s / (1 - alpha),
/// with s the first index where alpha/(1-alpha) * radius(F_s) <= eps.
/// Throws DomainError when A is not Schur or W has no interior around 0.
MrpiApproximation mrpi_outer_eps(const Eigen::MatrixXd& A_K, const Box& W, double eps);

/// Halfspace form of a full-dimensional zonotope (facets from (n-1)-subsets
/// of generators). Throws PreconditionError for degenerate zonotopes.
HPolytope to_hpolytope(const Zonotope& z);

/// x in Z + tol * unit box.
bool contains(const Zonotope& z, const Eigen::VectorXd& x, double tol);

/// Vertices of a 2-D zonotope in counter-clockwise order (parallel
/// generators merged).
std::vector<Eigen::Vector2d> vertices_2d(const Zonotope& z);

/// max over unit directions of |h_A(d) - h_B(d)| for 2-D sets, sampled on
/// `directions` points of the circle plus every edge normal.
double hausdorff_distance_2d(const Zonotope& a, const Zonotope& b, int directions = 720);

struct RpiReport {
  int starts = 0;
  int steps = 0;
  int vertex_starts = 0;
  int violations = 0;        // (start, step) pairs found outside Omega
  double max_excess = 0.0;   // worst containment excess seen
  std::uint64_t seed = 0;
};

/// Simulates e+ = A_K e + w from every vertex of Omega (2-D) and from
/// `samples` random interior points, with w uniform in W, checking e stays
/// in Omega (tolerance `tol`) for `steps` steps.
RpiReport rpi_check(const Eigen::MatrixXd& A_K, const Box& W, const Zonotope& omega,
                    int samples, std::uint64_t seed, int steps = 50, double tol = 1e-8);

void write_zonotope(std::ostream& os, const Zonotope& z);
Zonotope read_zonotope(std::istream& is);
void write_hpolytope(std::ostream& os, const HPolytope& p);
HPolytope read_hpolytope(std::istream& is);

}  // namespace walkmpc
