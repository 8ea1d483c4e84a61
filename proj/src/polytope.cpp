#include "walkmpc/polytope.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "walkmpc/errors.hpp"
#include "walkmpc/qp.hpp"

namespace walkmpc {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void Box::validate() const {
  if (lower.size() != upper.size()) throw DomainError("box: bound sizes differ");
  if (!lower.allFinite() || !upper.allFinite()) throw DomainError("box: non-finite bounds");
  for (Index i = 0; i < lower.size(); ++i)
    if (lower(i) > upper(i)) throw DomainError("box: lower bound exceeds upper bound");
}

bool HPolytope::contains(const VectorXd& x, double tol) const {
  if (h.size() == 0) return true;
  return ((H * x - h).array() <= tol).all();
}

HPolytope HPolytope::from_box(const Box& b) {
  b.validate();
  const Index n = b.dim();
  HPolytope p;
  p.H.resize(2 * n, n);
  p.H << MatrixXd::Identity(n, n), -MatrixXd::Identity(n, n);
  p.h.resize(2 * n);
  p.h << b.upper, -b.lower;
  return p;
}

Zonotope box_to_zonotope(const Box& b) {
  b.validate();
  Zonotope z;
  z.center = b.center();
  z.generators = b.half_width().asDiagonal();
  return z;
}

Zonotope linear_map(const Zonotope& z, const MatrixXd& M) {
  if (M.cols() != z.dim()) throw DomainError("linear_map: matrix columns do not match set dimension");
  return {M * z.center, M * z.generators};
}

Zonotope minkowski_sum(const Zonotope& a, const Zonotope& b) {
  if (a.dim() != b.dim()) throw DomainError("minkowski_sum: dimension mismatch");
  Zonotope out;
  out.center = a.center + b.center;
  out.generators.resize(a.dim(), a.num_generators() + b.num_generators());
  out.generators << a.generators, b.generators;
  return out;
}

Zonotope scale(const Zonotope& z, double factor) { return {factor * z.center, factor * z.generators}; }

double support(const Zonotope& z, const VectorXd& d) {
  if (d.size() != z.dim()) throw DomainError("support: direction has wrong dimension");
  double s = d.dot(z.center);
  if (z.num_generators() > 0) s += (d.transpose() * z.generators).cwiseAbs().sum();
  return s;
}

double support(const Box& b, const VectorXd& d) {
  double s = 0.0;
  for (Index i = 0; i < d.size(); ++i) s += d(i) >= 0 ? d(i) * b.upper(i) : d(i) * b.lower(i);
  return s;
}

bool is_empty(const HPolytope& X) {
  const double tol = 1e-9 * (1.0 + (X.h.size() ? X.h.cwiseAbs().maxCoeff() : 0.0));
  return !find_feasible_point(X.H, X.h, tol).has_value();
}

PontryaginResult pontryagin_diff(const HPolytope& X, const Zonotope& Z) {
  if (X.dim() != Z.dim()) throw DomainError("pontryagin_diff: dimension mismatch");
  PontryaginResult r;
  r.set.H = X.H;
  r.set.h.resize(X.h.size());
  for (Index i = 0; i < X.h.size(); ++i) r.set.h(i) = X.h(i) - support(Z, X.H.row(i).transpose());
  r.empty = is_empty(r.set);
  return r;
}

namespace {

double spectral_radius(const MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Infinity-norm radius of z around the origin.
double radius_inf(const Zonotope& z) {
  double r = 0.0;
  for (Index i = 0; i < z.dim(); ++i) {
    VectorXd e = VectorXd::Zero(z.dim());
    e(i) = 1.0;
    r = std::max({r, support(z, e), support(z, -e)});
  }
  return r;
}

}  // namespace

Zonotope mrpi_exact_nilpotent(const MatrixXd& A_K, const Box& W) {
  W.validate();
  const Index n = A_K.rows();
  if (A_K.cols() != n || W.dim() != n) throw DomainError("mrpi: dimension mismatch");
  const Zonotope Wz = box_to_zonotope(W);
  const double tol = 1e-10 * std::max(1.0, A_K.cwiseAbs().maxCoeff());

  Zonotope omega = Wz;
  MatrixXd power = A_K;
  for (Index k = 1; k <= n; ++k) {
    if (power.cwiseAbs().maxCoeff() <= tol) return omega;
    omega = minkowski_sum(omega, linear_map(Wz, power));
    power = power * A_K;
  }
  throw PreconditionError("mrpi_exact_nilpotent: closed-loop matrix is not nilpotent; use mrpi_outer_eps");
}

MrpiApproximation mrpi_outer_eps(const MatrixXd& A_K, const Box& W, double eps) {
  W.validate();
  const Index n = A_K.rows();
  if (A_K.cols() != n || W.dim() != n) throw DomainError("mrpi: dimension mismatch");
  if (!(eps > 0.0)) throw DomainError("mrpi: eps must be positive");
  if ((W.lower.array() >= 0.0).any() || (W.upper.array() <= 0.0).any())
    throw DomainError("mrpi: disturbance set must contain the origin in its interior");
  if (spectral_radius(A_K) >= 1.0) throw DomainError("mrpi: closed-loop matrix is not Schur");

  const Zonotope Wz = box_to_zonotope(W);
  constexpr int kMaxTerms = 100000;

  Zonotope partial = Zonotope::point(VectorXd::Zero(n));
  MatrixXd power = MatrixXd::Identity(n, n);  // A^(s-1)
  for (int s = 1; s <= kMaxTerms; ++s) {
    partial = minkowski_sum(partial, linear_map(Wz, power));
    power = power * A_K;  // A^s
    const Zonotope tail = linear_map(Wz, power);

    double alpha = 0.0;
    for (Index i = 0; i < n; ++i) {
      VectorXd e = VectorXd::Zero(n);
      e(i) = 1.0;
      alpha = std::max(alpha, support(tail, e) / W.upper(i));
      alpha = std::max(alpha, support(tail, -e) / -W.lower(i));
    }
    if (alpha >= 1.0) continue;
    if (alpha / (1.0 - alpha) * radius_inf(partial) <= eps)
      return {scale(partial, 1.0 / (1.0 - alpha)), s, alpha};
  }
  throw DomainError("mrpi: no convergence (closed loop too close to marginal stability)");
}

namespace {

Index column_rank(const MatrixXd& G) {
  if (G.cols() == 0) return 0;
  Eigen::FullPivLU<MatrixXd> lu(G);
  lu.setThreshold(1e-12);
  return lu.rank();
}

// Unit normal to the span of the given n-1 columns, or zero if degenerate.
VectorXd facet_normal(const MatrixXd& cols) {
  const Index n = cols.rows();
  if (n == 1) return VectorXd::Ones(1);
  Eigen::FullPivLU<MatrixXd> lu(cols.transpose());
  lu.setThreshold(1e-12);
  if (lu.rank() != n - 1) return VectorXd::Zero(n);
  VectorXd v = lu.kernel().col(0);
  return v / v.norm();
}

}  // namespace

HPolytope to_hpolytope(const Zonotope& z) {
  const Index n = z.dim();
  const Index k = z.num_generators();
  if (column_rank(z.generators) < n)
    throw PreconditionError("to_hpolytope: zonotope is not full-dimensional");

  std::vector<VectorXd> normals;
  auto add_normal = [&](const VectorXd& v) {
    if (v.norm() == 0.0) return;
    for (const auto& u : normals)
      if (std::abs(std::abs(u.dot(v)) - 1.0) < 1e-12) return;
    normals.push_back(v);
  };

  if (n == 1) {
    add_normal(VectorXd::Ones(1));
  } else {
    // Enumerate (n-1)-subsets of generator columns.
    std::vector<int> idx(static_cast<std::size_t>(n - 1));
    std::iota(idx.begin(), idx.end(), 0);
    while (true) {
      MatrixXd cols(n, n - 1);
      for (Index c = 0; c < n - 1; ++c) cols.col(c) = z.generators.col(idx[static_cast<std::size_t>(c)]);
      add_normal(facet_normal(cols));
      // next combination
      Index pos = n - 2;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == k - (n - 1) + pos) --pos;
      if (pos < 0) break;
      ++idx[static_cast<std::size_t>(pos)];
      for (Index q = pos + 1; q < n - 1; ++q) idx[static_cast<std::size_t>(q)] = idx[static_cast<std::size_t>(q - 1)] + 1;
    }
  }

  HPolytope p;
  const Index m = static_cast<Index>(normals.size());
  p.H.resize(2 * m, n);
  p.h.resize(2 * m);
  for (Index i = 0; i < m; ++i) {
    const VectorXd& v = normals[static_cast<std::size_t>(i)];
    p.H.row(2 * i) = v.transpose();
    p.h(2 * i) = support(z, v);
    p.H.row(2 * i + 1) = -v.transpose();
    p.h(2 * i + 1) = support(z, -v);
  }
  return p;
}

namespace {

Zonotope inflate(const Zonotope& z, double tol) {
  if (tol <= 0.0) return z;
  return minkowski_sum(z, {VectorXd::Zero(z.dim()), tol * MatrixXd::Identity(z.dim(), z.dim())});
}

// x in z via the coefficient LP: G l = x - c, |l| <= 1.
bool contains_lp(const Zonotope& z, const VectorXd& x) {
  const Index n = z.dim();
  const Index k = z.num_generators();
  const VectorXd r = x - z.center;
  if (k == 0) return r.cwiseAbs().maxCoeff() <= 1e-12;
  MatrixXd A(2 * n + 2 * k, k);
  VectorXd b(2 * n + 2 * k);
  A << z.generators, -z.generators, MatrixXd::Identity(k, k), -MatrixXd::Identity(k, k);
  b << r, -r, VectorXd::Ones(2 * k);
  return find_feasible_point(A, b, 1e-12).has_value();
}

double excess(const HPolytope& p, const VectorXd& x) {
  double e = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < p.h.size(); ++i) e = std::max(e, (p.H.row(i).dot(x) - p.h(i)) / p.H.row(i).norm());
  return e;
}

}  // namespace

bool contains(const Zonotope& z, const VectorXd& x, double tol) {
  if (x.size() != z.dim()) throw DomainError("contains: point has wrong dimension");
  const Zonotope zi = inflate(z, tol);
  if (column_rank(zi.generators) < zi.dim()) return contains_lp(zi, x);
  const HPolytope p = to_hpolytope(zi);
  const double slack = 1e-12 * (1.0 + x.cwiseAbs().maxCoeff() + p.h.cwiseAbs().maxCoeff());
  return p.contains(x, slack);
}

std::vector<Eigen::Vector2d> vertices_2d(const Zonotope& z) {
  if (z.dim() != 2) throw DomainError("vertices_2d: zonotope must be 2-D");
  struct Gen {
    double angle;
    Eigen::Vector2d g;
  };
  std::vector<Gen> gens;
  for (Index j = 0; j < z.num_generators(); ++j) {
    Eigen::Vector2d g = z.generators.col(j);
    if (g.norm() <= 1e-300) continue;
    if (g.y() < 0.0 || (g.y() == 0.0 && g.x() < 0.0)) g = -g;
    gens.push_back({std::atan2(g.y(), g.x()), g});
  }
  std::stable_sort(gens.begin(), gens.end(), [](const Gen& a, const Gen& b) { return a.angle < b.angle; });
  std::vector<Gen> merged;
  for (const auto& g : gens) {
    if (!merged.empty()) {
      const Eigen::Vector2d& h = merged.back().g;
      const double cross = h.x() * g.g.y() - h.y() * g.g.x();
      if (std::abs(cross) <= 1e-12 * h.norm() * g.g.norm()) {
        merged.back().g += g.g;
        continue;
      }
    }
    merged.push_back(g);
  }

  const Eigen::Vector2d c = z.center;
  if (merged.empty()) return {c};
  Eigen::Vector2d v = c;
  for (const auto& g : merged) v -= g.g;
  std::vector<Eigen::Vector2d> verts;
  for (const auto& g : merged) {
    verts.push_back(v);
    v += 2.0 * g.g;
  }
  for (const auto& g : merged) {
    verts.push_back(v);
    v -= 2.0 * g.g;
  }
  return verts;
}

double hausdorff_distance_2d(const Zonotope& a, const Zonotope& b, int directions) {
  if (a.dim() != 2 || b.dim() != 2) throw DomainError("hausdorff_distance_2d: sets must be 2-D");
  std::vector<Eigen::Vector2d> dirs;
  for (int i = 0; i < directions; ++i) {
    const double t = 2.0 * M_PI * i / directions;
    dirs.emplace_back(std::cos(t), std::sin(t));
  }
  for (const Zonotope* z : {&a, &b})
    for (Index j = 0; j < z->num_generators(); ++j) {
      Eigen::Vector2d g = z->generators.col(j);
      if (g.norm() == 0.0) continue;
      const Eigen::Vector2d nrm = Eigen::Vector2d(-g.y(), g.x()).normalized();
      dirs.push_back(nrm);
      dirs.push_back(-nrm);
    }
  double d = 0.0;
  for (const auto& u : dirs) d = std::max(d, std::abs(support(a, u) - support(b, u)));
  return d;
}

RpiReport rpi_check(const MatrixXd& A_K, const Box& W, const Zonotope& omega, int samples,
                    std::uint64_t seed, int steps, double tol) {
  W.validate();
  const Index n = omega.dim();
  if (A_K.rows() != n || A_K.cols() != n || W.dim() != n)
    throw DomainError("rpi_check: dimension mismatch");

  RpiReport rep;
  rep.steps = steps;
  rep.seed = seed;

  std::vector<VectorXd> starts;
  if (n == 2) {
    for (const auto& v : vertices_2d(omega)) starts.emplace_back(v);
  } else if (omega.num_generators() <= 12) {
    const Index k = omega.num_generators();
    for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
      VectorXd v = omega.center;
      for (Index j = 0; j < k; ++j) v += ((mask >> j) & 1u ? 1.0 : -1.0) * omega.generators.col(j);
      starts.push_back(v);
    }
  }
  rep.vertex_starts = static_cast<int>(starts.size());

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int s = 0; s < samples; ++s) {
    VectorXd lam(omega.num_generators());
    for (Index j = 0; j < lam.size(); ++j) lam(j) = unit(rng);
    starts.push_back(omega.center + omega.generators * lam);
  }
  rep.starts = static_cast<int>(starts.size());

  const Zonotope target = inflate(omega, tol);
  const bool full_dim = column_rank(target.generators) == n;
  const HPolytope hrep = full_dim ? to_hpolytope(target) : HPolytope{};
  rep.max_excess = -std::numeric_limits<double>::infinity();

  std::vector<std::uniform_real_distribution<double>> wdist;
  for (Index i = 0; i < n; ++i) wdist.emplace_back(W.lower(i), W.upper(i));

  for (const auto& e0 : starts) {
    VectorXd e = e0;
    for (int t = 0; t < steps; ++t) {
      VectorXd w(n);
      for (Index i = 0; i < n; ++i) w(i) = wdist[static_cast<std::size_t>(i)](rng);
      e = A_K * e + w;
      bool inside;
      if (full_dim) {
        const double ex = excess(hrep, e);
        rep.max_excess = std::max(rep.max_excess, ex);
        inside = ex <= 1e-12 * (1.0 + hrep.h.cwiseAbs().maxCoeff());
      } else {
        inside = contains_lp(target, e);
      }
      if (!inside) ++rep.violations;
    }
  }
  if (!full_dim) rep.max_excess = 0.0;
  return rep;
}

namespace {

void expect_tag(std::istream& is, const std::string& tag) {
  std::string t;
  if (!(is >> t) || t != tag) throw DomainError("set dump: expected '" + tag + "'");
}

}  // namespace

void write_zonotope(std::ostream& os, const Zonotope& z) {
  const auto old = os.precision(17);
  os << "zonotope " << z.dim() << ' ' << z.num_generators() << '\n';
  os << "center";
  for (Index i = 0; i < z.dim(); ++i) os << ' ' << z.center(i);
  os << '\n';
  for (Index j = 0; j < z.num_generators(); ++j) {
    os << "g";
    for (Index i = 0; i < z.dim(); ++i) os << ' ' << z.generators(i, j);
    os << '\n';
  }
  os.precision(old);
}

Zonotope read_zonotope(std::istream& is) {
  expect_tag(is, "zonotope");
  Index n = 0;
  Index k = 0;
  if (!(is >> n >> k) || n < 0 || k < 0) throw DomainError("set dump: bad zonotope header");
  Zonotope z{VectorXd(n), MatrixXd(n, k)};
  expect_tag(is, "center");
  for (Index i = 0; i < n; ++i)
    if (!(is >> z.center(i))) throw DomainError("set dump: truncated center");
  for (Index j = 0; j < k; ++j) {
    expect_tag(is, "g");
    for (Index i = 0; i < n; ++i)
      if (!(is >> z.generators(i, j))) throw DomainError("set dump: truncated generator");
  }
  return z;
}

void write_hpolytope(std::ostream& os, const HPolytope& p) {
  const auto old = os.precision(17);
  os << "hpolytope " << p.dim() << ' ' << p.num_rows() << '\n';
  for (Index i = 0; i < p.num_rows(); ++i) {
    os << "row";
    for (Index j = 0; j < p.dim(); ++j) os << ' ' << p.H(i, j);
    os << ' ' << p.h(i) << '\n';
  }
  os.precision(old);
}

HPolytope read_hpolytope(std::istream& is) {
  expect_tag(is, "hpolytope");
  Index n = 0;
  Index m = 0;
  if (!(is >> n >> m) || n < 0 || m < 0) throw DomainError("set dump: bad hpolytope header");
  HPolytope p{MatrixXd(m, n), VectorXd(m)};
  for (Index i = 0; i < m; ++i) {
    expect_tag(is, "row");
    for (Index j = 0; j < n; ++j)
      if (!(is >> p.H(i, j))) throw DomainError("set dump: truncated row");
    if (!(is >> p.h(i))) throw DomainError("set dump: truncated row");
  }
  return p;
}

}  // namespace walkmpc
