#include "phgr/geometry.hpp"

#include <cmath>

#include "phgr/errors.hpp"

namespace phgr::geo {

namespace {

constexpr double kAtanhClamp = 1.0 - 1e-12;
constexpr double kTinyNorm = 1e-15;

void check_finite(const Vec& x, const char* what) {
  for (double v : x) {
    if (!std::isfinite(v)) throw DomainError(std::string("non-finite input to ") + what);
  }
}

void check_same_dim(const Vec& a, const Vec& b, const char* what) {
  if (a.size() != b.size()) throw ShapeError(std::string("dimension mismatch in ") + what);
}

}  // namespace

void BallConfig::validate() const {
  if (!(c > 0.0)) throw DomainError("BallConfig: curvature must be positive");
  if (!(boundary_eps > 0.0 && boundary_eps < 1.0))
    throw DomainError("BallConfig: boundary_eps must lie in (0, 1)");
  if (dim < 1) throw DomainError("BallConfig: dim must be >= 1");
}

double atanh_clamped(double t) {
  if (t < 0.0) t = 0.0;
  if (t > kAtanhClamp) t = kAtanhClamp;
  return std::atanh(t);
}

double dot(const Vec& a, const Vec& b) {
  check_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

bool in_ball(const Vec& x, const BallConfig& cfg) {
  return cfg.c * dot(x, x) < 1.0;
}

Vec project_to_ball(const Vec& x, const BallConfig& cfg) {
  check_finite(x, "project_to_ball");
  const double max_norm = (1.0 - cfg.boundary_eps) / std::sqrt(cfg.c);
  const double n = norm(x);
  if (n <= max_norm) return x;
  Vec y(x.size());
  const double s = max_norm / n;
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * s;
  return y;
}

double conformal_factor(const Vec& u, const BallConfig& cfg) {
  const double d = 1.0 - cfg.c * dot(u, u);
  if (d <= 0.0) throw DomainError("conformal_factor: point outside the ball");
  return 2.0 / d;
}

Vec mobius_add(const Vec& u, const Vec& v, const BallConfig& cfg) {
  check_finite(u, "mobius_add");
  check_finite(v, "mobius_add");
  check_same_dim(u, v, "mobius_add");
  const double c = cfg.c;
  const double uv = dot(u, v);
  const double u2 = dot(u, u);
  const double v2 = dot(v, v);
  const double cu = 1.0 + 2.0 * c * uv + c * v2;
  const double cv = 1.0 - c * u2;
  double den = 1.0 + 2.0 * c * uv + c * c * u2 * v2;
  if (std::abs(den) < kTinyNorm) den = den < 0 ? -kTinyNorm : kTinyNorm;
  Vec out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = (cu * u[i] + cv * v[i]) / den;
  return project_to_ball(out, cfg);
}

Vec exp_map(const Vec& base, const Vec& x, const BallConfig& cfg) {
  check_finite(x, "exp_map");
  check_same_dim(base, x, "exp_map");
  const double nx = norm(x);
  if (nx < kTinyNorm) return base;
  const double sc = std::sqrt(cfg.c);
  const double lam = conformal_factor(base, cfg);
  const double t = std::tanh(sc * nx * lam / 2.0) / (sc * nx);
  Vec second(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) second[i] = t * x[i];
  return mobius_add(base, second, cfg);
}

Vec log_map(const Vec& base, const Vec& v, const BallConfig& cfg) {
  check_same_dim(base, v, "log_map");
  Vec neg(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) neg[i] = -base[i];
  const Vec w = mobius_add(neg, v, cfg);
  const double nw = norm(w);
  if (nw < kTinyNorm) return Vec(base.size(), 0.0);
  const double sc = std::sqrt(cfg.c);
  const double lam = conformal_factor(base, cfg);
  const double t = (2.0 / (sc * lam)) * atanh_clamped(sc * nw) / nw;
  Vec out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = t * w[i];
  return out;
}

Vec exp0(const Vec& x, const BallConfig& cfg) {
  return exp_map(Vec(x.size(), 0.0), x, cfg);
}

Vec log0(const Vec& v, const BallConfig& cfg) {
  return log_map(Vec(v.size(), 0.0), v, cfg);
}

double distance(const Vec& u, const Vec& v, const BallConfig& cfg) {
  return 2.0 * inner_distance(u, v, cfg);
}

double inner_distance(const Vec& u, const Vec& v, const BallConfig& cfg) {
  check_same_dim(u, v, "inner_distance");
  Vec neg(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) neg[i] = -u[i];
  const Vec w = mobius_add(neg, v, cfg);
  const double sc = std::sqrt(cfg.c);
  return atanh_clamped(sc * norm(w)) / sc;
}

Vec mobius_matvec(const Mat& A, const Vec& u, const BallConfig& cfg) {
  const Vec t = log0(u, cfg);
  Vec out(A.size());
  for (std::size_t r = 0; r < A.size(); ++r) {
    if (A[r].size() != u.size()) throw ShapeError("mobius_matvec: matrix/vector shape mismatch");
    out[r] = dot(A[r], t);
  }
  BallConfig out_cfg = cfg;
  out_cfg.dim = static_cast<int>(A.size());
  return exp0(out, out_cfg);
}

double projected_inner(const Vec& u, const Vec& v, const BallConfig& cfg) {
  return dot(log0(u, cfg), log0(v, cfg));
}

double poincare_inner(const Vec& u, const Vec& v, const BallConfig& cfg) {
  const Vec origin(u.size(), 0.0);
  const double d0u = inner_distance(origin, u, cfg);
  const double d0v = inner_distance(origin, v, cfg);
  const double duv = inner_distance(u, v, cfg);
  return 0.5 * (d0u * d0u + d0v * d0v - duv * duv);
}

}  // namespace phgr::geo
