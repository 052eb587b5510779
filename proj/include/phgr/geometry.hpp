#pragma once

#include <vector>

namespace phgr::geo {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major list of rows

struct BallConfig {
  double c = 1.0;             // curvature, > 0; ball radius is 1/sqrt(c)
  double boundary_eps = 1e-5; // radial guard keeping points off the boundary
  int dim = 2;

  void validate() const;
};

double dot(const Vec& a, const Vec& b);
double norm(const Vec& a);

// Radially rescales x to norm (1 - boundary_eps)/sqrt(c) when it lies outside
// the guarded ball; interior points pass through unchanged.
Vec project_to_ball(const Vec& x, const BallConfig& cfg);

bool in_ball(const Vec& x, const BallConfig& cfg);

// lambda_u^c = 2 / (1 - c * ||u||^2); always >= 2 for points in the ball.
double conformal_factor(const Vec& u, const BallConfig& cfg);

Vec mobius_add(const Vec& u, const Vec& v, const BallConfig& cfg);

Vec exp_map(const Vec& base, const Vec& x, const BallConfig& cfg);
Vec log_map(const Vec& base, const Vec& v, const BallConfig& cfg);

// Origin-based shortcuts.
Vec exp0(const Vec& x, const BallConfig& cfg);
Vec log0(const Vec& v, const BallConfig& cfg);

// Geodesic distance, (2/sqrt(c)) * atanh(sqrt(c) * ||-u (+) v||).
double distance(const Vec& u, const Vec& v, const BallConfig& cfg);

// Coefficient-omitted distance, (1/sqrt(c)) * atanh(sqrt(c) * ||-u (+) v||).
// This is the form the geodesic inner product is built on.
double inner_distance(const Vec& u, const Vec& v, const BallConfig& cfg);

// exp0(A * log0(u)); A has m rows of length n, u is n-dimensional.
Vec mobius_matvec(const Mat& A, const Vec& u, const BallConfig& cfg);

// <log0(u), log0(v)>: inner product after projection to the origin tangent space.
double projected_inner(const Vec& u, const Vec& v, const BallConfig& cfg);

// Geodesic inner product D(u,v) = (d0u^2 + d0v^2 - duv^2) / 2 with the
// coefficient-omitted distance. Bounded above by projected_inner.
double poincare_inner(const Vec& u, const Vec& v, const BallConfig& cfg);

// atanh with argument clamped to [0, 1 - 1e-12].
double atanh_clamped(double t);

}  // namespace phgr::geo
