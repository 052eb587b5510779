#include "phgr/ad_geometry.hpp"

#include <cmath>

namespace phgr::adg {

using namespace phgr::ad;

namespace {

constexpr double kNormFloor = 1e-15;
constexpr double kBig = 1e300;

// atanh(s)/s and tanh(s)/s with the argument floored; both ratios tend to 1
// as s -> 0, which the floor preserves.
Value atanh_over(Value s) {
  Value sc = clamp(s, kNormFloor, kBig);
  return div(atanh_clamped(sc), sc);
}

Value tanh_over(Value s) {
  Value sc = clamp(s, kNormFloor, kBig);
  return div(tanh_op(sc), sc);
}

Value scaled_norm_rows(Value x, double sqrt_c) { return scale(row_norm(x), sqrt_c); }

}  // namespace

double AdSpace::max_norm() const { return (1.0 - ball.boundary_eps) / std::sqrt(ball.c); }

Value AdSpace::log0_rows(Value x) const {
  if (!hyperbolic) return x;
  const double sc = std::sqrt(ball.c);
  return rowwise_scale(x, atanh_over(scaled_norm_rows(x, sc)));
}

Value AdSpace::exp0_rows(Value t) const {
  if (!hyperbolic) return t;
  const double sc = std::sqrt(ball.c);
  return project_rows(rowwise_scale(t, tanh_over(scaled_norm_rows(t, sc))), max_norm());
}

Value AdSpace::log0_vec(Value x) const {
  if (!hyperbolic) return x;
  return row(log0_rows(as_row_matrix(x)), 0);
}

Value AdSpace::exp0_vec(Value t) const {
  if (!hyperbolic) return t;
  return row(exp0_rows(as_row_matrix(t)), 0);
}

Value AdSpace::mobius_add_rows(Value u, Value v) const {
  if (!hyperbolic) return add(u, v);
  const double c = ball.c;
  Value uv = row_sum(mul(u, v));
  Value u2 = row_sum(square(u));
  Value v2 = row_sum(square(v));
  Value cu = add_const(add(scale(uv, 2.0 * c), scale(v2, c)), 1.0);
  Value cv = add_const(scale(u2, -c), 1.0);
  Value den = clamp(add_const(add(scale(uv, 2.0 * c), scale(mul(u2, v2), c * c)), 1.0),
                    kNormFloor, kBig);
  Value out = add(rowwise_scale(u, div(cu, den)), rowwise_scale(v, div(cv, den)));
  return project_rows(out, max_norm());
}

Value AdSpace::log_at_rows(Value base, Value v) const {
  if (!hyperbolic) return sub(v, base);
  const double c = ball.c;
  const double sc = std::sqrt(c);
  Value w = mobius_add_rows(neg(base), v);
  Value b2 = row_sum(square(base));
  // (2 / (sqrt(c) lambda)) * atanh(sqrt(c)||w||) / ||w|| = (1 - c b2) atanh(s)/s
  Value coef = mul(add_const(scale(b2, -c), 1.0), atanh_over(scaled_norm_rows(w, sc)));
  return rowwise_scale(w, coef);
}

Value AdSpace::exp_at_rows(Value base, Value x) const {
  if (!hyperbolic) return add(base, x);
  const double c = ball.c;
  const double sc = std::sqrt(c);
  Value s = clamp(scaled_norm_rows(x, sc), kNormFloor, kBig);
  Value lam_denom = clamp(add_const(scale(row_sum(square(base)), -c), 1.0), kNormFloor, kBig);
  // tanh(sqrt(c)||x|| lambda / 2) / (sqrt(c)||x||)
  Value coef = div(tanh_op(div(s, lam_denom)), s);
  return mobius_add_rows(base, rowwise_scale(x, coef));
}

Value AdSpace::distance_rows(Value u, Value v) const {
  if (!hyperbolic) return row_norm(sub(u, v));
  const double sc = std::sqrt(ball.c);
  Value w = mobius_add_rows(neg(u), v);
  return scale(atanh_clamped(scaled_norm_rows(w, sc)), 2.0 / sc);
}

Value AdSpace::distance_vec(Value u, Value v) const {
  // length-1 vector
  return distance_rows(as_row_matrix(u), as_row_matrix(v));
}

Value AdSpace::scores(Value user, Value items, InnerKind kind) const {
  if (!hyperbolic) return matvec(items, user);
  if (kind == InnerKind::projected_p) return matvec(log0_rows(items), log0_vec(user));
  // D(u, x_i) with the coefficient-omitted distance (half of distance_rows)
  const std::size_t m = items.data().shape[0];
  Value zero_vec = user.tape->constant(Tensor::vector(user.data().shape[0], 0.0));
  Value d0u = scale(distance_vec(user, zero_vec), 0.5);
  Value origin_rows = items.tape->constant(Tensor::matrix(m, items.data().shape[1], 0.0));
  Value d0i = scale(distance_rows(origin_rows, items), 0.5);
  Value dui = scale(distance_rows(repeat_row(user, m), items), 0.5);
  Value out = scale(sub(square(d0i), square(dui)), 0.5);
  return add_broadcast(out, scale(square(d0u), 0.5));
}

}  // namespace phgr::adg
