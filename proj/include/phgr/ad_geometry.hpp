#pragma once

#include "phgr/autodiff.hpp"
#include "phgr/geometry.hpp"

namespace phgr::adg {

enum class InnerKind { geodesic_d, projected_p };

// Differentiable row-wise manifold operations. With hyperbolic = false every
// map degenerates to its flat-space counterpart (identity maps, vector
// addition, Euclidean distance, dot-product scores), which is the EHGR
// ablation of the model.
struct AdSpace {
  bool hyperbolic = true;
  geo::BallConfig ball;

  double max_norm() const;

  // All matrix arguments are row-per-point; vector arguments are one point.
  ad::Value log0_rows(ad::Value x) const;
  ad::Value exp0_rows(ad::Value t) const;
  ad::Value log0_vec(ad::Value x) const;
  ad::Value exp0_vec(ad::Value t) const;

  ad::Value mobius_add_rows(ad::Value u, ad::Value v) const;
  ad::Value log_at_rows(ad::Value base, ad::Value v) const;
  ad::Value exp_at_rows(ad::Value base, ad::Value x) const;

  // Per-row geodesic distance between matching rows, (2/sqrt(c)) atanh form.
  ad::Value distance_rows(ad::Value u, ad::Value v) const;
  // Geodesic distance between two single points.
  ad::Value distance_vec(ad::Value u, ad::Value v) const;

  // Matching scores of one user point against every item row.
  // geodesic_d: D(u, x_i); projected_p: <log0 u, log0 x_i>. In the Euclidean
  // space both kinds collapse to the dot product.
  ad::Value scores(ad::Value user, ad::Value items, InnerKind kind) const;
};

}  // namespace phgr::adg
