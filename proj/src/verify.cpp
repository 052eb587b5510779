#include "phgr/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "phgr/geometry.hpp"

namespace phgr::verify {

namespace {

geo::Vec random_point(int dim, double max_radius, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> radius(1e-3, max_radius);
  geo::Vec x(dim);
  for (double& v : x) v = gauss(rng);
  const double n = geo::norm(x);
  const double r = radius(rng);
  for (double& v : x) v *= r / n;
  return x;
}

double vec_dist(const geo::Vec& a, const geo::Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

std::vector<PropertyResult> geometry_battery(int samples, double c, std::uint64_t seed) {
  std::vector<PropertyResult> results = {
      {"projected inner = d(0,u) d(0,v) cos(beta)", 0.0, 1e-8},
      {"geodesic inner <= projected inner", 0.0, 1e-10},
      {"inner products agree on collinear pairs", 0.0, 1e-8},
      {"distance dominates tangent-difference norm", 0.0, 1e-10},
      {"exp and log maps are mutually inverse", 0.0, 1e-8},
      {"Mobius left identity", 0.0, 1e-9},
      {"Mobius left cancellation", 0.0, 1e-9},
  };

  std::mt19937_64 rng(seed);
  const double max_radius = 0.98 / std::sqrt(c);
  for (int dim : {2, 8, 64}) {
    geo::BallConfig ball{c, 1e-5, dim};
    const geo::Vec origin(dim, 0.0);
    for (int s = 0; s < samples; ++s) {
      const geo::Vec u = random_point(dim, max_radius, rng);
      const geo::Vec v = random_point(dim, max_radius, rng);

      const double p = geo::projected_inner(u, v, ball);
      const double d = geo::poincare_inner(u, v, ball);
      const double cos_beta = geo::dot(u, v) / (geo::norm(u) * geo::norm(v));
      const double d0u = geo::inner_distance(origin, u, ball);
      const double d0v = geo::inner_distance(origin, v, ball);
      results[0].max_err = std::max(results[0].max_err, std::abs(p - d0u * d0v * cos_beta));
      results[1].max_err = std::max(results[1].max_err, d - p);

      // collinear pair: rescale u along its own ray
      {
        std::uniform_real_distribution<double> t(0.05, max_radius / geo::norm(u));
        geo::Vec w = u;
        const double f = t(rng);
        for (double& x : w) x *= f;
        const double pc = geo::projected_inner(u, w, ball);
        const double dc = geo::poincare_inner(u, w, ball);
        results[2].max_err = std::max(results[2].max_err, std::abs(pc - dc));
      }

      results[3].max_err =
          std::max(results[3].max_err, vec_dist(geo::log0(u, ball), geo::log0(v, ball)) -
                                           geo::inner_distance(u, v, ball));

      const geo::Vec back = geo::exp_map(u, geo::log_map(u, v, ball), ball);
      results[4].max_err = std::max(results[4].max_err, vec_dist(back, v));

      results[5].max_err = std::max(results[5].max_err, vec_dist(geo::mobius_add(origin, v, ball), v));

      geo::Vec minus_u = u;
      for (double& x : minus_u) x = -x;
      const geo::Vec cancel = geo::mobius_add(minus_u, geo::mobius_add(u, v, ball), ball);
      results[6].max_err = std::max(results[6].max_err, vec_dist(cancel, v));
    }
  }
  for (PropertyResult& r : results) r.pass = r.max_err <= r.tol;
  return results;
}

}  // namespace phgr::verify
