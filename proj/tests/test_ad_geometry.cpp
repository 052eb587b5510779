#include "phgr/ad_geometry.hpp"

#include <cmath>
#include <random>

#include "doctest.h"
#include "phgr/geometry.hpp"

using namespace phgr;
using namespace phgr::ad;
using phgr::adg::AdSpace;
using phgr::adg::InnerKind;

namespace {

std::mt19937_64 rng(11);

// rows with norm bounded by max_r, well inside the ball for c = 1
Tensor random_points(std::size_t n, std::size_t d, double max_r) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> rad(0.01, max_r);
  Tensor t = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    geo::Vec x(d);
    for (auto& v : x) v = gauss(rng);
    const double target = rad(rng) / geo::norm(x);
    for (std::size_t j = 0; j < d; ++j) t.at(i, j) = x[j] * target;
  }
  return t;
}

geo::Vec row_of(const Tensor& t, std::size_t i) {
  geo::Vec out(t.shape[1]);
  for (std::size_t j = 0; j < t.shape[1]; ++j) out[j] = t.at(i, j);
  return out;
}

}  // namespace

TEST_CASE("log0/exp0 rows match the scalar oracle") {
  AdSpace sp;
  sp.ball.dim = 5;
  Tensor pts = random_points(12, 5, 0.9);
  Tape t;
  Value x = t.leaf(pts);
  Value lg = sp.log0_rows(x);
  Value back = sp.exp0_rows(lg);
  for (std::size_t i = 0; i < 12; ++i) {
    geo::Vec expect = geo::log0(row_of(pts, i), sp.ball);
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(lg.data().at(i, j) == doctest::Approx(expect[j]).epsilon(1e-10));
      CHECK(back.data().at(i, j) == doctest::Approx(pts.at(i, j)).epsilon(1e-9));
    }
  }
}

TEST_CASE("mobius_add_rows matches the scalar oracle") {
  AdSpace sp;
  sp.ball.dim = 4;
  Tensor u = random_points(10, 4, 0.7);
  Tensor v = random_points(10, 4, 0.7);
  Tape t;
  Value s = sp.mobius_add_rows(t.leaf(u), t.leaf(v));
  for (std::size_t i = 0; i < 10; ++i) {
    geo::Vec expect = geo::mobius_add(row_of(u, i), row_of(v, i), sp.ball);
    for (std::size_t j = 0; j < 4; ++j)
      CHECK(s.data().at(i, j) == doctest::Approx(expect[j]).epsilon(1e-10));
  }
}

TEST_CASE("log_at/exp_at rows match the scalar oracle and invert") {
  AdSpace sp;
  sp.ball.dim = 4;
  Tensor base = random_points(8, 4, 0.6);
  Tensor v = random_points(8, 4, 0.6);
  Tape t;
  Value b = t.leaf(base);
  Value lg = sp.log_at_rows(b, t.leaf(v));
  Value back = sp.exp_at_rows(b, lg);
  for (std::size_t i = 0; i < 8; ++i) {
    geo::Vec expect = geo::log_map(row_of(base, i), row_of(v, i), sp.ball);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(lg.data().at(i, j) == doctest::Approx(expect[j]).epsilon(1e-9));
      CHECK(back.data().at(i, j) == doctest::Approx(v.at(i, j)).epsilon(1e-8));
    }
  }
}

TEST_CASE("distance_rows matches the scalar oracle") {
  AdSpace sp;
  sp.ball.dim = 6;
  Tensor u = random_points(10, 6, 0.9);
  Tensor v = random_points(10, 6, 0.9);
  Tape t;
  Value d = sp.distance_rows(t.leaf(u), t.leaf(v));
  for (std::size_t i = 0; i < 10; ++i)
    CHECK(d.data().v[i] ==
          doctest::Approx(geo::distance(row_of(u, i), row_of(v, i), sp.ball)).epsilon(1e-10));
}

TEST_CASE("scores match the scalar inner products") {
  AdSpace sp;
  sp.ball.dim = 5;
  Tensor items = random_points(15, 5, 0.9);
  Tensor user = random_points(1, 5, 0.9);
  geo::Vec uvec = row_of(user, 0);

  Tape t;
  Value it = t.leaf(items);
  Value us = row(t.leaf(user), 0);
  Value sd = sp.scores(us, it, InnerKind::geodesic_d);
  Value sp_ = sp.scores(us, it, InnerKind::projected_p);
  for (std::size_t i = 0; i < 15; ++i) {
    CHECK(sd.data().v[i] ==
          doctest::Approx(geo::poincare_inner(uvec, row_of(items, i), sp.ball)).epsilon(1e-9));
    CHECK(sp_.data().v[i] ==
          doctest::Approx(geo::projected_inner(uvec, row_of(items, i), sp.ball)).epsilon(1e-9));
  }
}

TEST_CASE("flat space degenerates to vector operations") {
  AdSpace sp;
  sp.hyperbolic = false;
  Tensor u = random_points(6, 3, 2.0);
  Tensor v = random_points(6, 3, 2.0);
  Tape t;
  Value uu = t.leaf(u);
  Value vv = t.leaf(v);
  Value s = sp.mobius_add_rows(uu, vv);
  Value d = sp.distance_rows(uu, vv);
  Value lg = sp.log0_rows(uu);
  for (std::size_t i = 0; i < 6; ++i) {
    double nrm = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(s.data().at(i, j) == u.at(i, j) + v.at(i, j));
      CHECK(lg.data().at(i, j) == u.at(i, j));
      nrm += (u.at(i, j) - v.at(i, j)) * (u.at(i, j) - v.at(i, j));
    }
    CHECK(d.data().v[i] == doctest::Approx(std::sqrt(nrm)));
  }
  // both score kinds are the dot product
  Value su = row(uu, 0);
  Value sd = sp.scores(su, vv, InnerKind::geodesic_d);
  Value spp = sp.scores(su, vv, InnerKind::projected_p);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(sd.data().v[i] == doctest::Approx(geo::dot(row_of(u, 0), row_of(v, i))));
    CHECK(sd.data().v[i] == spp.data().v[i]);
  }
}

TEST_CASE("gradients of manifold composites pass finite differences") {
  AdSpace sp;
  sp.ball.dim = 4;
  Tensor pre = random_points(5, 4, 0.8);  // pre-images, exp0 keeps them interior
  const Tensor fixed = random_points(5, 4, 0.5);

  auto check = [&](const char* name, const std::function<Value(Tape&, Value)>& f) {
    auto res = grad_check(f, pre, 1e-6, 2e-5);
    INFO(name << " max_rel_err " << res.max_rel_err);
    CHECK(res.pass);
  };

  check("exp0/log0 roundtrip norm", [&](Tape& t, Value x) {
    return sum(square(sp.log0_rows(sp.exp0_rows(x))));
  });
  check("mobius add of mapped points", [&](Tape& t, Value x) {
    Value pts = sp.exp0_rows(x);
    Value other = t.constant(fixed);
    return sum(square(sp.mobius_add_rows(pts, other)));
  });
  check("log_at/exp_at", [&](Tape& t, Value x) {
    Value pts = sp.exp0_rows(x);
    Value base = t.constant(fixed);
    return sum(square(sp.exp_at_rows(base, sp.log_at_rows(base, pts))));
  });
  check("distance to fixed points", [&](Tape& t, Value x) {
    Value pts = sp.exp0_rows(x);
    Value other = t.constant(fixed);
    return sum(sp.distance_rows(pts, other));
  });
  check("geodesic inner scores", [&](Tape& t, Value x) {
    Value pts = sp.exp0_rows(x);
    Value user = row(pts, 0);
    Value items = gather_rows(pts, {1, 2, 3, 4});
    return sum(square(sp.scores(user, items, InnerKind::geodesic_d)));
  });
  check("projected inner scores", [&](Tape& t, Value x) {
    Value pts = sp.exp0_rows(x);
    Value user = row(pts, 0);
    Value items = gather_rows(pts, {1, 2, 3, 4});
    return sum(square(sp.scores(user, items, InnerKind::projected_p)));
  });
}

TEST_CASE("poincare_inner of mapped pre-images matches finite differences") {
  AdSpace sp;
  sp.ball.dim = 3;
  Tensor pre = random_points(2, 3, 0.9);
  auto f = [&](Tape& t, Value x) {
    Value pts = sp.exp0_rows(x);
    return sum(sp.scores(row(pts, 0), gather_rows(pts, {1}), InnerKind::geodesic_d));
  };
  auto res = grad_check(f, pre, 1e-6, 1e-5);
  INFO("max_rel_err " << res.max_rel_err);
  CHECK(res.pass);
}
