#include "phgr/train.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "doctest.h"
#include "phgr/checkpoint.hpp"
#include "phgr/errors.hpp"
#include "phgr/geometry.hpp"
#include "phgr/metrics.hpp"

using namespace phgr;
using namespace phgr::ad;
using namespace phgr::train;

namespace {

model::ModelConfig tiny_model() {
  model::ModelConfig cfg;
  cfg.dim = 4;
  cfg.layers = 1;
  cfg.init_std = 0.2;
  return cfg;
}

DatasetSplit tiny_split(std::uint64_t seed) {
  auto recs = synth_hierarchical(30, 12, 2.0, 4, 7, seed, 2);
  IdMaps ids;
  auto seqs = build_sequences(recs, ids, 3);
  return split(seqs, ids, seed);
}

}  // namespace

TEST_CASE("ce_loss closed forms") {
  Tape tape;
  SUBCASE("uniform over two items") {
    Value p = tape.leaf(Tensor::vector({0.5, 0.5}));
    Value loss = ce_loss(p, 0);
    CHECK(loss.data().v[0] == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("near-perfect prediction") {
    Value p = tape.leaf(Tensor::vector({1.0 - 1e-12, 1e-12}));
    Value loss = ce_loss(p, 0);
    CHECK(loss.data().v[0] == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("invariant to permuting non-target entries") {
    Value a = tape.leaf(Tensor::vector({0.5, 0.1, 0.2, 0.2}));
    Value b = tape.leaf(Tensor::vector({0.5, 0.2, 0.2, 0.1}));
    CHECK(ce_loss(a, 0).data().v[0] == doctest::Approx(ce_loss(b, 0).data().v[0]).epsilon(1e-14));
  }
  SUBCASE("bad target") {
    Value p = tape.leaf(Tensor::vector({0.5, 0.5}));
    CHECK_THROWS_AS(ce_loss(p, 2), ContractError);
  }
}

TEST_CASE("cr_loss hinge behavior") {
  adg::AdSpace sp;
  sp.ball.dim = 3;
  Tape tape;
  Value user = tape.leaf(Tensor::vector({0.2, 0.1, 0.0}));
  Value pos = tape.leaf(Tensor::vector({0.3, -0.1, 0.2}));
  Value far = tape.leaf(Tensor::vector({-0.8, 0.4, -0.3}));

  SUBCASE("identical positive and negative leave the margin") {
    Value loss = cr_loss(sp, user, pos, pos, 0.1);
    CHECK(loss.data().v[0] == doctest::Approx(0.1).epsilon(1e-12));
  }
  SUBCASE("inactive hinge when the negative is far") {
    Value loss = cr_loss(sp, user, user, far, 0.05);
    CHECK(loss.data().v[0] == 0.0);
  }
  SUBCASE("hand-placed triple matches the geometry oracle") {
    geo::BallConfig ball{1.0, 1e-5, 3};
    const double dp = geo::distance({0.2, 0.1, 0.0}, {0.3, -0.1, 0.2}, ball);
    const double dn = geo::distance({0.2, 0.1, 0.0}, {-0.8, 0.4, -0.3}, ball);
    Value loss = cr_loss(sp, user, pos, far, 2.0);
    CHECK(loss.data().v[0] == doctest::Approx(std::max(dp - dn + 2.0, 0.0)).epsilon(1e-10));
  }
  SUBCASE("flat variant uses the negative dot product") {
    adg::AdSpace flat;
    flat.hyperbolic = false;
    flat.ball.dim = 3;
    Value loss = cr_loss(flat, user, pos, far, 0.0);
    const double dp = -(0.2 * 0.3 + 0.1 * -0.1);
    const double dn = -(0.2 * -0.8 + 0.1 * 0.4);
    CHECK(loss.data().v[0] == doctest::Approx(std::max(dp - dn, 0.0)).epsilon(1e-12));
  }
}

TEST_CASE("lr = 0 leaves parameters unchanged") {
  model::ModelConfig cfg = tiny_model();
  std::vector<UserSequence> seqs = {{0, {0, 1, 2}}, {1, {2, 3, 0}}};
  model::GlobalEdges edges = model::build_global_edges(build_global_graph(seqs, 2, 4));
  model::ModelParams params = model::init_embeddings(2, 4, cfg, 7);
  model::ModelParams before = params;

  TrainConfig tcfg;
  tcfg.learning_rate = 0.0;
  Adam opt(params, 0.0);
  std::vector<Example> batch = {{&seqs[0], {3}}, {&seqs[1], {1}}};
  run_batch(params, cfg, edges, batch, tcfg, &opt);
  auto a = params.blocks();
  auto b = before.blocks();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].second->v.size(); ++j)
      CHECK(a[i].second->v[j] == b[i].second->v[j]);
}

TEST_CASE("batch loss is the mean of single-example losses") {
  model::ModelConfig cfg = tiny_model();
  std::vector<UserSequence> seqs = {{0, {0, 1, 2}}, {1, {2, 3, 0}}};
  model::GlobalEdges edges = model::build_global_edges(build_global_graph(seqs, 2, 4));
  model::ModelParams params = model::init_embeddings(2, 4, cfg, 9);
  TrainConfig tcfg;

  std::vector<Example> both = {{&seqs[0], {3}}, {&seqs[1], {1}}};
  LossBreakdown pair = run_batch(params, cfg, edges, both, tcfg, nullptr);
  LossBreakdown one = run_batch(params, cfg, edges, {{&seqs[0], {3}}}, tcfg, nullptr);
  LossBreakdown two = run_batch(params, cfg, edges, {{&seqs[1], {1}}}, tcfg, nullptr);
  CHECK(pair.ce == doctest::Approx(0.5 * (one.ce + two.ce)).epsilon(1e-12));
  CHECK(pair.cr == doctest::Approx(0.5 * (one.cr + two.cr)).epsilon(1e-12));
  CHECK(pair.total == doctest::Approx(pair.ce + tcfg.omega * pair.cr).epsilon(1e-12));
}

TEST_CASE("omega weights the ranking term and zero disables it") {
  model::ModelConfig cfg = tiny_model();
  std::vector<UserSequence> seqs = {{0, {0, 1, 2}}};
  model::GlobalEdges edges = model::build_global_edges(build_global_graph(seqs, 1, 3));
  model::ModelParams params = model::init_embeddings(1, 3, cfg, 5);
  TrainConfig tcfg;
  tcfg.omega = 0.0;
  LossBreakdown z = run_batch(params, cfg, edges, {{&seqs[0], {1}}}, tcfg, nullptr);
  CHECK(z.total == z.ce);
  tcfg.omega = 0.7;
  LossBreakdown w = run_batch(params, cfg, edges, {{&seqs[0], {1}}}, tcfg, nullptr);
  CHECK(w.total == doctest::Approx(w.ce + 0.7 * w.cr).epsilon(1e-12));
}

TEST_CASE("one small step decreases the example's loss") {
  std::mt19937_64 rng(41);
  model::ModelConfig cfg = tiny_model();
  std::vector<UserSequence> seqs = {{0, {0, 1, 2, 3}}};
  model::GlobalEdges edges = model::build_global_edges(build_global_graph(seqs, 1, 4));
  int decreased = 0;
  for (int trial = 0; trial < 20; ++trial) {
    model::ModelParams params = model::init_embeddings(1, 4, cfg, rng());
    TrainConfig tcfg;
    tcfg.learning_rate = 1e-6;
    Adam opt(params, tcfg.learning_rate);
    std::vector<Example> batch = {{&seqs[0], {2}}};
    LossBreakdown before = run_batch(params, cfg, edges, batch, tcfg, &opt);
    LossBreakdown after = run_batch(params, cfg, edges, batch, tcfg, nullptr);
    if (after.total < before.total) ++decreased;
  }
  CHECK(decreased == 20);
}

TEST_CASE("early stopping halts after exactly the patience window") {
  EarlyStopper stopper(10);
  CHECK_FALSE(stopper.observe(1.0));  // best
  int observed = 0;
  bool stopped = false;
  for (int i = 1; i <= 15 && !stopped; ++i) {
    stopped = stopper.observe(1.0 + i);  // strictly worsening
    ++observed;
  }
  CHECK(stopped);
  CHECK(observed == 10);
  CHECK(stopper.best() == 1.0);
}

TEST_CASE("early stopping resets on improvement") {
  EarlyStopper stopper(3);
  CHECK_FALSE(stopper.observe(5.0));
  CHECK_FALSE(stopper.observe(6.0));
  CHECK_FALSE(stopper.observe(6.0));
  CHECK_FALSE(stopper.observe(4.0));  // improvement resets the counter
  CHECK_FALSE(stopper.observe(7.0));
  CHECK_FALSE(stopper.observe(7.0));
  CHECK(stopper.observe(7.0));
}

TEST_CASE("fit is deterministic and honors max_epochs = 0") {
  DatasetSplit data = tiny_split(3);
  model::ModelConfig mcfg = tiny_model();
  TrainConfig tcfg;
  tcfg.max_epochs = 3;
  tcfg.batch_size = 8;
  tcfg.seed = 77;

  FitResult a = fit(data, mcfg, tcfg);
  FitResult b = fit(data, mcfg, tcfg);
  REQUIRE(a.curve.size() == b.curve.size());
  for (std::size_t i = 0; i < a.curve.size(); ++i) {
    CHECK(a.curve[i].train_total == b.curve[i].train_total);
    CHECK(a.curve[i].valid_total == b.curve[i].valid_total);
    CHECK(a.curve[i].valid_h10 == b.curve[i].valid_h10);
  }

  tcfg.max_epochs = 0;
  FitResult init_only = fit(data, mcfg, tcfg);
  CHECK(init_only.curve.empty());
  model::ModelParams reference = model::init_embeddings(
      data.num_users(), data.num_items(), mcfg, tcfg.seed);
  auto x = init_only.best_params.blocks();
  auto y = reference.blocks();
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x[i].second->v.size(); ++j)
      CHECK(x[i].second->v[j] == y[i].second->v[j]);
}

TEST_CASE("curve CSV has the documented columns") {
  std::vector<EpochRecord> curve = {{1, 0.5, 0.4, 1.0, 0.6, 0.25}};
  std::ostringstream out;
  write_curve_csv(out, curve);
  CHECK(out.str().rfind("epoch,train_total,train_ce,train_cr,valid_total,valid_h10\n", 0) == 0);
  CHECK(out.str().find("1,0.5,0.4,1,0.6,0.25") != std::string::npos);
}

TEST_CASE("checkpoint round trip is bit exact") {
  model::ModelConfig cfg = tiny_model();
  cfg.layers = 2;
  cfg.alpha = {0.2, 0.3, 0.5};
  cfg.hyperbolic = false;
  cfg.inner = adg::InnerKind::projected_p;
  cfg.no_short = true;
  model::ModelParams params = model::init_embeddings(4, 7, cfg, 123);

  const std::string path = "test_ckpt_roundtrip";
  ckpt::save(path, params, cfg);
  auto [loaded, loaded_cfg] = ckpt::load(path);
  std::remove((path + ".manifest").c_str());
  std::remove((path + ".blob").c_str());

  CHECK(loaded_cfg.dim == cfg.dim);
  CHECK(loaded_cfg.layers == 2);
  CHECK(loaded_cfg.hyperbolic == false);
  CHECK(loaded_cfg.inner == adg::InnerKind::projected_p);
  CHECK(loaded_cfg.no_short == true);
  REQUIRE(loaded_cfg.alpha.size() == 3);
  CHECK(loaded_cfg.alpha[1] == 0.3);

  auto a = params.blocks();
  auto b = loaded.blocks();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    REQUIRE(a[i].second->v.size() == b[i].second->v.size());
    for (std::size_t j = 0; j < a[i].second->v.size(); ++j)
      CHECK(a[i].second->v[j] == b[i].second->v[j]);
  }

  CHECK_THROWS_AS(ckpt::load("no_such_checkpoint"), IoError);
}

TEST_CASE("checkpointed model evaluates bit-identically") {
  DatasetSplit data = tiny_split(9);
  model::ModelConfig mcfg = tiny_model();
  TrainConfig tcfg;
  tcfg.max_epochs = 2;
  tcfg.batch_size = 8;
  FitResult fitted = fit(data, mcfg, tcfg);

  const GlobalGraph graph =
      build_global_graph(data.train, data.num_users(), data.num_items());
  model::GlobalEdges edges = model::build_global_edges(graph);
  metrics::RankingReport before =
      metrics::evaluate(fitted.best_params, mcfg, edges, data.test, {5});

  const std::string path = "test_ckpt_eval";
  ckpt::save(path, fitted.best_params, mcfg);
  auto [loaded, loaded_cfg] = ckpt::load(path);
  std::remove((path + ".manifest").c_str());
  std::remove((path + ".blob").c_str());
  metrics::RankingReport after = metrics::evaluate(loaded, loaded_cfg, edges, data.test, {5});
  CHECK(before.per_k[0].hit == after.per_k[0].hit);
  CHECK(before.per_k[0].ndcg == after.per_k[0].ndcg);
  CHECK(before.per_k[0].map == after.per_k[0].map);
}

TEST_CASE("config parsing") {
  std::istringstream in(
      "# comment\n"
      "dim=8\n"
      "layers=2\n"
      "variant=ehgr\n"
      "inner=P\n"
      "alpha=0.1,0.2,0.7\n"
      "no_long=true\n"
      "learning_rate=0.0005\n"
      "batch_size=64\n"
      "omega=0.01\n"
      "seed=99\n");
  RunConfig cfg = parse_config(in);
  CHECK(cfg.model.dim == 8);
  CHECK(cfg.model.layers == 2);
  CHECK_FALSE(cfg.model.hyperbolic);
  CHECK(cfg.model.inner == adg::InnerKind::projected_p);
  CHECK(cfg.model.alpha == std::vector<double>{0.1, 0.2, 0.7});
  CHECK(cfg.model.no_long);
  CHECK(cfg.train.learning_rate == 0.0005);
  CHECK(cfg.train.batch_size == 64);
  CHECK(cfg.train.omega == 0.01);
  CHECK(cfg.train.seed == 99);

  std::istringstream bad_key("nonsense=1\n");
  CHECK_THROWS_AS(parse_config(bad_key), DataError);
  std::istringstream bad_value("dim=abc\n");
  CHECK_THROWS_AS(parse_config(bad_value), DataError);
  std::istringstream no_eq("dim 8\n");
  CHECK_THROWS_AS(parse_config(no_eq), DataError);
  CHECK_THROWS_AS(parse_config_file("missing.cfg"), IoError);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), ContractError);
  t = TrainConfig{};
  t.patience = 0;
  CHECK_THROWS_AS(t.validate(), ContractError);
  t = TrainConfig{};
  t.omega = -0.1;
  CHECK_THROWS_AS(t.validate(), ContractError);
}
