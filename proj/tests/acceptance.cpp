// Acceptance suite: one pass/fail line per criterion, tolerances pinned below.
// Exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "phgr/checkpoint.hpp"
#include "phgr/data.hpp"
#include "phgr/geometry.hpp"
#include "phgr/metrics.hpp"
#include "phgr/model.hpp"
#include "phgr/train.hpp"
#include "phgr/verify.hpp"

using namespace phgr;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << ": " << name;
  if (!detail.empty()) std::cout << " [" << detail << "]";
  std::cout << std::endl;
  if (!ok) ++g_failures;
}

// --- criterion 1: randomized ball-operation battery, < 30 s ----------------

void criterion_geometry_battery() {
  const auto start = Clock::now();
  // 4000 pairs per dimension x {2, 8, 64} = 12000 pairs >= 1e4
  auto results = verify::geometry_battery(4000, 1.0, 20260826);
  const double secs = seconds_since(start);
  bool ok = secs < 30.0;
  std::ostringstream detail;
  for (const auto& r : results) {
    ok = ok && r.pass;
    if (!r.pass) detail << r.name << " err " << r.max_err << " > " << r.tol << "; ";
  }
  detail << "12000 pairs, " << secs << " s";
  report("geometry property battery (identities, D<=P, map inverses, Mobius laws)", ok,
         detail.str());
}

// --- criterion 2: geodesic inner product is non-monotone in the radius -----

void criterion_inner_non_monotone() {
  geo::BallConfig ball{1.0, 1e-5, 2};
  auto d_at = [&](double r) {
    const geo::Vec u = {r, 0.0};
    const geo::Vec v = {r * std::cos(M_PI / 4.0), r * std::sin(M_PI / 4.0)};
    return geo::poincare_inner(u, v, ball);
  };
  const double lo = d_at(0.05), mid = d_at(0.5), hi = d_at(0.98);
  std::ostringstream detail;
  detail << "D(0.05)=" << lo << " D(0.5)=" << mid << " D(0.98)=" << hi;
  report("geodesic inner product rises then falls along equal-norm pairs at 45 degrees",
         mid > lo && mid > hi, detail.str());
}

// --- criterion 3: gradient acceptance, max rel err <= 1e-4, < 2 min --------

ad::Tensor random_points(int rows, int cols, double scale, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, scale);
  ad::Tensor t = ad::Tensor::matrix(rows, cols, 0.0);
  for (double& v : t.v) v = gauss(rng);
  return t;
}

// ParamRefs where every block except the item pre-images is a constant, so
// grad_check can vary the single leaf it supports.
model::ParamRefs refs_with_item_leaf(ad::Tape& t, const model::ModelParams& p, ad::Value x) {
  model::ParamRefs r;
  r.user_pre = t.constant(p.user_pre);
  r.item_pre = x;
  for (int l = 0; l < p.layers; ++l) {
    r.global_w_self.push_back(t.constant(p.global_w_self[l]));
    r.global_w_neigh.push_back(t.constant(p.global_w_neigh[l]));
    r.global_b.push_back(t.constant(p.global_b[l]));
    r.local_w_self.push_back(t.constant(p.local_w_self[l]));
    r.local_w_neigh.push_back(t.constant(p.local_w_neigh[l]));
    r.local_b.push_back(t.constant(p.local_b[l]));
  }
  r.wq = t.constant(p.wq);
  r.wk = t.constant(p.wk);
  r.wv = t.constant(p.wv);
  r.wn = t.constant(p.wn);
  r.wi = t.constant(p.wi);
  r.q = t.constant(p.q);
  r.readout = t.constant(p.readout);
  return r;
}

void criterion_gradients() {
  const auto start = Clock::now();
  const double tol = 1e-4;
  bool ok = true;
  double worst = 0.0;
  std::string worst_name;
  auto check = [&](const std::string& name, const std::function<ad::Value(ad::Tape&, ad::Value)>& f,
                   const ad::Tensor& x) {
    auto res = ad::grad_check(f, x, 1e-6, tol);
    if (res.max_rel_err > worst) {
      worst = res.max_rel_err;
      worst_name = name;
    }
    ok = ok && res.pass;
  };

  adg::AdSpace sp;
  sp.ball.dim = 4;
  const ad::Tensor pre = random_points(5, 4, 0.5, 11);
  const ad::Tensor fixed = random_points(5, 4, 0.3, 12);

  check("exp0/log0", [&](ad::Tape& t, ad::Value x) {
    (void)t;
    return sum(square(sp.log0_rows(sp.exp0_rows(x))));
  }, pre);
  check("mobius add", [&](ad::Tape& t, ad::Value x) {
    return sum(square(sp.mobius_add_rows(sp.exp0_rows(x), t.constant(fixed))));
  }, pre);
  check("log_at/exp_at", [&](ad::Tape& t, ad::Value x) {
    ad::Value base = t.constant(fixed);
    return sum(square(sp.exp_at_rows(base, sp.log_at_rows(base, sp.exp0_rows(x)))));
  }, pre);
  check("distance", [&](ad::Tape& t, ad::Value x) {
    return sum(sp.distance_rows(sp.exp0_rows(x), t.constant(fixed)));
  }, pre);
  check("geodesic scores", [&](ad::Tape& t, ad::Value x) {
    (void)t;
    ad::Value pts = sp.exp0_rows(x);
    return sum(square(sp.scores(row(pts, 0), gather_rows(pts, {1, 2, 3, 4}),
                                adg::InnerKind::geodesic_d)));
  }, pre);
  check("projected scores", [&](ad::Tape& t, ad::Value x) {
    (void)t;
    ad::Value pts = sp.exp0_rows(x);
    return sum(square(sp.scores(row(pts, 0), gather_rows(pts, {1, 2, 3, 4}),
                                adg::InnerKind::projected_p)));
  }, pre);

  // layer and loss checks on a 3-user / 5-item toy, d = 4
  model::ModelConfig cfg;
  cfg.dim = 4;
  cfg.layers = 1;
  cfg.init_std = 0.3;
  const model::ModelParams params = model::init_embeddings(3, 5, cfg, 13);
  const std::vector<UserSequence> seqs = {{0, {0, 1, 2}}, {1, {2, 3, 4}}, {2, {1, 3, 0}}};
  const model::GlobalEdges edges = model::build_global_edges(build_global_graph(seqs, 3, 5));
  const std::vector<int> input = {0, 1, 2, 3};

  check("global layer", [&](ad::Tape& t, ad::Value x) {
    model::ParamRefs r = refs_with_item_leaf(t, params, x);
    model::GlobalOutput g = model::global_forward(t, r, edges, cfg);
    return sum(square(sp.log0_rows(g.items)));
  }, params.item_pre);

  auto stage_loss = [&](model::ModelConfig stage_cfg) {
    return [&, stage_cfg](ad::Tape& t, ad::Value x) {
      model::ParamRefs r = refs_with_item_leaf(t, params, x);
      model::GlobalOutput g = model::global_forward(t, r, edges, stage_cfg);
      ad::Value initial = stage_cfg.space().exp0_rows(r.item_pre);
      model::SequenceForward fwd =
          model::sequence_forward(t, r, g.items, initial, input, stage_cfg);
      return sum(square(fwd.scores));
    };
  };
  model::ModelConfig local_only = cfg;
  local_only.no_global = true;
  local_only.no_long = true;
  local_only.no_short = true;
  check("local layer", stage_loss(local_only), params.item_pre);
  model::ModelConfig temporal_only = cfg;
  temporal_only.no_global = true;
  temporal_only.no_local = true;
  check("temporal attentions", stage_loss(temporal_only), params.item_pre);

  check("total loss", [&](ad::Tape& t, ad::Value x) {
    model::ParamRefs r = refs_with_item_leaf(t, params, x);
    model::GlobalOutput g = model::global_forward(t, r, edges, cfg);
    ad::Value initial = sp.exp0_rows(r.item_pre);
    model::SequenceForward fwd = model::sequence_forward(t, r, g.items, initial, input, cfg);
    ad::Value ce = train::ce_loss(fwd.probabilities, 4);
    ad::Value cr = train::cr_loss(sp, fwd.user_point, row(initial, 4), row(initial, 2), 0.5);
    return add(ce, scale(cr, 0.1));
  }, params.item_pre);

  const double secs = seconds_since(start);
  ok = ok && secs < 120.0;
  std::ostringstream detail;
  detail << "worst " << worst_name << " rel err " << worst << " (tol " << tol << "), " << secs
         << " s";
  report("gradients match central differences on primitives, layers, and the total loss", ok,
         detail.str());
}

// --- criterion 4: ranking metric oracle ------------------------------------

void criterion_metric_oracle() {
  std::mt19937_64 rng(17);
  bool exact = true;
  for (int trial = 0; trial < 10000 && exact; ++trial) {
    const int m = std::uniform_int_distribution<int>(1, 50)(rng);
    std::vector<int> ranked(m);
    std::iota(ranked.begin(), ranked.end(), 0);
    std::shuffle(ranked.begin(), ranked.end(), rng);
    const int target = std::uniform_int_distribution<int>(0, m - 1)(rng);
    const int k = std::uniform_int_distribution<int>(1, m)(rng);
    metrics::MetricTriple got = metrics::metrics_at_k(ranked, target, k);
    metrics::MetricTriple want;
    for (int r = 0; r < m; ++r)
      if (ranked[r] == target) {
        if (r < k) {
          want.hit = 1.0;
          want.ndcg = 1.0 / std::log2(r + 2.0);
          want.map = 1.0 / (r + 1.0);
        }
        break;
      }
    exact = got.hit == want.hit && got.ndcg == want.ndcg && got.map == want.map;
  }

  std::uniform_real_distribution<double> score(0.0, 1.0);
  double hits = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<double> scores(100);
    for (double& s : scores) s = score(rng);
    const int target = std::uniform_int_distribution<int>(0, 99)(rng);
    std::vector<int> ranked = metrics::rank_items(scores);
    hits += metrics::metrics_at_k(ranked, target, 10).hit;
  }
  const double h10 = hits / 10000.0;
  const bool converges = std::abs(h10 - 0.10) <= 0.01;
  std::ostringstream detail;
  detail << "10000 rankings exact: " << (exact ? "yes" : "no") << "; random-score H@10 " << h10
         << " (want 0.10 +- 0.01)";
  report("ranking metrics equal the brute-force oracle and calibrate on random scores",
         exact && converges, detail.str());
}

// --- shared training helpers ------------------------------------------------

DatasetSplit make_split(int users, int items, std::uint64_t seed, int clusters = 0) {
  auto records = synth_hierarchical(users, items, 2.0, 4, clusters ? 8 : 12, seed, clusters);
  IdMaps ids;
  auto sequences = build_sequences(records, ids, 3);
  return split(std::move(sequences), std::move(ids), seed);
}

double popularity_h10(const DatasetSplit& ds) {
  std::vector<double> freq(ds.num_items(), 0.0);
  for (const auto& s : ds.train)
    for (int item : s.items) freq[item] += 1.0;
  const std::vector<int> ranked = metrics::rank_items(freq);
  std::vector<char> top(ds.num_items(), 0);
  for (int i = 0; i < std::min(10, ds.num_items()); ++i) top[ranked[i]] = 1;
  double hits = 0.0;
  for (const auto& s : ds.test) hits += top[s.items.back()];
  return hits / ds.test.size();
}

double test_h10(const model::ModelParams& params, const model::ModelConfig& cfg,
                const DatasetSplit& ds) {
  const auto graph = build_global_graph(ds.train, ds.num_users(), ds.num_items());
  const auto edges = model::build_global_edges(graph);
  return metrics::evaluate(params, cfg, edges, ds.test, {std::min(10, ds.num_items())})
      .per_k[0]
      .hit;
}

// --- criterion 5: overfit a small separable set -----------------------------

void criterion_overfit() {
  const auto start = Clock::now();
  DatasetSplit ds = make_split(50, 20, 1, 2);
  model::ModelConfig mcfg;
  mcfg.dim = 16;
  mcfg.layers = 1;
  train::TrainConfig tcfg;
  tcfg.learning_rate = 0.01;
  tcfg.batch_size = 16;
  tcfg.max_epochs = 200;
  tcfg.patience = 200;  // let the accuracy criterion, not the loss, decide
  tcfg.seed = 1;
  train::FitResult fr = train::fit(ds, mcfg, tcfg);
  double best_h10 = 0.0;
  int best_at = -1;
  for (const auto& rec : fr.curve)
    if (rec.valid_h10 > best_h10) {
      best_h10 = rec.valid_h10;
      best_at = rec.epoch;
    }
  const double secs = seconds_since(start);
  std::ostringstream detail;
  detail << "valid H@10 " << best_h10 << " at epoch " << best_at << ", " << secs << " s";
  report("separable two-cluster set overfits to valid H@10 >= 0.90 within 200 epochs",
         best_h10 >= 0.90 && secs < 300.0, detail.str());
}

// --- criteria 6 and 7: desk-scale directional run + region trend ------------

struct DeskRun {
  double full_h10 = 0.0;
  double nols_h10 = 0.0;
  double pop_h10 = 0.0;
  bool region_monotone = false;
};

DeskRun desk_run(std::uint64_t seed) {
  DatasetSplit ds = make_split(2000, 500, seed);
  DeskRun out;
  out.pop_h10 = popularity_h10(ds);

  model::ModelConfig full;
  full.dim = 16;
  full.layers = 1;
  train::TrainConfig tcfg;
  tcfg.learning_rate = 0.005;
  tcfg.batch_size = 256;
  tcfg.max_epochs = 3;
  tcfg.seed = seed;

  train::FitResult fr = train::fit(ds, full, tcfg);
  out.full_h10 = test_h10(fr.best_params, full, ds);

  std::vector<double> freq(ds.num_items(), 0.0);
  for (const auto& s : ds.train)
    for (int item : s.items) freq[item] += 1.0;
  metrics::RegionReport region = metrics::region_analysis(fr.best_params, full, freq);
  out.region_monotone = true;
  for (int r = 0; r + 1 < 4; ++r)
    out.region_monotone =
        out.region_monotone && region.mean_interactions[r] >= region.mean_interactions[r + 1];

  model::ModelConfig nols = full;
  nols.no_long = true;
  nols.no_short = true;
  train::FitResult fr2 = train::fit(ds, nols, tcfg);
  out.nols_h10 = test_h10(fr2.best_params, nols, ds);
  return out;
}

double median5(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[2];
}

void criteria_desk_scale() {
  const auto start = Clock::now();
  std::vector<double> full, nols, pop;
  int monotone_seeds = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DeskRun run = desk_run(seed);
    full.push_back(run.full_h10);
    nols.push_back(run.nols_h10);
    pop.push_back(run.pop_h10);
    monotone_seeds += run.region_monotone ? 1 : 0;
  }
  const double secs = seconds_since(start);
  const double med_full = median5(full), med_nols = median5(nols), med_pop = median5(pop);

  std::ostringstream d1;
  d1 << "median H@10 full " << med_full << ", w/o long+short " << med_nols << ", popularity "
     << med_pop << ", " << secs << " s";
  report(
      "desk-scale synthetic run: full model >= long/short ablation and >= 1.5x popularity "
      "ranking",
      med_full >= med_nols && med_full >= 1.5 * med_pop && secs < 1800.0, d1.str());

  std::ostringstream d2;
  d2 << monotone_seeds << "/5 seeds monotone";
  report("mean interaction count falls from the innermost to the outermost distance region",
         monotone_seeds >= 4, d2.str());
}

// --- criterion 8: early stopping waits exactly the patience window ----------

void criterion_early_stopping() {
  train::EarlyStopper stopper(10);
  stopper.observe(1.0);  // the only improvement
  int waited = 0;
  bool stopped = false;
  for (int epoch = 0; epoch < 50 && !stopped; ++epoch) {
    stopped = stopper.observe(2.0 + epoch);  // strictly worsening validation loss
    ++waited;
  }
  std::ostringstream detail;
  detail << "stopped after " << waited << " non-improving epochs";
  report("strictly worsening validation loss halts training after exactly 10 patience epochs",
         stopped && waited == 10, detail.str());
}

// --- criterion 9: checkpoint round trip -------------------------------------

void criterion_checkpoint_round_trip() {
  DatasetSplit ds = make_split(60, 30, 4);
  model::ModelConfig mcfg;
  mcfg.dim = 8;
  mcfg.layers = 1;
  train::TrainConfig tcfg;
  tcfg.max_epochs = 2;
  tcfg.batch_size = 16;
  tcfg.seed = 4;
  train::FitResult fr = train::fit(ds, mcfg, tcfg);

  const auto graph = build_global_graph(ds.train, ds.num_users(), ds.num_items());
  const auto edges = model::build_global_edges(graph);
  const std::vector<int> ks = {std::min(5, ds.num_items()), std::min(10, ds.num_items())};
  metrics::RankingReport before = metrics::evaluate(fr.best_params, mcfg, edges, ds.test, ks);

  const std::string path = "acceptance_ckpt";
  ckpt::save(path, fr.best_params, mcfg);
  auto [loaded, loaded_cfg] = ckpt::load(path);
  std::remove((path + ".manifest").c_str());
  std::remove((path + ".blob").c_str());
  metrics::RankingReport after = metrics::evaluate(loaded, loaded_cfg, edges, ds.test, ks);

  bool identical = true;
  for (std::size_t i = 0; i < ks.size(); ++i)
    identical = identical && before.per_k[i].hit == after.per_k[i].hit &&
                before.per_k[i].ndcg == after.per_k[i].ndcg &&
                before.per_k[i].map == after.per_k[i].map;
  report("checkpoint save/load/evaluate reproduces every metric bit-identically", identical, "");
}

}  // namespace

int main() {
  criterion_geometry_battery();
  criterion_inner_non_monotone();
  criterion_gradients();
  criterion_metric_oracle();
  criterion_overfit();
  criteria_desk_scale();
  criterion_early_stopping();
  criterion_checkpoint_round_trip();
  if (g_failures) {
    std::cout << g_failures << " criterion(s) failed" << std::endl;
    return 1;
  }
  std::cout << "all criteria passed" << std::endl;
  return 0;
}
