#include "phgr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "phgr/errors.hpp"
#include "phgr/geometry.hpp"

namespace phgr::metrics {

using namespace phgr::ad;

MetricTriple metrics_at_k(const std::vector<int>& ranked, int target, int k) {
  if (k < 1 || static_cast<std::size_t>(k) > ranked.size())
    throw ContractError("metrics_at_k: cutoff exceeds the candidate count");
  MetricTriple out;
  for (int r = 0; r < k; ++r) {
    if (ranked[r] == target) {
      const double rank = r + 1.0;
      out.hit = 1.0;
      out.ndcg = 1.0 / std::log2(rank + 1.0);
      out.map = 1.0 / rank;
      break;
    }
  }
  return out;
}

std::vector<int> rank_items(const std::vector<double>& scores) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
  });
  return idx;
}

RankingReport evaluate(const model::ModelParams& params, const model::ModelConfig& cfg,
                       const model::GlobalEdges& edges,
                       const std::vector<UserSequence>& sequences, const std::vector<int>& ks) {
  if (sequences.empty()) throw DataError("evaluate: empty sequence set");
  if (ks.empty()) throw ContractError("evaluate: no cutoffs requested");

  // the global stage does not depend on the sequence; run it once without
  // gradients and reuse its output as a constant
  Tensor global_items, initial_items;
  {
    Tape tape;
    model::ParamRefs refs = model::attach(tape, params, false);
    global_items = model::global_forward(tape, refs, edges, cfg).items.data();
    initial_items = cfg.space().exp0_rows(refs.item_pre).data();
  }

  RankingReport report;
  report.ks = ks;
  report.per_k.assign(ks.size(), {});
  for (const UserSequence& seq : sequences) {
    if (seq.items.size() < 2) throw DataError("evaluate: sequence shorter than 2");
    std::vector<int> input(seq.items.begin(), seq.items.end() - 1);
    const int target = seq.items.back();

    Tape tape;
    model::ParamRefs refs = model::attach(tape, params, false);
    Value seed = tape.constant(global_items);
    Value score_items = tape.constant(initial_items);
    model::SequenceForward fwd =
        model::sequence_forward(tape, refs, seed, score_items, input, cfg);
    std::vector<int> ranked = rank_items(fwd.scores.data().v);
    for (std::size_t i = 0; i < ks.size(); ++i) {
      MetricTriple t = metrics_at_k(ranked, target, ks[i]);
      report.per_k[i].hit += t.hit;
      report.per_k[i].ndcg += t.ndcg;
      report.per_k[i].map += t.map;
    }
  }
  report.sequences = sequences.size();
  for (auto& t : report.per_k) {
    t.hit /= report.sequences;
    t.ndcg /= report.sequences;
    t.map /= report.sequences;
  }
  return report;
}

void write_report_csv(std::ostream& out, const RankingReport& report,
                      const std::string& dataset, const std::string& variant) {
  out << "dataset,variant,K,H,N,M\n";
  out << std::setprecision(12);
  for (std::size_t i = 0; i < report.ks.size(); ++i)
    out << dataset << ',' << variant << ',' << report.ks[i] << ',' << report.per_k[i].hit << ','
        << report.per_k[i].ndcg << ',' << report.per_k[i].map << '\n';
}

void write_report_table(std::ostream& out, const RankingReport& report) {
  out << std::left << std::setw(6) << "K" << std::setw(12) << "H" << std::setw(12) << "N"
      << std::setw(12) << "M" << '\n';
  out << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < report.ks.size(); ++i)
    out << std::left << std::setw(6) << report.ks[i] << std::setw(12)
        << report.per_k[i].hit * 100.0 << std::setw(12) << report.per_k[i].ndcg * 100.0
        << std::setw(12) << report.per_k[i].map * 100.0 << '\n';
  out.unsetf(std::ios::fixed);
}

RegionReport region_analysis(const model::ModelParams& params, const model::ModelConfig& cfg,
                             const std::vector<double>& interaction_counts,
                             const std::vector<double>& boundaries) {
  if (static_cast<int>(interaction_counts.size()) != params.m)
    throw ContractError("region_analysis: need one interaction count per item");

  geo::BallConfig ball{cfg.c, cfg.boundary_eps, cfg.dim};
  std::vector<double> dist(params.m);
  const geo::Vec origin(cfg.dim, 0.0);
  for (int i = 0; i < params.m; ++i) {
    geo::Vec pre(cfg.dim);
    for (int j = 0; j < cfg.dim; ++j) pre[j] = params.item_pre.at(i, j);
    if (cfg.hyperbolic) {
      dist[i] = geo::distance(origin, geo::exp0(pre, ball), ball);
    } else {
      dist[i] = geo::norm(pre);
    }
  }

  RegionReport report;
  if (boundaries.empty()) {
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    auto pct = [&](double p) { return sorted[static_cast<std::size_t>(p * (params.m - 1))]; };
    report.boundaries = {pct(0.25), pct(0.50), pct(0.75)};
  } else {
    if (boundaries.size() != 3 || !(boundaries[0] < boundaries[1] && boundaries[1] < boundaries[2]))
      throw ContractError("region_analysis: need three strictly increasing boundaries");
    report.boundaries = {boundaries[0], boundaries[1], boundaries[2]};
  }

  std::array<double, 4> totals{};
  for (int i = 0; i < params.m; ++i) {
    int region = 0;
    while (region < 3 && dist[i] > report.boundaries[region]) ++region;
    report.counts[region] += 1;
    totals[region] += interaction_counts[i];
  }
  for (int r = 0; r < 4; ++r)
    report.mean_interactions[r] = report.counts[r] ? totals[r] / report.counts[r] : 0.0;
  return report;
}

void write_region_csv(std::ostream& out, const RegionReport& report) {
  out << "region,upper_bound,item_count,mean_interactions\n";
  out << std::setprecision(12);
  for (int r = 0; r < 4; ++r) {
    out << r + 1 << ',';
    if (r < 3)
      out << report.boundaries[r];
    else
      out << "inf";
    out << ',' << report.counts[r] << ',' << report.mean_interactions[r] << '\n';
  }
}

void export_attention(std::ostream& out, const model::SequenceForward& fwd,
                      const std::vector<int>& input_items) {
  const std::size_t n = input_items.size();
  if (fwd.gamma.data().v.size() != n) throw ContractError("export_attention: length mismatch");
  out << std::setprecision(12);
  out << "kind,position,item,values\n";
  for (std::size_t i = 0; i < n; ++i)
    out << "gamma," << i + 1 << ',' << input_items[i] << ',' << fwd.gamma.data().v[i] << '\n';
  const Tensor& att = fwd.long_attention.data();
  for (std::size_t i = 0; i < n; ++i) {
    out << "long," << i + 1 << ',' << input_items[i];
    for (std::size_t j = 0; j < n; ++j) out << ',' << att.at(i, j);
    out << '\n';
  }
  if (!out) throw IoError("export_attention: write failed");
}

}  // namespace phgr::metrics
