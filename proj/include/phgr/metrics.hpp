#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "phgr/data.hpp"
#include "phgr/model.hpp"

namespace phgr::metrics {

struct MetricTriple {
  double hit = 0.0;
  double ndcg = 0.0;
  double map = 0.0;
};

// Single-relevant-item contribution at cutoff k: hit indicator, 1/log2(rank+1)
// and 1/rank when the target makes the cutoff (rank is 1-based).
MetricTriple metrics_at_k(const std::vector<int>& ranked, int target, int k);

// Descending score order; ties broken by ascending item index.
std::vector<int> rank_items(const std::vector<double>& scores);

struct RankingReport {
  std::vector<int> ks;
  std::vector<MetricTriple> per_k;  // averaged over sequences, aligned with ks
  std::size_t sequences = 0;
};

// Full-catalog evaluation: for each sequence the last item is the target and
// the rest the input. Deterministic.
RankingReport evaluate(const model::ModelParams& params, const model::ModelConfig& cfg,
                       const model::GlobalEdges& edges,
                       const std::vector<UserSequence>& sequences, const std::vector<int>& ks);

void write_report_csv(std::ostream& out, const RankingReport& report,
                      const std::string& dataset, const std::string& variant);
void write_report_table(std::ostream& out, const RankingReport& report);

struct RegionReport {
  std::array<double, 3> boundaries{};  // strictly increasing radii
  std::array<std::size_t, 4> counts{};
  std::array<double, 4> mean_interactions{};
};

// Buckets items into four bands of distance-to-origin (geodesic distance for
// the hyperbolic variant, vector norm for the flat one) and reports the mean
// interaction count per band. Empty boundaries = 25/50/75th percentiles.
RegionReport region_analysis(const model::ModelParams& params, const model::ModelConfig& cfg,
                             const std::vector<double>& interaction_counts,
                             const std::vector<double>& boundaries = {});

void write_region_csv(std::ostream& out, const RegionReport& report);

// One gamma row per input position plus the long-view attention matrix,
// labeled by position and item index; 12 significant digits.
void export_attention(std::ostream& out, const model::SequenceForward& fwd,
                      const std::vector<int>& input_items);

}  // namespace phgr::metrics
