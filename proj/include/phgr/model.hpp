#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "phgr/ad_geometry.hpp"
#include "phgr/autodiff.hpp"
#include "phgr/graph.hpp"

namespace phgr::model {

struct ModelConfig {
  int dim = 16;
  int layers = 1;  // graph-attention depth, shared by the global and local stages
  double c = 1.0;
  double boundary_eps = 1e-5;
  std::vector<double> alpha;  // global layer-mix weights, size layers+1; empty = uniform
  std::vector<double> zeta;   // local layer-mix weights
  bool hyperbolic = true;     // false = flat-space variant of the same architecture
  adg::InnerKind inner = adg::InnerKind::geodesic_d;
  bool no_global = false;
  bool no_local = false;
  bool no_long = false;
  bool no_short = false;
  double init_std = 0.1;

  void validate() const;
  adg::AdSpace space() const;
  std::vector<double> mix_alpha() const;  // validated, defaulted copies
  std::vector<double> mix_zeta() const;
};

// All trainable arrays. Embeddings are stored as tangent pre-images at the
// origin; ball membership is imposed by the origin exponential map at use.
// Item row m is the reserved unknown-item slot, excluded from scoring.
struct ModelParams {
  int n = 0;  // users
  int m = 0;  // items (real ones; pre-image matrix has m+1 rows)
  int dim = 0;
  int layers = 0;

  ad::Tensor user_pre;  // n x d
  ad::Tensor item_pre;  // (m+1) x d
  std::vector<ad::Tensor> global_w_self, global_w_neigh;  // per layer, d
  std::vector<ad::Tensor> global_b;                       // per layer, scalar
  std::vector<ad::Tensor> local_w_self, local_w_neigh;
  std::vector<ad::Tensor> local_b;
  ad::Tensor wq, wk, wv;  // d x d
  ad::Tensor wn, wi;      // d x d
  ad::Tensor q;           // d
  ad::Tensor readout;     // d x 3d

  // Stable (name, block) enumeration used by the optimizer and checkpoints.
  std::vector<std::pair<std::string, ad::Tensor*>> blocks();
  std::vector<std::pair<std::string, const ad::Tensor*>> blocks() const;
};

ModelParams init_embeddings(int n, int m, const ModelConfig& cfg, std::uint64_t seed);

// Flat edge lists of the bipartite graph, segment-sorted for the attention
// primitives. item_seg[k] is the item of edge k (ascending), item_user[k] the
// user on its other end; the user_* arrays are the transposed view.
struct GlobalEdges {
  std::vector<int> item_seg;
  std::vector<std::size_t> item_user;
  std::vector<int> user_seg;
  std::vector<std::size_t> user_item;
};

GlobalEdges build_global_edges(const GlobalGraph& g);

// Tape leaves for one forward/backward pass, in blocks() order.
struct ParamRefs {
  ad::Value user_pre, item_pre;
  std::vector<ad::Value> global_w_self, global_w_neigh, global_b;
  std::vector<ad::Value> local_w_self, local_w_neigh, local_b;
  ad::Value wq, wk, wv, wn, wi, q, readout;
};

ParamRefs attach(ad::Tape& tape, const ModelParams& params, bool requires_grad);

// Collects grad(leaf) for every block in blocks() order; untouched leaves
// yield zero tensors of the right shape.
std::vector<ad::Tensor> collect_grads(const ad::Tape& tape, const ParamRefs& refs,
                                      const ModelParams& params);

struct GlobalOutput {
  ad::Value items;  // (m+1) x d ball points after the layer mix
  ad::Value users;  // n x d, trained but not consumed downstream
};

// Runs the global graph-attention stack once; shared by every sequence on the
// same tape. With no_global set, returns the raw mapped embeddings.
GlobalOutput global_forward(ad::Tape& tape, const ParamRefs& refs, const GlobalEdges& edges,
                            const ModelConfig& cfg);

struct SequenceForward {
  ad::Value user_point;      // d, ball point
  ad::Value scores;          // m, pre-softmax
  ad::Value probabilities;   // m, softmax of scores
  ad::Value gamma;           // per input position
  ad::Value long_attention;  // seq x seq rows of the self-attention softmax
};

// Forward pass of one sequence of input items (the supervision target is NOT
// part of input_items). seed_items supplies the local-stage layer-0 points;
// score_items are the ball points every user is scored against (the initial
// item embeddings). Both are (m+1) x d.
SequenceForward sequence_forward(ad::Tape& tape, const ParamRefs& refs, ad::Value seed_items,
                                 ad::Value score_items, const std::vector<int>& input_items,
                                 const ModelConfig& cfg);

}  // namespace phgr::model
