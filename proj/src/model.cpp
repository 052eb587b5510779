#include "phgr/model.hpp"

#include <cmath>
#include <random>
#include <unordered_map>

#include "phgr/errors.hpp"

namespace phgr::model {

using namespace phgr::ad;
using phgr::adg::AdSpace;

void ModelConfig::validate() const {
  if (dim < 1) throw ContractError("ModelConfig: dim must be positive");
  if (layers < 1 || layers > 5) throw ContractError("ModelConfig: layers must be in [1, 5]");
  if (c <= 0.0) throw ContractError("ModelConfig: curvature must be positive");
  if (boundary_eps <= 0.0 || boundary_eps >= 1.0)
    throw ContractError("ModelConfig: boundary_eps must be in (0, 1)");
  if (init_std < 0.0) throw ContractError("ModelConfig: init_std must be nonnegative");
  for (const auto* mix : {&alpha, &zeta}) {
    if (!mix->empty() && static_cast<int>(mix->size()) != layers + 1)
      throw ContractError("ModelConfig: layer-mix weights need layers+1 entries");
    for (double w : *mix)
      if (w < 0.0) throw ContractError("ModelConfig: layer-mix weights must be nonnegative");
  }
}

AdSpace ModelConfig::space() const {
  AdSpace sp;
  sp.hyperbolic = hyperbolic;
  sp.ball.c = c;
  sp.ball.boundary_eps = boundary_eps;
  sp.ball.dim = dim;
  return sp;
}

std::vector<double> ModelConfig::mix_alpha() const {
  if (!alpha.empty()) return alpha;
  return std::vector<double>(layers + 1, 1.0 / (layers + 1));
}

std::vector<double> ModelConfig::mix_zeta() const {
  if (!zeta.empty()) return zeta;
  return std::vector<double>(layers + 1, 1.0 / (layers + 1));
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::blocks() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("user_pre", &user_pre);
  out.emplace_back("item_pre", &item_pre);
  for (int l = 0; l < layers; ++l) {
    const std::string p = "global" + std::to_string(l);
    out.emplace_back(p + "_w_self", &global_w_self[l]);
    out.emplace_back(p + "_w_neigh", &global_w_neigh[l]);
    out.emplace_back(p + "_b", &global_b[l]);
  }
  for (int l = 0; l < layers; ++l) {
    const std::string p = "local" + std::to_string(l);
    out.emplace_back(p + "_w_self", &local_w_self[l]);
    out.emplace_back(p + "_w_neigh", &local_w_neigh[l]);
    out.emplace_back(p + "_b", &local_b[l]);
  }
  out.emplace_back("wq", &wq);
  out.emplace_back("wk", &wk);
  out.emplace_back("wv", &wv);
  out.emplace_back("wn", &wn);
  out.emplace_back("wi", &wi);
  out.emplace_back("q", &q);
  out.emplace_back("readout", &readout);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::blocks() const {
  auto mutable_blocks = const_cast<ModelParams*>(this)->blocks();
  std::vector<std::pair<std::string, const Tensor*>> out;
  out.reserve(mutable_blocks.size());
  for (auto& [name, t] : mutable_blocks) out.emplace_back(name, t);
  return out;
}

ModelParams init_embeddings(int n, int m, const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (n < 1 || m < 1) throw ContractError("init_embeddings: need at least one user and item");
  const int d = cfg.dim;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> pre_dist(0.0, cfg.init_std);
  std::normal_distribution<double> w_dist(0.0, 1.0 / std::sqrt(static_cast<double>(d)));

  auto draw = [&](Tensor& t, std::normal_distribution<double>& dist) {
    for (auto& x : t.v) x = dist(rng);
  };

  ModelParams p;
  p.n = n;
  p.m = m;
  p.dim = d;
  p.layers = cfg.layers;
  p.user_pre = Tensor::matrix(n, d);
  p.item_pre = Tensor::matrix(m + 1, d);
  draw(p.user_pre, pre_dist);
  draw(p.item_pre, pre_dist);
  for (int l = 0; l < cfg.layers; ++l) {
    p.global_w_self.push_back(Tensor::vector(d));
    p.global_w_neigh.push_back(Tensor::vector(d));
    p.global_b.push_back(Tensor::scalar(0.0));
    draw(p.global_w_self.back(), w_dist);
    draw(p.global_w_neigh.back(), w_dist);
  }
  for (int l = 0; l < cfg.layers; ++l) {
    p.local_w_self.push_back(Tensor::vector(d));
    p.local_w_neigh.push_back(Tensor::vector(d));
    p.local_b.push_back(Tensor::scalar(0.0));
    draw(p.local_w_self.back(), w_dist);
    draw(p.local_w_neigh.back(), w_dist);
  }
  for (Tensor* t : {&p.wq, &p.wk, &p.wv, &p.wn, &p.wi}) {
    *t = Tensor::matrix(d, d);
    draw(*t, w_dist);
  }
  p.q = Tensor::vector(d);
  draw(p.q, w_dist);
  p.readout = Tensor::matrix(d, 3 * d);
  draw(p.readout, w_dist);
  return p;
}

GlobalEdges build_global_edges(const GlobalGraph& g) {
  GlobalEdges e;
  for (int i = 0; i < g.num_items; ++i)
    for (const auto& [u, w] : g.item_neighbors[i]) {
      e.item_seg.push_back(i);
      e.item_user.push_back(static_cast<std::size_t>(u));
    }
  for (int u = 0; u < g.num_users; ++u)
    for (const auto& [i, w] : g.user_neighbors[u]) {
      e.user_seg.push_back(u);
      e.user_item.push_back(static_cast<std::size_t>(i));
    }
  return e;
}

ParamRefs attach(Tape& tape, const ModelParams& params, bool requires_grad) {
  ParamRefs r;
  r.user_pre = tape.leaf(params.user_pre, requires_grad);
  r.item_pre = tape.leaf(params.item_pre, requires_grad);
  for (int l = 0; l < params.layers; ++l) {
    r.global_w_self.push_back(tape.leaf(params.global_w_self[l], requires_grad));
    r.global_w_neigh.push_back(tape.leaf(params.global_w_neigh[l], requires_grad));
    r.global_b.push_back(tape.leaf(params.global_b[l], requires_grad));
  }
  for (int l = 0; l < params.layers; ++l) {
    r.local_w_self.push_back(tape.leaf(params.local_w_self[l], requires_grad));
    r.local_w_neigh.push_back(tape.leaf(params.local_w_neigh[l], requires_grad));
    r.local_b.push_back(tape.leaf(params.local_b[l], requires_grad));
  }
  r.wq = tape.leaf(params.wq, requires_grad);
  r.wk = tape.leaf(params.wk, requires_grad);
  r.wv = tape.leaf(params.wv, requires_grad);
  r.wn = tape.leaf(params.wn, requires_grad);
  r.wi = tape.leaf(params.wi, requires_grad);
  r.q = tape.leaf(params.q, requires_grad);
  r.readout = tape.leaf(params.readout, requires_grad);
  return r;
}

std::vector<Tensor> collect_grads(const Tape& tape, const ParamRefs& refs,
                                  const ModelParams& params) {
  std::vector<Value> leaves = {refs.user_pre, refs.item_pre};
  for (int l = 0; l < params.layers; ++l) {
    leaves.push_back(refs.global_w_self[l]);
    leaves.push_back(refs.global_w_neigh[l]);
    leaves.push_back(refs.global_b[l]);
  }
  for (int l = 0; l < params.layers; ++l) {
    leaves.push_back(refs.local_w_self[l]);
    leaves.push_back(refs.local_w_neigh[l]);
    leaves.push_back(refs.local_b[l]);
  }
  for (Value v : {refs.wq, refs.wk, refs.wv, refs.wn, refs.wi, refs.q, refs.readout})
    leaves.push_back(v);

  auto blocks = params.blocks();
  if (blocks.size() != leaves.size()) throw ContractError("collect_grads: block count mismatch");
  std::vector<Tensor> grads;
  grads.reserve(leaves.size());
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (tape.has_grad(leaves[i].id)) {
      grads.push_back(tape.grad(leaves[i]));
    } else {
      Tensor zero = *blocks[i].second;
      std::fill(zero.v.begin(), zero.v.end(), 0.0);
      grads.push_back(std::move(zero));
    }
  }
  return grads;
}

namespace {

// One attention round: per edge, logit = w_self . log0(self) + w_neigh .
// log0(neighbor) + b, softmax within each self node's edge group, then a
// tangent-space weighted aggregation at each self point. Nodes without edges
// pass through unchanged (zero aggregate).
Value attention_update(const AdSpace& sp, Value pts, Value nbr_pts, Value log_self,
                       Value log_nbr, const std::vector<int>& seg,
                       const std::vector<std::size_t>& nbr_idx, Value w_self, Value w_neigh,
                       Value b, std::size_t num_nodes) {
  const std::size_t n_edges = seg.size();
  if (n_edges == 0) return pts;
  std::vector<std::size_t> seg_idx(seg.begin(), seg.end());
  Value a = gather_rows(log_self, seg_idx);
  Value nb = gather_rows(log_nbr, nbr_idx);
  Value logits = add(row_sum(mul(a, repeat_row(w_self, n_edges))),
                     row_sum(mul(nb, repeat_row(w_neigh, n_edges))));
  logits = add_broadcast(logits, b);
  Value att = segment_softmax(logits, seg);
  Value tangents = sp.log_at_rows(gather_rows(pts, seg_idx), gather_rows(nbr_pts, nbr_idx));
  Value agg = segment_sum_rows(rowwise_scale(tangents, att), seg, num_nodes);
  return sp.exp_at_rows(pts, agg);
}

Value layer_mix(const AdSpace& sp, const std::vector<Value>& layers,
                const std::vector<double>& mix) {
  Value acc = scale(sp.log0_rows(layers[0]), mix[0]);
  for (std::size_t l = 1; l < layers.size(); ++l)
    acc = add(acc, scale(sp.log0_rows(layers[l]), mix[l]));
  return sp.exp0_rows(acc);
}

}  // namespace

GlobalOutput global_forward(Tape&, const ParamRefs& refs, const GlobalEdges& edges,
                            const ModelConfig& cfg) {
  const AdSpace sp = cfg.space();
  Value items = sp.exp0_rows(refs.item_pre);
  Value users = sp.exp0_rows(refs.user_pre);
  if (cfg.no_global) return {items, users};

  const std::size_t num_item_rows = items.data().shape[0];
  const std::size_t num_users = users.data().shape[0];
  std::vector<Value> item_layers{items};
  for (int l = 0; l < cfg.layers; ++l) {
    Value log_items = sp.log0_rows(items);
    Value log_users = sp.log0_rows(users);
    Value next_items =
        attention_update(sp, items, users, log_items, log_users, edges.item_seg, edges.item_user,
                         refs.global_w_self[l], refs.global_w_neigh[l], refs.global_b[l],
                         num_item_rows);
    Value next_users =
        attention_update(sp, users, items, log_users, log_items, edges.user_seg, edges.user_item,
                         refs.global_w_self[l], refs.global_w_neigh[l], refs.global_b[l],
                         num_users);
    items = next_items;
    users = next_users;
    item_layers.push_back(items);
  }
  return {layer_mix(sp, item_layers, cfg.mix_alpha()), users};
}

SequenceForward sequence_forward(Tape& tape, const ParamRefs& refs, Value seed_items,
                                 Value score_items, const std::vector<int>& input_items,
                                 const ModelConfig& cfg) {
  if (input_items.empty()) throw DataError("sequence_forward: empty input sequence");
  const AdSpace sp = cfg.space();
  const int d = cfg.dim;
  const std::size_t max_index = seed_items.data().shape[0];
  for (int item : input_items)
    if (item < 0 || static_cast<std::size_t>(item) >= max_index)
      throw DataError("sequence_forward: item index out of range");

  // local stage over the sequence's directed item graph, message flow along
  // the click direction (each node attends to its predecessors)
  Value local_out;
  std::vector<int> nodes;
  std::unordered_map<int, std::size_t> node_pos;
  if (cfg.no_local || input_items.size() < 2) {
    std::vector<std::size_t> uniq;
    for (int item : input_items)
      if (!node_pos.count(item)) {
        node_pos.emplace(item, uniq.size());
        uniq.push_back(static_cast<std::size_t>(item));
        nodes.push_back(item);
      }
    local_out = gather_rows(seed_items, uniq);
  } else {
    const LocalGraph graph = build_local_graph(UserSequence{-1, input_items});
    nodes = graph.nodes;
    std::vector<std::size_t> node_rows;
    for (std::size_t p = 0; p < nodes.size(); ++p) {
      node_pos.emplace(nodes[p], p);
      node_rows.push_back(static_cast<std::size_t>(nodes[p]));
    }
    std::vector<int> seg;
    std::vector<std::size_t> nbr;
    for (std::size_t p = 0; p < nodes.size(); ++p)
      for (const auto& [src, w] : graph.neighbors_in(nodes[p])) {
        seg.push_back(static_cast<int>(p));
        nbr.push_back(node_pos.at(src));
      }
    Value pts = gather_rows(seed_items, node_rows);
    std::vector<Value> layer_pts{pts};
    for (int l = 0; l < cfg.layers; ++l) {
      Value log_pts = sp.log0_rows(pts);
      pts = attention_update(sp, pts, pts, log_pts, log_pts, seg, nbr, refs.local_w_self[l],
                             refs.local_w_neigh[l], refs.local_b[l], nodes.size());
      layer_pts.push_back(pts);
    }
    local_out = layer_mix(sp, layer_pts, cfg.mix_zeta());
  }

  // per-position representations in the origin tangent space
  const std::size_t seq_len = input_items.size();
  std::vector<std::size_t> pos_rows;
  for (int item : input_items) pos_rows.push_back(node_pos.at(item));
  Value seq_tangent = sp.log0_rows(gather_rows(local_out, pos_rows));

  SequenceForward out;
  Value long_log, short_log;
  if (cfg.no_long) {
    long_log = tape.constant(Tensor::vector(d, 0.0));
    out.long_attention = tape.constant(Tensor::matrix(seq_len, seq_len, 0.0));
  } else {
    Value q_rows = matmul(seq_tangent, transpose(refs.wq));
    Value k_rows = matmul(seq_tangent, transpose(refs.wk));
    Value v_rows = matmul(seq_tangent, transpose(refs.wv));
    Value att = softmax_rows(
        scale(matmul(q_rows, transpose(k_rows)), 1.0 / std::sqrt(static_cast<double>(d))));
    out.long_attention = att;
    Value z_long = sp.exp0_vec(mean_rows(matmul(att, v_rows)));
    long_log = sp.log0_vec(z_long);
  }
  if (cfg.no_short) {
    out.gamma = tape.constant(Tensor::vector(seq_len, 0.0));
    short_log = tape.constant(Tensor::vector(d, 0.0));
  } else {
    Value last_tangent = row(seq_tangent, seq_len - 1);
    Value gate = sigmoid(add(repeat_row(matvec(refs.wn, last_tangent), seq_len),
                             matmul(seq_tangent, transpose(refs.wi))));
    out.gamma = row_sum(mul(gate, repeat_row(refs.q, seq_len)));
    Value z_short =
        sp.exp0_vec(scale(mean_rows(rowwise_scale(seq_tangent, out.gamma)),
                          static_cast<double>(seq_len)));
    short_log = sp.log0_vec(z_short);
  }

  Value last_log = row(seq_tangent, seq_len - 1);
  Value user_tangent = matvec(refs.readout, concat(last_log, concat(long_log, short_log)));
  out.user_point = sp.exp0_vec(user_tangent);

  // score against the initial item embeddings, excluding the unknown slot
  const std::size_t m = score_items.data().shape[0] - 1;
  std::vector<std::size_t> real_items(m);
  for (std::size_t i = 0; i < m; ++i) real_items[i] = i;
  out.scores = sp.scores(out.user_point, gather_rows(score_items, real_items), cfg.inner);
  out.probabilities = softmax_vec(out.scores);
  return out;
}

}  // namespace phgr::model
