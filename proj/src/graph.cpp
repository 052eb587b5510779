#include "phgr/graph.hpp"

#include <algorithm>
#include <set>

#include "phgr/errors.hpp"

namespace phgr {

std::vector<std::pair<int, double>> LocalGraph::neighbors_out(int node) const {
  if (!has_node(node)) throw DataError("LocalGraph: unknown node");
  std::vector<std::pair<int, double>> out;
  for (const Edge& e : edges)
    if (e.src == node) out.emplace_back(e.dst, e.weight);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::pair<int, double>> LocalGraph::neighbors_in(int node) const {
  if (!has_node(node)) throw DataError("LocalGraph: unknown node");
  std::vector<std::pair<int, double>> in;
  for (const Edge& e : edges)
    if (e.dst == node) in.emplace_back(e.src, e.weight);
  std::sort(in.begin(), in.end());
  return in;
}

bool LocalGraph::has_node(int node) const {
  return std::binary_search(nodes.begin(), nodes.end(), node);
}

LocalGraph build_local_graph(const UserSequence& seq) {
  if (seq.items.size() < 2) throw DataError("build_local_graph: sequence shorter than 2");
  LocalGraph g;
  std::set<int> nodes(seq.items.begin(), seq.items.end());
  g.nodes.assign(nodes.begin(), nodes.end());

  std::map<std::pair<int, int>, int> counts;
  std::map<int, int> out_degree;
  for (std::size_t i = 0; i + 1 < seq.items.size(); ++i) {
    counts[{seq.items[i], seq.items[i + 1]}] += 1;
    out_degree[seq.items[i]] += 1;
  }
  for (const auto& [edge, count] : counts)
    g.edges.push_back({edge.first, edge.second,
                       static_cast<double>(count) / out_degree.at(edge.first)});
  return g;
}

GlobalGraph build_global_graph(const std::vector<UserSequence>& all_seqs, int num_users,
                               int num_items) {
  GlobalGraph g;
  g.num_users = num_users;
  g.num_items = num_items;
  g.item_neighbors.assign(num_items, {});
  g.user_neighbors.assign(num_users, {});
  for (const UserSequence& seq : all_seqs) {
    if (seq.user_id < 0 || seq.user_id >= num_users)
      throw DataError("build_global_graph: user index out of range");
    std::map<int, int> multiplicity;
    for (int item : seq.items) {
      if (item < 0 || item >= num_items)
        throw DataError("build_global_graph: item index out of range");
      multiplicity[item] += 1;
    }
    for (const auto& [item, count] : multiplicity) {
      g.item_neighbors[item].emplace_back(seq.user_id, static_cast<double>(count));
      g.user_neighbors[seq.user_id].emplace_back(item, static_cast<double>(count));
    }
  }
  for (auto& adj : g.item_neighbors) std::sort(adj.begin(), adj.end());
  for (auto& adj : g.user_neighbors) std::sort(adj.begin(), adj.end());
  return g;
}

std::vector<std::pair<int, double>> GlobalGraph::neighbors_of_item(int item) const {
  if (item < 0 || item >= num_items) throw DataError("GlobalGraph: unknown item");
  return item_neighbors[item];
}

std::vector<std::pair<int, double>> GlobalGraph::neighbors_of_user(int user) const {
  if (user < 0 || user >= num_users) throw DataError("GlobalGraph: unknown user");
  return user_neighbors[user];
}

}  // namespace phgr
