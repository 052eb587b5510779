#pragma once

#include <cstdint>
#include <map>
#include <vector>

namespace phgr {

struct UserSequence {
  int user_id = -1;
  std::vector<int> items;  // chronological
};

// Directed item-item graph of one sequence; out-edge weights of every source
// node sum to 1.
struct LocalGraph {
  std::vector<int> nodes;  // unique items, ascending
  struct Edge {
    int src;
    int dst;
    double weight;
  };
  std::vector<Edge> edges;

  // Outgoing neighbors of node, (dst, weight), ascending dst.
  std::vector<std::pair<int, double>> neighbors_out(int node) const;
  // Incoming neighbors of node, (src, weight), ascending src.
  std::vector<std::pair<int, double>> neighbors_in(int node) const;
  bool has_node(int node) const;
};

// Bipartite user-item graph over the training split; weights are interaction
// multiplicities.
struct GlobalGraph {
  int num_users = 0;
  int num_items = 0;
  // adjacency: per item, (user, weight); per user, (item, weight); ascending
  std::vector<std::vector<std::pair<int, double>>> item_neighbors;
  std::vector<std::vector<std::pair<int, double>>> user_neighbors;

  std::vector<std::pair<int, double>> neighbors_of_item(int item) const;
  std::vector<std::pair<int, double>> neighbors_of_user(int user) const;
};

LocalGraph build_local_graph(const UserSequence& seq);
GlobalGraph build_global_graph(const std::vector<UserSequence>& all_seqs, int num_users,
                               int num_items);

}  // namespace phgr
