#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "phgr/graph.hpp"

namespace phgr {

struct InteractionRecord {
  std::string user;
  std::string item;
  std::int64_t timestamp = 0;
};

struct IdMaps {
  std::unordered_map<std::string, int> user_to_index;
  std::unordered_map<std::string, int> item_to_index;
  std::vector<std::string> user_names;
  std::vector<std::string> item_names;
};

struct DatasetSplit {
  std::vector<UserSequence> train;
  std::vector<UserSequence> valid;
  std::vector<UserSequence> test;
  IdMaps ids;

  int num_users() const { return static_cast<int>(ids.user_names.size()); }
  int num_items() const { return static_cast<int>(ids.item_names.size()); }
};

// Lines are "user<TAB>item<TAB>timestamp"; '#'-prefixed lines are skipped.
// A malformed line raises DataError naming its line number.
std::vector<InteractionRecord> parse_interactions(std::istream& in);
std::vector<InteractionRecord> parse_interactions_file(const std::string& path);

void write_interactions(std::ostream& out, const std::vector<InteractionRecord>& records);

// Groups by user, sorts by (timestamp, file order), drops users with fewer
// than min_len items. Also fills the id maps (first-seen order).
std::vector<UserSequence> build_sequences(const std::vector<InteractionRecord>& records,
                                          IdMaps& ids, int min_len = 3);

// Random 80/10/10 partition of the sequences, deterministic per seed.
DatasetSplit split(std::vector<UserSequence> sequences, IdMaps ids, std::uint64_t seed);

// Synthetic long-tailed dataset: item popularity follows a discrete power law
// and every user draws mostly from one latent item cluster. n_clusters <= 0
// picks a size-dependent cluster count.
std::vector<InteractionRecord> synth_hierarchical(int n_users, int m_items,
                                                  double power_exponent, int seq_len_min,
                                                  int seq_len_max, std::uint64_t seed,
                                                  int n_clusters = 0);

}  // namespace phgr
