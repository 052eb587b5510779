#include "phgr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "phgr/errors.hpp"

namespace phgr {

std::vector<InteractionRecord> parse_interactions(std::istream& in) {
  std::vector<InteractionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t1 == std::string::npos || t2 == std::string::npos)
      throw DataError("parse_interactions: malformed line " + std::to_string(line_no));
    InteractionRecord r;
    r.user = line.substr(0, t1);
    r.item = line.substr(t1 + 1, t2 - t1 - 1);
    const std::string ts = line.substr(t2 + 1);
    if (r.user.empty() || r.item.empty())
      throw DataError("parse_interactions: empty id at line " + std::to_string(line_no));
    try {
      std::size_t pos = 0;
      r.timestamp = std::stoll(ts, &pos);
      if (pos != ts.size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw DataError("parse_interactions: bad timestamp at line " + std::to_string(line_no));
    }
    if (r.timestamp < 0)
      throw DataError("parse_interactions: negative timestamp at line " + std::to_string(line_no));
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<InteractionRecord> parse_interactions_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_interactions(in);
}

void write_interactions(std::ostream& out, const std::vector<InteractionRecord>& records) {
  for (const auto& r : records) out << r.user << '\t' << r.item << '\t' << r.timestamp << '\n';
}

std::vector<UserSequence> build_sequences(const std::vector<InteractionRecord>& records,
                                          IdMaps& ids, int min_len) {
  auto intern = [](std::unordered_map<std::string, int>& map, std::vector<std::string>& names,
                   const std::string& key) {
    auto [it, inserted] = map.emplace(key, static_cast<int>(names.size()));
    if (inserted) names.push_back(key);
    return it->second;
  };

  struct Entry {
    std::int64_t ts;
    std::size_t order;
    int item;
  };
  std::map<int, std::vector<Entry>> per_user;  // keyed by first-seen user index
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const int u = intern(ids.user_to_index, ids.user_names, r.user);
    const int v = intern(ids.item_to_index, ids.item_names, r.item);
    per_user[u].push_back({r.timestamp, i, v});
  }

  std::vector<UserSequence> seqs;
  for (auto& [user, entries] : per_user) {
    if (static_cast<int>(entries.size()) < min_len) continue;
    std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      return a.ts != b.ts ? a.ts < b.ts : a.order < b.order;
    });
    UserSequence s;
    s.user_id = user;
    for (const Entry& e : entries) s.items.push_back(e.item);
    seqs.push_back(std::move(s));
  }
  return seqs;
}

DatasetSplit split(std::vector<UserSequence> sequences, IdMaps ids, std::uint64_t seed) {
  if (sequences.size() < 10) throw DataError("split: need at least 10 sequences");
  std::mt19937_64 rng(seed);
  std::shuffle(sequences.begin(), sequences.end(), rng);
  const std::size_t n = sequences.size();
  const std::size_t n_train = (n * 8) / 10;
  const std::size_t n_valid = n / 10;
  DatasetSplit out;
  out.ids = std::move(ids);
  out.train.assign(sequences.begin(), sequences.begin() + n_train);
  out.valid.assign(sequences.begin() + n_train, sequences.begin() + n_train + n_valid);
  out.test.assign(sequences.begin() + n_train + n_valid, sequences.end());
  return out;
}

namespace {

// Sampler over {0, ..., n-1} with weight (r+1)^-a.
struct ZetaSampler {
  std::vector<double> cdf;

  ZetaSampler(int n, double a) {
    cdf.resize(n);
    double acc = 0;
    for (int r = 0; r < n; ++r) {
      acc += std::pow(static_cast<double>(r + 1), -a);
      cdf[r] = acc;
    }
    for (double& x : cdf) x /= acc;
  }

  int operator()(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double u = unif(rng);
    return static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
  }
};

}  // namespace

std::vector<InteractionRecord> synth_hierarchical(int n_users, int m_items, double power_exponent,
                                                  int seq_len_min, int seq_len_max,
                                                  std::uint64_t seed, int n_clusters) {
  if (power_exponent <= 1.0) throw DataError("synth_hierarchical: exponent must exceed 1");
  if (n_users < 1 || m_items < 1 || seq_len_min < 1 || seq_len_max < seq_len_min)
    throw DataError("synth_hierarchical: bad sizes");
  if (n_clusters <= 0) n_clusters = std::clamp(m_items / 20, 2, 25);
  n_clusters = std::min(n_clusters, m_items);

  // Item index == global popularity rank. Cluster membership is round-robin
  // over ranks so every cluster spans the whole popularity range; a user's
  // draws stay inside their latent cluster with probability kStick, which
  // keeps the global marginal a power law of the requested exponent.
  constexpr double kStick = 0.85;
  const int per_cluster = (m_items + n_clusters - 1) / n_clusters;

  std::mt19937_64 rng(seed);
  ZetaSampler global(m_items, power_exponent);
  std::uniform_int_distribution<int> cluster_dist(0, n_clusters - 1);
  std::uniform_int_distribution<int> len_dist(seq_len_min, seq_len_max);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  std::vector<InteractionRecord> records;
  records.reserve(static_cast<std::size_t>(n_users) * seq_len_max);
  for (int u = 0; u < n_users; ++u) {
    const int cluster = cluster_dist(rng);
    const int len = len_dist(rng);
    for (int t = 0; t < len; ++t) {
      int rank = global(rng);
      if (unif(rng) < kStick) {
        // same popularity block, projected into the user's cluster
        int within = rank / n_clusters;
        if (within >= per_cluster) within = per_cluster - 1;
        rank = std::min(within * n_clusters + cluster, m_items - 1);
      }
      records.push_back({"u" + std::to_string(u), "i" + std::to_string(rank),
                         static_cast<std::int64_t>(t)});
    }
  }
  return records;
}

}  // namespace phgr
