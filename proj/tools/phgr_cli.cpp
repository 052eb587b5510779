// Single executable exposing the full pipeline: data preparation, training,
// evaluation, ablations, the geometry property battery, region analysis,
// attention export, and a hyperparameter grid sweep.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "phgr/checkpoint.hpp"
#include "phgr/data.hpp"
#include "phgr/errors.hpp"
#include "phgr/metrics.hpp"
#include "phgr/model.hpp"
#include "phgr/train.hpp"
#include "phgr/verify.hpp"

namespace fs = std::filesystem;
using namespace phgr;

namespace {

const std::vector<std::string> kConfigKeys = {
    "dim",       "layers",        "c",          "boundary_eps", "alpha",
    "zeta",      "variant",       "inner",      "no_global",    "no_local",
    "no_long",   "no_short",      "init_std",   "learning_rate", "batch_size",
    "omega",     "margin",        "patience",   "max_epochs",   "seed",
    "negatives_per_positive"};

std::string dashed(std::string key) {
  for (char& ch : key)
    if (ch == '_') ch = '-';
  return key;
}

std::string upper(std::string key) {
  for (char& ch : key) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return key;
}

// PHGR_<KEY> environment variables override the config file but not flags.
void apply_env(train::RunConfig& cfg) {
  for (const std::string& key : kConfigKeys) {
    const std::string name = "PHGR_" + upper(key);
    if (const char* value = std::getenv(name.c_str())) train::apply_key(cfg, key, value);
  }
}

// Registers one flag per config key on a subcommand and replays the flags the
// user actually passed onto a RunConfig, so flags win over env and file.
class ConfigMirror {
 public:
  void attach(CLI::App* app) {
    for (const std::string& key : kConfigKeys) {
      const std::string flag = "--" + dashed(key);
      if (key.rfind("no_", 0) == 0) {
        opts_[key] = app->add_flag(flag)->description("sets " + key + "=true");
      } else {
        opts_[key] = app->add_option(flag, values_[key], "overrides config key " + key);
      }
    }
  }

  void apply(train::RunConfig& cfg) const {
    for (const std::string& key : kConfigKeys) {
      const auto it = opts_.find(key);
      if (it == opts_.end() || it->second->count() == 0) continue;
      if (key.rfind("no_", 0) == 0)
        train::apply_key(cfg, key, "true");
      else
        train::apply_key(cfg, key, values_.at(key));
    }
  }

 private:
  std::map<std::string, std::string> values_;
  std::map<std::string, CLI::Option*> opts_;
};

train::RunConfig load_run_config(const std::string& config_path, const ConfigMirror& mirror) {
  train::RunConfig cfg;
  if (!config_path.empty()) cfg = train::parse_config_file(config_path);
  apply_env(cfg);
  mirror.apply(cfg);
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

DatasetSplit load_split(const std::string& data_path, std::uint64_t seed, int min_len = 3) {
  auto records = parse_interactions_file(data_path);
  IdMaps ids;
  auto sequences = build_sequences(records, ids, min_len);
  return split(std::move(sequences), std::move(ids), seed);
}

std::vector<int> parse_k_list(const std::string& text) {
  std::vector<int> ks;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      ks.push_back(std::stoi(part));
    } catch (const std::exception&) {
      throw DataError("bad cutoff list: " + text);
    }
  }
  if (ks.empty()) throw DataError("empty cutoff list");
  return ks;
}

std::vector<int> clamp_ks(std::vector<int> ks, int m) {
  for (int& k : ks) k = std::min(k, m);
  return ks;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open output file " + path);
  return out;
}

std::vector<double> interaction_counts(const std::vector<UserSequence>& train, int m) {
  std::vector<double> counts(m, 0.0);
  for (const UserSequence& s : train)
    for (int item : s.items) counts[item] += 1.0;
  return counts;
}

// The eight model variants compared in the ablation run.
struct Variant {
  std::string name;
  void (*mutate)(model::ModelConfig&);
};

const std::vector<Variant> kAblationVariants = {
    {"PHGR", [](model::ModelConfig&) {}},
    {"EHGR", [](model::ModelConfig& c) { c.hyperbolic = false; }},
    {"PHGR-w/o-IP", [](model::ModelConfig& c) { c.inner = adg::InnerKind::projected_p; }},
    {"PHGR-w/o-G", [](model::ModelConfig& c) { c.no_global = true; }},
    {"PHGR-w/o-L", [](model::ModelConfig& c) { c.no_local = true; }},
    {"PHGR-w/o-Long", [](model::ModelConfig& c) { c.no_long = true; }},
    {"PHGR-w/o-Short", [](model::ModelConfig& c) { c.no_short = true; }},
    {"PHGR-w/o-L&S", [](model::ModelConfig& c) {
       c.no_long = true;
       c.no_short = true;
     }},
};

struct PrepareOpts {
  std::string data, out;
  std::uint64_t seed = 1;
  int min_len = 3;
  int synth_users = 0, synth_items = 500;
  double synth_exponent = 2.0;
  int synth_len_min = 4, synth_len_max = 12;
};

int cmd_prepare(const PrepareOpts& o) {
  std::vector<InteractionRecord> records;
  fs::create_directories(o.out);
  if (o.synth_users > 0) {
    records = synth_hierarchical(o.synth_users, o.synth_items, o.synth_exponent, o.synth_len_min,
                                 o.synth_len_max, o.seed);
    auto tsv = open_out(o.out + "/interactions.tsv");
    write_interactions(tsv, records);
    std::cout << "wrote " << o.out << "/interactions.tsv (" << records.size() << " records)\n";
  } else if (!o.data.empty()) {
    records = parse_interactions_file(o.data);
  } else {
    throw DataError("prepare: pass --data or --synth-users");
  }

  IdMaps ids;
  auto sequences = build_sequences(records, ids, o.min_len);
  DatasetSplit ds = split(std::move(sequences), std::move(ids), o.seed);
  const std::vector<std::pair<std::string, const std::vector<UserSequence>*>> parts = {
      {"train", &ds.train}, {"valid", &ds.valid}, {"test", &ds.test}};
  for (const auto& [name, part] : parts) {
    auto out = open_out(o.out + "/" + name + "_users.txt");
    for (const UserSequence& s : *part) out << ds.ids.user_names[s.user_id] << '\n';
    std::cout << name << ": " << part->size() << " sequences\n";
  }
  std::cout << "users " << ds.num_users() << ", items " << ds.num_items() << '\n';
  return 0;
}

struct TrainOpts {
  std::string config, data, out = ".";
};

int cmd_train(const TrainOpts& o, const ConfigMirror& mirror) {
  train::RunConfig cfg = load_run_config(o.config, mirror);
  DatasetSplit ds = load_split(o.data, cfg.train.seed);
  fs::create_directories(o.out);

  train::FitResult fitted = fit(ds, cfg.model, cfg.train, &std::cout);
  auto curve = open_out(o.out + "/curve.csv");
  train::write_curve_csv(curve, fitted.curve);
  ckpt::save(o.out + "/model", fitted.best_params, cfg.model);
  std::cout << "best epoch " << fitted.best_epoch << ", best valid loss " << fitted.best_valid
            << '\n';

  const GlobalGraph graph = build_global_graph(ds.train, ds.num_users(), ds.num_items());
  const model::GlobalEdges edges = model::build_global_edges(graph);
  const std::vector<int> ks = clamp_ks({10, 20}, ds.num_items());
  metrics::RankingReport report = metrics::evaluate(fitted.best_params, cfg.model, edges, ds.test, ks);
  std::cout << "test metrics:\n";
  metrics::write_report_table(std::cout, report);
  std::cout << "wrote " << o.out << "/curve.csv, " << o.out << "/model.manifest, " << o.out
            << "/model.blob\n";
  return 0;
}

struct EvaluateOpts {
  std::string config, data, out, checkpoint;
  std::string ks = "10,20";
};

int cmd_evaluate(const EvaluateOpts& o, const ConfigMirror& mirror) {
  train::RunConfig cfg = load_run_config(o.config, mirror);
  auto [params, mcfg] = ckpt::load(o.checkpoint);
  DatasetSplit ds = load_split(o.data, cfg.train.seed);
  const GlobalGraph graph = build_global_graph(ds.train, ds.num_users(), ds.num_items());
  const model::GlobalEdges edges = model::build_global_edges(graph);
  const std::vector<int> ks = clamp_ks(parse_k_list(o.ks), ds.num_items());

  metrics::RankingReport report = metrics::evaluate(params, mcfg, edges, ds.test, ks);
  metrics::write_report_table(std::cout, report);
  if (!o.out.empty()) {
    auto out = open_out(o.out);
    metrics::write_report_csv(out, report, fs::path(o.data).stem().string(),
                              mcfg.hyperbolic ? "phgr" : "ehgr");
    std::cout << "wrote " << o.out << '\n';
  }
  return 0;
}

struct AblateOpts {
  std::string config, data, out;
};

int cmd_ablate(const AblateOpts& o, const ConfigMirror& mirror) {
  train::RunConfig base = load_run_config(o.config, mirror);
  DatasetSplit ds = load_split(o.data, base.train.seed);
  const GlobalGraph graph = build_global_graph(ds.train, ds.num_users(), ds.num_items());
  const model::GlobalEdges edges = model::build_global_edges(graph);
  const int k = std::min(10, ds.num_items());

  std::vector<std::pair<std::string, metrics::MetricTriple>> rows;
  for (const Variant& variant : kAblationVariants) {
    model::ModelConfig mcfg = base.model;
    variant.mutate(mcfg);
    std::cout << "== " << variant.name << " ==\n";
    train::FitResult fitted = fit(ds, mcfg, base.train, &std::cout);
    metrics::RankingReport report = metrics::evaluate(fitted.best_params, mcfg, edges, ds.test, {k});
    rows.push_back({variant.name, report.per_k[0]});
  }

  std::cout << std::left << std::setw(18) << "variant" << std::setw(12) << ("H@" + std::to_string(k))
            << std::setw(12) << ("N@" + std::to_string(k)) << std::setw(12)
            << ("M@" + std::to_string(k)) << '\n';
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& [name, t] : rows)
    std::cout << std::left << std::setw(18) << name << std::setw(12) << t.hit * 100.0
              << std::setw(12) << t.ndcg * 100.0 << std::setw(12) << t.map * 100.0 << '\n';
  std::cout.unsetf(std::ios::fixed);

  if (!o.out.empty()) {
    fs::create_directories(o.out);
    auto out = open_out(o.out + "/ablate.csv");
    out << "dataset,variant,K,H,N,M\n" << std::setprecision(12);
    const std::string dataset = fs::path(o.data).stem().string();
    for (const auto& [name, t] : rows)
      out << dataset << ',' << name << ',' << k << ',' << t.hit << ',' << t.ndcg << ',' << t.map
          << '\n';
    std::cout << "wrote " << o.out << "/ablate.csv\n";
  }
  return 0;
}

struct VerifyOpts {
  int samples = 10000;
  double c = 1.0;
  std::uint64_t seed = 1;
};

int cmd_verify_geometry(const VerifyOpts& o) {
  auto results = verify::geometry_battery(o.samples, o.c, o.seed);
  bool all_pass = true;
  std::cout << std::left << std::setw(48) << "property" << std::setw(14) << "max_err"
            << std::setw(12) << "tolerance" << "status\n";
  for (const auto& r : results) {
    std::cout << std::left << std::setw(48) << r.name << std::setw(14) << std::scientific
              << std::setprecision(3) << r.max_err << std::setw(12) << r.tol
              << (r.pass ? "PASS" : "FAIL") << '\n';
    std::cout.unsetf(std::ios::scientific);
    all_pass = all_pass && r.pass;
  }
  if (!all_pass) throw NumericalError("geometry property battery failed");
  return 0;
}

struct RegionOpts {
  std::string config, data, out, checkpoint;
};

int cmd_analyze_regions(const RegionOpts& o, const ConfigMirror& mirror) {
  train::RunConfig cfg = load_run_config(o.config, mirror);
  auto [params, mcfg] = ckpt::load(o.checkpoint);
  DatasetSplit ds = load_split(o.data, cfg.train.seed);
  if (ds.num_items() != params.m) throw DataError("analyze-regions: item count mismatch");

  metrics::RegionReport report =
      metrics::region_analysis(params, mcfg, interaction_counts(ds.train, params.m));
  if (o.out.empty()) {
    metrics::write_region_csv(std::cout, report);
  } else {
    auto out = open_out(o.out);
    metrics::write_region_csv(out, report);
    std::cout << "wrote " << o.out << '\n';
  }
  return 0;
}

struct AttentionOpts {
  std::string config, data, out, checkpoint, user;
};

int cmd_export_attention(const AttentionOpts& o, const ConfigMirror& mirror) {
  train::RunConfig cfg = load_run_config(o.config, mirror);
  auto [params, mcfg] = ckpt::load(o.checkpoint);
  DatasetSplit ds = load_split(o.data, cfg.train.seed);
  if (ds.num_items() != params.m) throw DataError("export-attention: item count mismatch");

  const auto uit = ds.ids.user_to_index.find(o.user);
  if (uit == ds.ids.user_to_index.end()) throw DataError("unknown user id " + o.user);
  const UserSequence* seq = nullptr;
  for (const auto* part : {&ds.train, &ds.valid, &ds.test})
    for (const UserSequence& s : *part)
      if (s.user_id == uit->second) seq = &s;
  if (!seq) throw DataError("user " + o.user + " has no sequence");
  const std::vector<int> input(seq->items.begin(), seq->items.end() - 1);

  const GlobalGraph graph = build_global_graph(ds.train, ds.num_users(), ds.num_items());
  const model::GlobalEdges edges = model::build_global_edges(graph);
  ad::Tape tape;
  model::ParamRefs refs = model::attach(tape, params, false);
  model::GlobalOutput global = model::global_forward(tape, refs, edges, mcfg);
  ad::Value initial = mcfg.space().exp0_rows(refs.item_pre);
  model::SequenceForward fwd = model::sequence_forward(tape, refs, global.items, initial, input, mcfg);

  if (o.out.empty()) {
    metrics::export_attention(std::cout, fwd, input);
  } else {
    auto out = open_out(o.out);
    metrics::export_attention(out, fwd, input);
    std::cout << "wrote " << o.out << '\n';
  }
  return 0;
}

struct GridOpts {
  std::string config, data, out;
  std::string dims = "8,16,32,64,128";
  std::string layers = "1,2,3,4,5";
  std::string omegas = "0.0001,0.001,0.01,0.1,1";
};

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      out.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw DataError("bad numeric list: " + text);
    }
  }
  if (out.empty()) throw DataError("empty sweep list");
  return out;
}

int cmd_grid(const GridOpts& o, const ConfigMirror& mirror) {
  train::RunConfig base = load_run_config(o.config, mirror);
  DatasetSplit ds = load_split(o.data, base.train.seed);
  const GlobalGraph graph = build_global_graph(ds.train, ds.num_users(), ds.num_items());
  const model::GlobalEdges edges = model::build_global_edges(graph);
  const int k = std::min(10, ds.num_items());

  std::ostringstream csv;
  csv << "dim,layers,omega,best_valid,valid_h" << k << ",test_h" << k << '\n'
      << std::setprecision(12);
  for (int dim : parse_k_list(o.dims))
    for (int layers : parse_k_list(o.layers))
      for (double omega : parse_double_list(o.omegas)) {
        model::ModelConfig mcfg = base.model;
        mcfg.dim = dim;
        mcfg.layers = layers;
        mcfg.alpha.clear();
        mcfg.zeta.clear();
        train::TrainConfig tcfg = base.train;
        tcfg.omega = omega;
        train::FitResult fitted = fit(ds, mcfg, tcfg);
        metrics::RankingReport report =
            metrics::evaluate(fitted.best_params, mcfg, edges, ds.test, {k});
        const double valid_h = fitted.curve.empty() ? 0.0 : fitted.curve[fitted.best_epoch - 1].valid_h10;
        csv << dim << ',' << layers << ',' << omega << ',' << fitted.best_valid << ',' << valid_h
            << ',' << report.per_k[0].hit << '\n';
        std::cout << "dim " << dim << " layers " << layers << " omega " << omega << " test H@" << k
                  << " " << report.per_k[0].hit << '\n';
      }
  if (!o.out.empty()) {
    auto out = open_out(o.out);
    out << csv.str();
    std::cout << "wrote " << o.out << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hyperbolic graph-attention sequential recommender"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "worker cap; the current pipeline is single-threaded")
      ->capture_default_str();

  PrepareOpts prep;
  CLI::App* prepare = app.add_subcommand("prepare", "split a TSV interaction log (or generate one)");
  prepare->add_option("--data", prep.data, "interaction TSV: user<TAB>item<TAB>timestamp");
  prepare->add_option("--out", prep.out, "output directory")->required();
  prepare->add_option("--seed", prep.seed, "split / generator seed")->capture_default_str();
  prepare->add_option("--min-len", prep.min_len, "drop users with fewer items")->capture_default_str();
  prepare->add_option("--synth-users", prep.synth_users, "generate a synthetic log with this many users");
  prepare->add_option("--synth-items", prep.synth_items, "synthetic catalog size")->capture_default_str();
  prepare->add_option("--synth-exponent", prep.synth_exponent, "popularity power-law exponent")
      ->capture_default_str();
  prepare->add_option("--synth-len-min", prep.synth_len_min, "min sequence length")->capture_default_str();
  prepare->add_option("--synth-len-max", prep.synth_len_max, "max sequence length")->capture_default_str();

  TrainOpts tr;
  ConfigMirror train_mirror;
  CLI::App* train_cmd = app.add_subcommand("train", "train a model and save a checkpoint");
  train_cmd->add_option("--config", tr.config, "key=value config file")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", tr.data, "interaction TSV")->required();
  train_cmd->add_option("--out", tr.out, "output directory")->capture_default_str();
  train_mirror.attach(train_cmd);

  EvaluateOpts ev;
  ConfigMirror eval_mirror;
  CLI::App* eval_cmd = app.add_subcommand("evaluate", "rank the test split with a checkpoint");
  eval_cmd->add_option("--config", ev.config, "key=value config file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", ev.data, "interaction TSV")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint path prefix")->required();
  eval_cmd->add_option("--out", ev.out, "metrics CSV path (default: table on stdout only)");
  eval_cmd->add_option("--k", ev.ks, "comma-separated cutoffs")->capture_default_str();
  eval_mirror.attach(eval_cmd);

  AblateOpts ab;
  ConfigMirror ablate_mirror;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "train and compare the eight model variants");
  ablate_cmd->add_option("--config", ab.config, "key=value config file")->check(CLI::ExistingFile);
  ablate_cmd->add_option("--data", ab.data, "interaction TSV")->required();
  ablate_cmd->add_option("--out", ab.out, "output directory for ablate.csv");
  ablate_mirror.attach(ablate_cmd);

  VerifyOpts vg;
  CLI::App* verify_cmd = app.add_subcommand("verify-geometry", "run the ball-operation property battery");
  verify_cmd->add_option("--samples", vg.samples, "random pairs per dimension")->capture_default_str();
  verify_cmd->add_option("--c", vg.c, "curvature")->capture_default_str();
  verify_cmd->add_option("--seed", vg.seed, "sampler seed")->capture_default_str();

  RegionOpts rg;
  ConfigMirror region_mirror;
  CLI::App* region_cmd =
      app.add_subcommand("analyze-regions", "bucket items by distance from the origin");
  region_cmd->add_option("--config", rg.config, "key=value config file")->check(CLI::ExistingFile);
  region_cmd->add_option("--data", rg.data, "interaction TSV")->required();
  region_cmd->add_option("--checkpoint", rg.checkpoint, "checkpoint path prefix")->required();
  region_cmd->add_option("--out", rg.out, "region CSV path (default stdout)");
  region_mirror.attach(region_cmd);

  AttentionOpts at;
  ConfigMirror attention_mirror;
  CLI::App* attention_cmd =
      app.add_subcommand("export-attention", "dump one user's attention weights as CSV");
  attention_cmd->add_option("--config", at.config, "key=value config file")->check(CLI::ExistingFile);
  attention_cmd->add_option("--data", at.data, "interaction TSV")->required();
  attention_cmd->add_option("--checkpoint", at.checkpoint, "checkpoint path prefix")->required();
  attention_cmd->add_option("--user", at.user, "user id as it appears in the TSV")->required();
  attention_cmd->add_option("--out", at.out, "attention CSV path (default stdout)");
  attention_mirror.attach(attention_cmd);

  GridOpts gr;
  ConfigMirror grid_mirror;
  CLI::App* grid_cmd = app.add_subcommand("grid", "sweep dimension, depth, and ranking-loss weight");
  grid_cmd->add_option("--config", gr.config, "key=value config file")->check(CLI::ExistingFile);
  grid_cmd->add_option("--data", gr.data, "interaction TSV")->required();
  grid_cmd->add_option("--out", gr.out, "sweep CSV path");
  grid_cmd->add_option("--dims", gr.dims, "embedding sizes to sweep")->capture_default_str();
  grid_cmd->add_option("--layers-list", gr.layers, "depths to sweep")->capture_default_str();
  grid_cmd->add_option("--omegas", gr.omegas, "ranking-loss weights to sweep")->capture_default_str();
  grid_mirror.attach(grid_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(prepare)) return cmd_prepare(prep);
    if (app.got_subcommand(train_cmd)) return cmd_train(tr, train_mirror);
    if (app.got_subcommand(eval_cmd)) return cmd_evaluate(ev, eval_mirror);
    if (app.got_subcommand(ablate_cmd)) return cmd_ablate(ab, ablate_mirror);
    if (app.got_subcommand(verify_cmd)) return cmd_verify_geometry(vg);
    if (app.got_subcommand(region_cmd)) return cmd_analyze_regions(rg, region_mirror);
    if (app.got_subcommand(attention_cmd)) return cmd_export_attention(at, attention_mirror);
    if (app.got_subcommand(grid_cmd)) return cmd_grid(gr, grid_mirror);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const DomainError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
