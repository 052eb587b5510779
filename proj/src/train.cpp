#include "phgr/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "phgr/errors.hpp"
#include "phgr/metrics.hpp"

namespace phgr::train {

using namespace phgr::ad;
using adg::AdSpace;
using model::GlobalEdges;
using model::ModelConfig;
using model::ModelParams;

void TrainConfig::validate() const {
  if (learning_rate < 0.0) throw ContractError("TrainConfig: learning_rate must be nonnegative");
  if (batch_size < 1) throw ContractError("TrainConfig: batch_size must be positive");
  if (omega < 0.0) throw ContractError("TrainConfig: omega must be nonnegative");
  if (margin < 0.0) throw ContractError("TrainConfig: margin must be nonnegative");
  if (patience < 1) throw ContractError("TrainConfig: patience must be at least 1");
  if (max_epochs < 0) throw ContractError("TrainConfig: max_epochs must be nonnegative");
  if (negatives_per_positive < 1)
    throw ContractError("TrainConfig: negatives_per_positive must be positive");
}

Value ce_loss(Value probabilities, int target) {
  const std::size_t m = probabilities.data().v.size();
  if (target < 0 || static_cast<std::size_t>(target) >= m)
    throw ContractError("ce_loss: target out of range");
  Tensor onehot_t = Tensor::vector(m, 0.0);
  onehot_t.v[target] = 1.0;
  Value onehot = probabilities.tape->constant(onehot_t);
  Value p = clamp(probabilities, 1e-12, 1.0 - 1e-12);
  Value log_p = log_clamped(p);
  Value log_not_p = log_clamped(add_const(neg(p), 1.0));
  // -log p_t - sum_{i != t} log(1 - p_i)
  Value target_term = neg(dot(log_p, onehot));
  Value rest_term = neg(sub(sum(log_not_p), dot(log_not_p, onehot)));
  return add(target_term, rest_term);
}

Value cr_loss(const AdSpace& sp, Value user_point, Value positive_point, Value negative_point,
              double margin) {
  auto dist = [&](Value item) {
    if (sp.hyperbolic) return sum(sp.distance_vec(user_point, item));
    return neg(dot(user_point, item));
  };
  Value gap = add_const(sub(dist(positive_point), dist(negative_point)), margin);
  return relu(gap);
}

Adam::Adam(const ModelParams& params, double lr) : lr_(lr) {
  for (const auto& [name, t] : params.blocks()) {
    Tensor zero = *t;
    std::fill(zero.v.begin(), zero.v.end(), 0.0);
    m_.push_back(zero);
    v_.push_back(zero);
  }
}

void Adam::step(ModelParams& params, const std::vector<Tensor>& grads) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  auto blocks = params.blocks();
  if (grads.size() != blocks.size()) throw ContractError("Adam: gradient count mismatch");
  ++t_;
  const double corr1 = 1.0 - std::pow(kBeta1, t_);
  const double corr2 = 1.0 - std::pow(kBeta2, t_);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    Tensor& p = *blocks[b].second;
    const Tensor& g = grads[b];
    if (g.v.size() != p.v.size()) throw ContractError("Adam: gradient shape mismatch");
    for (std::size_t i = 0; i < p.v.size(); ++i) {
      m_[b].v[i] = kBeta1 * m_[b].v[i] + (1.0 - kBeta1) * g.v[i];
      v_[b].v[i] = kBeta2 * v_[b].v[i] + (1.0 - kBeta2) * g.v[i] * g.v[i];
      p.v[i] -= lr_ * (m_[b].v[i] / corr1) / (std::sqrt(v_[b].v[i] / corr2) + kEps);
    }
  }
}

LossBreakdown run_batch(ModelParams& params, const ModelConfig& cfg, const GlobalEdges& edges,
                        const std::vector<Example>& batch, const TrainConfig& tcfg,
                        Adam* optimizer) {
  if (batch.empty()) throw ContractError("run_batch: empty batch");
  const AdSpace sp = cfg.space();

  Tape tape;
  model::ParamRefs refs = model::attach(tape, params, optimizer != nullptr);
  model::GlobalOutput global = model::global_forward(tape, refs, edges, cfg);
  Value initial_items = sp.exp0_rows(refs.item_pre);

  Value ce_sum, cr_sum;
  bool first = true;
  for (const Example& ex : batch) {
    if (ex.seq->items.size() < 2) throw DataError("run_batch: sequence shorter than 2");
    std::vector<int> input(ex.seq->items.begin(), ex.seq->items.end() - 1);
    const int target = ex.seq->items.back();
    model::SequenceForward fwd =
        model::sequence_forward(tape, refs, global.items, initial_items, input, cfg);
    Value ce = ce_loss(fwd.probabilities, target);

    Value cr;
    if (ex.negatives.empty()) {
      cr = tape.constant(Tensor::scalar(0.0));
    } else {
      bool first_neg = true;
      Value pos = row(initial_items, static_cast<std::size_t>(target));
      for (int neg_item : ex.negatives) {
        Value neg_pt = row(initial_items, static_cast<std::size_t>(neg_item));
        Value term = cr_loss(sp, fwd.user_point, pos, neg_pt, tcfg.margin);
        cr = first_neg ? term : add(cr, term);
        first_neg = false;
      }
      cr = scale(cr, 1.0 / ex.negatives.size());
    }
    ce_sum = first ? ce : add(ce_sum, ce);
    cr_sum = first ? cr : add(cr_sum, cr);
    first = false;
  }
  const double inv = 1.0 / batch.size();
  Value ce_mean = scale(ce_sum, inv);
  Value cr_mean = scale(cr_sum, inv);
  Value total = add(ce_mean, scale(cr_mean, tcfg.omega));

  LossBreakdown out;
  out.ce = ce_mean.data().v[0];
  out.cr = cr_mean.data().v[0];
  out.total = total.data().v[0];
  if (!std::isfinite(out.total)) {
    std::ostringstream msg;
    msg << "run_batch: non-finite loss (ce=" << out.ce << ", cr=" << out.cr
        << ", batch=" << batch.size() << ")";
    throw NumericalError(msg.str());
  }
  if (optimizer) {
    tape.backward(total);
    optimizer->step(params, model::collect_grads(tape, refs, params));
  }
  return out;
}

namespace {

std::vector<int> sample_negatives(const std::set<int>& seen, int m, int count,
                                  std::mt19937_64& rng) {
  std::vector<int> out;
  std::uniform_int_distribution<int> dist(0, m - 1);
  const bool exhausted = static_cast<int>(seen.size()) >= m;
  for (int k = 0; k < count; ++k) {
    int item = dist(rng);
    for (int tries = 0; !exhausted && seen.count(item) && tries < 1000; ++tries)
      item = dist(rng);
    out.push_back(item);
  }
  return out;
}

LossBreakdown mean_over_batches(ModelParams& params, const ModelConfig& cfg,
                                const GlobalEdges& edges, const std::vector<Example>& examples,
                                const TrainConfig& tcfg, Adam* optimizer) {
  LossBreakdown acc;
  std::size_t done = 0;
  while (done < examples.size()) {
    const std::size_t take =
        std::min<std::size_t>(tcfg.batch_size, examples.size() - done);
    std::vector<Example> batch(examples.begin() + done, examples.begin() + done + take);
    LossBreakdown b = run_batch(params, cfg, edges, batch, tcfg, optimizer);
    acc.ce += b.ce * take;
    acc.cr += b.cr * take;
    acc.total += b.total * take;
    done += take;
  }
  acc.ce /= examples.size();
  acc.cr /= examples.size();
  acc.total /= examples.size();
  return acc;
}

}  // namespace

FitResult fit(const DatasetSplit& split, const ModelConfig& mcfg, const TrainConfig& tcfg,
              std::ostream* progress) {
  mcfg.validate();
  tcfg.validate();
  if (split.train.empty() || split.valid.empty())
    throw DataError("fit: empty training or validation split");

  int n = split.num_users(), m = split.num_items();
  for (const auto* part : {&split.train, &split.valid, &split.test})
    for (const UserSequence& s : *part) {
      n = std::max(n, s.user_id + 1);
      for (int item : s.items) m = std::max(m, item + 1);
    }

  const GlobalGraph graph = build_global_graph(split.train, n, m);
  const GlobalEdges edges = model::build_global_edges(graph);

  std::vector<std::set<int>> seen_train, seen_valid;
  for (const UserSequence& s : split.train)
    seen_train.emplace_back(s.items.begin(), s.items.end());
  for (const UserSequence& s : split.valid)
    seen_valid.emplace_back(s.items.begin(), s.items.end());

  FitResult result;
  result.best_params = model::init_embeddings(n, m, mcfg, tcfg.seed);
  result.best_valid = std::numeric_limits<double>::infinity();
  ModelParams params = result.best_params;
  Adam optimizer(params, tcfg.learning_rate);
  std::mt19937_64 rng(tcfg.seed);
  const int k10 = std::min(10, m);

  EarlyStopper stopper(tcfg.patience);
  for (int epoch = 1; epoch <= tcfg.max_epochs; ++epoch) {
    std::vector<Example> train_ex;
    for (std::size_t i = 0; i < split.train.size(); ++i)
      train_ex.push_back({&split.train[i],
                          sample_negatives(seen_train[i], m, tcfg.negatives_per_positive, rng)});
    std::shuffle(train_ex.begin(), train_ex.end(), rng);
    LossBreakdown train_loss = mean_over_batches(params, mcfg, edges, train_ex, tcfg, &optimizer);

    std::vector<Example> valid_ex;
    for (std::size_t i = 0; i < split.valid.size(); ++i)
      valid_ex.push_back({&split.valid[i],
                          sample_negatives(seen_valid[i], m, tcfg.negatives_per_positive, rng)});
    LossBreakdown valid_loss = mean_over_batches(params, mcfg, edges, valid_ex, tcfg, nullptr);
    metrics::RankingReport report = metrics::evaluate(params, mcfg, edges, split.valid, {k10});

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_total = train_loss.total;
    rec.train_ce = train_loss.ce;
    rec.train_cr = train_loss.cr;
    rec.valid_total = valid_loss.total;
    rec.valid_h10 = report.per_k[0].hit;
    result.curve.push_back(rec);
    if (progress)
      *progress << "epoch " << epoch << " train " << rec.train_total << " valid "
                << rec.valid_total << " h@" << k10 << " " << rec.valid_h10 << "\n";

    const bool stop = stopper.observe(valid_loss.total);
    if (stopper.improved()) {
      result.best_valid = valid_loss.total;
      result.best_epoch = epoch;
      result.best_params = params;
    }
    if (stop) break;
  }
  return result;
}

void write_curve_csv(std::ostream& out, const std::vector<EpochRecord>& curve) {
  out << "epoch,train_total,train_ce,train_cr,valid_total,valid_h10\n";
  out << std::setprecision(12);
  for (const EpochRecord& r : curve)
    out << r.epoch << ',' << r.train_total << ',' << r.train_ce << ',' << r.train_cr << ','
        << r.valid_total << ',' << r.valid_h10 << '\n';
}

namespace {

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw DataError("config: bad boolean value " + v);
}

std::vector<double> parse_list(const std::string& v) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= v.size()) {
    std::size_t next = v.find(',', pos);
    if (next == std::string::npos) next = v.size();
    out.push_back(std::stod(v.substr(pos, next - pos)));
    pos = next + 1;
  }
  return out;
}

}  // namespace

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "dim") cfg.model.dim = std::stoi(value);
    else if (key == "layers") cfg.model.layers = std::stoi(value);
    else if (key == "c") cfg.model.c = std::stod(value);
    else if (key == "boundary_eps") cfg.model.boundary_eps = std::stod(value);
    else if (key == "alpha") cfg.model.alpha = parse_list(value);
    else if (key == "zeta") cfg.model.zeta = parse_list(value);
    else if (key == "variant") {
      if (value == "phgr") cfg.model.hyperbolic = true;
      else if (value == "ehgr") cfg.model.hyperbolic = false;
      else throw DataError("config: variant must be phgr or ehgr");
    } else if (key == "inner") {
      if (value == "D") cfg.model.inner = adg::InnerKind::geodesic_d;
      else if (value == "P") cfg.model.inner = adg::InnerKind::projected_p;
      else throw DataError("config: inner must be D or P");
    } else if (key == "no_global") cfg.model.no_global = parse_bool(value);
    else if (key == "no_local") cfg.model.no_local = parse_bool(value);
    else if (key == "no_long") cfg.model.no_long = parse_bool(value);
    else if (key == "no_short") cfg.model.no_short = parse_bool(value);
    else if (key == "init_std") cfg.model.init_std = std::stod(value);
    else if (key == "learning_rate") cfg.train.learning_rate = std::stod(value);
    else if (key == "batch_size") cfg.train.batch_size = std::stoi(value);
    else if (key == "omega") cfg.train.omega = std::stod(value);
    else if (key == "margin") cfg.train.margin = std::stod(value);
    else if (key == "patience") cfg.train.patience = std::stoi(value);
    else if (key == "max_epochs") cfg.train.max_epochs = std::stoi(value);
    else if (key == "seed") cfg.train.seed = std::stoull(value);
    else if (key == "negatives_per_positive")
      cfg.train.negatives_per_positive = std::stoi(value);
    else throw DataError("config: unknown key " + key);
  } catch (const std::invalid_argument&) {
    throw DataError("config: bad value for " + key + ": " + value);
  } catch (const std::out_of_range&) {
    throw DataError("config: value out of range for " + key + ": " + value);
  }
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config: missing '=' at line " + std::to_string(line_no));
    apply_key(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path);
  return parse_config(in);
}

}  // namespace phgr::train
