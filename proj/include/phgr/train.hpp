#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "phgr/data.hpp"
#include "phgr/model.hpp"

namespace phgr::train {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 128;
  double omega = 0.1;   // weight of the ranking loss
  double margin = 0.1;  // hinge margin of the ranking loss
  int patience = 10;
  int max_epochs = 100;
  std::uint64_t seed = 1;
  int negatives_per_positive = 1;

  void validate() const;
};

struct LossBreakdown {
  double ce = 0.0;
  double cr = 0.0;
  double total = 0.0;  // ce + omega * cr
};

// Binary cross-entropy against the one-hot target, summed over all items;
// probabilities clamped to [1e-12, 1 - 1e-12].
ad::Value ce_loss(ad::Value probabilities, int target);

// Hinge on the margin between the user-to-positive and user-to-negative
// distances. Hyperbolic: geodesic distance; flat: negative dot product.
ad::Value cr_loss(const adg::AdSpace& sp, ad::Value user_point, ad::Value positive_point,
                  ad::Value negative_point, double margin);

// One training example: the sequence prefix is the input, its last item the
// target, and negatives holds the sampled contrast items.
struct Example {
  const UserSequence* seq = nullptr;
  std::vector<int> negatives;
};

class Adam {
 public:
  Adam(const model::ModelParams& params, double lr);
  void step(model::ModelParams& params, const std::vector<ad::Tensor>& grads);

 private:
  double lr_;
  int t_ = 0;
  std::vector<ad::Tensor> m_, v_;
};

// Mean total loss over the batch; optionally backward + one optimizer update.
// Throws NumericalError with diagnostics if the loss goes non-finite.
LossBreakdown run_batch(model::ModelParams& params, const model::ModelConfig& cfg,
                        const model::GlobalEdges& edges, const std::vector<Example>& batch,
                        const TrainConfig& tcfg, Adam* optimizer);

// Patience-based stopping on the validation loss: stop after `patience`
// consecutive non-improving observations.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  // Returns true when training should stop after this observation.
  bool observe(double valid_loss) {
    if (valid_loss < best_) {
      best_ = valid_loss;
      since_best_ = 0;
      return false;
    }
    return ++since_best_ >= patience_;
  }

  bool improved() const { return since_best_ == 0; }
  double best() const { return best_; }

 private:
  int patience_;
  int since_best_ = 0;
  double best_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  int epoch = 0;
  double train_total = 0.0;
  double train_ce = 0.0;
  double train_cr = 0.0;
  double valid_total = 0.0;
  double valid_h10 = 0.0;
};

struct FitResult {
  model::ModelParams best_params;
  int best_epoch = 0;
  double best_valid = 0.0;
  std::vector<EpochRecord> curve;
};

// Trains until the validation loss fails to improve for `patience` consecutive
// epochs or max_epochs is reached; returns the best-validation parameters.
FitResult fit(const DatasetSplit& split, const model::ModelConfig& mcfg, const TrainConfig& tcfg,
              std::ostream* progress = nullptr);

void write_curve_csv(std::ostream& out, const std::vector<EpochRecord>& curve);

// Flat key=value run configuration (model + training fields, one key per
// line, '#' comments); unknown keys are rejected.
struct RunConfig {
  model::ModelConfig model;
  TrainConfig train;
};

void apply_key(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig parse_config(std::istream& in);
RunConfig parse_config_file(const std::string& path);

}  // namespace phgr::train
