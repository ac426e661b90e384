#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stormcnn/data.hpp"
#include "stormcnn/model.hpp"

namespace stormcnn {

struct TrainConfig {
  std::size_t batch_size = 64;
  double lr = 0.001;
  double momentum = 0.9;
  double lambda = 0.001;  // applied only when weight_decay is set
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  bool augment = false;
  bool batchnorm = false;
  bool dropout = false;
  bool weight_decay = false;
  double dropout_rate = 0.5;
  AugmentConfig augmentation{};

  void validate() const;
  ModelOptions model_options() const { return {batchnorm, dropout, dropout_rate}; }
};

// Key/value access shared by the config parser and the tuner. `set_train_key` returns false for
// keys it does not own and throws ConfigError for malformed values.
bool set_train_key(TrainConfig& config, std::string_view key, std::string_view value);
std::optional<std::string> get_train_key(const TrainConfig& config, std::string_view key);
const std::vector<std::string>& train_keys();

// Positive class is damage (class index 0).
struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

ConfusionMatrix tally(std::span<const std::size_t> truth, std::span<const std::size_t> predicted);

// Ratios with a zero denominator are left empty.
struct MetricsReport {
  double accuracy = 0.0;
  std::optional<double> tpr, tnr, ppv, npv, f1;
};

MetricsReport metrics(const ConfusionMatrix& cm);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0, train_accuracy = 0.0;
  double val_loss = 0.0, val_accuracy = 0.0;
  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

enum class StopReason { early_stopping, max_epochs, diverged };
const char* to_string(StopReason reason);

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch finished
  StopReason stop_reason = StopReason::max_epochs;

  std::string summary() const;
  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

/// Patience counter on a monitored loss. Improvement is strict (min-delta 0).
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  // Feeds one epoch's loss; returns true when it is a new best.
  bool update(double loss);
  bool should_stop() const { return stale_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0, best_epoch_ = 0, stale_ = 0;
  double best_loss_ = 0.0;
};

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(const std::string& what, TrainHistory history) : NumericError(what), history_(std::move(history)) {}
  const TrainHistory& history() const { return history_; }

 private:
  TrainHistory history_;
};

/// Epoch driver with early stopping. `run_epoch` trains one epoch and reports its losses,
/// `save_best` is called whenever the monitored validation loss improves and `restore_best`
/// once at the end. A NumericError from `run_epoch` restores the best state and is rethrown
/// as TrainingDiverged.
TrainHistory fit_loop(std::size_t max_epochs, std::size_t patience, const std::function<EpochRecord(std::size_t)>& run_epoch,
                      const std::function<void(std::size_t)>& save_best, const std::function<void()>& restore_best);

using ProgressFn = std::function<void(const EpochRecord&)>;

template <typename T>
TrainHistory train(BasicModel<T>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                   const ProgressFn& progress = {});

struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};

template <typename T>
LossAccuracy evaluate_loss(BasicModel<T>& model, const Dataset& dataset, std::size_t batch_size = 64);

template <typename T>
ConfusionMatrix evaluate(BasicModel<T>& model, const Dataset& dataset, std::size_t batch_size = 64);

// Builds a freshly initialized model for `config` (architecture modifiers applied).
Model build_model(const std::string& arch_id, const Shape& input_shape, const TrainConfig& config,
                  const std::string& custom_layers = {});

struct MetricSummary {
  std::optional<double> mean, stddev;  // population standard deviation over folds where defined
};

struct CrossValidationReport {
  std::vector<ConfusionMatrix> folds;
  std::vector<MetricsReport> fold_metrics;
  std::map<std::string, MetricSummary> summary;  // accuracy, f1, tpr, tnr, ppv, npv

  // "mean% (std%)" for accuracy, "mean (std)" otherwise.
  std::string formatted(const std::string& metric) const;
  std::string table() const;
};

using FoldRunner = std::function<ConfusionMatrix(const Dataset& train_set, const Dataset& val_set,
                                                 const TrainConfig& fold_config, std::size_t fold)>;

// Fold i validates on fold i and trains on the rest with seed = config.seed + i.
CrossValidationReport cross_validate(const Dataset& combined, std::size_t k, const TrainConfig& config,
                                     const FoldRunner& runner);
CrossValidationReport cross_validate(const std::string& arch_id, const Dataset& combined, std::size_t k,
                                     const TrainConfig& config, const std::string& custom_layers = {});

struct TuneDimension {
  std::string key;
  std::vector<std::string> candidates;
};

struct TuneTrial {
  std::size_t index = 0;
  std::string key;
  std::string value;
  std::map<std::string, std::string> settings;  // value of every tuned key during this trial
  double score = 0.0;
};

struct TuneResult {
  TrainConfig best;
  std::vector<TuneTrial> trials;
  std::vector<std::pair<std::string, std::string>> chosen;
};

using TrialEvaluator = std::function<double(const TrainConfig&)>;

/// Coordinate-wise search: dimensions in order, each candidate scored with every other key at
/// its incumbent value, the best (earliest on ties) fixed before moving on.
TuneResult greedy_tune(const std::vector<TuneDimension>& grid, const TrainConfig& base, const TrialEvaluator& evaluate);

// Trains on `train_set`, scores validation accuracy on `val_set`.
TrialEvaluator make_trial_evaluator(const std::string& arch_id, const Dataset& train_set, const Dataset& val_set,
                                    const std::string& custom_layers = {});

}  // namespace stormcnn
