#include "stormcnn/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "stormcnn/optim.hpp"

namespace stormcnn {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  if (std::strtod(buf, nullptr) != v) std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(std::string_view key, std::string_view value) {
  const std::string s(value);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
    throw ConfigError("key '" + std::string(key) + "': '" + s + "' is not a number");
  return v;
}

std::uint64_t parse_uint(std::string_view key, std::string_view value) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("key '" + std::string(key) + "': '" + std::string(value) + "' is not a non-negative integer");
  return v;
}

bool parse_bool(std::string_view key, std::string_view value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("key '" + std::string(key) + "': '" + std::string(value) + "' is not a boolean");
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
  if (max_epochs == 0) throw ConfigError("max_epochs must be >= 1");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate must lie in [0,1)");
  augmentation.validate();
}

const std::vector<std::string>& train_keys() {
  static const std::vector<std::string> keys{"batch_size", "lr",        "momentum",     "lambda",
                                             "max_epochs", "patience",  "seed",         "augment",
                                             "batchnorm",  "dropout",   "weight_decay", "dropout_rate",
                                             "shift_max",  "augment_prob"};
  return keys;
}

bool set_train_key(TrainConfig& c, std::string_view key, std::string_view value) {
  if (key == "batch_size") c.batch_size = parse_uint(key, value);
  else if (key == "lr") c.lr = parse_double(key, value);
  else if (key == "momentum") c.momentum = parse_double(key, value);
  else if (key == "lambda") c.lambda = parse_double(key, value);
  else if (key == "max_epochs") c.max_epochs = parse_uint(key, value);
  else if (key == "patience") c.patience = parse_uint(key, value);
  else if (key == "seed") c.seed = parse_uint(key, value);
  else if (key == "augment") c.augment = parse_bool(key, value);
  else if (key == "batchnorm") c.batchnorm = parse_bool(key, value);
  else if (key == "dropout") c.dropout = parse_bool(key, value);
  else if (key == "weight_decay") c.weight_decay = parse_bool(key, value);
  else if (key == "dropout_rate") c.dropout_rate = parse_double(key, value);
  else if (key == "shift_max") c.augmentation.shift_max = parse_uint(key, value);
  else if (key == "augment_prob") {
    const double p = parse_double(key, value);
    c.augmentation.horizontal_flip_prob = c.augmentation.vertical_flip_prob = p;
    c.augmentation.rotate_prob = c.augmentation.translate_prob = p;
  } else {
    return false;
  }
  return true;
}

std::optional<std::string> get_train_key(const TrainConfig& c, std::string_view key) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  if (key == "batch_size") return std::to_string(c.batch_size);
  if (key == "lr") return fmt_double(c.lr);
  if (key == "momentum") return fmt_double(c.momentum);
  if (key == "lambda") return fmt_double(c.lambda);
  if (key == "max_epochs") return std::to_string(c.max_epochs);
  if (key == "patience") return std::to_string(c.patience);
  if (key == "seed") return std::to_string(c.seed);
  if (key == "augment") return b(c.augment);
  if (key == "batchnorm") return b(c.batchnorm);
  if (key == "dropout") return b(c.dropout);
  if (key == "weight_decay") return b(c.weight_decay);
  if (key == "dropout_rate") return fmt_double(c.dropout_rate);
  if (key == "shift_max") return std::to_string(c.augmentation.shift_max);
  if (key == "augment_prob") return fmt_double(c.augmentation.horizontal_flip_prob);
  return std::nullopt;
}

// ---------------------------------------------------------------- metrics

ConfusionMatrix tally(std::span<const std::size_t> truth, std::span<const std::size_t> predicted) {
  if (truth.size() != predicted.size()) throw InputError("tally: label and prediction counts differ");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool actual_pos = truth[i] == kDamageClass;
    const bool pred_pos = predicted[i] == kDamageClass;
    if (actual_pos && pred_pos) ++cm.tp;
    else if (!actual_pos && pred_pos) ++cm.fp;
    else if (actual_pos) ++cm.fn;
    else ++cm.tn;
  }
  return cm;
}

MetricsReport metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw InputError("metrics: confusion matrix is empty");
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  MetricsReport r;
  r.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(cm.total());
  r.tpr = ratio(cm.tp, cm.tp + cm.fn);
  r.tnr = ratio(cm.tn, cm.tn + cm.fp);
  r.ppv = ratio(cm.tp, cm.tp + cm.fp);
  r.npv = ratio(cm.tn, cm.tn + cm.fn);
  if (r.ppv && r.tpr && (*r.ppv + *r.tpr) > 0.0) r.f1 = 2.0 * *r.ppv * *r.tpr / (*r.ppv + *r.tpr);
  return r;
}

// ---------------------------------------------------------------- training

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::early_stopping: return "early_stopping";
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::diverged: return "diverged";
  }
  return "?";
}

std::string TrainHistory::summary() const {
  std::ostringstream os;
  os << "epochs=" << epochs.size() << " best_epoch=" << best_epoch << " stop=" << to_string(stop_reason);
  if (best_epoch > 0 && best_epoch <= epochs.size()) {
    const auto& e = epochs[best_epoch - 1];
    os << " best_val_loss=" << fmt_double(e.val_loss) << " best_val_acc=" << fmt_double(e.val_accuracy);
  }
  return os.str();
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw ConfigError("patience must be >= 1");
}

bool EarlyStopping::update(double loss) {
  ++epoch_;
  if (best_epoch_ == 0 || loss < best_loss_) {
    best_loss_ = loss;
    best_epoch_ = epoch_;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

TrainHistory fit_loop(std::size_t max_epochs, std::size_t patience, const std::function<EpochRecord(std::size_t)>& run_epoch,
                      const std::function<void(std::size_t)>& save_best, const std::function<void()>& restore_best) {
  EarlyStopping stopper(patience);
  TrainHistory history;
  for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
    EpochRecord rec;
    try {
      rec = run_epoch(epoch);
      if (!std::isfinite(rec.val_loss) || !std::isfinite(rec.train_loss))
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch));
    } catch (const NumericError& e) {
      history.stop_reason = StopReason::diverged;
      history.best_epoch = stopper.best_epoch();
      if (stopper.best_epoch() > 0) restore_best();
      throw TrainingDiverged(std::string("training diverged: ") + e.what() +
                                 (stopper.best_epoch() > 0 ? "; restored weights of epoch " + std::to_string(stopper.best_epoch())
                                                           : std::string("; no finite epoch to restore")),
                             history);
    }
    history.epochs.push_back(rec);
    if (stopper.update(rec.val_loss)) save_best(epoch);
    if (stopper.should_stop()) {
      history.stop_reason = StopReason::early_stopping;
      break;
    }
  }
  history.best_epoch = stopper.best_epoch();
  restore_best();
  return history;
}

template <typename T>
LossAccuracy evaluate_loss(BasicModel<T>& model, const Dataset& dataset, std::size_t batch_size) {
  if (dataset.empty()) throw InputError("cannot evaluate on an empty dataset");
  Rng unused(0);
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& idx : batch_indices(dataset.size(), batch_size, false, unused)) {
    const Batch batch = assemble_batch(dataset, idx);
    const BasicTensor<T> labels = batch.labels.template cast<T>();
    const BasicTensor<T> probs = model.forward(batch.images.template cast<T>(), Mode::infer);
    loss += static_cast<double>(cross_entropy(probs, labels).loss) * static_cast<double>(idx.size());
    const auto pred = predict_labels(probs);
    for (std::size_t b = 0; b < idx.size(); ++b) correct += pred[b] == dataset.samples[idx[b]].label;
  }
  return {loss / static_cast<double>(dataset.size()), static_cast<double>(correct) / static_cast<double>(dataset.size())};
}

template <typename T>
ConfusionMatrix evaluate(BasicModel<T>& model, const Dataset& dataset, std::size_t batch_size) {
  if (dataset.empty()) throw InputError("cannot evaluate on an empty dataset (empty confusion matrix)");
  Rng unused(0);
  std::vector<std::size_t> truth, predicted;
  for (const auto& idx : batch_indices(dataset.size(), batch_size, false, unused)) {
    const Batch batch = assemble_batch(dataset, idx);
    const auto pred = predict(model, batch.images.template cast<T>());
    for (std::size_t b = 0; b < idx.size(); ++b) {
      truth.push_back(dataset.samples[idx[b]].label);
      predicted.push_back(pred[b]);
    }
  }
  return tally(truth, predicted);
}

template <typename T>
TrainHistory train(BasicModel<T>& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& config,
                   const ProgressFn& progress) {
  config.validate();
  if (train_set.empty() || val_set.empty()) throw InputError("train and validation sets must be non-empty");

  SgdMomentum<T> optimizer(static_cast<T>(config.lr), static_cast<T>(config.momentum));
  Rng shuffle_rng(derive_seed(config.seed, 0x5eed));
  std::vector<BasicTensor<T>> best_state = model.snapshot();
  const T lambda = config.weight_decay ? static_cast<T>(config.lambda) : T(0);

  auto run_epoch = [&](std::size_t epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& idx : batch_indices(train_set.size(), config.batch_size, true, shuffle_rng)) {
      const Batch batch = assemble_batch(train_set, idx, config.augment ? &config.augmentation : nullptr, config.seed, epoch);
      const BasicTensor<T> labels = batch.labels.template cast<T>();
      const BasicTensor<T> probs = model.forward(batch.images.template cast<T>(), Mode::train);
      auto ce = cross_entropy(probs, labels);
      model.backward(ce.grad_logits);
      auto params = model.params();
      const T penalty = l2_penalty(params, lambda);
      const double objective = static_cast<double>(ce.loss) + static_cast<double>(penalty);
      if (!std::isfinite(objective))
        throw NumericError("non-finite training loss at epoch " + std::to_string(epoch));
      optimizer.step(params);
      loss_sum += objective * static_cast<double>(idx.size());
      const auto pred = predict_labels(probs);
      for (std::size_t b = 0; b < idx.size(); ++b) correct += pred[b] == train_set.samples[idx[b]].label;
    }
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    const LossAccuracy val = evaluate_loss(model, val_set, config.batch_size);
    rec.val_loss = val.loss;
    rec.val_accuracy = val.accuracy;
    if (progress) progress(rec);
    return rec;
  };

  TrainHistory history = fit_loop(
      config.max_epochs, config.patience, run_epoch, [&](std::size_t) { best_state = model.snapshot(); },
      [&] { model.restore(best_state); });
  model.info().history_summary = history.summary();
  return history;
}

Model build_model(const std::string& arch_id, const Shape& input_shape, const TrainConfig& config,
                  const std::string& custom_layers) {
  const std::size_t classes = 2;
  ArchSpec arch = is_catalog_arch(arch_id) || custom_layers.empty()
                      ? catalog_arch(arch_id, classes, config.model_options())
                      : apply_modifiers(parse_arch_layers(arch_id, custom_layers), config.model_options());
  Rng rng(config.seed);
  return Model::build(arch, input_shape, classes, rng);
}

// ---------------------------------------------------------------- cross-validation

namespace {

std::vector<std::pair<std::string, std::optional<double> MetricsReport::*>> metric_fields() {
  return {{"f1", &MetricsReport::f1},   {"tpr", &MetricsReport::tpr}, {"tnr", &MetricsReport::tnr},
          {"ppv", &MetricsReport::ppv}, {"npv", &MetricsReport::npv}};
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  s.mean = mean;
  s.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

}  // namespace

CrossValidationReport cross_validate(const Dataset& combined, std::size_t k, const TrainConfig& config,
                                     const FoldRunner& runner) {
  Rng split_rng(derive_seed(config.seed, 0xf01d));
  const auto splits = kfold_split(combined, k, split_rng);
  CrossValidationReport report;
  for (std::size_t f = 0; f < splits.size(); ++f) {
    TrainConfig fold_config = config;
    fold_config.seed = config.seed + f;
    const Dataset train_set = subset(combined, splits[f].train);
    const Dataset val_set = subset(combined, splits[f].validation);
    const ConfusionMatrix cm = runner(train_set, val_set, fold_config, f);
    if (cm.total() != val_set.size())
      throw StateError("fold " + std::to_string(f) + ": confusion matrix does not cover the validation fold");
    report.folds.push_back(cm);
    report.fold_metrics.push_back(metrics(cm));
  }

  std::vector<double> acc;
  for (const auto& m : report.fold_metrics) acc.push_back(m.accuracy);
  report.summary["accuracy"] = summarize(acc);
  for (const auto& [name, field] : metric_fields()) {
    std::vector<double> vals;
    for (const auto& m : report.fold_metrics)
      if (m.*field) vals.push_back(*(m.*field));
    report.summary[name] = summarize(vals);
  }
  return report;
}

CrossValidationReport cross_validate(const std::string& arch_id, const Dataset& combined, std::size_t k,
                                     const TrainConfig& config, const std::string& custom_layers) {
  if (combined.empty()) throw InputError("cross-validation needs a non-empty dataset");
  const Shape input = combined.samples.front().image.shape();
  return cross_validate(combined, k, config,
                        [&](const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg, std::size_t) {
                          Model model = build_model(arch_id, input, cfg, custom_layers);
                          train(model, train_set, val_set, cfg);
                          return evaluate(model, val_set, cfg.batch_size);
                        });
}

std::string CrossValidationReport::formatted(const std::string& metric) const {
  auto it = summary.find(metric);
  if (it == summary.end() || !it->second.mean) return "n/a";
  char buf[64];
  if (metric == "accuracy")
    std::snprintf(buf, sizeof buf, "%.2f%% (%#.4g%%)", *it->second.mean * 100.0, *it->second.stddev * 100.0);
  else
    std::snprintf(buf, sizeof buf, "%.4f (%#.4g)", *it->second.mean, *it->second.stddev);
  return buf;
}

std::string CrossValidationReport::table() const {
  static const std::pair<const char*, const char*> rows[] = {{"accuracy", "Accuracy"},     {"f1", "F1 Score"},
                                                             {"tpr", "TPR/Recall"},        {"tnr", "TNR/Specificity"},
                                                             {"ppv", "PPV/Precision"},     {"npv", "NPV"}};
  std::ostringstream os;
  os << "Measurement       mean (population std) over " << folds.size() << " folds\n";
  for (const auto& [key, label] : rows) {
    char line[96];
    std::snprintf(line, sizeof line, "%-17s %s\n", label, formatted(key).c_str());
    os << line;
  }
  return os.str();
}

// ---------------------------------------------------------------- greedy tuning

TuneResult greedy_tune(const std::vector<TuneDimension>& grid, const TrainConfig& base, const TrialEvaluator& evaluate) {
  TuneResult result;
  result.best = base;
  std::size_t index = 0;
  for (const auto& dim : grid) {
    if (dim.candidates.empty()) throw ConfigError("tuning dimension '" + dim.key + "' has no candidates");
    if (!get_train_key(base, dim.key)) throw ConfigError("unknown tuning key '" + dim.key + "'");
    std::optional<double> best_score;
    std::string best_value;
    for (const auto& value : dim.candidates) {
      TrainConfig trial_config = result.best;
      set_train_key(trial_config, dim.key, value);
      trial_config.validate();
      TuneTrial trial;
      trial.index = index++;
      trial.key = dim.key;
      trial.value = value;
      for (const auto& d : grid) trial.settings[d.key] = *get_train_key(trial_config, d.key);
      trial.score = evaluate(trial_config);
      if (!best_score || trial.score > *best_score) {
        best_score = trial.score;
        best_value = value;
      }
      result.trials.push_back(std::move(trial));
    }
    set_train_key(result.best, dim.key, best_value);
    result.chosen.emplace_back(dim.key, best_value);
  }
  return result;
}

TrialEvaluator make_trial_evaluator(const std::string& arch_id, const Dataset& train_set, const Dataset& val_set,
                                    const std::string& custom_layers) {
  if (train_set.empty() || val_set.empty()) throw InputError("tuning needs non-empty train and validation sets");
  return [arch_id, custom_layers, &train_set, &val_set](const TrainConfig& cfg) {
    Model model = build_model(arch_id, train_set.samples.front().image.shape(), cfg, custom_layers);
    train(model, train_set, val_set, cfg);
    return evaluate_loss(model, val_set, cfg.batch_size).accuracy;
  };
}

template TrainHistory train(BasicModel<float>&, const Dataset&, const Dataset&, const TrainConfig&, const ProgressFn&);
template TrainHistory train(BasicModel<double>&, const Dataset&, const Dataset&, const TrainConfig&, const ProgressFn&);
template LossAccuracy evaluate_loss(BasicModel<float>&, const Dataset&, std::size_t);
template LossAccuracy evaluate_loss(BasicModel<double>&, const Dataset&, std::size_t);
template ConfusionMatrix evaluate(BasicModel<float>&, const Dataset&, std::size_t);
template ConfusionMatrix evaluate(BasicModel<double>&, const Dataset&, std::size_t);

}  // namespace stormcnn
