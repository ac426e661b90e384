#include "stormcnn/reports.hpp"

#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace stormcnn {

namespace {

using nlohmann::ordered_json;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

ordered_json opt_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::string shape_tuple(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.rank(); ++i) out += (i ? ", " : "") + std::to_string(s[i]);
  return out + (s.rank() == 1 ? ",)" : ")");
}

ordered_json metrics_object(const ConfusionMatrix& cm) {
  const MetricsReport m = metrics(cm);
  ordered_json j;
  j["tp"] = cm.tp;
  j["fp"] = cm.fp;
  j["fn"] = cm.fn;
  j["tn"] = cm.tn;
  j["accuracy"] = m.accuracy;
  j["tpr"] = opt_json(m.tpr);
  j["tnr"] = opt_json(m.tnr);
  j["ppv"] = opt_json(m.ppv);
  j["npv"] = opt_json(m.npv);
  j["f1"] = opt_json(m.f1);
  return j;
}

}  // namespace

std::string with_thousands(std::size_t value) {
  std::string digits = std::to_string(value);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

std::string history_csv(const TrainHistory& history) {
  std::string out = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& e : history.epochs)
    out += std::to_string(e.epoch) + "," + num(e.train_loss) + "," + num(e.train_accuracy) + "," + num(e.val_loss) +
           "," + num(e.val_accuracy) + "\n";
  return out;
}

std::string history_json(const TrainHistory& history, std::uint64_t seed) {
  ordered_json j;
  j["seed"] = seed;
  j["best_epoch"] = history.best_epoch;
  j["stop_reason"] = to_string(history.stop_reason);
  ordered_json epochs = ordered_json::array();
  for (const auto& e : history.epochs)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_acc", e.train_accuracy},
                      {"val_loss", e.val_loss},
                      {"val_acc", e.val_accuracy}});
  j["epochs"] = std::move(epochs);
  return j.dump(2) + "\n";
}

std::string metrics_csv(const ConfusionMatrix& cm) {
  const MetricsReport m = metrics(cm);
  return "tp,fp,fn,tn,accuracy,tpr,tnr,ppv,npv,f1\n" + std::to_string(cm.tp) + "," + std::to_string(cm.fp) + "," +
         std::to_string(cm.fn) + "," + std::to_string(cm.tn) + "," + num(m.accuracy) + "," + opt_num(m.tpr) + "," +
         opt_num(m.tnr) + "," + opt_num(m.ppv) + "," + opt_num(m.npv) + "," + opt_num(m.f1) + "\n";
}

std::string metrics_json(const ConfusionMatrix& cm, std::uint64_t seed) {
  ordered_json j;
  j["seed"] = seed;
  j["positive_class"] = "damage";
  j["threshold"] = 0.5;
  j.update(metrics_object(cm));
  return j.dump(2) + "\n";
}

std::string confusion_table(const ConfusionMatrix& cm) {
  auto rate = [](std::size_t v, std::size_t row) { return row ? static_cast<double>(v) / static_cast<double>(row) : 0.0; };
  const std::size_t pos = cm.tp + cm.fn, neg = cm.fp + cm.tn;
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "T = Flooded/Damaged, F = Undamaged; rows: true class, columns: predicted class\n"
                "\n"
                "Confusion matrix          Normalized\n"
                "        T        F                T        F\n"
                "T %8zu %8zu         T %8.4f %8.4f\n"
                "F %8zu %8zu         F %8.4f %8.4f\n",
                cm.tp, cm.fn, rate(cm.tp, pos), rate(cm.fn, pos), cm.fp, cm.tn, rate(cm.fp, neg), rate(cm.tn, neg));
  return buf;
}

std::string parameter_table(const ParameterReport& report, bool show_activations) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-32s %-18s %s\n", "Layer Type", "Output Shape", "Number of Trainable Parameters");
  os << line;
  std::snprintf(line, sizeof line, "%-32s %-18s %s\n", "Input", shape_tuple(report.input).c_str(), "0");
  os << line;
  for (const auto& row : report.rows) {
    if (!show_activations && row.kind == LayerKind::relu) continue;
    std::snprintf(line, sizeof line, "%-32s %-18s %s\n", row.label.c_str(), shape_tuple(row.output).c_str(),
                  with_thousands(row.trainable).c_str());
    os << line;
  }
  if (report.total_non_trainable)
    os << "Non-trainable (batch-norm running statistics): " << with_thousands(report.total_non_trainable) << "\n";
  os << "Total: " << with_thousands(report.total_trainable) << "\n";
  return os.str();
}

std::string cv_json(const CrossValidationReport& report, std::uint64_t seed) {
  ordered_json j;
  j["seed"] = seed;
  j["k"] = report.folds.size();
  j["std"] = "population";
  ordered_json folds = ordered_json::array();
  for (const auto& cm : report.folds) folds.push_back(metrics_object(cm));
  j["folds"] = std::move(folds);
  ordered_json summary;
  for (const char* key : {"accuracy", "f1", "tpr", "tnr", "ppv", "npv"}) {
    const auto it = report.summary.find(key);
    const MetricSummary s = it == report.summary.end() ? MetricSummary{} : it->second;
    summary[key] = {{"mean", opt_json(s.mean)}, {"std", opt_json(s.stddev)}, {"formatted", report.formatted(key)}};
  }
  j["summary"] = std::move(summary);
  return j.dump(2) + "\n";
}

std::string tune_csv(const TuneResult& result) {
  std::string out = "trial,key,value,score";
  std::vector<std::string> keys;
  if (!result.trials.empty())
    for (const auto& [k, v] : result.trials.front().settings) keys.push_back(k);
  for (const auto& k : keys) out += "," + k;
  out += "\n";
  for (const auto& t : result.trials) {
    out += std::to_string(t.index) + "," + t.key + "," + t.value + "," + num(t.score);
    for (const auto& k : keys) out += "," + t.settings.at(k);
    out += "\n";
  }
  return out;
}

}  // namespace stormcnn
