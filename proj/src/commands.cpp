#include "stormcnn/commands.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>

#include "stormcnn/gradcheck.hpp"
#include "stormcnn/reports.hpp"

namespace stormcnn {

namespace fs = std::filesystem;

namespace {

fs::path output_dir(const RunConfig& c) {
  fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) throw InputError("cannot write " + path.string());
}

LoadOptions load_options(const RunConfig& c, const Shape* input = nullptr) {
  LoadOptions o;
  o.height = input ? (*input)[0] : c.image_size;
  o.width = input ? (*input)[1] : c.image_size;
  o.resize = c.resize;
  return o;
}

Dataset load_reporting(const std::string& root, const LoadOptions& options, std::ostream& err) {
  Dataset ds = load_dataset(root, options);
  for (const auto& w : ds.warnings) err << "warning: " << w << "\n";
  if (ds.empty()) throw InputError("no usable images under " + root);
  return ds;
}

void log_epoch(std::ostream& err, const EpochRecord& e) {
  err << "epoch " << e.epoch << ": train_loss " << std::setprecision(6) << e.train_loss << " train_acc "
      << e.train_accuracy << " val_loss " << e.val_loss << " val_acc " << e.val_accuracy << "\n";
}

int run_train(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Dataset train_set = load_reporting(c.data, load_options(c), err);
  const Dataset val_set = load_reporting(c.val, load_options(c), err);
  const fs::path dir = output_dir(c);
  const fs::path ckpt = c.checkpoint.empty() ? dir / "model.ckpt" : fs::path(c.checkpoint);

  Model model = build_model(c.arch, train_set.samples.front().image.shape(), c.train, c.layers);
  try {
    const TrainHistory history = train(model, train_set, val_set, c.train, [&](const EpochRecord& e) { log_epoch(err, e); });
    model.info().history_summary = history.summary();
    save_checkpoint(model, ckpt);
    write_text(dir / "history.csv", history_csv(history));
    write_text(dir / "history.json", history_json(history, c.train.seed));
    out << "checkpoint: " << ckpt.string() << "\n" << history.summary() << "\n";
    return 0;
  } catch (const TrainingDiverged& e) {
    // Best weights so far, marked partial so they are never mistaken for a finished run.
    model.info().history_summary = e.history().summary();
    save_checkpoint(model, ckpt.string() + ".partial");
    write_text(dir / "history.csv.partial", history_csv(e.history()));
    write_text(dir / "history.json.partial", history_json(e.history(), c.train.seed));
    err << "error: training diverged: " << e.what() << "\n";
    return 1;
  }
}

int run_evaluate(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Model model = load_checkpoint(c.checkpoint);
  const Shape input = model.info().input_shape;
  const Dataset test_set = load_reporting(c.test, load_options(c, &input), err);
  const ConfusionMatrix cm = evaluate(model, test_set, c.train.batch_size);
  const fs::path dir = output_dir(c);
  const std::string table = confusion_table(cm);
  write_text(dir / "confusion.txt", table);
  write_text(dir / "metrics.json", metrics_json(cm, c.train.seed));
  write_text(dir / "metrics.csv", metrics_csv(cm));
  out << table << "\n" << metrics_csv(cm);
  return 0;
}

int run_predict(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Model model = load_checkpoint(c.checkpoint);
  const Shape input = model.info().input_shape;
  const Dataset images = load_unlabeled(c.data, load_options(c, &input));
  for (const auto& w : images.warnings) err << "warning: " << w << "\n";
  if (images.empty()) throw InputError("no usable images under " + c.data);

  std::string csv = "path,p_damage,label\n";
  const std::size_t bs = c.train.batch_size;
  for (std::size_t start = 0; start < images.size(); start += bs) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(images.size(), start + bs); ++i) idx.push_back(i);
    const Batch batch = assemble_batch(images, idx, nullptr, 0, 0);
    const Tensor probs = model.forward(batch.images, Mode::infer);
    const auto labels = predict_labels(probs);
    const std::size_t classes = probs.shape()[1];
    for (std::size_t r = 0; r < idx.size(); ++r) {
      char p[32];
      std::snprintf(p, sizeof p, "%.6f", static_cast<double>(probs[r * classes + kDamageClass]));
      csv += images.samples[idx[r]].path + "," + p + "," + model.info().class_names.at(labels[r]) + "\n";
    }
  }
  const fs::path dir = output_dir(c);
  write_text(dir / "predictions.csv", csv);
  out << "wrote " << images.size() << " predictions to " << (dir / "predictions.csv").string() << "\n";
  return 0;
}

int run_cv(const RunConfig& c, std::ostream& out, std::ostream& err) {
  Dataset combined = load_reporting(c.data, load_options(c), err);
  if (!c.val.empty()) combined = concat(combined, load_reporting(c.val, load_options(c), err));
  const Shape input = combined.samples.front().image.shape();
  const auto report = cross_validate(combined, c.k, c.train,
                                     [&](const Dataset& tr, const Dataset& va, const TrainConfig& cfg, std::size_t fold) {
                                       err << "fold " << fold + 1 << "/" << c.k << "\n";
                                       Model model = build_model(c.arch, input, cfg, c.layers);
                                       train(model, tr, va, cfg, [&](const EpochRecord& e) { log_epoch(err, e); });
                                       return evaluate(model, va, cfg.batch_size);
                                     });
  const fs::path dir = output_dir(c);
  const std::string table = report.table();
  write_text(dir / "cv_report.txt", table);
  write_text(dir / "cv_report.json", cv_json(report, c.train.seed));
  out << table;
  return 0;
}

int run_tune(const RunConfig& c, std::ostream& out, std::ostream& err) {
  const Dataset train_set = load_reporting(c.data, load_options(c), err);
  const Dataset val_set = load_reporting(c.val, load_options(c), err);
  const TrialEvaluator inner = make_trial_evaluator(c.arch, train_set, val_set, c.layers);
  std::size_t trial = 0;
  const TuneResult result = greedy_tune(c.grid, c.train, [&](const TrainConfig& cfg) {
    const double score = inner(cfg);
    err << "trial " << ++trial << ": val_acc " << score << "\n";
    return score;
  });
  RunConfig best = c;
  best.train = result.best;
  best.grid.clear();
  const fs::path dir = output_dir(c);
  write_text(dir / "tune_trials.csv", tune_csv(result));
  write_text(dir / "best_config.cfg", "# seed " + std::to_string(c.train.seed) + "\n" + render_config(best));
  for (const auto& [key, value] : result.chosen) out << key << " = " << value << "\n";
  return 0;
}

int run_param_count(const RunConfig& c, std::ostream& out) {
  const ArchSpec arch = is_catalog_arch(c.arch) || c.layers.empty()
                            ? catalog_arch(c.arch, 2, c.train.model_options())
                            : apply_modifiers(parse_arch_layers(c.arch, c.layers), c.train.model_options());
  out << parameter_table(plan_parameters(arch, Shape({static_cast<std::int64_t>(c.image_size),
                                                      static_cast<std::int64_t>(c.image_size), 3})));
  return 0;
}

int run_gradcheck(const RunConfig& c, std::ostream& out) {
  GradCheckOptions options;
  options.seed = c.train.seed;
  bool ok = true;
  out << std::left << std::setw(36) << "layer" << std::setw(10) << "trials" << std::setw(12) << "entries"
      << "max_rel_error\n";
  for (const auto& r : check_all(options)) {
    char err_text[32];
    std::snprintf(err_text, sizeof err_text, "%.3e", r.max_rel_error);
    const bool pass = r.passed(options.tolerance);
    ok = ok && pass;
    out << std::setw(36) << r.name << std::setw(10) << r.trials << std::setw(12) << r.checked << err_text
        << (pass ? "" : "  FAIL") << "\n";
  }
  out << (ok ? "all gradients within 1e-4\n" : "gradient check FAILED\n");
  return ok ? 0 : 1;
}

}  // namespace

int dispatch(const RunConfig& config, std::ostream& out, std::ostream& err) {
  try {
    validate_for_command(config);
    const std::string& cmd = config.command;
    if (cmd == "train") return run_train(config, out, err);
    if (cmd == "evaluate") return run_evaluate(config, out, err);
    if (cmd == "predict") return run_predict(config, out, err);
    if (cmd == "cv") return run_cv(config, out, err);
    if (cmd == "tune") return run_tune(config, out, err);
    if (cmd == "param-count") return run_param_count(config, out);
    return run_gradcheck(config, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
  }
  return 1;
}

}  // namespace stormcnn
