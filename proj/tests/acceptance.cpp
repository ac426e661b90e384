// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "stormcnn/commands.hpp"
#include "stormcnn/gradcheck.hpp"
#include "stormcnn/reports.hpp"
#include "support.hpp"

using namespace stormcnn;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

const std::vector<std::pair<std::string, std::string>> kVggRows{
    {"2-D Convolutional 32@(3x3)", "(128, 128, 32)|896"},  {"2-D Convolutional 32@(3x3)", "(128, 128, 32)|9,248"},
    {"2-D Max pooling (2x2)", "(64, 64, 32)|0"},           {"2-D Convolutional 64@(3x3)", "(64, 64, 64)|18,496"},
    {"2-D Convolutional 64@(3x3)", "(64, 64, 64)|36,928"}, {"2-D Max pooling (2x2)", "(32, 32, 64)|0"},
    {"2-D Convolutional 128@(3x3)", "(32, 32, 128)|73,856"}, {"2-D Convolutional 128@(3x3)", "(32, 32, 128)|147,584"},
    {"2-D Max pooling (2x2)", "(16, 16, 128)|0"},          {"Flattening", "(32768,)|0"},
    {"Fully Connected", "(4096,)|134,221,824"},            {"Fully Connected", "(4096,)|16,781,312"},
    {"Fully Connected", "(2,)|8,194"}};

const std::vector<Shape> kVggShapes{{128, 128, 32}, {128, 128, 32}, {64, 64, 32}, {64, 64, 64}, {64, 64, 64},
                                    {32, 32, 64},   {32, 32, 128},  {32, 32, 128}, {16, 16, 128}, {32768},
                                    {4096},         {4096},         {2}};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(' ');
  const auto e = s.find_last_not_of(' ');
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// ---------------------------------------------------------------- 1
Outcome parameter_counts() {
  RunConfig c = parse_config_text("", {{"command", "param-count"}, {"arch", "vgg3block"}});
  std::ostringstream out, err;
  if (dispatch(c, out, err) != 0) return {false, "param-count failed: " + err.str()};
  std::istringstream lines(out.str());
  std::string line;
  std::getline(lines, line);  // header
  std::getline(lines, line);  // input row
  for (const auto& [label, expect] : kVggRows) {
    if (!std::getline(lines, line)) return {false, "table ended early"};
    const std::string got_label = trim(line.substr(0, 32)), got_shape = trim(line.substr(33, 18));
    const std::string got_count = trim(line.substr(52));
    if (got_label + "|" + got_shape + "|" + got_count != label + "|" + expect)
      return {false, "row mismatch: '" + line + "'"};
  }
  std::getline(lines, line);
  if (line != "Total: 151,298,338") return {false, "total line '" + line + "'"};
  return {true, "13 rows and total 151,298,338 exact"};
}

// ---------------------------------------------------------------- 2
Outcome shape_trace() {
  Rng rng(2);
  Model model = Model::build(catalog_arch("vgg3block", 2), {128, 128, 3}, 2, rng);
  const auto shapes = model.trace_shapes(testing::random_tensor<float>({2, 128, 128, 3}, rng, 0, 1));
  std::vector<Shape> got;
  for (std::size_t i = 0; i < shapes.size(); ++i)
    if (model.layers()[i]->kind() != LayerKind::relu) got.push_back(shapes[i]);
  if (got != kVggShapes) {
    std::string s;
    for (const auto& g : got) s += g.str() + " ";
    return {false, "traced " + s};
  }
  return {true, "13 traced shapes match the expected column"};
}

// ---------------------------------------------------------------- 3
Outcome gradients() {
  GradCheckOptions options;
  std::string detail;
  bool ok = true;
  for (const auto& r : check_all(options)) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s %.1e; ", r.name.c_str(), r.max_rel_error);
    detail += buf;
    ok = ok && r.trials >= 20 && r.checked > 0 && r.passed(1e-4);
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 4
Outcome conv_oracle() {
  Rng rng(4);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t cin = 1 + rng.below(4), kh = 1 + rng.below(4), kw = 1 + rng.below(4);
    ConvSpec spec{1 + rng.below(5), kh, kw, 1 + rng.below(3), 1 + rng.below(3),
                  rng.below(3), rng.below(3), rng.below(3), rng.below(3)};
    const std::size_t h = kh + rng.below(6), w = kw + rng.below(6);
    Conv2D<float> conv(cin, spec);
    conv.weights() = testing::random_tensor<float>(conv.weights().shape(), rng);
    conv.bias() = testing::random_tensor<float>(conv.bias().shape(), rng);
    const auto x = testing::random_tensor<float>(Shape({std::int64_t(1 + rng.below(3)), std::int64_t(h), std::int64_t(w),
                                                        std::int64_t(cin)}),
                                                 rng);
    const Tensor got = conv.forward(x, Mode::infer);
    const Tensor want = testing::naive_conv(x, conv.weights(), conv.bias(), spec);
    if (got.shape() != want.shape()) return {false, "shape " + got.shape().str() + " vs " + want.shape().str()};
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, double(std::abs(got[i] - want[i])));
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "max abs error %.2e over 50 configurations", worst);
  return {worst <= 1e-5, buf};
}

// ---------------------------------------------------------------- 5
Outcome metric_arithmetic() {
  const MetricsReport m = metrics({991, 8, 9, 992});
  char buf[96];
  std::snprintf(buf, sizeof buf, "accuracy %.10g, f1 %.6f", m.accuracy, m.f1.value_or(-1));
  return {m.accuracy == 0.9915 && m.f1 && std::abs(*m.f1 - 0.9915) <= 1e-4, buf};
}

// ---------------------------------------------------------------- 6 and 10
const std::string kReducedNet = "conv8k3p1,relu,pool2,conv16k3p1,relu,pool2,flatten,fc64,relu,fc2";

struct SyntheticSplits {
  Dataset train, val, test;
};

const SyntheticSplits& synthetic_splits() {
  static const SyntheticSplits splits = [] {
    const Dataset all = testing::synthetic_dataset(2000, 32, 6060);
    std::vector<std::size_t> tr, va, te;
    for (std::size_t i = 0; i < all.size(); ++i) (i < 1400 ? tr : i < 1700 ? va : te).push_back(i);
    return SyntheticSplits{subset(all, tr), subset(all, va), subset(all, te)};
  }();
  return splits;
}

TrainConfig synthetic_config(bool augment) {
  TrainConfig c;
  c.batch_size = 64;
  c.lr = 0.001;
  c.momentum = 0.9;
  c.max_epochs = 20;
  c.seed = 42;
  c.augment = augment;
  return c;
}

struct SyntheticRun {
  TrainHistory history;
  ConfusionMatrix test;
};

SyntheticRun synthetic_run(bool augment) {
  const auto& s = synthetic_splits();
  const TrainConfig c = synthetic_config(augment);
  Model model = build_model("reduced", {32, 32, 3}, c, kReducedNet);
  SyntheticRun run;
  run.history = train(model, s.train, s.val, c);
  run.test = evaluate(model, s.test, c.batch_size);
  return run;
}

Outcome synthetic_training() {
  const SyntheticRun run = synthetic_run(false);
  const double acc = metrics(run.test).accuracy;
  char buf[128];
  std::snprintf(buf, sizeof buf, "held-out accuracy %.4f after %zu epochs (best %zu)", acc, run.history.epochs.size(),
                run.history.best_epoch);
  return {acc >= 0.95 && run.history.epochs.size() <= 20, buf};
}

Outcome reproducibility() {
  const SyntheticRun a = synthetic_run(true), b = synthetic_run(true);
  const bool same = a.history == b.history && a.test == b.test;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu epochs each, histories %s, test matrices %s", a.history.epochs.size(),
                a.history == b.history ? "identical" : "differ", a.test == b.test ? "identical" : "differ");
  return {same && !a.history.epochs.empty(), buf};
}

// ---------------------------------------------------------------- 7
Outcome early_stopping() {
  // The single weight is set to the epoch number, and the stub loss is looked up from the weight.
  const std::vector<double> losses{1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 0.1, 0.1, 0.1};
  Model model = Model::build_uninitialized(parse_arch_layers("stub", "flatten,fc2"), {1, 1, 1}, 2);
  Tensor& w = *model.params()[0].value;
  auto monitored = [&] { return losses.at(static_cast<std::size_t>(w[0]) - 1); };
  std::vector<Tensor> best;
  const TrainHistory h = fit_loop(
      50, 5,
      [&](std::size_t epoch) {
        w.fill(static_cast<float>(epoch));
        EpochRecord e;
        e.epoch = epoch;
        e.val_loss = monitored();
        return e;
      },
      [&](std::size_t) { best = model.snapshot(); }, [&] { model.restore(best); });
  const bool ok = h.epochs.size() == 7 && h.best_epoch == 2 && monitored() == 0.9 && w[0] == 2.0f;
  return {ok, "stopped after epoch " + std::to_string(h.epochs.size()) + ", restored weights of epoch " +
                  std::to_string(static_cast<int>(w[0])) + " with monitored loss " + std::to_string(monitored())};
}

// ---------------------------------------------------------------- 8
std::string check_folds(const std::vector<std::size_t>& labels, std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  const auto folds = kfold_split(labels, k, rng);
  if (folds.size() != k) return "wrong fold count";
  std::vector<std::size_t> hits(labels.size(), 0);
  std::size_t lo = labels.size(), hi = 0;
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> per_class;  // label -> (min, max) per fold
  for (const auto& f : folds) {
    lo = std::min(lo, f.validation.size());
    hi = std::max(hi, f.validation.size());
    std::map<std::size_t, std::size_t> counts;
    for (auto i : f.validation) {
      ++hits.at(i);
      ++counts[labels[i]];
    }
    for (std::size_t c : std::set<std::size_t>(labels.begin(), labels.end())) {
      auto& [mn, mx] = per_class.try_emplace(c, SIZE_MAX, 0).first->second;
      mn = std::min(mn, counts[c]);
      mx = std::max(mx, counts[c]);
    }
    if (f.train.size() + f.validation.size() != labels.size()) return "train and validation do not cover the set";
    std::set<std::size_t> train(f.train.begin(), f.train.end());
    for (auto i : f.validation)
      if (train.count(i)) return "validation index also in train";
  }
  for (auto h : hits)
    if (h != 1) return "an index is not in exactly one validation fold";
  if (hi - lo > 1) return "fold sizes differ by more than one";
  for (const auto& [c, mm] : per_class)
    if (mm.second - mm.first > 1) return "class " + std::to_string(c) + " spread differs by more than one";
  return {};
}

Outcome kfold_properties() {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> cases;
  std::vector<std::size_t> ten(10), odd(101), big(12000);
  for (std::size_t i = 0; i < ten.size(); ++i) ten[i] = i % 2;
  for (std::size_t i = 0; i < odd.size(); ++i) odd[i] = i < 63 ? 0 : 1;
  for (std::size_t i = 0; i < big.size(); ++i) big[i] = i < 6000 ? 0 : 1;
  cases.emplace_back("10", ten);
  cases.emplace_back("101", odd);
  cases.emplace_back("12000", big);
  for (const auto& [name, labels] : cases)
    for (std::uint64_t seed : {1, 2, 3})
      if (auto problem = check_folds(labels, 5, seed); !problem.empty()) return {false, name + ": " + problem};
  return {true, "sizes 10, 101, 12000 with k=5 over 3 seeds"};
}

// ---------------------------------------------------------------- 9
Outcome checkpoint_round_trip() {
  testing::TempDir dir("accept_ckpt");
  Rng rng(9);
  const ArchSpec arch = apply_modifiers(parse_arch_layers("roundtrip", kReducedNet), {true, true, 0.5});
  Model model = Model::build(arch, {32, 32, 3}, 2, rng);
  const auto batch = testing::random_tensor<float>({8, 32, 32, 3}, rng, 0, 1);
  model.forward(batch, Mode::train);  // non-default batch-norm running statistics
  const auto before = predict(model, batch);
  const Tensor probs = model.forward(batch, Mode::infer);
  save_checkpoint(model, dir.path() / "m.ckpt");
  Model loaded = load_checkpoint(dir.path() / "m.ckpt");
  const bool params_equal = loaded.snapshot() == model.snapshot();
  const bool same_probs = loaded.forward(batch, Mode::infer) == probs;
  const bool same_labels = predict(loaded, batch) == before;
  return {params_equal && same_probs && same_labels,
          std::string("parameters ") + (params_equal ? "bit-identical" : "differ") + ", predictions " +
              (same_probs && same_labels ? "identical" : "differ")};
}

// ---------------------------------------------------------------- 11
Outcome tuner_trials() {
  const std::vector<TuneDimension> grid{
      {"lr", {"0.1", "0.01", "0.001"}}, {"lambda", {"0.001", "0.0001"}}, {"batch_size", {"32", "64"}}};
  TrainConfig base;
  const TuneResult r = greedy_tune(grid, base, [](const TrainConfig& c) {
    return (c.lr == 0.01 ? 1.0 : 0.0) + (c.lambda == 0.0001 ? 0.5 : 0.0) + (c.batch_size == 32 ? 0.25 : 0.0);
  });
  // Re-read the log as an operator would and check every trial held the other keys at their incumbents.
  std::istringstream log(tune_csv(r));
  std::string line;
  std::getline(log, line);
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    for (std::string col; std::getline(h, col, ',');) header.push_back(col);
  }
  std::map<std::string, std::string> incumbent{{"lr", "0.001"}, {"lambda", "0.001"}, {"batch_size", "64"}};
  std::map<std::string, std::string> winners{{"lr", "0.01"}, {"lambda", "0.0001"}, {"batch_size", "32"}};
  std::size_t rows = 0;
  std::string current_key;
  while (std::getline(log, line)) {
    ++rows;
    std::vector<std::string> cells;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (cells.size() != header.size()) return {false, "malformed log row '" + line + "'"};
    const std::string key = cells[1];
    if (key != current_key) {
      if (!current_key.empty()) incumbent[current_key] = winners[current_key];
      current_key = key;
    }
    for (std::size_t i = 4; i < header.size(); ++i) {
      const std::string& col = header[i];
      const std::string expect = col == key ? cells[2] : incumbent[col];
      if (cells[i] != expect) return {false, "trial " + cells[0] + " has " + col + "=" + cells[i] + ", expected " + expect};
    }
  }
  return {rows == 7 && r.trials.size() == 7, std::to_string(rows) + " trials logged"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "parameter-count equality", 1.0, parameter_counts},
      {2, "shape-trace equality", 10.0, shape_trace},
      {3, "gradient correctness", 120.0, gradients},
      {4, "convolution oracle equivalence", 30.0, conv_oracle},
      {5, "metric arithmetic", 1.0, metric_arithmetic},
      {6, "synthetic end-to-end training", 120.0, synthetic_training},
      {7, "early stopping", 1.0, early_stopping},
      {8, "k-fold properties", 5.0, kfold_properties},
      {9, "checkpoint round trip", 10.0, checkpoint_round_trip},
      {10, "reproducibility", 240.0, reproducibility},
      {11, "greedy tuner trial count", 1.0, tuner_trials},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = Clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    const bool in_time = seconds < c.budget_seconds;
    const bool pass = o.ok && in_time;
    failures += !pass;
    std::printf("%s %2d. %s [%.2fs / %.0fs budget]%s: %s\n", pass ? "PASS" : "FAIL", c.id, c.name, seconds,
                c.budget_seconds, in_time ? "" : " over budget", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
