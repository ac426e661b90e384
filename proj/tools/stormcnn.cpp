// stormcnn: train and evaluate the damage classifier from the command line.
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "stormcnn/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"stormcnn: CNN training and evaluation for post-hurricane damage imagery"};
  app.require_subcommand(1);

  std::string config_file;
  app.add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);

  // Every flag mirrors a config key; only flags actually given override the file.
  const std::vector<std::pair<std::string, std::string>> value_flags = {
      {"arch", "catalog id (vgg3block, vgg16, alexnet) or a custom name used with --layers"},
      {"layers", "custom layer tokens, e.g. conv8k3p1,relu,pool2,flatten,fc2"},
      {"data", "training data root (damage/ and no_damage/ folders), or image folder for predict"},
      {"val", "validation data root"},
      {"test", "test data root"},
      {"checkpoint", "checkpoint path"},
      {"out", "output directory for reports"},
      {"seed", "seed for every random stream"},
      {"batch-size", "mini-batch size"},
      {"lr", "learning rate"},
      {"momentum", "momentum coefficient"},
      {"lambda", "L2 coefficient used with --weight-decay"},
      {"patience", "early-stopping patience in epochs"},
      {"max-epochs", "epoch cap"},
      {"k", "cross-validation folds"},
      {"dropout-rate", "dropout rate used with --dropout"},
      {"image-size", "expected image height and width"},
  };
  const std::vector<std::pair<std::string, std::string>> bool_flags = {
      {"augment", "enable data augmentation"},
      {"batchnorm", "insert batch normalization after every convolution"},
      {"dropout", "insert dropout after hidden fully connected layers"},
      {"weight-decay", "add the L2 penalty"},
      {"resize", "bilinear-resize images that do not match the input size"},
  };
  std::map<std::string, std::string> values;
  std::vector<std::string> grid;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"train", "train on --data, early-stop on --val; writes checkpoint and history"},
      {"evaluate", "score --checkpoint on --test; writes confusion matrix and metrics"},
      {"predict", "label every image in --data; writes predictions.csv"},
      {"cv", "k-fold cross-validation over --data (plus --val if given)"},
      {"tune", "greedy hyperparameter search over --grid dimensions"},
      {"param-count", "per-layer output shapes and parameter counts"},
      {"gradcheck", "finite-difference check of every layer's gradients"},
  };
  // Subcommands inherit this, so --config is accepted after the subcommand name too.
  app.fallthrough();
  for (const auto& [name, description] : commands) {
    CLI::App* sub = app.add_subcommand(name, description);
    for (const auto& [flag, help] : value_flags) sub->add_option("--" + flag, values[flag], help);
    for (const auto& [flag, help] : bool_flags)
      sub->add_flag("--" + flag + "{true}", values[flag], help + " (--" + flag + "=false to disable)");
    if (name == "tune")
      sub->add_option("--grid", grid, "tuning dimension as key=v1,v2 (repeatable, in order)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::vector<stormcnn::KeyValue> overrides;
  CLI::App* sub = app.get_subcommands().front();
  overrides.emplace_back("command", sub->get_name());
  for (const auto& [flag, help] : value_flags)
    if (sub->count("--" + flag)) overrides.emplace_back(flag, values[flag]);
  for (const auto& [flag, help] : bool_flags)
    if (sub->count("--" + flag)) overrides.emplace_back(flag, values[flag].empty() ? "true" : values[flag]);
  for (const auto& g : grid) {
    const auto eq = g.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --grid expects key=v1,v2, got '" << g << "'\n";
      return 2;
    }
    overrides.emplace_back("grid." + g.substr(0, eq), g.substr(eq + 1));
  }

  stormcnn::RunConfig config;
  try {
    config = stormcnn::parse_config(config_file.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_file),
                                    overrides);
  } catch (const stormcnn::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return stormcnn::dispatch(config, std::cout, std::cerr);
}
