#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "stormcnn/trainer.hpp"

namespace stormcnn {

inline constexpr std::string_view kCommands[] = {"train", "evaluate", "predict", "cv", "tune", "param-count", "gradcheck"};

struct RunConfig {
  std::string command;
  std::string arch = "vgg3block";
  std::string layers;  // custom layer list; overrides the catalog when arch is not a catalog id
  std::string data, val, test, checkpoint, out;
  std::size_t k = 5;
  bool resize = false;
  std::size_t image_size = 128;
  TrainConfig train;
  std::vector<TuneDimension> grid;  // from "grid.<key> = v1, v2, ..." in file order
};

using KeyValue = std::pair<std::string, std::string>;

/// Flat `key = value` text with `#` comments. File values are applied first, then `overrides`
/// in order. Dashes in override keys are read as underscores. Unknown keys and malformed values
/// raise ConfigError naming the key.
RunConfig parse_config_text(std::string_view text, const std::vector<KeyValue>& overrides = {});
RunConfig parse_config(const std::optional<std::filesystem::path>& file, const std::vector<KeyValue>& overrides = {});

// Checks the paths the chosen command reads exist; ConfigError names the missing key.
void validate_for_command(const RunConfig& config);

// Config-file text that reproduces `config` (used for the tuner's best-config output).
std::string render_config(const RunConfig& config);

}  // namespace stormcnn
