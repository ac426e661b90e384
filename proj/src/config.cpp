#include "stormcnn/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace stormcnn {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (value.empty() || ec != std::errc() || ptr != value.data() + value.size())
    throw ConfigError("key '" + key + "': '" + value + "' is not a non-negative integer");
  return v;
}

bool parse_flag(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("key '" + key + "': '" + value + "' is not a boolean");
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream is(value);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

void apply(RunConfig& c, std::string key, const std::string& value) {
  std::replace(key.begin(), key.end(), '-', '_');
  if (key == "command") c.command = value;
  else if (key == "arch") c.arch = value;
  else if (key == "layers") c.layers = value;
  else if (key == "data") c.data = value;
  else if (key == "val") c.val = value;
  else if (key == "test") c.test = value;
  else if (key == "checkpoint") c.checkpoint = value;
  else if (key == "out") c.out = value;
  else if (key == "k") c.k = parse_count(key, value);
  else if (key == "resize") c.resize = value == "bilinear" || parse_flag(key, value);
  else if (key == "image_size") c.image_size = parse_count(key, value);
  else if (key.rfind("grid.", 0) == 0) {
    const std::string target = key.substr(5);
    if (!get_train_key(c.train, target)) throw ConfigError("key '" + key + "': '" + target + "' is not tunable");
    auto candidates = split_list(value);
    if (candidates.empty()) throw ConfigError("key '" + key + "' lists no candidates");
    for (const auto& v : candidates) {
      TrainConfig probe = c.train;
      set_train_key(probe, target, v);  // rejects malformed candidates up front
    }
    auto it = std::find_if(c.grid.begin(), c.grid.end(), [&](const TuneDimension& d) { return d.key == target; });
    if (it != c.grid.end()) it->candidates = std::move(candidates);
    else c.grid.push_back({target, std::move(candidates)});
  } else if (!set_train_key(c.train, key, value)) {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace

RunConfig parse_config_text(std::string_view text, const std::vector<KeyValue>& overrides) {
  RunConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    apply(config, key, trim(std::string_view(line).substr(eq + 1)));
  }
  for (const auto& [key, value] : overrides) apply(config, key, value);
  config.train.validate();
  if (config.k < 2) throw ConfigError("key 'k' must be >= 2");
  if (config.image_size == 0) throw ConfigError("key 'image_size' must be >= 1");
  return config;
}

RunConfig parse_config(const std::optional<fs::path>& file, const std::vector<KeyValue>& overrides) {
  std::string text;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot read config file '" + file->string() + "'");
    text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return parse_config_text(text, overrides);
}

void validate_for_command(const RunConfig& c) {
  if (std::find(std::begin(kCommands), std::end(kCommands), c.command) == std::end(kCommands))
    throw ConfigError("unknown command '" + c.command + "'");
  auto need_dir = [](const std::string& key, const std::string& value) {
    if (value.empty()) throw ConfigError("missing required path '" + key + "'");
    if (!fs::is_directory(value)) throw ConfigError("path for '" + key + "' is not a directory: " + value);
  };
  auto need_file = [](const std::string& key, const std::string& value) {
    if (value.empty()) throw ConfigError("missing required path '" + key + "'");
    if (!fs::is_regular_file(value)) throw ConfigError("path for '" + key + "' does not exist: " + value);
  };
  if (c.command == "train") {
    need_dir("data", c.data);
    need_dir("val", c.val);
  } else if (c.command == "evaluate") {
    need_file("checkpoint", c.checkpoint);
    need_dir("test", c.test);
  } else if (c.command == "predict") {
    need_file("checkpoint", c.checkpoint);
    need_dir("data", c.data);
  } else if (c.command == "cv") {
    need_dir("data", c.data);
    if (!c.val.empty()) need_dir("val", c.val);
  } else if (c.command == "tune") {
    need_dir("data", c.data);
    need_dir("val", c.val);
    if (c.grid.empty()) throw ConfigError("tune needs at least one 'grid.<key>' entry");
  }
}

std::string render_config(const RunConfig& c) {
  std::ostringstream os;
  os << "arch = " << c.arch << "\n";
  if (!c.layers.empty()) os << "layers = " << c.layers << "\n";
  os << "image_size = " << c.image_size << "\n";
  os << "k = " << c.k << "\n";
  for (const auto& key : train_keys()) os << key << " = " << *get_train_key(c.train, key) << "\n";
  return os.str();
}

}  // namespace stormcnn
