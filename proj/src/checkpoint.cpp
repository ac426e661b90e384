#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "stormcnn/model.hpp"

namespace stormcnn {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  const char* take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw LoadError(std::string("checkpoint truncated while reading ") + what);
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(4, what));
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64(const char* what) {
    const auto* p = reinterpret_cast<const unsigned char*>(take(8, what));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    return std::string(take(n, what), n);
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

std::string join_dims(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.rank(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) parts.push_back(cur);
  return parts;
}

std::uint64_t parse_u64(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw LoadError("checkpoint metadata missing '" + key + "'");
  try {
    std::size_t used = 0;
    const auto v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw LoadError("checkpoint metadata '" + key + "' is not an integer");
  }
}

}  // namespace

void save_checkpoint(Model& model, const std::filesystem::path& path) {
  const ModelInfo& info = model.info();
  std::string meta;
  meta += "arch=" + info.arch_id + "\n";
  meta += "layers=" + info.layers + "\n";
  meta += "input_shape=" + join_dims(info.input_shape) + "\n";
  meta += "num_classes=" + std::to_string(info.num_classes) + "\n";
  std::string names;
  for (std::size_t i = 0; i < info.class_names.size(); ++i) names += (i ? "," : "") + info.class_names[i];
  meta += "class_names=" + names + "\n";
  meta += "rng_algorithm=" + info.rng.algorithm + "\n";
  meta += "rng_seed=" + std::to_string(info.rng.seed) + "\n";
  meta += "rng_position=" + std::to_string(info.rng.position) + "\n";
  std::string history = info.history_summary;
  for (auto& ch : history)
    if (ch == '\n') ch = ';';
  meta += "history=" + history + "\n";

  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;

  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (auto& p : model.params()) tensors.emplace_back(p.name, p.value);
  for (auto& b : model.buffers()) tensors.emplace_back(b.name, b.value);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t->shape().rank()));
    for (auto d : t->shape().dims()) put_u64(out, d);
    for (float v : t->values()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open '" + tmp.string() + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("failed writing checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Model load_checkpoint(const std::filesystem::path& path, std::optional<std::string> expected_arch) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open checkpoint '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));

  if (std::memcmp(r.take(sizeof kCheckpointMagic, "magic"), kCheckpointMagic, sizeof kCheckpointMagic) != 0)
    throw LoadError("'" + path.string() + "' is not a checkpoint (bad magic bytes)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw LoadError("checkpoint format version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kCheckpointVersion) + ")");

  std::map<std::string, std::string> meta;
  for (const auto& line : split(r.str("metadata"), '\n')) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw LoadError("malformed checkpoint metadata line '" + line + "'");
    meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  for (const char* key : {"arch", "layers", "input_shape", "num_classes", "rng_algorithm"})
    if (!meta.count(key)) throw LoadError(std::string("checkpoint metadata missing '") + key + "'");

  const std::string arch_id = meta["arch"];
  if (expected_arch && *expected_arch != arch_id)
    throw LoadError("checkpoint holds architecture '" + arch_id + "' but '" + *expected_arch + "' was expected");

  std::vector<std::int64_t> dims;
  for (const auto& d : split(meta["input_shape"], ',')) {
    try {
      dims.push_back(std::stoll(d));
    } catch (const std::exception&) {
      throw LoadError("checkpoint input_shape '" + meta["input_shape"] + "' is malformed");
    }
  }
  const std::size_t num_classes = parse_u64(meta, "num_classes");
  RngRecord rng{meta["rng_algorithm"], parse_u64(meta, "rng_seed"), parse_u64(meta, "rng_position")};

  ArchSpec arch;
  try {
    arch = parse_arch_layers(arch_id, meta["layers"]);
  } catch (const Error& e) {
    throw LoadError(std::string("checkpoint layer list invalid: ") + e.what());
  }
  if (is_catalog_arch(arch_id)) {
    // The layer list must be a modifier combination of the named catalog entry.
    bool matches = false;
    for (int bn = 0; bn < 2 && !matches; ++bn)
      for (int dr = 0; dr < 2 && !matches; ++dr) {
        double rate = 0.5;
        for (const auto& l : arch.layers)
          if (l.kind == LayerKind::dropout) rate = l.rate;
        matches = catalog_arch(arch_id, num_classes, {bn == 1, dr == 1, rate}).str() == arch.str();
      }
    if (!matches) throw LoadError("checkpoint layer list does not match architecture '" + arch_id + "'");
  }

  Model model = [&] {
    try {
      return Model::build_uninitialized(arch, Shape(dims), num_classes, rng.seed);
    } catch (const Error& e) {
      throw LoadError(std::string("checkpoint describes an invalid model: ") + e.what());
    }
  }();
  model.info().rng = rng;
  if (meta.count("class_names")) model.info().class_names = split(meta["class_names"], ',');
  model.info().history_summary = meta["history"];

  std::map<std::string, Tensor*> slots;
  for (auto& p : model.params()) slots[p.name] = p.value;
  for (auto& b : model.buffers()) slots[b.name] = b.value;

  const std::uint32_t count = r.u32("tensor count");
  if (count != slots.size())
    throw LoadError("checkpoint has " + std::to_string(count) + " tensors, architecture needs " +
                    std::to_string(slots.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str("tensor name");
    auto it = slots.find(name);
    if (it == slots.end()) throw LoadError("checkpoint tensor '" + name + "' does not belong to architecture");
    const std::uint32_t rank = r.u32("tensor rank");
    std::vector<std::size_t> shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u64("tensor shape"));
    if (shape != it->second->shape().dims())
      throw LoadError("checkpoint tensor '" + name + "' has shape " + Shape(shape).str() + ", expected " +
                      it->second->shape().str());
    const char* raw = r.take(it->second->size() * 4, "tensor data");
    auto* dst = it->second->data();
    for (std::size_t k = 0; k < it->second->size(); ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b)
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[k * 4 + b])) << (8 * b);
      dst[k] = std::bit_cast<float>(bits);
    }
    slots.erase(it);
  }
  if (!r.done()) throw LoadError("checkpoint has trailing bytes");
  return model;
}

}  // namespace stormcnn
