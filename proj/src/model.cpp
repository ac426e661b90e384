#include "stormcnn/model.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

namespace stormcnn {

namespace {

std::string fmt_rate(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", rate);
  return buf;
}

// Reads an unsigned integer at `pos`, advancing it; returns nullopt if none.
std::optional<std::size_t> read_uint(std::string_view s, std::size_t& pos) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + s.size(), value);
  if (ec != std::errc() || ptr == s.data() + pos) return std::nullopt;
  pos = static_cast<std::size_t>(ptr - s.data());
  return value;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

LayerSpec parse_token(std::string_view tok) {
  auto bad = [&]() { return BuildError("malformed layer token '" + std::string(tok) + "'"); };
  LayerSpec spec;
  if (tok == "relu") {
    spec.kind = LayerKind::relu;
  } else if (tok == "bn") {
    spec.kind = LayerKind::batchnorm;
  } else if (tok == "flatten") {
    spec.kind = LayerKind::flatten;
  } else if (starts_with(tok, "conv")) {
    spec.kind = LayerKind::conv2d;
    std::size_t pos = 4;
    auto filters = read_uint(tok, pos);
    if (!filters || pos >= tok.size() || tok[pos] != 'k') throw bad();
    ++pos;
    auto kernel = read_uint(tok, pos);
    if (!kernel) throw bad();
    std::size_t stride = 1, pad = 0;
    if (pos < tok.size() && tok[pos] == 's') {
      ++pos;
      auto s = read_uint(tok, pos);
      if (!s) throw bad();
      stride = *s;
    }
    if (pos < tok.size() && tok[pos] == 'p') {
      ++pos;
      auto p = read_uint(tok, pos);
      if (!p) throw bad();
      pad = *p;
    }
    if (pos != tok.size()) throw bad();
    spec.conv = ConvSpec::square(*filters, *kernel, stride, pad);
  } else if (starts_with(tok, "pool")) {
    spec.kind = LayerKind::maxpool2d;
    std::size_t pos = 4;
    auto k = read_uint(tok, pos);
    if (!k) throw bad();
    spec.pool = spec.pool_stride = *k;
    if (pos < tok.size() && tok[pos] == 's') {
      ++pos;
      auto s = read_uint(tok, pos);
      if (!s) throw bad();
      spec.pool_stride = *s;
    }
    if (pos != tok.size()) throw bad();
  } else if (starts_with(tok, "fc")) {
    spec.kind = LayerKind::dense;
    std::size_t pos = 2;
    auto units = read_uint(tok, pos);
    if (!units || pos != tok.size()) throw bad();
    spec.units = *units;
  } else if (starts_with(tok, "drop")) {
    spec.kind = LayerKind::dropout;
    const std::string rest(tok.substr(4));
    char* end = nullptr;
    spec.rate = std::strtod(rest.c_str(), &end);
    if (rest.empty() || end != rest.c_str() + rest.size()) throw bad();
  } else {
    throw bad();
  }
  return spec;
}

std::string block(std::size_t filters, int repeats) {
  std::string s;
  for (int i = 0; i < repeats; ++i) s += "conv" + std::to_string(filters) + "k3p1,relu,";
  return s + "pool2,";
}

}  // namespace

std::string LayerSpec::token() const {
  switch (kind) {
    case LayerKind::relu: return "relu";
    case LayerKind::batchnorm: return "bn";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "fc" + std::to_string(units);
    case LayerKind::dropout: return "drop" + fmt_rate(rate);
    case LayerKind::maxpool2d:
      return "pool" + std::to_string(pool) + (pool_stride != pool ? "s" + std::to_string(pool_stride) : "");
    case LayerKind::conv2d: {
      std::string t = "conv" + std::to_string(conv.filters) + "k" + std::to_string(conv.kernel_h);
      if (conv.stride_h != 1) t += "s" + std::to_string(conv.stride_h);
      if (conv.pad_top != 0) t += "p" + std::to_string(conv.pad_top);
      return t;
    }
  }
  return "?";
}

std::string ArchSpec::str() const {
  std::string s;
  for (std::size_t i = 0; i < layers.size(); ++i) s += (i ? "," : "") + layers[i].token();
  return s;
}

bool is_catalog_arch(std::string_view id) {
  return std::find(std::begin(kCatalogIds), std::end(kCatalogIds), id) != std::end(kCatalogIds);
}

ArchSpec parse_arch_layers(std::string id, std::string_view text) {
  ArchSpec arch{std::move(id), {}};
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view tok = text.substr(start, end - start);
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    if (tok.empty()) throw BuildError("empty layer token in '" + std::string(text) + "'");
    arch.layers.push_back(parse_token(tok));
    start = end + 1;
  }
  return arch;
}

ArchSpec apply_modifiers(const ArchSpec& base, const ModelOptions& options) {
  ArchSpec out{base.id, {}};
  std::size_t last_dense = base.layers.size();
  for (std::size_t i = 0; i < base.layers.size(); ++i)
    if (base.layers[i].kind == LayerKind::dense) last_dense = i;

  for (std::size_t i = 0; i < base.layers.size(); ++i) {
    const LayerSpec& l = base.layers[i];
    out.layers.push_back(l);
    if (options.batchnorm && l.kind == LayerKind::conv2d) out.layers.push_back(parse_token("bn"));
    if (options.dropout && l.kind == LayerKind::dense && i != last_dense) {
      // Place after the FC's activation, unless a dropout already follows.
      std::size_t j = i + 1;
      if (j < base.layers.size() && base.layers[j].kind == LayerKind::relu) {
        out.layers.push_back(base.layers[j]);
        ++i;
        ++j;
      }
      if (!(j < base.layers.size() && base.layers[j].kind == LayerKind::dropout)) {
        LayerSpec d;
        d.kind = LayerKind::dropout;
        d.rate = options.dropout_rate;
        out.layers.push_back(d);
      }
    }
  }
  return out;
}

ArchSpec catalog_arch(std::string_view id, std::size_t num_classes, const ModelOptions& options) {
  const std::string head = "fc" + std::to_string(num_classes);
  std::string text;
  if (id == "vgg3block") {
    text = block(32, 2) + block(64, 2) + block(128, 2) + "flatten,fc4096,relu,fc4096,relu," + head;
  } else if (id == "vgg16") {
    text = block(64, 2) + block(128, 2) + block(256, 3) + block(512, 3) + block(512, 3) +
           "flatten,fc4096,relu,fc4096,relu," + head;
  } else if (id == "alexnet") {
    const std::string drop = "drop" + fmt_rate(options.dropout_rate);
    text = "conv96k11s4,relu,pool3s2,conv256k5p2,relu,pool3s2,conv384k3p1,relu,conv384k3p1,relu,"
           "conv256k3p1,relu,pool3s2,flatten,fc4096,relu," +
           drop + ",fc4096,relu," + drop + "," + head;
  } else {
    throw BuildError("unknown architecture id '" + std::string(id) + "' (expected alexnet, vgg16 or vgg3block)");
  }
  return apply_modifiers(parse_arch_layers(std::string(id), text), options);
}

ParameterReport plan_parameters(const ArchSpec& arch, const Shape& input_shape) {
  if (input_shape.rank() != 3) throw BuildError("input shape must be [H,W,C], got " + input_shape.str());
  ParameterReport report;
  report.input = input_shape;
  Shape cur = input_shape;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    LayerPlanRow row;
    row.kind = l.kind;
    try {
      switch (l.kind) {
        case LayerKind::conv2d: {
          if (cur.rank() != 3) throw BuildError("conv2d needs a spatial input, got " + cur.str());
          const ConvSpec& c = l.conv;
          const std::size_t oh = window_extent(cur[0], c.pad_top + c.pad_bottom, c.kernel_h, c.stride_h);
          const std::size_t ow = window_extent(cur[1], c.pad_left + c.pad_right, c.kernel_w, c.stride_w);
          if (oh == 0 || ow == 0) throw ShapeError("conv2d output extent < 1 for input " + cur.str());
          row.output = Shape(std::vector<std::size_t>{oh, ow, c.filters});
          row.trainable = l.conv.kernel_h * l.conv.kernel_w * cur[2] * l.conv.filters + l.conv.filters;
          row.label = "2-D Convolutional " + std::to_string(l.conv.filters) + "@(" + std::to_string(l.conv.kernel_h) +
                      "x" + std::to_string(l.conv.kernel_w) + ")";
          break;
        }
        case LayerKind::maxpool2d: {
          MaxPool2D<float> pool(l.pool, l.pool, l.pool_stride, l.pool_stride);
          row.output = pool.output_shape(cur);
          row.label = pool.label();
          break;
        }
        case LayerKind::dense:
          if (cur.rank() != 1) throw BuildError("fully connected layer needs a flat input, got " + cur.str());
          row.output = Shape(std::vector<std::size_t>{l.units});
          row.trainable = cur[0] * l.units + l.units;
          row.label = "Fully Connected";
          break;
        case LayerKind::batchnorm:
          row.output = cur;
          row.trainable = 2 * cur[cur.rank() - 1];
          row.non_trainable = 2 * cur[cur.rank() - 1];
          row.label = "Batch normalization";
          break;
        case LayerKind::dropout:
          if (!(l.rate >= 0.0 && l.rate < 1.0)) throw ConfigError("dropout rate must lie in [0,1)");
          row.output = cur;
          row.label = "Dropout (" + fmt_rate(l.rate) + ")";
          break;
        case LayerKind::flatten:
          row.output = Shape(std::vector<std::size_t>{cur.count()});
          row.label = "Flattening";
          break;
        case LayerKind::relu:
          row.output = cur;
          row.label = "ReLU";
          break;
      }
    } catch (const Error& e) {
      if (dynamic_cast<const BuildError*>(&e)) throw;
      throw BuildError(arch.id + ": layer " + std::to_string(i) + " (" + l.token() + "): " + e.what());
    }
    report.total_trainable += row.trainable;
    report.total_non_trainable += row.non_trainable;
    cur = row.output;
    report.rows.push_back(std::move(row));
  }
  return report;
}

template <typename T>
BasicModel<T> BasicModel<T>::build_uninitialized(const ArchSpec& arch, const Shape& input_shape,
                                                 std::size_t num_classes, std::uint64_t seed) {
  if (arch.layers.empty() || arch.layers.back().kind != LayerKind::dense || arch.layers.back().units != num_classes)
    throw BuildError(arch.id + ": final layer must be fully connected with " + std::to_string(num_classes) + " units");
  const ParameterReport plan = plan_parameters(arch, input_shape);

  BasicModel model;
  model.info_.arch_id = arch.id;
  model.info_.layers = arch.str();
  model.info_.input_shape = input_shape;
  model.info_.num_classes = num_classes;
  model.info_.rng = Rng(seed).record();

  Shape cur = input_shape;
  for (std::size_t i = 0; i < arch.layers.size(); ++i) {
    const LayerSpec& l = arch.layers[i];
    std::unique_ptr<Layer<T>> layer;
    switch (l.kind) {
      case LayerKind::conv2d: layer = std::make_unique<Conv2D<T>>(cur[2], l.conv); break;
      case LayerKind::maxpool2d:
        layer = std::make_unique<MaxPool2D<T>>(l.pool, l.pool, l.pool_stride, l.pool_stride);
        break;
      case LayerKind::dense: layer = std::make_unique<Dense<T>>(cur[0], l.units); break;
      case LayerKind::relu: layer = std::make_unique<ReLU<T>>(); break;
      case LayerKind::batchnorm: layer = std::make_unique<BatchNorm<T>>(cur[cur.rank() - 1]); break;
      case LayerKind::dropout: layer = std::make_unique<Dropout<T>>(l.rate, derive_seed(seed, 0xD409, i)); break;
      case LayerKind::flatten: layer = std::make_unique<Flatten<T>>(); break;
    }
    cur = plan.rows[i].output;
    model.layers_.push_back(std::move(layer));
  }
  return model;
}

template <typename T>
BasicModel<T> BasicModel<T>::build(const ArchSpec& arch, const Shape& input_shape, std::size_t num_classes,
                                   Rng& rng) {
  BasicModel model = build_uninitialized(arch, input_shape, num_classes, rng.seed());
  for (auto& layer : model.layers_) layer->initialize(rng);
  model.info_.rng = rng.record();
  return model;
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward_logits(const BasicTensor<T>& batch, Mode mode) {
  const Shape& s = batch.shape();
  if (s.rank() != 4 || s.tail() != info_.input_shape)
    throw ShapeError("model expects a batch [N," + info_.input_shape.str().substr(1) + ", got " + s.str());
  BasicTensor<T> x = layers_.front()->forward(batch, mode);
  for (std::size_t i = 1; i < layers_.size(); ++i) x = layers_[i]->forward(x, mode);
  forwarded_ = true;
  return x;
}

template <typename T>
BasicTensor<T> BasicModel<T>::forward(const BasicTensor<T>& batch, Mode mode) {
  return softmax(forward_logits(batch, mode));
}

template <typename T>
void BasicModel<T>::backward(const BasicTensor<T>& grad_logits) {
  if (!forwarded_) throw StateError("model backward called without a preceding forward");
  BasicTensor<T> g = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g);
}

template <typename T>
std::vector<Shape> BasicModel<T>::trace_shapes(const BasicTensor<T>& batch) {
  const Shape& s = batch.shape();
  if (s.rank() != 4 || s.tail() != info_.input_shape) throw ShapeError("trace_shapes: batch shape mismatch");
  std::vector<Shape> shapes;
  BasicTensor<T> x = batch;
  for (auto& layer : layers_) {
    x = layer->forward(x, Mode::infer);
    shapes.push_back(x.shape().tail());
  }
  return shapes;
}

template <typename T>
std::vector<Param<T>> BasicModel<T>::params() {
  std::vector<Param<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "%02zu.%s.", i, to_string(layers_[i]->kind()));
    for (auto& p : layers_[i]->params()) {
      p.name = prefix + p.name;
      out.push_back(std::move(p));
    }
  }
  return out;
}

template <typename T>
std::vector<Buffer<T>> BasicModel<T>::buffers() {
  std::vector<Buffer<T>> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "%02zu.%s.", i, to_string(layers_[i]->kind()));
    for (auto& b : layers_[i]->buffers()) {
      b.name = prefix + b.name;
      out.push_back(std::move(b));
    }
  }
  return out;
}

template <typename T>
std::vector<BasicTensor<T>> BasicModel<T>::snapshot() {
  std::vector<BasicTensor<T>> state;
  for (auto& p : params()) state.push_back(*p.value);
  for (auto& b : buffers()) state.push_back(*b.value);
  return state;
}

template <typename T>
void BasicModel<T>::restore(const std::vector<BasicTensor<T>>& state) {
  auto ps = params();
  auto bs = buffers();
  if (state.size() != ps.size() + bs.size()) throw StateError("restore: snapshot does not match model");
  std::size_t i = 0;
  for (auto& p : ps) {
    if (state[i].shape() != p.value->shape()) throw StateError("restore: shape mismatch for " + p.name);
    *p.value = state[i++];
  }
  for (auto& b : bs) {
    if (state[i].shape() != b.value->shape()) throw StateError("restore: shape mismatch for " + b.name);
    *b.value = state[i++];
  }
}

template <typename T>
ParameterReport BasicModel<T>::count_parameters() {
  ParameterReport report = plan_parameters(parse_arch_layers(info_.arch_id, info_.layers), info_.input_shape);
  // Counts from the live tensors; the plan supplies labels and shapes.
  report.total_trainable = report.total_non_trainable = 0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    report.rows[i].trainable = layers_[i]->trainable_count();
    report.rows[i].non_trainable = layers_[i]->non_trainable_count();
    report.total_trainable += report.rows[i].trainable;
    report.total_non_trainable += report.rows[i].non_trainable;
  }
  return report;
}

template <typename T>
void BasicModel<T>::freeze_dropout_masks(bool frozen) {
  for (auto& layer : layers_)
    if (auto* d = dynamic_cast<Dropout<T>*>(layer.get())) d->freeze_mask(frozen);
}

template <typename T>
std::vector<std::size_t> predict_labels(const BasicTensor<T>& probs) {
  if (probs.shape().rank() != 2) throw ShapeError("predict expects [N,K] probabilities");
  const std::size_t n = probs.shape()[0], k = probs.shape()[1];
  std::vector<std::size_t> labels(n);
  for (std::size_t r = 0; r < n; ++r) {
    const T* p = probs.data() + r * k;
    if (k == 2) {
      labels[r] = p[kDamageClass] > T(0.5) ? kDamageClass : kNoDamageClass;
    } else {
      labels[r] = static_cast<std::size_t>(std::max_element(p, p + k) - p);
    }
  }
  return labels;
}

template class BasicModel<float>;
template class BasicModel<double>;
template std::vector<std::size_t> predict_labels(const BasicTensor<float>&);
template std::vector<std::size_t> predict_labels(const BasicTensor<double>&);

}  // namespace stormcnn
