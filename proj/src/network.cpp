#include "scnn/network.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

namespace scnn {

namespace {

bool is_dense(Variant v) { return v != Variant::SparseConvNet; }

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::SparseConvNet: return "SparseConvNet";
    case Variant::ConvNet: return "ConvNet";
    case Variant::ConvNetPlusMask: return "ConvNetPlusMask";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  if (name == "SparseConvNet" || name == "sparse") return Variant::SparseConvNet;
  if (name == "ConvNet" || name == "conv") return Variant::ConvNet;
  if (name == "ConvNetPlusMask" || name == "conv_mask") return Variant::ConvNetPlusMask;
  throw ConfigError("unknown network variant '" + std::string(name) + "'");
}

void NetworkSpec::validate() const {
  if (kernel_sizes.empty()) throw ConfigError("network needs at least one hidden layer");
  for (int ks : kernel_sizes) {
    if (ks < 1 || ks % 2 == 0) {
      throw ConfigError("kernel size " + std::to_string(ks) + " must be odd and positive");
    }
  }
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (out_channels < 1) throw ConfigError("out_channels must be >= 1");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
}

int NetworkSpec::input_channels() const { return variant == Variant::ConvNetPlusMask ? 2 : 1; }

Eigen::Index ModelState::parameter_count() const {
  Eigen::Index total = 0;
  for (const auto& p : layers) total += p.parameter_count();
  return total;
}

void ModelState::validate() const {
  if (layers.empty()) throw ShapeError("model has no layers");
  const Eigen::Index expect_in = variant == Variant::ConvNetPlusMask ? 2 : 1;
  if (layers.front().in_channels() != expect_in) {
    throw ShapeError("first layer takes " + std::to_string(layers.front().in_channels()) +
                     " channels, variant " + std::string(to_string(variant)) + " feeds " +
                     std::to_string(expect_in));
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    if (i > 0 && layers[i].in_channels() != layers[i - 1].out_channels()) {
      throw ShapeError("layer " + std::to_string(i) + " takes " +
                       std::to_string(layers[i].in_channels()) + " channels but layer " +
                       std::to_string(i - 1) + " produces " +
                       std::to_string(layers[i - 1].out_channels()));
    }
  }
}

ModelState build(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  ModelState model;
  model.variant = spec.variant;
  model.epsilon = spec.epsilon;
  model.seed = seed;

  std::mt19937_64 rng(seed);
  auto make = [&](Eigen::Index in, Eigen::Index out, int ks) {
    ConvParams p = ConvParams::zeros(out, in, ks / 2);
    const double bound = std::sqrt(6.0 / static_cast<double>(in * ks * ks));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights.array()[i] = dist(rng);
    return p;
  };

  Eigen::Index in = spec.input_channels();
  for (int ks : spec.kernel_sizes) {
    model.layers.push_back(make(in, spec.channels, ks));
    in = spec.channels;
  }
  model.layers.push_back(make(in, spec.out_channels, 1));
  return model;
}

namespace {

void require_input(const ModelState& model, const Tensor4& depth, const Mask& mask) {
  if (depth.channels() != 1) {
    throw ShapeError("network input depth must have 1 channel, got " + to_string(depth.shape()));
  }
  mask.require_aligned(depth, "network forward");
  if (model.layers.empty()) throw ShapeError("model has no layers");
}

template <typename OnLayer>
MaskedTensor run_forward(const ModelState& model, const Tensor4& depth, const Mask& mask,
                         OnLayer&& on_layer) {
  require_input(model, depth, mask);
  Tensor4 x = model.variant == Variant::ConvNetPlusMask ? concat_channels(depth, mask.tensor())
                                                        : depth;
  Mask m = mask;
  const std::size_t last = model.layers.size() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    const ConvParams& p = model.layers[l];
    Tensor4 z;
    Mask next;
    if (is_dense(model.variant)) {
      z = conv2d_forward(x, p);
      next = m;
    } else {
      auto out = sparse_conv2d_forward(x, m, p, model.epsilon);
      z = std::move(out.values);
      next = std::move(out.mask);
    }
    Tensor4 y = l < last ? relu_forward(z) : z;
    on_layer(std::move(x), std::move(m), std::move(z));
    x = std::move(y);
    m = std::move(next);
  }
  if (is_dense(model.variant)) m = Mask::ones(m.shape());
  return {std::move(x), std::move(m)};
}

}  // namespace

ForwardResult forward(const ModelState& model, const Tensor4& depth, const Mask& mask) {
  ForwardCache cache;
  cache.input_shape = depth.shape();
  auto out = run_forward(model, depth, mask, [&](Tensor4 x, Mask m, Tensor4 z) {
    cache.layers.push_back({std::move(x), std::move(m), std::move(z)});
  });
  return {std::move(out.values), std::move(out.mask), std::move(cache)};
}

MaskedTensor predict(const ModelState& model, const Tensor4& depth, const Mask& mask) {
  return run_forward(model, depth, mask, [](Tensor4, Mask, Tensor4) {});
}

ModelGrads backward(const ModelState& model, const ForwardCache& cache,
                    const Tensor4& d_prediction) {
  if (cache.layers.size() != model.layers.size()) {
    throw ShapeError("forward cache holds " + std::to_string(cache.layers.size()) +
                     " layers, model has " + std::to_string(model.layers.size()));
  }
  const Shape4 expect{cache.input_shape.n, model.layers.back().out_channels(),
                      cache.input_shape.h, cache.input_shape.w};
  if (!(d_prediction.shape() == expect)) {
    throw ShapeError("prediction gradient " + to_string(d_prediction.shape()) +
                     " does not match prediction " + to_string(expect));
  }
  ModelGrads grads(model.layers.size());
  Tensor4 g = d_prediction;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const LayerCache& c = cache.layers[l];
    if (l + 1 < model.layers.size()) g = relu_backward(c.pre_activation, g);
    LayerGrads lg = is_dense(model.variant)
                        ? conv2d_backward(c.input, model.layers[l], g)
                        : sparse_conv2d_backward(c.input, c.mask, model.layers[l], model.epsilon, g);
    grads[l] = {std::move(lg.d_weights), std::move(lg.d_bias)};
    g = std::move(lg.d_input);
  }
  return grads;
}

void require_compatible(const ModelState& model, const NetworkSpec& spec) {
  if (model.variant != spec.variant) {
    throw ShapeError("checkpoint holds a " + std::string(to_string(model.variant)) +
                     ", spec asks for " + std::string(to_string(spec.variant)));
  }
  const ModelState reference = build(spec, 0);
  if (reference.layers.size() != model.layers.size()) {
    throw ShapeError("checkpoint has " + std::to_string(model.layers.size()) +
                     " layers, spec implies " + std::to_string(reference.layers.size()));
  }
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (!(reference.layers[i].weights.shape() == model.layers[i].weights.shape())) {
      throw ShapeError("layer " + std::to_string(i) + " weights " +
                       to_string(model.layers[i].weights.shape()) + ", spec implies " +
                       to_string(reference.layers[i].weights.shape()));
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::array<char, 4> kMagic{'S', 'C', 'N', 'N'};
constexpr std::uint8_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), b.size());
}

void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), b.size());
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void bytes(char* dst, std::size_t n, const char* what) {
    is_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw FormatError(FormatError::Kind::Truncated,
                        std::string("checkpoint truncated while reading ") + what);
    }
  }
  std::uint8_t u8(const char* what) {
    char c;
    bytes(&c, 1, what);
    return static_cast<std::uint8_t>(c);
  }
  std::uint32_t u32(const char* what) {
    std::array<unsigned char, 4> b;
    bytes(reinterpret_cast<char*>(b.data()), 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
  }
  double f64(const char* what) {
    std::array<unsigned char, 8> b;
    bytes(reinterpret_cast<char*>(b.data()), 8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  std::istream& is_;
};

}  // namespace

void write_checkpoint(const ModelState& model, std::ostream& os) {
  model.validate();
  os.write(kMagic.data(), kMagic.size());
  os.put(static_cast<char>(kVersion));
  os.put(static_cast<char>(model.variant));
  put_u32(os, static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& p : model.layers) {
    put_u32(os, static_cast<std::uint32_t>(p.k));
    put_u32(os, static_cast<std::uint32_t>(p.in_channels()));
    put_u32(os, static_cast<std::uint32_t>(p.out_channels()));
  }
  for (const auto& p : model.layers) {
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) put_f64(os, p.weights.array()[i]);
    for (Eigen::Index i = 0; i < p.bias.size(); ++i) put_f64(os, p.bias[i]);
  }
  if (!os) throw IoError("failed writing checkpoint");
}

ModelState read_checkpoint(std::istream& is) {
  Reader r(is);
  std::array<char, 4> magic;
  r.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw FormatError(FormatError::Kind::BadMagic, "not a checkpoint: bad magic");
  const std::uint8_t version = r.u8("version");
  if (version != kVersion) {
    throw FormatError(FormatError::Kind::BadVersion,
                      "unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint8_t tag = r.u8("variant");
  if (tag > static_cast<std::uint8_t>(Variant::ConvNetPlusMask)) {
    throw FormatError(FormatError::Kind::Inconsistent,
                      "unknown variant tag " + std::to_string(tag));
  }
  ModelState model;
  model.variant = static_cast<Variant>(tag);
  const std::uint32_t count = r.u32("layer count");
  if (count == 0 || count > 1024) {
    throw FormatError(FormatError::Kind::Inconsistent,
                      "implausible layer count " + std::to_string(count));
  }
  struct Row {
    std::uint32_t k, in, out;
  };
  std::vector<Row> table(count);
  for (auto& row : table) {
    row.k = r.u32("layer table");
    row.in = r.u32("layer table");
    row.out = r.u32("layer table");
    if (row.k > 512 || row.in == 0 || row.out == 0 || row.in > 65536 || row.out > 65536) {
      throw FormatError(FormatError::Kind::Inconsistent, "implausible layer table entry");
    }
  }
  const std::uint32_t inputs = model.variant == Variant::ConvNetPlusMask ? 2 : 1;
  if (table.front().in != inputs) {
    throw FormatError(FormatError::Kind::Inconsistent,
                      "first layer takes " + std::to_string(table.front().in) + " channels, " +
                          std::string(to_string(model.variant)) + " feeds " + std::to_string(inputs));
  }
  for (std::size_t i = 1; i < table.size(); ++i) {
    if (table[i].in != table[i - 1].out) {
      throw FormatError(FormatError::Kind::Inconsistent,
                        "layer table broken at layer " + std::to_string(i));
    }
  }
  for (const auto& row : table) {
    ConvParams p = ConvParams::zeros(row.out, row.in, static_cast<int>(row.k));
    for (Eigen::Index i = 0; i < p.weights.size(); ++i) p.weights.array()[i] = r.f64("weights");
    for (Eigen::Index i = 0; i < p.bias.size(); ++i) p.bias[i] = r.f64("bias");
    model.layers.push_back(std::move(p));
  }
  if (!r.at_end()) {
    throw FormatError(FormatError::Kind::Inconsistent, "trailing bytes after checkpoint payload");
  }
  try {
    model.validate();
  } catch (const ShapeError& e) {
    throw FormatError(FormatError::Kind::Inconsistent, e.what());
  } catch (const ConfigError& e) {
    throw FormatError(FormatError::Kind::Inconsistent, e.what());
  }
  return model;
}

void save(const ModelState& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(model, os);
}

ModelState load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_checkpoint(is);
}

}  // namespace scnn
