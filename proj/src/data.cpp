#include "scnn/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <string>

namespace scnn {

DepthMap::DepthMap(DepthArray depth) : depth_(std::move(depth)) {
  if (!depth_.isFinite().all()) throw ConfigError("depth map contains non-finite values");
  if ((depth_ < 0.0).any()) throw ConfigError("depth map contains negative depths");
}

void DepthMap::set(Eigen::Index y, Eigen::Index x, double depth) {
  if (!std::isfinite(depth) || depth < 0.0) {
    throw ConfigError("invalid depth " + std::to_string(depth));
  }
  depth_(y, x) = depth;
}

Tensor4 DepthMap::to_tensor() const {
  Tensor4 t(Shape4{1, 1, height(), width()});
  t.plane(0, 0) = depth_.matrix();
  return t;
}

Mask DepthMap::mask() const {
  Tensor4 t(Shape4{1, 1, height(), width()});
  t.plane(0, 0) = (depth_ > 0.0).cast<double>().matrix();
  return Mask(std::move(t));
}

DepthMap DepthMap::from_tensor(const Tensor4& t, Eigen::Index n) {
  if (n < 0 || n >= t.batch() || t.channels() < 1) {
    throw ShapeError("cannot take depth item " + std::to_string(n) + " of " + to_string(t.shape()));
  }
  return DepthMap(DepthArray(t.plane(n, 0).array()));
}

Tensor4 stack_depths(std::span<const DepthMap> maps) {
  if (maps.empty()) throw ShapeError("stack_depths: no maps");
  const Eigen::Index h = maps.front().height(), w = maps.front().width();
  Tensor4 t(Shape4{static_cast<Eigen::Index>(maps.size()), 1, h, w});
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].height() != h || maps[i].width() != w) {
      throw ShapeError("stack_depths: map " + std::to_string(i) + " has a different size");
    }
    t.plane(static_cast<Eigen::Index>(i), 0) = maps[i].depth().matrix();
  }
  return t;
}

Mask stack_masks(std::span<const DepthMap> maps) {
  Tensor4 t = stack_depths(maps);
  return Mask::observed(t);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

void SceneConfig::validate() const {
  if (height < 1 || width < 1) throw ConfigError("scene size must be positive");
  if (!(min_depth > 0.0) || !(max_depth > min_depth)) {
    throw ConfigError("scene depth range must satisfy 0 < min_depth < max_depth");
  }
  if (boxes < 0) throw ConfigError("box count must be non-negative");
}

DepthMap generate_scene(const SceneConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  auto uniform_int = [&](Eigen::Index lo, Eigen::Index hi) {
    return std::uniform_int_distribution<Eigen::Index>(lo, std::max(lo, hi))(rng);
  };
  const Eigen::Index H = cfg.height, W = cfg.width;
  const double span = cfg.max_depth - cfg.min_depth;

  const double backdrop = uniform(cfg.min_depth + 0.5 * span, cfg.max_depth);
  const Eigen::Index horizon = uniform_int(H / 4, H / 2);
  const double near = uniform(cfg.min_depth, std::min(backdrop, cfg.min_depth + 0.08 * span));

  // Ground seen by a level pinhole camera: depth ~ 1 / (row - horizon).
  DepthArray depth(H, W);
  for (Eigen::Index y = 0; y < H; ++y) {
    double d = backdrop;
    if (y > horizon) {
      d = near * static_cast<double>(H - 1 - horizon) / static_cast<double>(y - horizon);
      d = std::min(d, backdrop);
    }
    depth.row(y).setConstant(d);
  }

  for (int b = 0; b < cfg.boxes; ++b) {
    const Eigen::Index bw = uniform_int(std::max<Eigen::Index>(1, W / 10), std::max<Eigen::Index>(1, W / 3));
    const Eigen::Index bh = uniform_int(std::max<Eigen::Index>(1, H / 10), std::max<Eigen::Index>(1, H / 3));
    const Eigen::Index x0 = uniform_int(0, W - bw);
    const Eigen::Index y0 = uniform_int(0, H - bh);
    const double d0 = uniform(cfg.min_depth, cfg.min_depth + 0.5 * span);
    const bool slanted = uniform(0.0, 1.0) < 0.5;
    const double slope = slanted ? uniform(-0.3, 0.3) : 0.0;
    for (Eigen::Index y = y0; y < y0 + bh; ++y)
      for (Eigen::Index x = x0; x < x0 + bw; ++x) {
        const double d = std::clamp(d0 + slope * static_cast<double>(x - x0), cfg.min_depth,
                                    cfg.max_depth);
        depth(y, x) = std::min(depth(y, x), d);
      }
  }
  depth = depth.max(cfg.min_depth).min(cfg.max_depth);
  return DepthMap(std::move(depth));
}

DepthMap sparsify(const DepthMap& d, double keep_prob, std::uint64_t seed) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ConfigError("keep probability must lie in (0, 1], got " + std::to_string(keep_prob));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  DepthArray out = d.depth();
  for (Eigen::Index y = 0; y < d.height(); ++y)
    for (Eigen::Index x = 0; x < d.width(); ++x) {
      // One draw per pixel keeps masks for different inputs aligned under a seed.
      const bool keep = coin(rng) < keep_prob;
      if (!keep) out(y, x) = 0.0;
    }
  return DepthMap(std::move(out));
}

// ---------------------------------------------------------------------------
// PGM

namespace {

constexpr int kPgmMaxval = 65535;

// Reads one unsigned header integer, skipping whitespace and '#' comments.
long read_header_int(std::istream& is, const char* what) {
  int c = is.peek();
  while (c != EOF) {
    if (std::isspace(c)) {
      is.get();
    } else if (c == '#') {
      std::string line;
      std::getline(is, line);
    } else {
      break;
    }
    c = is.peek();
  }
  if (c == EOF) {
    throw FormatError(FormatError::Kind::Truncated, std::string("PGM header truncated before ") + what);
  }
  if (!std::isdigit(c)) {
    throw FormatError(FormatError::Kind::BadHeader, std::string("PGM header: expected ") + what);
  }
  long v = 0;
  while (std::isdigit(is.peek())) {
    v = v * 10 + (is.get() - '0');
    if (v > 1'000'000'000L) throw FormatError(FormatError::Kind::BadHeader, "PGM header value too large");
  }
  return v;
}

}  // namespace

void write_depth_pgm(const DepthMap& d, std::ostream& os) {
  os << "P5\n" << d.width() << " " << d.height() << "\n" << kPgmMaxval << "\n";
  std::string payload;
  payload.reserve(static_cast<std::size_t>(d.size()) * 2);
  for (Eigen::Index y = 0; y < d.height(); ++y)
    for (Eigen::Index x = 0; x < d.width(); ++x) {
      const double v = d(y, x);
      long sample = std::lround(v * kPgmScale);
      if (sample > kPgmMaxval) {
        throw ConfigError("depth " + std::to_string(v) + " m exceeds the 16-bit PGM range");
      }
      // Observations closer than half a quantization step keep the smallest
      // nonzero code so the mask survives the round trip.
      if (v > 0.0 && sample == 0) sample = 1;
      payload.push_back(static_cast<char>((sample >> 8) & 0xff));
      payload.push_back(static_cast<char>(sample & 0xff));
    }
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) throw IoError("failed writing PGM payload");
}

DepthMap read_depth_pgm(std::istream& is) {
  char magic[2] = {0, 0};
  is.read(magic, 2);
  if (is.gcount() != 2 || magic[0] != 'P' || magic[1] != '5') {
    throw FormatError(FormatError::Kind::BadMagic, "not a binary PGM (expected P5)");
  }
  const long width = read_header_int(is, "width");
  const long height = read_header_int(is, "height");
  const long maxval = read_header_int(is, "maxval");
  if (maxval != kPgmMaxval) {
    throw FormatError(FormatError::Kind::WrongMaxval,
                      "PGM maxval " + std::to_string(maxval) + ", expected 65535");
  }
  if (width <= 0 || height <= 0) throw FormatError(FormatError::Kind::BadHeader, "PGM has empty extent");
  if (!std::isspace(is.get())) {
    throw FormatError(FormatError::Kind::BadHeader, "PGM header not terminated by whitespace");
  }
  const std::size_t bytes = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 2;
  std::string payload(bytes, '\0');
  is.read(payload.data(), static_cast<std::streamsize>(bytes));
  if (static_cast<std::size_t>(is.gcount()) != bytes) {
    throw FormatError(FormatError::Kind::Truncated,
                      "PGM payload truncated: " + std::to_string(is.gcount()) + " of " +
                          std::to_string(bytes) + " bytes");
  }
  DepthArray depth(height, width);
  for (long i = 0; i < width * height; ++i) {
    const auto hi = static_cast<unsigned char>(payload[2 * i]);
    const auto lo = static_cast<unsigned char>(payload[2 * i + 1]);
    depth(i / width, i % width) = static_cast<double>((hi << 8) | lo) / kPgmScale;
  }
  return DepthMap(std::move(depth));
}

void write_depth_pgm(const DepthMap& d, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_depth_pgm(d, os);
}

DepthMap read_depth_pgm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_depth_pgm(is);
}

}  // namespace scnn
