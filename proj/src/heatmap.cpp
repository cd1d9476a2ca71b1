#include "graspforge/heatmap.hpp"

#include "graspforge/error.hpp"
#include "graspforge/sample.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

namespace graspforge {

static_assert(std::endian::native == std::endian::little, "GFHM I/O assumes a little-endian host");

HeatmapStack::HeatmapStack(int c, int s, double scale) : channels(c), size(s), image_to_heatmap(scale) {
  if (c < 0 || s < 1) throw InvalidParameter("heatmap needs nonnegative channels and a positive size");
  data.assign(static_cast<std::size_t>(c) * s * s, 0.0);
}

void HeatmapConfig::validate() const {
  if (!(sigma > 0.0)) throw InvalidParameter("heatmap sigma must be positive");
  if (corruption.noise_sigma < 0.0 || corruption.jitter_sigma < 0.0)
    throw InvalidParameter("corruption spreads must be nonnegative");
  if (!(corruption.dropout >= 0.0 && corruption.dropout <= 1.0))
    throw InvalidParameter("dropout probability must lie in [0, 1]");
}

HeatmapStack render_gaussian(std::span<const Vec2> keypoints, const HeatmapConfig& cfg) {
  cfg.validate();
  HeatmapStack stack(static_cast<int>(keypoints.size()));
  const double inv = 1.0 / (2.0 * cfg.sigma * cfg.sigma);
  for (int c = 0; c < stack.channels; ++c) {
    const Vec2& k = keypoints[c];
    if (!k.allFinite()) throw InvalidParameter("keypoint " + std::to_string(c) + " is not finite");
    for (int r = 0; r < stack.size; ++r)
      for (int col = 0; col < stack.size; ++col) {
        const double du = col - k.x(), dv = r - k.y();
        stack.at(c, r, col) = std::exp(-(du * du + dv * dv) * inv);
      }
  }
  return stack;
}

double sample_bilinear(const HeatmapStack& stack, int channel, const Vec2& uv) {
  if (channel < 0 || channel >= stack.channels)
    throw BadChannel("channel " + std::to_string(channel) + " of " + std::to_string(stack.channels));
  const double u = uv.x(), v = uv.y();
  const double last = stack.size - 1;
  if (!(u >= 0.0 && u <= last && v >= 0.0 && v <= last)) return 0.0;
  if (stack.size == 1) return stack.at(channel, 0, 0);
  const int c0 = std::min(static_cast<int>(u), stack.size - 2);
  const int r0 = std::min(static_cast<int>(v), stack.size - 2);
  const double a = u - c0, b = v - r0;
  return (1 - a) * (1 - b) * stack.at(channel, r0, c0) + a * (1 - b) * stack.at(channel, r0, c0 + 1) +
         (1 - a) * b * stack.at(channel, r0 + 1, c0) + a * b * stack.at(channel, r0 + 1, c0 + 1);
}

HeatmapStack corrupt(const HeatmapStack& stack, const HeatmapConfig& cfg) {
  cfg.validate();
  const auto& spec = cfg.corruption;
  HeatmapStack out = stack;
  for (int c = 0; c < stack.channels; ++c) {
    std::mt19937_64 rng(substream_seed(cfg.seed, "heatmap-corrupt", static_cast<std::uint64_t>(c)));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    // draws happen in a fixed order whatever the settings, so enabling one
    // corruption does not reshuffle another
    const double du = spec.jitter_sigma * normal(rng);
    const double dv = spec.jitter_sigma * normal(rng);
    const bool drop = unit(rng) < spec.dropout;
    if (du != 0.0 || dv != 0.0)
      for (int r = 0; r < stack.size; ++r)
        for (int col = 0; col < stack.size; ++col)
          out.at(c, r, col) = sample_bilinear(stack, c, Vec2(col - du, r - dv));
    for (int r = 0; r < stack.size; ++r)
      for (int col = 0; col < stack.size; ++col) {
        double& value = out.at(c, r, col);
        if (drop) value = 0.0;
        if (spec.noise_sigma > 0.0) value += spec.noise_sigma * normal(rng);
        value = std::clamp(value, 0.0, 1.0);
      }
  }
  return out;
}

namespace {

constexpr char kMagic[4] = {'G', 'F', 'H', 'M'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError("heatmap file is truncated");
  return v;
}

}  // namespace

void write_heatmaps(std::ostream& out, std::span<const HeatmapStack> stacks) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(stacks.size()));
  for (const auto& s : stacks) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.channels));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size));
    put<double>(out, s.image_to_heatmap);
    out.write(reinterpret_cast<const char*>(s.data.data()), static_cast<std::streamsize>(s.data.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing heatmaps");
}

std::vector<HeatmapStack> read_heatmaps(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw ParseError("not a GFHM heatmap file");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw VersionError("GFHM version " + std::to_string(version) + " is not supported");
  const auto count = get<std::uint32_t>(in);
  std::vector<HeatmapStack> stacks;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto channels = get<std::uint32_t>(in);
    const auto size = get<std::uint32_t>(in);
    const auto scale = get<double>(in);
    if (channels > 4096 || size == 0 || size > 4096) throw ParseError("implausible heatmap dimensions");
    HeatmapStack s(static_cast<int>(channels), static_cast<int>(size), scale);
    if (!in.read(reinterpret_cast<char*>(s.data.data()), static_cast<std::streamsize>(s.data.size() * sizeof(double))))
      throw ParseError("heatmap file is truncated");
    stacks.push_back(std::move(s));
  }
  return stacks;
}

void save_heatmaps(const std::filesystem::path& path, std::span<const HeatmapStack> stacks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write heatmaps '" + path.string() + "'");
  write_heatmaps(out, stacks);
}

std::vector<HeatmapStack> load_heatmaps(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open heatmaps '" + path.string() + "'");
  try {
    return read_heatmaps(in);
  } catch (const ParseError& e) {
    const std::string what = e.what();
    throw ParseError(path.string() + ": " + what.substr(what.find(": ") + 2));
  }
}

void write_heatmap_svg(std::ostream& out, const HeatmapStack& stack, int columns, double cell) {
  columns = std::max(1, columns);
  const int rows = (stack.channels + columns - 1) / columns;
  const double tile = stack.size * cell + 8.0;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << columns * tile << "\" height=\"" << rows * tile
      << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"black\"/>\n";
  for (int c = 0; c < stack.channels; ++c) {
    const double ox = (c % columns) * tile + 4.0, oy = (c / columns) * tile + 4.0;
    out << "<g><title>channel " << c << "</title>\n";
    for (int r = 0; r < stack.size; ++r)
      for (int col = 0; col < stack.size; ++col) {
        const int g = static_cast<int>(std::lround(255.0 * std::clamp(stack.at(c, r, col), 0.0, 1.0)));
        if (g == 0) continue;
        out << "<rect x=\"" << ox + col * cell << "\" y=\"" << oy + r * cell << "\" width=\"" << cell
            << "\" height=\"" << cell << "\" fill=\"rgb(" << g << ',' << g << ',' << g << ")\"/>\n";
      }
    out << "</g>\n";
  }
  out << "</svg>\n";
}

}  // namespace graspforge
