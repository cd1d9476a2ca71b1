#pragma once

#include "graspforge/geom.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace graspforge {

inline constexpr int kHeatmapSize = 64;
/// Image crop (256 px) to heatmap (64 px). Pixel centres sit at integer
/// coordinates in both grids, so u_heatmap = 0.25 u_image.
inline constexpr double kImageToHeatmap = 0.25;

/// C channels of size x size values in [0, 1], row-major per channel.
/// Channel c belongs to keypoint c.
struct HeatmapStack {
  int channels = 0;
  int size = kHeatmapSize;
  double image_to_heatmap = kImageToHeatmap;
  std::vector<double> data;

  HeatmapStack() = default;
  HeatmapStack(int channels, int size = kHeatmapSize, double scale = kImageToHeatmap);

  double& at(int c, int row, int col) { return data[index(c, row, col)]; }
  double at(int c, int row, int col) const { return data[index(c, row, col)]; }
  std::size_t index(int c, int row, int col) const {
    return (static_cast<std::size_t>(c) * size + row) * size + col;
  }
  bool operator==(const HeatmapStack& other) const = default;
};

struct CorruptionSpec {
  double noise_sigma = 0.0;   ///< additive zero-mean Gaussian noise per pixel
  double dropout = 0.0;       ///< probability of zeroing a whole channel
  double jitter_sigma = 0.0;  ///< per-axis peak shift in heatmap pixels
};

struct HeatmapConfig {
  double sigma = 2.0;  ///< Gaussian width in heatmap pixels
  CorruptionSpec corruption;
  std::uint64_t seed = 0;

  /// Throws InvalidParameter for sigma <= 0, negative spreads or a dropout
  /// outside [0, 1].
  void validate() const;
};

/// One Gaussian blob per keypoint. Coordinates are heatmap pixels and may
/// fall outside the grid.
HeatmapStack render_gaussian(std::span<const Vec2> keypoints, const HeatmapConfig& cfg = {});

/// Image pixel coordinates to heatmap coordinates.
inline Vec2 to_heatmap(const Vec2& image_uv, const HeatmapStack& stack) { return image_uv * stack.image_to_heatmap; }

/// Bilinear lookup at heatmap coordinates (u = column, v = row). Anything
/// outside [0, size - 1] on either axis reads 0. Throws BadChannel.
double sample_bilinear(const HeatmapStack& stack, int channel, const Vec2& uv);

/// Seeded jitter (bilinear shift), then channel dropout, then additive noise,
/// clamped to [0, 1].
HeatmapStack corrupt(const HeatmapStack& stack, const HeatmapConfig& cfg);

/// Little-endian "GFHM" file holding one or more stacks (see docs/formats.md).
void write_heatmaps(std::ostream& out, std::span<const HeatmapStack> stacks);
std::vector<HeatmapStack> read_heatmaps(std::istream& in);
void save_heatmaps(const std::filesystem::path& path, std::span<const HeatmapStack> stacks);
std::vector<HeatmapStack> load_heatmaps(const std::filesystem::path& path);

/// Grid of grey-scale channel images.
void write_heatmap_svg(std::ostream& out, const HeatmapStack& stack, int columns = 7, double cell = 3.0);

}  // namespace graspforge
