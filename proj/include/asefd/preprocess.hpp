#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "asefd/ingest.hpp"

namespace asefd {

inline constexpr int kMaxAlpha = 7;
inline constexpr std::size_t kHrPerAxis = 256;
inline constexpr std::size_t kAxes = 3;
inline constexpr std::size_t kHrValues = kAxes * kHrPerAxis;  // 768

// Per-axis frame length for factor 2^alpha: 256 >> alpha.
std::size_t frame_len(int alpha);
void check_alpha(int alpha);

struct WindowSpec {
  double ws_backward_s = 1.44;
  double ws_forward_s = 2.0;
};

struct NormParams {
  double s_min = 0.0;
  double s_max = 0.0;
  bool operator==(const NormParams&) const = default;
};

/// Fixed-geometry tri-axial window. values holds the three axes back to back
/// (x[0..L), y[0..L), z[0..L)), which is also the 3 x L row-major grid the
/// autoencoder convolves over. norm is set iff the values are min-max scaled.
struct Frame {
  int alpha = 0;
  std::size_t per_axis_len = kHrPerAxis;
  std::vector<double> values;
  std::optional<NormParams> norm;
  double source_rate_hz = 0.0;

  bool normalized() const { return norm.has_value(); }
  std::span<const double> axis(std::size_t a) const {
    return std::span<const double>(values).subspan(a * per_axis_len, per_axis_len);
  }
  bool operator==(const Frame&) const = default;
};

/// Keeps 1-based indices 1 + 2^alpha * n; rate becomes R / 2^alpha.
Trial downsample(const Trial& trial, int alpha);
std::vector<Sample> downsample(std::span<const Sample> samples, int alpha);

/// Index of the first sample with maximal tri-axial norm.
std::size_t impact_index(std::span<const Sample> samples);

/// round(WS_b*R) samples before the impact, the impact, round(WS_f*R) after.
/// Positions outside the trial are zero.
std::vector<Sample> impact_window(const Trial& trial, const WindowSpec& spec);
std::size_t impact_window_len(double rate_hz, const WindowSpec& spec);

/// Linearly resamples each axis of the window to 256 >> alpha points spanning
/// the window's duration.
Frame to_frame(std::span<const Sample> window, int alpha, double source_rate_hz);

Frame minmax_normalize(const Frame& frame);
Frame denormalize(const Frame& frame);

/// Linear resampling of every axis to new_len points; keeps norm params.
Frame resample_frame(const Frame& frame, std::size_t new_len);

/// Nearest-neighbour upsampling of every axis to 256 points; keeps norm params.
Frame upsample_nearest(const Frame& frame);

// Normalized training pair built from one high-rate impact window.
struct FramePair {
  Frame lr;
  Frame hr;
};
FramePair make_frame_pair(std::span<const Sample> hr_window, int alpha, double hr_rate_hz);

// Binary frame record: "ASEF", version, alpha, L, source rate, 3L floats,
// optional min/max. Files may hold any number of consecutive records.
void write_frame(std::ostream& out, const Frame& frame);
std::optional<Frame> read_frame(std::istream& in);  // nullopt at clean EOF
void save_frames(const std::filesystem::path& path, std::span<const Frame> frames);
std::vector<Frame> load_frames(const std::filesystem::path& path);

}  // namespace asefd
