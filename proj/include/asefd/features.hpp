#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "asefd/ingest.hpp"
#include "asefd/preprocess.hpp"

namespace asefd {

enum Channel : std::size_t { kAx, kAy, kAz, kNorm, kVerti, kHorti };
inline constexpr std::size_t kChannels = 6;
inline constexpr std::size_t kFeatureCount = 54;

struct SixChannelFrame {
  std::array<std::vector<double>, kChannels> channels;
  std::size_t size() const { return channels[0].size(); }
};

/// a_norm = |a|, a_verti = |a_v| on the vertical axis, a_horti = norm of the
/// other two components. The frame must be in physical units.
SixChannelFrame derive_channels(const Frame& frame, Axis vertical_axis);

// Statistics used by the extractor. Conventions: sample (N-1) standard
// deviation; kurtosis m4/m2^2 and skewness m3/m2^1.5 from population central
// moments; a constant channel has kurtosis = skewness = 0 and correlation 0
// with anything.
namespace stats {
double mean(std::span<const double> x);
double sample_std(std::span<const double> x);
double kurtosis(std::span<const double> x);
double skewness(std::span<const double> x);
double pearson(std::span<const double> x, std::span<const double> y);
}  // namespace stats

struct FeatureVector {
  std::array<double, kFeatureCount> values{};

  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }
  double at(const std::string& name) const;
};

/// Feature names in extraction order: mean, std, var, max, min, range,
/// kurtosis, skewness blocks over (ax, ay, az, norm, verti, horti), then
/// correlations of the axis pairs and of the derived pairs.
const std::array<std::string, kFeatureCount>& feature_names();

FeatureVector extract(const SixChannelFrame& scf);

/// derive_channels + extract on a denormalized frame.
FeatureVector frame_features(const Frame& frame, Axis vertical_axis);

struct FeatureRow {
  std::string subject_id;
  Label label = Label::Adl;
  FeatureVector features;
};

void write_feature_csv(const std::filesystem::path& path, std::span<const FeatureRow> rows);
std::vector<FeatureRow> read_feature_csv(const std::filesystem::path& path);

}  // namespace asefd
