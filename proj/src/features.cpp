#include "asefd/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "asefd/error.hpp"

namespace asefd {

SixChannelFrame derive_channels(const Frame& frame, Axis vertical_axis) {
  if (frame.normalized()) {
    throw Error(Errc::InvalidArgument, "features need a denormalized frame");
  }
  const std::size_t n = frame.per_axis_len;
  const auto x = frame.axis(0), y = frame.axis(1), z = frame.axis(2);
  const std::size_t v = static_cast<std::size_t>(vertical_axis);

  SixChannelFrame out;
  for (auto& c : out.channels) c.resize(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double a[3] = {x[j], y[j], z[j]};
    out.channels[kAx][j] = a[0];
    out.channels[kAy][j] = a[1];
    out.channels[kAz][j] = a[2];
    out.channels[kNorm][j] = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
    out.channels[kVerti][j] = std::abs(a[v]);
    const double h1 = a[(v + 1) % 3], h2 = a[(v + 2) % 3];
    out.channels[kHorti][j] = std::sqrt(h1 * h1 + h2 * h2);
  }
  return out;
}

namespace stats {

namespace {

bool is_constant(std::span<const double> x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *lo == *hi;
}

// Population central moments m2, m3, m4.
std::array<double, 3> central_moments(std::span<const double> x) {
  const double mu = mean(x);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mu;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
  }
  const double n = static_cast<double>(x.size());
  return {m2 / n, m3 / n, m4 / n};
}

}  // namespace

double mean(std::span<const double> x) {
  if (is_constant(x)) return x[0];
  double sum = 0.0;
  for (double v : x) sum += v;
  return sum / static_cast<double>(x.size());
}

double sample_std(std::span<const double> x) {
  if (x.size() < 2 || is_constant(x)) return 0.0;
  const double mu = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - mu) * (v - mu);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

double kurtosis(std::span<const double> x) {
  if (is_constant(x)) return 0.0;
  const auto [m2, m3, m4] = central_moments(x);
  return m4 / (m2 * m2);
}

double skewness(std::span<const double> x) {
  if (is_constant(x)) return 0.0;
  const auto [m2, m3, m4] = central_moments(x);
  return m3 / std::pow(m2, 1.5);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (is_constant(x) || is_constant(y)) return 0.0;
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace stats

const std::array<std::string, kFeatureCount>& feature_names() {
  static const auto names = [] {
    std::array<std::string, kFeatureCount> n;
    const char* channels[kChannels] = {"ax", "ay", "az", "norm", "verti", "horti"};
    const char* blocks[8] = {"mean", "std", "var", "max", "min", "range", "kurtosis", "skewness"};
    std::size_t k = 0;
    for (const char* b : blocks) {
      for (const char* c : channels) n[k++] = std::string(b) + "_" + c;
    }
    for (const char* pair : {"ax_ay", "ax_az", "ay_az", "norm_verti", "norm_horti", "verti_horti"}) {
      n[k++] = std::string("corr_") + pair;
    }
    return n;
  }();
  return names;
}

double FeatureVector::at(const std::string& name) const {
  const auto& names = feature_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error(Errc::InvalidArgument, "unknown feature '" + name + "'");
  return values[static_cast<std::size_t>(it - names.begin())];
}

FeatureVector extract(const SixChannelFrame& scf) {
  const std::size_t n = scf.size();
  if (n < 2) throw Error(Errc::TooFewSamples, "feature extraction needs at least two samples");

  FeatureVector f;
  for (std::size_t c = 0; c < kChannels; ++c) {
    const std::span<const double> x = scf.channels[c];
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    const double sd = stats::sample_std(x);
    f[0 * kChannels + c] = stats::mean(x);
    f[1 * kChannels + c] = sd;
    f[2 * kChannels + c] = sd * sd;
    f[3 * kChannels + c] = *hi;
    f[4 * kChannels + c] = *lo;
    f[5 * kChannels + c] = *hi - *lo;
    f[6 * kChannels + c] = stats::kurtosis(x);
    f[7 * kChannels + c] = stats::skewness(x);
  }
  constexpr std::size_t pairs[6][2] = {{kAx, kAy}, {kAx, kAz}, {kAy, kAz},
                                       {kNorm, kVerti}, {kNorm, kHorti}, {kVerti, kHorti}};
  for (std::size_t p = 0; p < 6; ++p) {
    f[48 + p] = stats::pearson(scf.channels[pairs[p][0]], scf.channels[pairs[p][1]]);
  }
  return f;
}

FeatureVector frame_features(const Frame& frame, Axis vertical_axis) {
  return extract(derive_channels(frame, vertical_axis));
}

void write_feature_csv(const std::filesystem::path& path, std::span<const FeatureRow> rows) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + path.string());
  out << "subject_id,label";
  for (const auto& name : feature_names()) out << ',' << name;
  out << '\n';
  out.precision(17);
  for (const auto& row : rows) {
    out << row.subject_id << ',' << to_string(row.label);
    for (double v : row.features.values) out << ',' << v;
    out << '\n';
  }
}

std::vector<FeatureRow> read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::EmptyFile, "empty feature file " + path.string());
  std::vector<FeatureRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    FeatureRow row;
    std::getline(ss, row.subject_id, ',');
    std::getline(ss, cell, ',');
    row.label = parse_label(cell);
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      if (!std::getline(ss, cell, ',')) {
        throw Error(Errc::MalformedRow, path.string() + ":" + std::to_string(line_no) + ": too few columns");
      }
      try {
        row.features[k] = std::stod(cell);
      } catch (const std::exception&) {
        throw Error(Errc::MalformedRow, path.string() + ":" + std::to_string(line_no) + ": bad value '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace asefd
