#include "asefd/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "asefd/binio.hpp"
#include "asefd/error.hpp"

namespace asefd {

namespace {
constexpr std::uint8_t kFrameVersion = 1;
}

void check_alpha(int alpha) {
  if (alpha < 0 || alpha > kMaxAlpha) {
    throw Error(Errc::OutOfRange, "alpha must be within [0, 7], got " + std::to_string(alpha));
  }
}

std::size_t frame_len(int alpha) {
  check_alpha(alpha);
  return kHrPerAxis >> alpha;
}

std::vector<Sample> downsample(std::span<const Sample> samples, int alpha) {
  check_alpha(alpha);
  const std::size_t step = std::size_t{1} << alpha;
  std::vector<Sample> out;
  out.reserve(samples.empty() ? 0 : (samples.size() - 1) / step + 1);
  for (std::size_t k = 0; k < samples.size(); k += step) out.push_back(samples[k]);
  return out;
}

Trial downsample(const Trial& trial, int alpha) {
  if (trial.samples.empty()) throw Error(Errc::TooFewSamples, "cannot downsample an empty trial");
  Trial out = trial;
  out.samples = downsample(trial.samples, alpha);
  out.rate_hz = trial.rate_hz / static_cast<double>(std::size_t{1} << alpha);
  return out;
}

std::size_t impact_index(std::span<const Sample> samples) {
  if (samples.empty()) throw Error(Errc::TooFewSamples, "empty trial has no impact");
  std::size_t best = 0;
  double best_norm = samples[0].norm();
  for (std::size_t j = 1; j < samples.size(); ++j) {
    const double n = samples[j].norm();
    if (n > best_norm) {
      best_norm = n;
      best = j;
    }
  }
  return best;
}

namespace {

std::size_t span_samples(double seconds, double rate_hz) {
  return static_cast<std::size_t>(std::llround(seconds * rate_hz));
}

}  // namespace

std::size_t impact_window_len(double rate_hz, const WindowSpec& spec) {
  return span_samples(spec.ws_backward_s, rate_hz) + 1 + span_samples(spec.ws_forward_s, rate_hz);
}

std::vector<Sample> impact_window(const Trial& trial, const WindowSpec& spec) {
  if (!(spec.ws_backward_s > 0.0) || !(spec.ws_forward_s > 0.0)) {
    throw Error(Errc::InvalidArgument, "window sizes must be positive");
  }
  const std::size_t impact = impact_index(trial.samples);
  const auto back = static_cast<std::ptrdiff_t>(span_samples(spec.ws_backward_s, trial.rate_hz));
  const auto fwd = static_cast<std::ptrdiff_t>(span_samples(spec.ws_forward_s, trial.rate_hz));
  const auto n = static_cast<std::ptrdiff_t>(trial.samples.size());

  std::vector<Sample> window;
  window.reserve(static_cast<std::size_t>(back + 1 + fwd));
  for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(impact) - back;
       j <= static_cast<std::ptrdiff_t>(impact) + fwd; ++j) {
    window.push_back(j >= 0 && j < n ? trial.samples[static_cast<std::size_t>(j)] : Sample{});
  }
  return window;
}

namespace {

// Linear interpolation of src (length >= 1) at dst_len evenly spaced positions
// covering the same span.
void resample_linear(std::span<const double> src, std::span<double> dst) {
  const std::size_t n = src.size();
  const std::size_t m = dst.size();
  if (n == 1 || m == 1) {
    std::fill(dst.begin(), dst.end(), src[0]);
    return;
  }
  if (n == m) {
    std::copy(src.begin(), src.end(), dst.begin());
    return;
  }
  const double scale = static_cast<double>(n - 1) / static_cast<double>(m - 1);
  for (std::size_t i = 0; i < m; ++i) {
    const double pos = static_cast<double>(i) * scale;
    auto lo = static_cast<std::size_t>(std::floor(pos));
    if (lo >= n - 1) {
      dst[i] = src[n - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(lo);
    dst[i] = frac == 0.0 ? src[lo] : src[lo] + frac * (src[lo + 1] - src[lo]);
  }
}

}  // namespace

Frame to_frame(std::span<const Sample> window, int alpha, double source_rate_hz) {
  const std::size_t len = frame_len(alpha);
  if (window.empty()) throw Error(Errc::TooFewSamples, "empty window");

  Frame frame;
  frame.alpha = alpha;
  frame.per_axis_len = len;
  frame.source_rate_hz = source_rate_hz;
  frame.values.resize(kAxes * len);

  std::vector<double> axis(window.size());
  for (std::size_t a = 0; a < kAxes; ++a) {
    for (std::size_t j = 0; j < window.size(); ++j) {
      axis[j] = a == 0 ? window[j].ax : a == 1 ? window[j].ay : window[j].az;
    }
    resample_linear(axis, std::span<double>(frame.values).subspan(a * len, len));
  }
  return frame;
}

Frame minmax_normalize(const Frame& frame) {
  if (frame.normalized()) throw Error(Errc::InvalidArgument, "frame is already normalized");
  if (frame.values.empty()) throw Error(Errc::TooFewSamples, "empty frame");
  const auto [lo, hi] = std::minmax_element(frame.values.begin(), frame.values.end());
  const NormParams params{*lo, *hi};

  Frame out = frame;
  out.norm = params;
  const double range = params.s_max - params.s_min;
  for (double& v : out.values) {
    v = range > 0.0 ? std::clamp((v - params.s_min) / range, 0.0, 1.0) : 0.0;
  }
  return out;
}

Frame denormalize(const Frame& frame) {
  if (!frame.norm) throw Error(Errc::MissingNormParams, "frame carries no normalization parameters");
  const auto [s_min, s_max] = *frame.norm;
  Frame out = frame;
  out.norm.reset();
  for (double& v : out.values) v = v * (s_max - s_min) + s_min;
  return out;
}

Frame resample_frame(const Frame& frame, std::size_t new_len) {
  if (new_len == 0) throw Error(Errc::InvalidArgument, "resample length must be positive");
  Frame out = frame;
  out.per_axis_len = new_len;
  out.values.assign(kAxes * new_len, 0.0);
  for (std::size_t a = 0; a < kAxes; ++a) {
    resample_linear(frame.axis(a), std::span<double>(out.values).subspan(a * new_len, new_len));
  }
  // A resampled frame no longer sits on a dyadic grid of its own rate; tag it
  // by length and leave the rate describing the original capture.
  int alpha = 0;
  while (alpha < kMaxAlpha && (kHrPerAxis >> alpha) > new_len) ++alpha;
  out.alpha = (kHrPerAxis >> alpha) == new_len ? alpha : frame.alpha;
  return out;
}

Frame upsample_nearest(const Frame& frame) {
  Frame out = frame;
  out.alpha = 0;
  out.per_axis_len = kHrPerAxis;
  out.values.assign(kHrValues, 0.0);
  const std::size_t n = frame.per_axis_len;
  const double scale = n > 1 ? static_cast<double>(n - 1) / static_cast<double>(kHrPerAxis - 1) : 0.0;
  for (std::size_t a = 0; a < kAxes; ++a) {
    const auto src = frame.axis(a);
    for (std::size_t i = 0; i < kHrPerAxis; ++i) {
      const auto j = std::min(n - 1, static_cast<std::size_t>(std::llround(static_cast<double>(i) * scale)));
      out.values[a * kHrPerAxis + i] = src[j];
    }
  }
  return out;
}

FramePair make_frame_pair(std::span<const Sample> hr_window, int alpha, double hr_rate_hz) {
  const auto lr_window = downsample(hr_window, alpha);
  const double lr_rate = hr_rate_hz / static_cast<double>(std::size_t{1} << alpha);
  return {minmax_normalize(to_frame(lr_window, alpha, lr_rate)),
          minmax_normalize(to_frame(hr_window, 0, hr_rate_hz))};
}

// ---------------------------------------------------------------------------

void write_frame(std::ostream& out, const Frame& frame) {
  binio::put_magic(out, "ASEF");
  binio::put_u8(out, kFrameVersion);
  binio::put_u8(out, static_cast<std::uint8_t>(frame.alpha));
  binio::put_u32(out, static_cast<std::uint32_t>(frame.per_axis_len));
  binio::put_f32(out, static_cast<float>(frame.source_rate_hz));
  for (double v : frame.values) binio::put_f32(out, static_cast<float>(v));
  binio::put_u8(out, frame.norm ? 1 : 0);
  if (frame.norm) {
    binio::put_f32(out, static_cast<float>(frame.norm->s_min));
    binio::put_f32(out, static_cast<float>(frame.norm->s_max));
  }
}

std::optional<Frame> read_frame(std::istream& in) {
  if (in.peek() == std::char_traits<char>::eof()) return std::nullopt;
  binio::expect_magic(in, "ASEF");
  const auto version = binio::get_u8(in);
  if (version != kFrameVersion) throw Error(Errc::BadFormat, "unsupported frame version " + std::to_string(version));
  Frame frame;
  frame.alpha = binio::get_u8(in);
  frame.per_axis_len = binio::get_u32(in);
  if (frame.alpha > kMaxAlpha || frame.per_axis_len == 0 || frame.per_axis_len > (1u << 20)) {
    throw Error(Errc::BadFormat, "implausible frame geometry");
  }
  frame.source_rate_hz = binio::get_f32(in);
  frame.values.resize(kAxes * frame.per_axis_len);
  for (double& v : frame.values) v = binio::get_f32(in);
  if (binio::get_u8(in) != 0) {
    NormParams p;
    p.s_min = binio::get_f32(in);
    p.s_max = binio::get_f32(in);
    frame.norm = p;
  }
  return frame;
}

void save_frames(const std::filesystem::path& path, std::span<const Frame> frames) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + path.string());
  for (const auto& f : frames) write_frame(out, f);
}

std::vector<Frame> load_frames(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, "cannot read " + path.string());
  std::vector<Frame> frames;
  while (auto f = read_frame(in)) frames.push_back(std::move(*f));
  return frames;
}

}  // namespace asefd
