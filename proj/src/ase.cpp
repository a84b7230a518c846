#include "asefd/ase.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "asefd/binio.hpp"
#include "asefd/error.hpp"
#include "asefd/rng.hpp"

namespace asefd {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr std::uint8_t kModelVersion = 1;

const std::array<std::vector<int>, 8> kEncoderDense = {{
    {768, 768, 768, 768, 768},
    {384, 384, 384, 384, 768, 768},
    {192, 192, 192, 384, 768, 768},
    {96, 96, 96, 96, 192, 384, 768, 768},
    {48, 48, 48, 96, 192, 384, 768, 768},
    {24, 24, 48, 96, 192, 384, 768, 768},
    {12, 24, 48, 96, 192, 384, 768, 768},
    {12, 24, 48, 96, 192, 384, 768, 768},
}};

constexpr int kGridRows = 3;

}  // namespace

void AseConfig::validate() const {
  const auto fail = [](const std::string& msg) { throw Error(Errc::InvalidArgument, "AseConfig: " + msg); };
  if (in_len <= 0 || in_len % kGridRows != 0) fail("in_len must be a positive multiple of 3");
  if (out_len <= 0 || out_len % kGridRows != 0) fail("out_len must be a positive multiple of 3");
  if (channels <= 0) fail("channels must be positive");
  if (encoder_dense.empty()) fail("encoder needs at least one dense layer");
  for (int w : encoder_dense) {
    if (w <= 0) fail("dense widths must be positive");
  }
  if (encoder_dense.back() != out_len) fail("last encoder dense width must equal out_len");
  if (!(l2_weight >= 0.0) || !std::isfinite(l2_weight)) fail("l2_weight must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
}

AseConfig build_config(int alpha, double l2_weight, double dropout) {
  check_alpha(alpha);
  AseConfig config;
  config.alpha = alpha;
  config.in_len = static_cast<int>(kAxes * frame_len(alpha));
  config.channels = 5 * (8 - alpha);
  config.encoder_dense = kEncoderDense[static_cast<std::size_t>(alpha)];
  config.out_len = static_cast<int>(kHrValues);
  config.l2_weight = l2_weight;
  config.dropout = dropout;
  config.validate();
  return config;
}

std::vector<LayerShape> layer_shapes(const AseConfig& config) {
  config.validate();
  std::vector<LayerShape> shapes;
  const int c = config.channels;
  const int p_in = config.in_len;
  shapes.push_back({LayerKind::Conv3x3, c, 9, p_in, false});
  shapes.push_back({LayerKind::Conv3x3, c, 9 * c, p_in, false});
  int width = c * p_in;
  for (int w : config.encoder_dense) {
    shapes.push_back({LayerKind::Dense, w, width, 1, true});
    width = w;
  }
  shapes.push_back({LayerKind::Conv3x3, 1, 9, config.out_len, false});
  shapes.push_back({LayerKind::Dense, config.out_len, config.out_len, 1, false});
  return shapes;
}

// ---------------------------------------------------------------------------
// Model construction and persistence

namespace {

std::vector<Layer> allocate(const AseConfig& config) {
  std::vector<Layer> layers;
  for (const auto& s : layer_shapes(config)) {
    Layer layer;
    layer.kind = s.kind;
    layer.weight = MatrixXd::Zero(s.rows, s.cols);
    layer.bias = VectorXd::Zero(s.rows);
    layers.push_back(std::move(layer));
  }
  return layers;
}

}  // namespace

AseModel AseModel::zeros(const AseConfig& config) {
  AseModel model;
  model.config_ = config;
  model.layers_ = allocate(config);
  return model;
}

AseModel AseModel::initialize(const AseConfig& config, std::uint64_t seed) {
  AseModel model = zeros(config);
  const auto shapes = layer_shapes(config);
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < model.layers_.size(); ++l) {
    const double fan_in = shapes[l].cols;
    const double limit = std::sqrt((shapes[l].relu ? 6.0 : 3.0) / fan_in);
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto& w = model.layers_[l].weight;
    for (Index j = 0; j < w.cols(); ++j) {
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
    }
  }
  model.round_to_float();
  return model;
}

std::size_t AseModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void AseModel::round_to_float() {
  for (auto& l : layers_) {
    l.weight = l.weight.cast<float>().cast<double>();
    l.bias = l.bias.cast<float>().cast<double>();
  }
}

void AseModel::write(std::ostream& out) const {
  binio::put_magic(out, "ASEM");
  binio::put_u8(out, kModelVersion);
  binio::put_u8(out, static_cast<std::uint8_t>(config_.alpha));
  binio::put_u32(out, static_cast<std::uint32_t>(config_.in_len));
  binio::put_u32(out, static_cast<std::uint32_t>(config_.channels));
  binio::put_u32(out, static_cast<std::uint32_t>(config_.encoder_dense.size()));
  for (int w : config_.encoder_dense) binio::put_u32(out, static_cast<std::uint32_t>(w));
  binio::put_u32(out, static_cast<std::uint32_t>(config_.out_len));
  binio::put_f64(out, config_.l2_weight);
  binio::put_f64(out, config_.dropout);
  binio::put_u32(out, static_cast<std::uint32_t>(layers_.size()));
  for (const auto& l : layers_) {
    binio::put_u8(out, static_cast<std::uint8_t>(l.kind));
    binio::put_u32(out, static_cast<std::uint32_t>(l.weight.rows()));
    binio::put_u32(out, static_cast<std::uint32_t>(l.weight.cols()));
    for (Index i = 0; i < l.weight.rows(); ++i) {
      for (Index j = 0; j < l.weight.cols(); ++j) binio::put_f32(out, static_cast<float>(l.weight(i, j)));
    }
    binio::put_u32(out, static_cast<std::uint32_t>(l.bias.size()));
    for (Index i = 0; i < l.bias.size(); ++i) binio::put_f32(out, static_cast<float>(l.bias(i)));
  }
}

AseModel AseModel::read(std::istream& in) {
  binio::expect_magic(in, "ASEM");
  const auto version = binio::get_u8(in);
  if (version != kModelVersion) throw Error(Errc::BadFormat, "unsupported model version " + std::to_string(version));
  AseConfig config;
  config.alpha = binio::get_u8(in);
  config.in_len = static_cast<int>(binio::get_u32(in));
  config.channels = static_cast<int>(binio::get_u32(in));
  const auto n_dense = binio::get_u32(in);
  if (n_dense > 64) throw Error(Errc::BadFormat, "implausible dense layer count");
  for (std::uint32_t i = 0; i < n_dense; ++i) config.encoder_dense.push_back(static_cast<int>(binio::get_u32(in)));
  config.out_len = static_cast<int>(binio::get_u32(in));
  config.l2_weight = binio::get_f64(in);
  config.dropout = binio::get_f64(in);
  try {
    config.validate();
  } catch (const Error& e) {
    throw Error(Errc::BadFormat, std::string("checkpoint config invalid: ") + e.what());
  }

  AseModel model = zeros(config);
  const auto n_layers = binio::get_u32(in);
  if (n_layers != model.layers_.size()) throw Error(Errc::BadFormat, "checkpoint layer count does not match config");
  for (auto& l : model.layers_) {
    const auto kind = static_cast<LayerKind>(binio::get_u8(in));
    const auto rows = binio::get_u32(in);
    const auto cols = binio::get_u32(in);
    if (kind != l.kind || rows != l.weight.rows() || cols != l.weight.cols()) {
      throw Error(Errc::BadFormat, "checkpoint layer shape does not match config");
    }
    for (Index i = 0; i < l.weight.rows(); ++i) {
      for (Index j = 0; j < l.weight.cols(); ++j) l.weight(i, j) = binio::get_f32(in);
    }
    if (binio::get_u32(in) != l.bias.size()) throw Error(Errc::BadFormat, "checkpoint bias length mismatch");
    for (Index i = 0; i < l.bias.size(); ++i) l.bias(i) = binio::get_f32(in);
  }
  return model;
}

void AseModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::MissingFile, "cannot write " + path.string());
  write(out);
}

AseModel AseModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, "cannot read " + path.string());
  return read(in);
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

// Transposed im2col: row s*P + p holds the 3x3 neighbourhood of position p in
// sample s, column ci*9 + ki*3 + kj.
MatrixXd im2col_t(const MatrixXd& in, int in_ch, int cols) {
  const int P = kGridRows * cols;
  const Index B = in.cols();
  MatrixXd out = MatrixXd::Zero(static_cast<Index>(P) * B, 9 * in_ch);
  for (Index s = 0; s < B; ++s) {
    for (int ci = 0; ci < in_ch; ++ci) {
      for (int ki = 0; ki < 3; ++ki) {
        for (int kj = 0; kj < 3; ++kj) {
          const int r = ci * 9 + ki * 3 + kj;
          for (int i = 0; i < kGridRows; ++i) {
            const int ii = i + ki - 1;
            if (ii < 0 || ii >= kGridRows) continue;
            const int j_lo = std::max(0, 1 - kj);
            const int j_hi = std::min(cols, cols + 1 - kj);
            for (int j = j_lo; j < j_hi; ++j) {
              out(s * P + i * cols + j, r) = in(ci * P + ii * cols + j + kj - 1, s);
            }
          }
        }
      }
    }
  }
  return out;
}

void col2im_t_add(const MatrixXd& dcols, int in_ch, int cols, MatrixXd& d_in) {
  const int P = kGridRows * cols;
  const Index B = d_in.cols();
  for (Index s = 0; s < B; ++s) {
    for (int ci = 0; ci < in_ch; ++ci) {
      for (int ki = 0; ki < 3; ++ki) {
        for (int kj = 0; kj < 3; ++kj) {
          const int r = ci * 9 + ki * 3 + kj;
          for (int i = 0; i < kGridRows; ++i) {
            const int ii = i + ki - 1;
            if (ii < 0 || ii >= kGridRows) continue;
            const int j_lo = std::max(0, 1 - kj);
            const int j_hi = std::min(cols, cols + 1 - kj);
            for (int j = j_lo; j < j_hi; ++j) {
              d_in(ci * P + ii * cols + j + kj - 1, s) += dcols(s * P + i * cols + j, r);
            }
          }
        }
      }
    }
  }
}

MatrixXd conv_forward(const Layer& layer, const MatrixXd& in, int cols, MatrixXd* im2col_cache) {
  const int in_ch = static_cast<int>(layer.weight.cols() / 9);
  const Index out_ch = layer.weight.rows();
  const Index P = kGridRows * cols;
  const Index B = in.cols();
  MatrixXd ct = im2col_t(in, in_ch, cols);
  MatrixXd yt = ct * layer.weight.transpose();
  yt.rowwise() += layer.bias.transpose();
  MatrixXd out(out_ch * P, B);
  for (Index s = 0; s < B; ++s) {
    for (Index c = 0; c < out_ch; ++c) out.col(s).segment(c * P, P) = yt.col(c).segment(s * P, P);
  }
  if (im2col_cache) *im2col_cache = std::move(ct);
  return out;
}

// Fills grad and, when d_in is non-null, the gradient w.r.t. the layer input.
void conv_backward(const Layer& layer, const MatrixXd& d_out, const MatrixXd& ct, int cols, Layer& grad,
                   MatrixXd* d_in) {
  const int in_ch = static_cast<int>(layer.weight.cols() / 9);
  const Index out_ch = layer.weight.rows();
  const Index P = kGridRows * cols;
  const Index B = d_out.cols();
  MatrixXd dyt(P * B, out_ch);
  for (Index s = 0; s < B; ++s) {
    for (Index c = 0; c < out_ch; ++c) dyt.col(c).segment(s * P, P) = d_out.col(s).segment(c * P, P);
  }
  grad.kind = layer.kind;
  grad.weight.noalias() = dyt.transpose() * ct;
  grad.bias = dyt.colwise().sum().transpose();
  if (d_in) {
    const MatrixXd dct = dyt * layer.weight;
    *d_in = MatrixXd::Zero(in_ch * P, B);
    col2im_t_add(dct, in_ch, cols, *d_in);
  }
}

struct Trace {
  MatrixXd cols1, cols2, cols3;
  MatrixXd conv1_out, conv2_out;
  std::vector<MatrixXd> pre, act, mask;
  MatrixXd dec_conv_out;
  MatrixXd output;
};

// Runs the network on a batch. dropout > 0 requires rng and is the training
// path; trace (optional) keeps what backward needs.
MatrixXd run(const AseModel& model, const MatrixXd& x, Trace* trace, double dropout, std::mt19937_64* rng) {
  const auto& cfg = model.config();
  const auto& layers = model.layers();
  const std::size_t n_dense = cfg.encoder_dense.size();

  MatrixXd h1 = conv_forward(layers[0], x, cfg.in_cols(), trace ? &trace->cols1 : nullptr);
  MatrixXd h2 = conv_forward(layers[1], h1, cfg.in_cols(), trace ? &trace->cols2 : nullptr);
  if (trace) {
    trace->conv1_out = std::move(h1);
    trace->pre.assign(n_dense, {});
    trace->act.assign(n_dense, {});
    trace->mask.assign(n_dense, {});
  }

  MatrixXd a = std::move(h2);
  for (std::size_t k = 0; k < n_dense; ++k) {
    const auto& layer = layers[2 + k];
    MatrixXd z = layer.weight * a;
    z.colwise() += layer.bias;
    MatrixXd act = z.cwiseMax(0.0);
    MatrixXd mask;
    if (dropout > 0.0) {
      std::bernoulli_distribution keep(1.0 - dropout);
      const double scale = 1.0 / (1.0 - dropout);
      mask.resize(act.rows(), act.cols());
      for (Index j = 0; j < mask.cols(); ++j) {
        for (Index i = 0; i < mask.rows(); ++i) mask(i, j) = keep(*rng) ? scale : 0.0;
      }
      act = act.cwiseProduct(mask);
    }
    if (trace) {
      if (k == 0) trace->conv2_out = std::move(a);
      else trace->act[k - 1] = std::move(a);
      trace->pre[k] = std::move(z);
      trace->mask[k] = std::move(mask);
    }
    a = std::move(act);
  }

  const auto& dec_conv = layers[2 + n_dense];
  const auto& dec_dense = layers[3 + n_dense];
  MatrixXd d = conv_forward(dec_conv, a, cfg.out_cols(), trace ? &trace->cols3 : nullptr);
  MatrixXd y = dec_dense.weight * d;
  y.colwise() += dec_dense.bias;
  if (trace) {
    trace->act[n_dense - 1] = std::move(a);
    trace->dec_conv_out = std::move(d);
    trace->output = y;
  }
  return y;
}

// Backpropagates d_output through a traced pass. Adds the L2 term when
// l2_weight > 0.
Gradients backward(const AseModel& model, const Trace& trace, const MatrixXd& d_output) {
  const auto& cfg = model.config();
  const auto& layers = model.layers();
  const std::size_t n_dense = cfg.encoder_dense.size();
  Gradients grads(layers.size());

  const auto& dec_dense = layers[3 + n_dense];
  auto& g_dd = grads[3 + n_dense];
  g_dd.kind = LayerKind::Dense;
  g_dd.weight.noalias() = d_output * trace.dec_conv_out.transpose();
  g_dd.bias = d_output.rowwise().sum();
  const MatrixXd d_dec_conv = dec_dense.weight.transpose() * d_output;

  MatrixXd d_act;
  conv_backward(layers[2 + n_dense], d_dec_conv, trace.cols3, cfg.out_cols(), grads[2 + n_dense], &d_act);

  for (std::size_t k = n_dense; k-- > 0;) {
    const auto& layer = layers[2 + k];
    MatrixXd dz = d_act;
    if (trace.mask[k].size() != 0) dz = dz.cwiseProduct(trace.mask[k]);
    dz = (trace.pre[k].array() > 0.0).select(dz, 0.0);
    const MatrixXd& input = k == 0 ? trace.conv2_out : trace.act[k - 1];
    auto& g = grads[2 + k];
    g.kind = LayerKind::Dense;
    g.weight.noalias() = dz * input.transpose();
    g.bias = dz.rowwise().sum();
    d_act = layer.weight.transpose() * dz;
  }

  MatrixXd d_conv1;
  conv_backward(layers[1], d_act, trace.cols2, cfg.in_cols(), grads[1], &d_conv1);
  conv_backward(layers[0], d_conv1, trace.cols1, cfg.in_cols(), grads[0], nullptr);

  if (cfg.l2_weight > 0.0) {
    for (std::size_t l = 0; l < layers.size(); ++l) grads[l].weight += 2.0 * cfg.l2_weight * layers[l].weight;
  }
  return grads;
}

double l2_penalty(const AseModel& model) {
  if (model.config().l2_weight == 0.0) return 0.0;
  double sum = 0.0;
  for (const auto& l : model.layers()) sum += l.weight.squaredNorm();
  return model.config().l2_weight * sum;
}

// d/dy of mean |y - t| with sign(0) = 0.
MatrixXd mae_grad(const MatrixXd& y, const MatrixXd& t) {
  const double scale = 1.0 / static_cast<double>(y.size());
  return (y - t).unaryExpr([scale](double r) { return r > 0.0 ? scale : (r < 0.0 ? -scale : 0.0); });
}

void check_input(const AseModel& model, const Frame& lr) {
  const auto& cfg = model.config();
  if (lr.values.size() != static_cast<std::size_t>(cfg.in_len) || lr.alpha != cfg.alpha) {
    throw Error(Errc::GeometryMismatch,
                "frame geometry (alpha " + std::to_string(lr.alpha) + ", " + std::to_string(lr.values.size()) +
                    " values) does not match model (alpha " + std::to_string(cfg.alpha) + ", " +
                    std::to_string(cfg.in_len) + " values)");
  }
  if (!lr.normalized()) throw Error(Errc::InvalidArgument, "model input must be min-max normalized");
}

void check_target(const AseModel& model, const Frame& hr) {
  if (hr.values.size() != static_cast<std::size_t>(model.config().out_len)) {
    throw Error(Errc::GeometryMismatch, "target frame size does not match model output");
  }
}

int output_alpha(std::size_t per_axis_len) {
  for (int a = 0; a <= kMaxAlpha; ++a) {
    if ((kHrPerAxis >> a) == per_axis_len) return a;
  }
  return 0;
}

Eigen::Map<const VectorXd> as_vector(const Frame& f) {
  return {f.values.data(), static_cast<Index>(f.values.size())};
}

}  // namespace

MatrixXd AseModel::forward(const MatrixXd& inputs) const {
  if (inputs.rows() != config_.in_len) throw Error(Errc::GeometryMismatch, "input rows do not match in_len");
  return run(*this, inputs, nullptr, 0.0, nullptr);
}

Frame forward(const AseModel& model, const Frame& lr_frame) {
  check_input(model, lr_frame);
  const auto& cfg = model.config();
  const VectorXd y = model.forward(as_vector(lr_frame));

  Frame out;
  out.per_axis_len = static_cast<std::size_t>(cfg.out_cols());
  out.alpha = output_alpha(out.per_axis_len);
  out.values.assign(y.data(), y.data() + y.size());
  out.norm = lr_frame.norm;
  out.source_rate_hz = lr_frame.source_rate_hz * static_cast<double>(out.per_axis_len) /
                       static_cast<double>(lr_frame.per_axis_len);
  return out;
}

Frame enhance(const AseModel& model, const Frame& lr_frame) { return forward(model, lr_frame); }

std::vector<Frame> enhance_batch(const AseModel& model, std::span<const Frame> lr_frames) {
  constexpr std::size_t kChunk = 64;
  const auto& cfg = model.config();
  std::vector<Frame> out;
  out.reserve(lr_frames.size());
  for (std::size_t start = 0; start < lr_frames.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, lr_frames.size() - start);
    MatrixXd x(cfg.in_len, static_cast<Index>(n));
    for (std::size_t j = 0; j < n; ++j) {
      check_input(model, lr_frames[start + j]);
      x.col(static_cast<Index>(j)) = as_vector(lr_frames[start + j]);
    }
    const MatrixXd y = model.forward(x);
    for (std::size_t j = 0; j < n; ++j) {
      const Frame& lr = lr_frames[start + j];
      Frame f;
      f.per_axis_len = static_cast<std::size_t>(cfg.out_cols());
      f.alpha = output_alpha(f.per_axis_len);
      f.values.assign(y.col(static_cast<Index>(j)).data(), y.col(static_cast<Index>(j)).data() + y.rows());
      f.norm = lr.norm;
      f.source_rate_hz = lr.source_rate_hz * static_cast<double>(f.per_axis_len) / static_cast<double>(lr.per_axis_len);
      out.push_back(std::move(f));
    }
  }
  return out;
}

double mae_loss(const Frame& enhanced, const Frame& target_hr) {
  if (enhanced.values.size() != target_hr.values.size() || enhanced.values.empty()) {
    throw Error(Errc::GeometryMismatch, "frames differ in geometry");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < enhanced.values.size(); ++i) sum += std::abs(target_hr.values[i] - enhanced.values[i]);
  return sum / static_cast<double>(enhanced.values.size());
}

double objective(const AseModel& model, const Frame& lr_frame, const Frame& target_hr) {
  check_target(model, target_hr);
  return mae_loss(forward(model, lr_frame), target_hr) + l2_penalty(model);
}

Gradients gradients(const AseModel& model, const Frame& lr_frame, const Frame& target_hr) {
  check_input(model, lr_frame);
  check_target(model, target_hr);
  Trace trace;
  const MatrixXd x = as_vector(lr_frame);
  const MatrixXd y = run(model, x, &trace, 0.0, nullptr);
  const MatrixXd t = as_vector(target_hr);
  return backward(model, trace, mae_grad(y, t));
}

// ---------------------------------------------------------------------------
// Training

void TrainSpec::validate() const {
  if (max_epochs <= 0 || batch_size <= 0 || patience <= 0 || !(step_size > 0.0)) {
    throw Error(Errc::InvalidArgument, "TrainSpec: epochs, batch size, patience and step size must be positive");
  }
}

std::size_t validation_count(std::size_t n_pairs) {
  return (n_pairs + 9) / 10;
}

namespace {

struct AdamState {
  std::vector<MatrixXd> m_w, v_w;
  std::vector<VectorXd> m_b, v_b;
  long step = 0;

  explicit AdamState(const std::vector<Layer>& layers) {
    for (const auto& l : layers) {
      m_w.push_back(MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
      v_w.push_back(MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
      m_b.push_back(VectorXd::Zero(l.bias.size()));
      v_b.push_back(VectorXd::Zero(l.bias.size()));
    }
  }

  void apply(std::vector<Layer>& layers, const Gradients& g, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t l = 0; l < layers.size(); ++l) {
      m_w[l] = b1 * m_w[l] + (1.0 - b1) * g[l].weight;
      v_w[l] = b2 * v_w[l] + (1.0 - b2) * g[l].weight.cwiseAbs2();
      layers[l].weight.array() -= lr * (m_w[l].array() / c1) / ((v_w[l].array() / c2).sqrt() + eps);
      m_b[l] = b1 * m_b[l] + (1.0 - b1) * g[l].bias;
      v_b[l] = b2 * v_b[l] + (1.0 - b2) * g[l].bias.cwiseAbs2();
      layers[l].bias.array() -= lr * (m_b[l].array() / c1) / ((v_b[l].array() / c2).sqrt() + eps);
    }
  }
};

MatrixXd gather(const MatrixXd& m, std::span<const std::size_t> idx) {
  MatrixXd out(m.rows(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Index>(j)) = m.col(static_cast<Index>(idx[j]));
  return out;
}

double evaluate_mae(const AseModel& model, const MatrixXd& x, const MatrixXd& t) {
  constexpr Index kChunk = 32;
  double sum = 0.0;
  for (Index start = 0; start < x.cols(); start += kChunk) {
    const Index n = std::min(kChunk, x.cols() - start);
    const MatrixXd y = model.forward(x.middleCols(start, n));
    sum += (y - t.middleCols(start, n)).cwiseAbs().sum();
  }
  return sum / static_cast<double>(t.size());
}

}  // namespace

TrainResult train(std::span<const FramePair> pairs, const AseConfig& config, const TrainSpec& spec,
                  const EpochCallback& on_epoch) {
  config.validate();
  spec.validate();
  if (pairs.size() < 10) throw Error(Errc::TooFewSamples, "training needs at least 10 frame pairs");

  const auto n = static_cast<Index>(pairs.size());
  MatrixXd x(config.in_len, n), t(config.out_len, n);
  for (Index j = 0; j < n; ++j) {
    const auto& p = pairs[static_cast<std::size_t>(j)];
    if (p.lr.values.size() != static_cast<std::size_t>(config.in_len) || p.lr.alpha != config.alpha ||
        p.hr.values.size() != static_cast<std::size_t>(config.out_len)) {
      throw Error(Errc::GeometryMismatch, "pair " + std::to_string(j) + " does not match the model geometry");
    }
    x.col(j) = as_vector(p.lr);
    t.col(j) = as_vector(p.hr);
  }

  std::mt19937_64 rng(spec.seed);
  std::mt19937_64 dropout_rng(mix_seed(spec.seed, 2));

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_val = validation_count(pairs.size());

  TrainResult result;
  result.val_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  result.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());

  const MatrixXd x_train = gather(x, result.train_indices), t_train = gather(t, result.train_indices);
  const MatrixXd x_val = gather(x, result.val_indices), t_val = gather(t, result.val_indices);

  AseModel model = AseModel::initialize(config, mix_seed(spec.seed, 1));
  AdamState adam(model.layers());
  result.model = model;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;

  std::vector<std::size_t> batch_order(result.train_indices.size());
  std::iota(batch_order.begin(), batch_order.end(), 0);
  const auto batch = static_cast<std::size_t>(spec.batch_size);

  for (int epoch = 1; epoch <= spec.max_epochs; ++epoch) {
    std::shuffle(batch_order.begin(), batch_order.end(), rng);
    for (std::size_t start = 0; start < batch_order.size(); start += batch) {
      const auto idx = std::span<const std::size_t>(batch_order).subspan(start, std::min(batch, batch_order.size() - start));
      const MatrixXd xb = gather(x_train, idx), tb = gather(t_train, idx);
      Trace trace;
      const MatrixXd y = run(model, xb, &trace, config.dropout, &dropout_rng);
      adam.apply(model.layers(), backward(model, trace, mae_grad(y, tb)), spec.step_size);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_mae = evaluate_mae(model, x_train, t_train);
    stats.val_mae = evaluate_mae(model, x_val, t_val);
    if (!std::isfinite(stats.train_mae) || !std::isfinite(stats.val_mae)) {
      throw Error(Errc::NonFiniteLoss, "non-finite loss at epoch " + std::to_string(epoch));
    }
    if (stats.val_mae < best) {
      best = stats.val_mae;
      result.model = model;
      result.best_epoch = epoch;
      stale = 0;
    } else {
      ++stale;
    }
    stats.best_val_mae = best;
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (spec.stop_train_mae > 0.0 && stats.train_mae < spec.stop_train_mae) break;
    if (stale >= spec.patience) break;
  }
  result.model.round_to_float();
  return result;
}

}  // namespace asefd
