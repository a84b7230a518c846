#pragma once

// Denoising convolutional autoencoder that maps a low-rate frame onto the
// 3 x 256 high-rate grid.
//
// Dataflow for one frame (in_len = 3 * Lin values, out_len = 3 * Lout):
//
//   3 x Lin grid, 1 channel
//     -> conv 3x3 same, C channels (linear)
//     -> conv 3x3 same, C channels (linear)
//     -> flatten (channel-major, C * 3 * Lin)
//     -> dense stack, ReLU on every layer, last width out_len
//     -> reshape to 1 channel x 3 x Lout
//     -> conv 3x3 same, 1 channel (linear)
//     -> flatten -> dense out_len (linear)
//
// Convolutions are cross-correlations with zero padding. Weights live in
// double precision; checkpoints store float32, and models handed out by
// initialize() and train() hold float-representable weights so a checkpoint
// round trip is exact.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "asefd/preprocess.hpp"

namespace asefd {

struct AseConfig {
  int alpha = 0;
  int in_len = 768;
  int channels = 40;
  std::vector<int> encoder_dense;
  int out_len = 768;
  double l2_weight = 0.0;
  double dropout = 0.0;

  int in_cols() const { return in_len / 3; }
  int out_cols() const { return out_len / 3; }
  void validate() const;
  bool operator==(const AseConfig&) const = default;
};

/// Architecture row for factor 2^alpha: 5 * (8 - alpha) conv channels and the
/// tabulated encoder dense widths, all ending at 768.
AseConfig build_config(int alpha, double l2_weight = 0.0, double dropout = 0.0);

enum class LayerKind : std::uint8_t { Conv3x3 = 1, Dense = 2 };

// Conv weights are out_channels x (9 * in_channels), tap index ci*9 + ki*3 + kj.
// Dense weights are out x in.
struct Layer {
  LayerKind kind = LayerKind::Dense;
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
};

using Gradients = std::vector<Layer>;

struct LayerShape {
  LayerKind kind;
  int rows;          // output channels (conv) or output units (dense)
  int cols;          // 9 * input channels (conv) or input units (dense)
  int positions;     // grid positions per channel (conv); 1 for dense
  bool relu;
};

/// Layer shapes in declaration order: conv, conv, encoder dense..., decoder
/// conv, decoder dense.
std::vector<LayerShape> layer_shapes(const AseConfig& config);

class AseModel {
 public:
  AseModel() = default;

  /// Fan-in scaled uniform weights, zero biases.
  static AseModel initialize(const AseConfig& config, std::uint64_t seed);
  static AseModel zeros(const AseConfig& config);

  const AseConfig& config() const { return config_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  /// Batched inference; one column per frame.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& inputs) const;

  void round_to_float();

  void write(std::ostream& out) const;
  static AseModel read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static AseModel load(const std::filesystem::path& path);

 private:
  AseConfig config_;
  std::vector<Layer> layers_;
};

struct TrainSpec {
  int max_epochs = 300;
  int batch_size = 32;
  double step_size = 1e-3;
  int patience = 20;
  std::uint64_t seed = 0;
  // Stop once the post-epoch training MAE drops below this; 0 disables.
  double stop_train_mae = 0.0;

  static constexpr double kValFraction = 0.1;
  void validate() const;
};

/// Size of the held-out validation split: ceil(n / 10).
std::size_t validation_count(std::size_t n_pairs);

struct EpochStats {
  int epoch = 0;
  double train_mae = 0.0;
  double val_mae = 0.0;
  double best_val_mae = 0.0;
};

struct TrainResult {
  AseModel model;  // best-validation snapshot
  std::vector<EpochStats> history;
  int best_epoch = 0;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// Eager evaluation of the network on one frame. Checks geometry and returns
/// the 3 x Lout frame carrying the input's normalization parameters.
Frame forward(const AseModel& model, const Frame& lr_frame);

/// forward() for inference; the result can be denormalized.
Frame enhance(const AseModel& model, const Frame& lr_frame);

/// enhance() over many frames in batched passes.
std::vector<Frame> enhance_batch(const AseModel& model, std::span<const Frame> lr_frames);

/// Mean absolute difference over all values.
double mae_loss(const Frame& enhanced, const Frame& target_hr);

/// MAE plus l2_weight * sum of squared weights (biases excluded).
double objective(const AseModel& model, const Frame& lr_frame, const Frame& target_hr);

/// Exact gradient of objective(); the subgradient of |r| at r = 0 is 0.
Gradients gradients(const AseModel& model, const Frame& lr_frame, const Frame& target_hr);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Seeded 9:1 split, minibatch Adam on the regularized MAE, dropout on the
/// encoder dense activations, early stopping on validation MAE.
TrainResult train(std::span<const FramePair> pairs, const AseConfig& config, const TrainSpec& spec,
                  const EpochCallback& on_epoch = {});

}  // namespace asefd
