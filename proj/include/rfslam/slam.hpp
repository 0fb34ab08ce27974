#pragma once
// Encoder-decoder SLAM: the encoder maps an input to a position, the decoder
// turns that position plus learnable virtual-anchor coordinates into a delay
// vector, and training matches it against extracted delay sets.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "rfslam/encoders.hpp"
#include "rfslam/geometry.hpp"
#include "rfslam/matchloss.hpp"
#include "rfslam/superres.hpp"

namespace rfslam::slam {

using encoders::Input;
using geometry::Point;

// Delays for the anchor at the origin followed by every VA row of `va`
// (M x D). TDoA subtracts the anchor term, so element 0 is exactly 0.
// `degenerate` is set when pos is within 1e-9 m of some anchor.
std::vector<double> decode(const Point& pos, const nn::Tensor& va, Modality modality,
                           bool* degenerate = nullptr);

// Chain rule through `decode`: accumulates d/dpos into grad_pos (length D)
// and d/dva into grad_va (M x D). Terms at degenerate distances contribute 0.
void decode_backward(const Point& pos, const nn::Tensor& va, Modality modality,
                     std::span<const double> grad_delays, std::span<double> grad_pos,
                     nn::Tensor& grad_va);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  double lr = 1e-3;
  double va_lr = 1e-2;
  matchloss::SetLossKind loss = matchloss::SetLossKind::kHungarian;
  double beta = 1.0;  // meters
  int n_va = 0;       // 0: 2 x largest feature set, capped at va_cap
  int va_cap = 12;
  std::uint64_t seed = 1;
  Modality modality = Modality::kToF;
  double va_init_scale = 5.0;
  int n_restarts = 3;
  bool break_symmetry = true;
  // With an encoder that has an affine skip path, only that path (and the
  // VAs) update for this many leading epochs.
  int affine_warmup_epochs = 0;
  // Cosine decay of every learning rate over the epochs after warmup, down
  // to lr_final_fraction of its start value (1 keeps it constant).
  double lr_final_fraction = 1.0;
  // Known-map variant: VA coordinates fixed to these points (anchor frame).
  std::optional<std::vector<Point>> fixed_vas;

  void validate() const;
};

class SlamModel {
 public:
  SlamModel(int dim, int n_va, Modality modality, std::unique_ptr<encoders::Encoder> encoder);

  int dim() const { return dim_; }
  int n_va() const { return n_va_; }
  Modality modality() const { return modality_; }
  encoders::Encoder& encoder() { return *encoder_; }
  const encoders::Encoder& encoder() const { return *encoder_; }

  nn::Tensor va;       // n_va x dim
  nn::Tensor va_grad;  // same shape
  std::vector<char> frozen;          // per VA coordinate
  std::vector<double> frozen_value;  // value a frozen coordinate is pinned to

  // Re-pins every frozen coordinate.
  void apply_constraints();
  void freeze(int va_row, int coord, double value);

  std::vector<Point> predict(const std::vector<const Input*>& inputs);
  std::vector<Point> va_points() const;

  // Encoder parameters, encoder buffers and the VA tensor with stable names.
  std::vector<nn::ParamRef> tensors();

 private:
  int dim_, n_va_;
  Modality modality_;
  std::unique_ptr<encoders::Encoder> encoder_;
};

struct TrainRun {
  std::vector<double> epoch_loss;
  std::uint64_t seed = 0;
};

struct TrainResult {
  std::unique_ptr<SlamModel> model;
  std::vector<TrainRun> runs;
  int best_run = 0;
  double final_loss = 0.0;
};

// `features[i]` is the target set and `inputs[i]` the encoder input of sample i;
// only indices listed in `train_idx` are used.
TrainResult train(const std::vector<superres::FeatureSet>& features,
                  const std::vector<Input>& inputs, std::span<const std::size_t> train_idx,
                  const encoders::EncoderConfig& encoder_cfg, const TrainConfig& cfg);

// Builds the initial model for one restart seed (used by train, exposed for
// the zero-epoch contract and tests).
std::unique_ptr<SlamModel> init_model(int n_va, const encoders::EncoderConfig& encoder_cfg,
                                      const TrainConfig& cfg, std::uint64_t seed);

int default_va_budget(std::span<const superres::FeatureSet> features, int cap);

struct PruneResult {
  std::vector<int> retained;      // decoder indices, 0 (anchor) first
  std::vector<double> match_rate; // per decoder index
};

PruneResult prune_vas(SlamModel& model, const std::vector<superres::FeatureSet>& features,
                      const std::vector<Input>& inputs, std::span<const std::size_t> idx,
                      double rho_min = 0.01, double beta = 1.0);

struct SupervisedConfig {
  int epochs = 200;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
};

struct SupervisedResult {
  std::unique_ptr<encoders::Encoder> encoder;
  std::vector<double> epoch_loss;  // mean squared position error (m^2)
};

SupervisedResult train_supervised(const std::vector<Input>& inputs,
                                  const std::vector<Point>& labels,
                                  std::span<const std::size_t> train_idx,
                                  const encoders::EncoderConfig& encoder_cfg,
                                  const SupervisedConfig& cfg);

std::vector<Point> predict(encoders::Encoder& encoder, const std::vector<const Input*>& inputs);

}  // namespace rfslam::slam
