#include "rfslam/slam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace rfslam::slam {

namespace {

constexpr double kDegenerateDistance = 1e-9;
constexpr std::size_t kPredictChunk = 256;

double dist_to_row(const Point& pos, const nn::Tensor& va, int row, int dim) {
  double s = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double d = pos[k] - va[static_cast<std::size_t>(row * dim + k)];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

std::vector<double> decode(const Point& pos, const nn::Tensor& va, Modality modality,
                           bool* degenerate) {
  const int dim = pos.dim();
  if (va.rank() != 2 || va.dim(1) != dim) {
    throw ConfigError("decode: VA tensor " + nn::shape_string(va.shape) + " does not match dimension " +
                      std::to_string(dim));
  }
  const int m = va.dim(0);
  std::vector<double> out(static_cast<std::size_t>(m + 1));
  const double d0 = pos.norm();
  bool flag = d0 < kDegenerateDistance;
  out[0] = d0 / kSpeedOfLight;
  for (int i = 0; i < m; ++i) {
    const double d = dist_to_row(pos, va, i, dim);
    flag = flag || d < kDegenerateDistance;
    out[static_cast<std::size_t>(i + 1)] = d / kSpeedOfLight;
  }
  if (modality == Modality::kTDoA) {
    const double t0 = out[0];
    for (double& t : out) t -= t0;
    out[0] = 0.0;
  }
  if (degenerate) *degenerate = flag;
  return out;
}

void decode_backward(const Point& pos, const nn::Tensor& va, Modality modality,
                     std::span<const double> grad_delays, std::span<double> grad_pos,
                     nn::Tensor& grad_va) {
  const int dim = pos.dim();
  const int m = va.dim(0);
  if (grad_delays.size() != static_cast<std::size_t>(m + 1) || grad_pos.size() != static_cast<std::size_t>(dim) ||
      grad_va.shape != va.shape) {
    throw ConfigError("decode_backward: shape mismatch");
  }
  // d tau_i / d pos = (pos - p_i) / (c d_i); d tau_i / d p_i is its negative.
  const auto unit_anchor = [&](int k) {
    const double d0 = pos.norm();
    return d0 < kDegenerateDistance ? 0.0 : pos[k] / (kSpeedOfLight * d0);
  };
  double g_anchor = modality == Modality::kToF ? grad_delays[0] : 0.0;
  for (int i = 0; i < m; ++i) {
    const double g = grad_delays[static_cast<std::size_t>(i + 1)];
    if (g == 0.0) continue;
    if (modality == Modality::kTDoA) g_anchor -= g;
    const double d = dist_to_row(pos, va, i, dim);
    if (d < kDegenerateDistance) continue;
    for (int k = 0; k < dim; ++k) {
      const double u = (pos[k] - va[static_cast<std::size_t>(i * dim + k)]) / (kSpeedOfLight * d);
      grad_pos[static_cast<std::size_t>(k)] += g * u;
      grad_va[static_cast<std::size_t>(i * dim + k)] -= g * u;
    }
  }
  if (g_anchor != 0.0) {
    for (int k = 0; k < dim; ++k) grad_pos[static_cast<std::size_t>(k)] += g_anchor * unit_anchor(k);
  }
}

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(lr > 0.0) || !(va_lr > 0.0)) throw ConfigError("train: learning rates must be > 0");
  if (!(beta > 0.0)) throw ConfigError("train: beta must be > 0");
  if (n_va < 0 || va_cap < 1) throw ConfigError("train: bad VA budget");
  if (!(va_init_scale > 0.0)) throw ConfigError("train: va_init_scale must be > 0");
  if (n_restarts < 1) throw ConfigError("train: n_restarts must be >= 1");
  if (affine_warmup_epochs < 0) throw ConfigError("train: affine_warmup_epochs must be >= 0");
  if (!(lr_final_fraction > 0.0 && lr_final_fraction <= 1.0)) {
    throw ConfigError("train: lr_final_fraction must lie in (0, 1]");
  }
}

SlamModel::SlamModel(int dim, int n_va, Modality modality, std::unique_ptr<encoders::Encoder> encoder)
    : va({n_va, dim}),
      va_grad({n_va, dim}),
      frozen(static_cast<std::size_t>(n_va * dim), 0),
      frozen_value(static_cast<std::size_t>(n_va * dim), 0.0),
      dim_(dim),
      n_va_(n_va),
      modality_(modality),
      encoder_(std::move(encoder)) {
  if (dim != 2 && dim != 3) throw ConfigError("slam model: dim must be 2 or 3");
  if (n_va < 1) throw ConfigError("slam model: need at least one virtual anchor");
  if (!encoder_ || encoder_->config().out_dim != dim) throw ConfigError("slam model: encoder output must match dim");
}

void SlamModel::freeze(int va_row, int coord, double value) {
  const auto i = static_cast<std::size_t>(va_row * dim_ + coord);
  frozen.at(i) = 1;
  frozen_value[i] = value;
  va[i] = value;
}

void SlamModel::apply_constraints() {
  for (std::size_t i = 0; i < frozen.size(); ++i) {
    if (frozen[i]) va[i] = frozen_value[i];
  }
}

std::vector<Point> predict(encoders::Encoder& encoder, const std::vector<const Input*>& inputs) {
  std::vector<Point> out;
  out.reserve(inputs.size());
  const int dim = encoder.config().out_dim;
  for (std::size_t lo = 0; lo < inputs.size(); lo += kPredictChunk) {
    const std::size_t hi = std::min(inputs.size(), lo + kPredictChunk);
    const std::vector<const Input*> chunk(inputs.begin() + static_cast<std::ptrdiff_t>(lo),
                                          inputs.begin() + static_cast<std::ptrdiff_t>(hi));
    const nn::Tensor y = encoder.forward(chunk, false);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      Point p = Point::zeros(dim);
      for (int k = 0; k < dim; ++k) p[k] = y[b * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)];
      out.push_back(p);
    }
  }
  return out;
}

std::vector<Point> SlamModel::predict(const std::vector<const Input*>& inputs) {
  return slam::predict(*encoder_, inputs);
}

std::vector<Point> SlamModel::va_points() const {
  std::vector<Point> out;
  for (int i = 0; i < n_va_; ++i) {
    Point p = Point::zeros(dim_);
    for (int k = 0; k < dim_; ++k) p[k] = va[static_cast<std::size_t>(i * dim_ + k)];
    out.push_back(p);
  }
  return out;
}

std::vector<nn::ParamRef> SlamModel::tensors() {
  std::vector<nn::ParamRef> out;
  for (auto p : encoder_->parameters()) {
    p.name = "encoder." + p.name;
    out.push_back(p);
  }
  for (auto p : encoder_->buffers()) {
    p.name = "encoder." + p.name;
    out.push_back(p);
  }
  out.push_back({"va", &va, &va_grad, &frozen});
  return out;
}

int default_va_budget(std::span<const superres::FeatureSet> features, int cap) {
  std::size_t largest = 0;
  for (const auto& f : features) largest = std::max(largest, f.size());
  // The decoder emits the anchor plus M VAs, so M >= largest - 1 is required.
  const int sources = static_cast<int>(largest);
  const int need = std::max(1, sources - 1);
  return std::max(need, std::min(2 * sources, cap));
}

std::unique_ptr<SlamModel> init_model(int n_va, const encoders::EncoderConfig& encoder_cfg,
                                      const TrainConfig& cfg, std::uint64_t seed) {
  const int dim = encoder_cfg.out_dim;
  auto model = std::make_unique<SlamModel>(dim, n_va, cfg.modality,
                                           encoders::make_encoder(encoder_cfg, derive_seed(seed, 1)));
  if (cfg.fixed_vas) {
    if (static_cast<int>(cfg.fixed_vas->size()) != n_va) throw ConfigError("train: fixed_vas size must equal n_va");
    for (int i = 0; i < n_va; ++i) {
      const Point& p = (*cfg.fixed_vas)[static_cast<std::size_t>(i)];
      if (p.dim() != dim) throw ConfigError("train: fixed VA dimension mismatch");
      for (int k = 0; k < dim; ++k) model->freeze(i, k, p[k]);
    }
    return model;
  }
  std::mt19937_64 rng(derive_seed(seed, 2));
  std::normal_distribution<double> gauss(0.0, cfg.va_init_scale);
  for (double& v : model->va.data) v = gauss(rng);
  if (cfg.break_symmetry) {
    // 2D: VA1 = (0, y). 3D: VA1 = (0, 0, z), VA2 = (0, y, z).
    model->freeze(0, 0, 0.0);
    if (dim == 3) {
      model->freeze(0, 1, 0.0);
      if (n_va >= 2) model->freeze(1, 0, 0.0);
    }
  }
  return model;
}

namespace {

struct EpochStats {
  double loss_sum = 0.0;
  std::size_t count = 0;
};

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order, int batch_size) {
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(batch_size)) {
    const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
  }
  // A trailing singleton would break batch statistics; fold it into its neighbour.
  if (batches.size() > 1 && batches.back().size() == 1) {
    batches[batches.size() - 2].push_back(batches.back()[0]);
    batches.pop_back();
  }
  return batches;
}

}  // namespace

TrainResult train(const std::vector<superres::FeatureSet>& features,
                  const std::vector<Input>& inputs, std::span<const std::size_t> train_idx,
                  const encoders::EncoderConfig& encoder_cfg, const TrainConfig& cfg) {
  cfg.validate();
  if (features.size() != inputs.size()) throw ConfigError("train: features and inputs differ in length");
  if (train_idx.empty()) throw ConfigError("train: no training samples");
  std::vector<superres::FeatureSet> used;
  for (std::size_t i : train_idx) {
    if (i >= features.size()) throw ConfigError("train: sample index out of range");
    if (features[i].size() == 0) throw ConfigError("train: empty feature set for sample " + std::to_string(i));
    if (features[i].modality != cfg.modality) throw ConfigError("train: feature modality does not match config");
    used.push_back(features[i]);
  }
  int n_va = cfg.fixed_vas ? static_cast<int>(cfg.fixed_vas->size())
                           : (cfg.n_va > 0 ? cfg.n_va : default_va_budget(used, cfg.va_cap));
  for (const auto& f : used) {
    if (static_cast<int>(f.size()) > n_va + 1) {
      throw ConfigError("train: feature set of size " + std::to_string(f.size()) + " exceeds VA budget " +
                        std::to_string(n_va));
    }
  }

  std::vector<const Input*> norm_inputs;
  for (std::size_t i : train_idx) norm_inputs.push_back(&inputs[i]);

  struct Restart {
    std::unique_ptr<SlamModel> model;
    std::unique_ptr<nn::Adam> adam;
    std::vector<std::string> nonlinear;
    std::mt19937_64 shuffle_rng;
    TrainRun run;
  };

  const bool warm = encoder_cfg.linear_skip && cfg.affine_warmup_epochs > 0;
  auto start = [&](int r) {
    Restart st;
    st.run.seed = derive_seed(cfg.seed, 100, static_cast<std::uint64_t>(r));
    st.model = init_model(n_va, encoder_cfg, cfg, st.run.seed);
    st.model->encoder().fit_normalization(norm_inputs);
    std::vector<nn::ParamRef> params = st.model->encoder().parameters();
    params.push_back({"va", &st.model->va, &st.model->va_grad, &st.model->frozen});
    st.adam = std::make_unique<nn::Adam>(params, nn::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
    st.adam->set_lr_scale("va", cfg.va_lr / cfg.lr);
    for (const auto& p : params) {
      if (p.name != "va" && !p.name.starts_with("skip.")) st.nonlinear.push_back(p.name);
    }
    for (const auto& name : st.nonlinear) st.adam->set_lr_scale(name, warm ? 0.0 : 1.0);
    st.shuffle_rng.seed(derive_seed(st.run.seed, 3));
    return st;
  };

  auto run_epochs = [&](Restart& st, int r, int from, int to) {
    SlamModel& model = *st.model;
    std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
    const int dim = model.dim();
    for (int epoch = from; epoch < to; ++epoch) {
      if (warm && epoch == cfg.affine_warmup_epochs) {
        for (const auto& name : st.nonlinear) st.adam->set_lr_scale(name, 1.0);
      }
      const int decay_from = warm ? cfg.affine_warmup_epochs : 0;
      if (cfg.lr_final_fraction < 1.0 && epoch >= decay_from && cfg.epochs > decay_from) {
        const double u = static_cast<double>(epoch - decay_from) / (cfg.epochs - decay_from);
        const double f = cfg.lr_final_fraction;
        st.adam->config().lr = cfg.lr * (f + (1.0 - f) * 0.5 * (1.0 + std::cos(kPi * u)));
      }
      std::shuffle(order.begin(), order.end(), st.shuffle_rng);
      EpochStats stats;
      for (const auto& batch : make_batches(order, cfg.batch_size)) {
        std::vector<const Input*> xb;
        for (std::size_t i : batch) xb.push_back(&inputs[i]);
        st.adam->zero_grad();
        const nn::Tensor pos = model.encoder().forward(xb, true);
        nn::Tensor gpos(pos.shape);
        const double inv_b = 1.0 / static_cast<double>(batch.size());
        double batch_loss = 0.0;
        for (std::size_t b = 0; b < batch.size(); ++b) {
          Point p = Point::zeros(dim);
          for (int k = 0; k < dim; ++k) p[k] = pos[b * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)];
          const auto delays = decode(p, model.va, cfg.modality);
          auto res = matchloss::set_loss(features[batch[b]], delays, cfg.loss, true, cfg.beta);
          batch_loss += res.loss.value;
          for (double& g : res.loss.gradient) g *= inv_b;
          decode_backward(p, model.va, cfg.modality, res.loss.gradient,
                          std::span<double>(gpos.data.data() + b * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)),
                          model.va_grad);
        }
        if (!std::isfinite(batch_loss)) {
          std::ostringstream os;
          os << "train: non-finite loss at restart " << r << ", epoch " << epoch;
          throw NumericalError(os.str());
        }
        model.encoder().backward(gpos);
        st.adam->step();
        model.apply_constraints();
        stats.loss_sum += batch_loss;
        stats.count += batch.size();
      }
      st.run.epoch_loss.push_back(stats.loss_sum / static_cast<double>(stats.count));
    }
  };

  auto last_loss = [](const TrainRun& run) {
    return run.epoch_loss.empty() ? std::numeric_limits<double>::infinity() : run.epoch_loss.back();
  };

  // Without warmup every restart trains to the end and the lowest final loss
  // wins. With warmup the choice is made on the affine-phase loss (an affine
  // map cannot fold the domain onto itself, so that loss separates good and
  // bad starts) and only the chosen restart continues.
  const int restarts = cfg.fixed_vas ? 1 : cfg.n_restarts;
  const int first_phase = warm ? std::min(cfg.affine_warmup_epochs, cfg.epochs) : cfg.epochs;
  std::vector<Restart> states;
  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Restart st = start(r);
    run_epochs(st, r, 0, first_phase);
    const double loss = last_loss(st.run);
    if (r == 0 || loss < best) {
      best = loss;
      result.best_run = r;
    }
    states.push_back(std::move(st));
  }
  Restart& chosen = states[static_cast<std::size_t>(result.best_run)];
  run_epochs(chosen, result.best_run, first_phase, cfg.epochs);
  result.final_loss = last_loss(chosen.run);
  result.model = std::move(chosen.model);
  for (auto& st : states) result.runs.push_back(std::move(st.run));
  return result;
}

PruneResult prune_vas(SlamModel& model, const std::vector<superres::FeatureSet>& features,
                      const std::vector<Input>& inputs, std::span<const std::size_t> idx,
                      double rho_min, double beta) {
  if (rho_min < 0.0) throw ConfigError("prune_vas: rho_min must be >= 0");
  PruneResult out;
  std::vector<std::size_t> counts(static_cast<std::size_t>(model.n_va() + 1), 0);
  std::vector<const Input*> xs;
  for (std::size_t i : idx) xs.push_back(&inputs[i]);
  const auto pos = model.predict(xs);
  for (std::size_t n = 0; n < idx.size(); ++n) {
    const auto delays = decode(pos[n], model.va, model.modality());
    const auto res = matchloss::set_loss(features[idx[n]], delays, matchloss::SetLossKind::kHungarian, true, beta);
    for (auto [j, i] : res.assignment.pairs) {
      (void)j;
      ++counts[static_cast<std::size_t>(i)];
    }
  }
  const double total = static_cast<double>(std::max<std::size_t>(idx.size(), 1));
  out.retained.push_back(0);
  out.match_rate.push_back(1.0);
  for (int i = 1; i <= model.n_va(); ++i) {
    const double rate = static_cast<double>(counts[static_cast<std::size_t>(i)]) / total;
    out.match_rate.push_back(rate);
    if (rate >= rho_min && (rho_min == 0.0 || counts[static_cast<std::size_t>(i)] > 0)) out.retained.push_back(i);
  }
  return out;
}

SupervisedResult train_supervised(const std::vector<Input>& inputs,
                                  const std::vector<Point>& labels,
                                  std::span<const std::size_t> train_idx,
                                  const encoders::EncoderConfig& encoder_cfg,
                                  const SupervisedConfig& cfg) {
  if (inputs.size() != labels.size()) throw ConfigError("train_supervised: inputs and labels differ in length");
  if (train_idx.empty()) throw ConfigError("train_supervised: no training samples");
  if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.lr > 0.0)) throw ConfigError("train_supervised: bad config");
  SupervisedResult out;
  out.encoder = encoders::make_encoder(encoder_cfg, derive_seed(cfg.seed, 1));
  auto& enc = *out.encoder;
  std::vector<const Input*> norm_inputs;
  for (std::size_t i : train_idx) norm_inputs.push_back(&inputs[i]);
  enc.fit_normalization(norm_inputs);
  nn::Adam adam(enc.parameters(), {cfg.lr, 0.9, 0.999, 1e-8});
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 3));
  std::vector<std::size_t> order(train_idx.begin(), train_idx.end());
  const int dim = encoder_cfg.out_dim;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double sum = 0.0;
    for (const auto& batch : make_batches(order, cfg.batch_size)) {
      std::vector<const Input*> xb;
      for (std::size_t i : batch) xb.push_back(&inputs[i]);
      adam.zero_grad();
      const nn::Tensor y = enc.forward(xb, true);
      nn::Tensor g(y.shape);
      const double inv_b = 1.0 / static_cast<double>(batch.size());
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const Point& t = labels[batch[b]];
        if (t.dim() != dim) throw ConfigError("train_supervised: label dimension mismatch");
        for (int k = 0; k < dim; ++k) {
          const std::size_t i = b * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k);
          const double r = y[i] - t[k];
          sum += r * r;
          g[i] = 2.0 * r * inv_b;
        }
      }
      enc.backward(g);
      adam.step();
    }
    if (!std::isfinite(sum)) throw NumericalError("train_supervised: non-finite loss at epoch " + std::to_string(epoch));
    out.epoch_loss.push_back(sum / static_cast<double>(order.size()));
  }
  return out;
}

}  // namespace rfslam::slam
