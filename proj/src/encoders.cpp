#include "rfslam/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "rfslam/common.hpp"

namespace rfslam::encoders {

EncoderKind parse_encoder_kind(const std::string& s) {
  if (s == "mlp") return EncoderKind::kMlp;
  if (s == "conv") return EncoderKind::kConv;
  if (s == "deepset") return EncoderKind::kDeepSet;
  throw ConfigError("unknown encoder '" + s + "' (expected mlp|conv|deepset)");
}

const char* encoder_kind_name(EncoderKind k) {
  switch (k) {
    case EncoderKind::kMlp: return "mlp";
    case EncoderKind::kConv: return "conv";
    case EncoderKind::kDeepSet: return "deepset";
  }
  return "?";
}

namespace {

void check_width(const std::vector<const Input*>& batch, int width, const char* who) {
  if (batch.empty()) throw ConfigError(std::string(who) + ": empty batch");
  for (const Input* x : batch) {
    if (static_cast<int>(x->size()) != width) {
      throw ConfigError(std::string(who) + ": input width " + std::to_string(x->size()) +
                        ", expected " + std::to_string(width));
    }
  }
}

nn::Tensor scale_by(nn::Tensor t, double s) {
  if (s != 1.0) {
    for (double& v : t.data) v *= s;
  }
  return t;
}

class MlpEncoder final : public Encoder {
 public:
  MlpEncoder(EncoderConfig cfg, std::mt19937_64& rng)
      : Encoder(std::move(cfg)), shift_({cfg_.input_dim}), scale_({cfg_.input_dim}, 1.0) {
    if (cfg_.input_dim < 1) throw ConfigError("mlp encoder: input_dim must be >= 1");
    std::vector<int> widths{cfg_.input_dim};
    widths.insert(widths.end(), cfg_.mlp_hidden.begin(), cfg_.mlp_hidden.end());
    widths.push_back(cfg_.out_dim);
    net_ = nn::make_mlp(widths, nn::Activation::kReLU, rng);
    if (cfg_.linear_skip) {
      skip_ = std::make_unique<nn::Linear>(cfg_.input_dim, cfg_.out_dim, rng);
      auto& last = static_cast<nn::Linear&>(net_->at(net_->size() - 1));
      last.weight.fill(0.0);
    }
  }

  nn::Tensor forward(const std::vector<const Input*>& batch, bool training) override {
    const int w = cfg_.input_dim;
    check_width(batch, w, "mlp encoder");
    nn::Tensor x({static_cast<int>(batch.size()), w});
    for (std::size_t b = 0; b < batch.size(); ++b) {
      for (int i = 0; i < w; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        x[b * static_cast<std::size_t>(w) + iu] = ((*batch[b])[iu] - shift_[iu]) / scale_[iu];
      }
    }
    nn::Tensor y = net_->forward(x, training);
    if (skip_) {
      const nn::Tensor lin = skip_->forward(x, training);
      for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += lin.data[i];
    }
    return scale_by(std::move(y), cfg_.output_scale);
  }

  void backward(const nn::Tensor& g) override {
    const nn::Tensor gs = scale_by(g, cfg_.output_scale);
    net_->backward(gs);
    if (skip_) skip_->backward(gs);
  }

  std::vector<nn::ParamRef> parameters() override {
    std::vector<nn::ParamRef> out;
    net_->collect("", out);
    if (skip_) skip_->collect("skip.", out);
    return out;
  }

  std::vector<nn::ParamRef> buffers() override {
    std::vector<nn::ParamRef> out{{"input_shift", &shift_, nullptr, nullptr},
                                  {"input_scale", &scale_, nullptr, nullptr}};
    net_->collect_buffers("", out);
    return out;
  }

  void fit_normalization(const std::vector<const Input*>& inputs) override {
    const int w = cfg_.input_dim;
    check_width(inputs, w, "mlp encoder");
    const double n = static_cast<double>(inputs.size());
    for (int i = 0; i < w; ++i) {
      const auto iu = static_cast<std::size_t>(i);
      double s = 0.0, ss = 0.0;
      for (const Input* x : inputs) s += (*x)[iu];
      const double mean = s / n;
      for (const Input* x : inputs) ss += ((*x)[iu] - mean) * ((*x)[iu] - mean);
      const double sd = std::sqrt(ss / n);
      shift_[iu] = mean;
      scale_[iu] = sd > 0.0 ? sd : 1.0;
    }
  }

 private:
  std::unique_ptr<nn::Sequential> net_;
  std::unique_ptr<nn::Linear> skip_;
  nn::Tensor shift_, scale_;
};

class ConvEncoder final : public Encoder {
 public:
  ConvEncoder(EncoderConfig cfg, std::mt19937_64& rng) : Encoder(std::move(cfg)), scale_({1}, 1.0) {
    if (cfg_.input_dim < 2 || cfg_.input_dim % 2 != 0) {
      throw ConfigError("conv encoder: input_dim must be 2 * n_subcarriers");
    }
    width_ = cfg_.input_dim / 2;
    const int c = cfg_.conv_channels;
    net_ = std::make_unique<nn::Sequential>();
    net_->add(std::make_unique<nn::Conv1d>(2, c, cfg_.conv_kernel, rng));
    auto block = std::make_unique<nn::Sequential>();
    block->add(std::make_unique<nn::BatchNorm>(c));
    block->add(std::make_unique<nn::ReLU>());
    block->add(std::make_unique<nn::Conv1d>(c, c, cfg_.conv_kernel, rng));
    net_->add(std::make_unique<nn::Residual>(std::move(block)));
    net_->add(std::make_unique<nn::Flatten>());
    net_->add(std::make_unique<nn::Linear>(c * width_, cfg_.conv_fc, rng));
    net_->add(std::make_unique<nn::ReLU>());
    net_->add(std::make_unique<nn::Linear>(cfg_.conv_fc, cfg_.out_dim, rng));
  }

  nn::Tensor forward(const std::vector<const Input*>& batch, bool training) override {
    check_width(batch, cfg_.input_dim, "conv encoder");
    nn::Tensor x({static_cast<int>(batch.size()), 2, width_});
    const double s = scale_[0];
    for (std::size_t b = 0; b < batch.size(); ++b) {
      std::copy(batch[b]->begin(), batch[b]->end(), x.data.begin() + static_cast<std::ptrdiff_t>(b * batch[b]->size()));
    }
    for (double& v : x.data) v /= s;
    return scale_by(net_->forward(x, training), cfg_.output_scale);
  }

  void backward(const nn::Tensor& g) override { net_->backward(scale_by(g, cfg_.output_scale)); }

  std::vector<nn::ParamRef> parameters() override { return nn::parameters(*net_); }

  std::vector<nn::ParamRef> buffers() override {
    std::vector<nn::ParamRef> out{{"input_scale", &scale_, nullptr, nullptr}};
    net_->collect_buffers("", out);
    return out;
  }

  // One global RMS scale keeps the relative amplitude and phase structure.
  void fit_normalization(const std::vector<const Input*>& inputs) override {
    check_width(inputs, cfg_.input_dim, "conv encoder");
    double ss = 0.0;
    std::size_t n = 0;
    for (const Input* x : inputs) {
      for (double v : *x) ss += v * v;
      n += x->size();
    }
    const double rms = std::sqrt(ss / static_cast<double>(n));
    scale_[0] = rms > 0.0 ? rms : 1.0;
  }

 private:
  int width_ = 0;
  std::unique_ptr<nn::Sequential> net_;
  nn::Tensor scale_;
};

class DeepSetEncoder final : public Encoder {
 public:
  DeepSetEncoder(EncoderConfig cfg, std::mt19937_64& rng)
      : Encoder(std::move(cfg)), shift_({1}), scale_({1}, 1.0) {
    const int h = cfg_.deepset_width;
    phi_ = nn::make_mlp({1, h, h}, nn::Activation::kReLU, rng);
    phi_->add(std::make_unique<nn::ReLU>());
    rho_ = nn::make_mlp({h, h, cfg_.out_dim}, nn::Activation::kReLU, rng);
  }

  nn::Tensor forward(const std::vector<const Input*>& batch, bool training) override {
    if (batch.empty()) throw ConfigError("deepset encoder: empty batch");
    offsets_.assign(1, 0);
    std::vector<double> flat;
    for (const Input* x : batch) {
      if (x->empty()) throw ConfigError("deepset encoder: empty input set");
      // Canonical element order makes the pooled sum exactly order-free.
      std::vector<double> sorted(*x);
      std::sort(sorted.begin(), sorted.end());
      for (double v : sorted) flat.push_back((v - shift_[0]) / scale_[0]);
      offsets_.push_back(static_cast<int>(flat.size()));
    }
    nn::Tensor elems({static_cast<int>(flat.size()), 1});
    elems.data = std::move(flat);
    const nn::Tensor feats = phi_->forward(elems, training);
    const int h = cfg_.deepset_width;
    const int nb = static_cast<int>(batch.size());
    nn::Tensor pooled({nb, h});
    for (int b = 0; b < nb; ++b) {
      const int lo = offsets_[static_cast<std::size_t>(b)], hi = offsets_[static_cast<std::size_t>(b) + 1];
      const double inv = 1.0 / (hi - lo);
      for (int e = lo; e < hi; ++e) {
        for (int j = 0; j < h; ++j) {
          pooled[static_cast<std::size_t>(b * h + j)] += feats[static_cast<std::size_t>(e * h + j)];
        }
      }
      for (int j = 0; j < h; ++j) pooled[static_cast<std::size_t>(b * h + j)] *= inv;
    }
    return scale_by(rho_->forward(pooled, training), cfg_.output_scale);
  }

  void backward(const nn::Tensor& g) override {
    const nn::Tensor gp = rho_->backward(scale_by(g, cfg_.output_scale));
    const int h = cfg_.deepset_width;
    const int total = offsets_.back();
    nn::Tensor gf({total, h});
    for (std::size_t b = 0; b + 1 < offsets_.size(); ++b) {
      const int lo = offsets_[b], hi = offsets_[b + 1];
      const double inv = 1.0 / (hi - lo);
      for (int e = lo; e < hi; ++e) {
        for (int j = 0; j < h; ++j) {
          gf[static_cast<std::size_t>(e * h + j)] = gp[b * static_cast<std::size_t>(h) + static_cast<std::size_t>(j)] * inv;
        }
      }
    }
    phi_->backward(gf);
  }

  std::vector<nn::ParamRef> parameters() override {
    std::vector<nn::ParamRef> out;
    phi_->collect("phi.", out);
    rho_->collect("rho.", out);
    return out;
  }

  std::vector<nn::ParamRef> buffers() override {
    return {{"input_shift", &shift_, nullptr, nullptr}, {"input_scale", &scale_, nullptr, nullptr}};
  }

  void fit_normalization(const std::vector<const Input*>& inputs) override {
    double s = 0.0, ss = 0.0;
    std::size_t n = 0;
    for (const Input* x : inputs) {
      for (double v : *x) s += v;
      n += x->size();
    }
    if (n == 0) return;
    const double mean = s / static_cast<double>(n);
    for (const Input* x : inputs) {
      for (double v : *x) ss += (v - mean) * (v - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    shift_[0] = mean;
    scale_[0] = sd > 0.0 ? sd : 1.0;
  }

 private:
  std::unique_ptr<nn::Sequential> phi_, rho_;
  std::vector<int> offsets_;
  nn::Tensor shift_, scale_;
};

}  // namespace

std::unique_ptr<Encoder> make_encoder(const EncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.out_dim != 2 && cfg.out_dim != 3) throw ConfigError("encoder: out_dim must be 2 or 3");
  std::mt19937_64 rng(seed);
  switch (cfg.kind) {
    case EncoderKind::kMlp: return std::make_unique<MlpEncoder>(cfg, rng);
    case EncoderKind::kConv: return std::make_unique<ConvEncoder>(cfg, rng);
    case EncoderKind::kDeepSet: return std::make_unique<DeepSetEncoder>(cfg, rng);
  }
  throw ConfigError("encoder: unknown kind");
}

}  // namespace rfslam::encoders
