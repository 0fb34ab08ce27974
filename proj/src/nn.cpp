#include "rfslam/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rfslam/common.hpp"
#include "rfslam/kernels.hpp"

namespace rfslam::nn {

std::size_t shape_numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ConfigError("tensor: negative dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(std::vector<int> shape_, double fill)
    : shape(std::move(shape_)), data(shape_numel(shape), fill) {}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

Tensor Tensor::reshaped(std::vector<int> new_shape) const {
  if (shape_numel(new_shape) != numel()) {
    throw ConfigError("reshape " + shape_string(shape) + " -> " + shape_string(new_shape));
  }
  Tensor t;
  t.shape = std::move(new_shape);
  t.data = data;
  return t;
}

void Layer::collect(const std::string&, std::vector<ParamRef>&) {}
void Layer::collect_buffers(const std::string&, std::vector<ParamRef>&) {}

namespace {

double* row(Tensor& t, int r, int width) { return t.data.data() + static_cast<std::size_t>(r) * width; }
const double* row(const Tensor& t, int r, int width) {
  return t.data.data() + static_cast<std::size_t>(r) * width;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
  if (a.shape != b.shape) {
    throw ConfigError(std::string(who) + ": gradient shape " + shape_string(b.shape) +
                      " does not match " + shape_string(a.shape));
  }
}

void uniform_fan_in(Tensor& w, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : w.data) v = u(rng);
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(int in, int out, std::mt19937_64& rng)
    : weight({out, in}), bias({out}), weight_grad({out, in}), bias_grad({out}), in_(in), out_(out) {
  if (in < 1 || out < 1) throw ConfigError("linear: widths must be >= 1");
  uniform_fan_in(weight, in, rng);
}

Tensor Linear::forward(const Tensor& x, bool) {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw ConfigError("linear: expected input [B," + std::to_string(in_) + "], got " +
                      shape_string(x.shape));
  }
  x_ = x;
  const int b = x.dim(0);
  Tensor y({b, out_});
  const auto& k = kernels::active();
  for (int i = 0; i < b; ++i) {
    const double* xi = row(x, i, in_);
    double* yi = row(y, i, out_);
    for (int o = 0; o < out_; ++o) yi[o] = k.dot(row(weight, o, in_), xi, static_cast<std::size_t>(in_)) + bias[static_cast<std::size_t>(o)];
  }
  return y;
}

Tensor Linear::backward(const Tensor& gy) {
  const int b = x_.dim(0);
  if (gy.rank() != 2 || gy.dim(0) != b || gy.dim(1) != out_) {
    throw ConfigError("linear: bad gradient shape " + shape_string(gy.shape));
  }
  Tensor gx({b, in_});
  const auto& k = kernels::active();
  for (int i = 0; i < b; ++i) {
    const double* gi = row(gy, i, out_);
    const double* xi = row(x_, i, in_);
    double* gxi = row(gx, i, in_);
    for (int o = 0; o < out_; ++o) {
      const double g = gi[o];
      if (g == 0.0) continue;
      k.axpy(g, xi, row(weight_grad, o, in_), static_cast<std::size_t>(in_));
      k.axpy(g, row(weight, o, in_), gxi, static_cast<std::size_t>(in_));
      bias_grad[static_cast<std::size_t>(o)] += g;
    }
  }
  return gx;
}

void Linear::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "weight", &weight, &weight_grad, nullptr});
  out.push_back({prefix + "bias", &bias, &bias_grad, nullptr});
}

// ---------------------------------------------------------------- activations

Tensor ReLU::forward(const Tensor& x, bool) {
  x_ = x;
  Tensor y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor ReLU::backward(const Tensor& gy) {
  require_same_shape(x_, gy, "relu");
  Tensor gx = gy;
  for (std::size_t i = 0; i < gx.numel(); ++i) {
    if (!(x_[i] > 0.0)) gx[i] = 0.0;
  }
  return gx;
}

Tensor Tanh::forward(const Tensor& x, bool) {
  y_ = x;
  for (double& v : y_.data) v = std::tanh(v);
  return y_;
}

Tensor Tanh::backward(const Tensor& gy) {
  require_same_shape(y_, gy, "tanh");
  Tensor gx = gy;
  for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] *= 1.0 - y_[i] * y_[i];
  return gx;
}

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(int in_channels, int out_channels, int kernel, std::mt19937_64& rng)
    : weight({out_channels, in_channels * kernel}),
      bias({out_channels}),
      weight_grad({out_channels, in_channels * kernel}),
      bias_grad({out_channels}),
      cin_(in_channels),
      cout_(out_channels),
      k_(kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw ConfigError("conv1d: kernel width must be odd");
  if (in_channels < 1 || out_channels < 1) throw ConfigError("conv1d: channels must be >= 1");
  uniform_fan_in(weight, in_channels * kernel, rng);
}

Tensor Conv1d::forward(const Tensor& x, bool) {
  if (x.rank() != 3 || x.dim(1) != cin_) {
    throw ConfigError("conv1d: expected input [B," + std::to_string(cin_) + ",W], got " +
                      shape_string(x.shape));
  }
  batch_ = x.dim(0);
  width_ = x.dim(2);
  const int ck = cin_ * k_;
  const int pad = k_ / 2;
  cols_ = Tensor({batch_ * width_, ck});
  for (int b = 0; b < batch_; ++b) {
    for (int w = 0; w < width_; ++w) {
      double* c = row(cols_, b * width_ + w, ck);
      for (int ci = 0; ci < cin_; ++ci) {
        const double* xr = x.data.data() + (static_cast<std::size_t>(b) * cin_ + ci) * width_;
        for (int t = 0; t < k_; ++t) {
          const int src = w + t - pad;
          c[ci * k_ + t] = (src >= 0 && src < width_) ? xr[src] : 0.0;
        }
      }
    }
  }
  Tensor y({batch_, cout_, width_});
  const auto& k = kernels::active();
  for (int b = 0; b < batch_; ++b) {
    for (int co = 0; co < cout_; ++co) {
      const double* wr = row(weight, co, ck);
      double* yr = y.data.data() + (static_cast<std::size_t>(b) * cout_ + co) * width_;
      for (int w = 0; w < width_; ++w) {
        yr[w] = k.dot(wr, row(cols_, b * width_ + w, ck), static_cast<std::size_t>(ck)) + bias[static_cast<std::size_t>(co)];
      }
    }
  }
  return y;
}

Tensor Conv1d::backward(const Tensor& gy) {
  if (gy.rank() != 3 || gy.dim(0) != batch_ || gy.dim(1) != cout_ || gy.dim(2) != width_) {
    throw ConfigError("conv1d: bad gradient shape " + shape_string(gy.shape));
  }
  const int ck = cin_ * k_;
  const int pad = k_ / 2;
  const auto& k = kernels::active();
  Tensor gcols({batch_ * width_, ck});
  for (int b = 0; b < batch_; ++b) {
    for (int co = 0; co < cout_; ++co) {
      const double* gr = gy.data.data() + (static_cast<std::size_t>(b) * cout_ + co) * width_;
      const double* wr = row(weight, co, ck);
      double* gw = row(weight_grad, co, ck);
      for (int w = 0; w < width_; ++w) {
        const double g = gr[w];
        if (g == 0.0) continue;
        k.axpy(g, row(cols_, b * width_ + w, ck), gw, static_cast<std::size_t>(ck));
        k.axpy(g, wr, row(gcols, b * width_ + w, ck), static_cast<std::size_t>(ck));
        bias_grad[static_cast<std::size_t>(co)] += g;
      }
    }
  }
  Tensor gx({batch_, cin_, width_});
  for (int b = 0; b < batch_; ++b) {
    for (int w = 0; w < width_; ++w) {
      const double* c = row(gcols, b * width_ + w, ck);
      for (int ci = 0; ci < cin_; ++ci) {
        double* gxr = gx.data.data() + (static_cast<std::size_t>(b) * cin_ + ci) * width_;
        for (int t = 0; t < k_; ++t) {
          const int src = w + t - pad;
          if (src >= 0 && src < width_) gxr[src] += c[ci * k_ + t];
        }
      }
    }
  }
  return gx;
}

void Conv1d::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "weight", &weight, &weight_grad, nullptr});
  out.push_back({prefix + "bias", &bias, &bias_grad, nullptr});
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(int channels, double momentum, double eps)
    : gamma({channels}, 1.0),
      beta({channels}),
      gamma_grad({channels}),
      beta_grad({channels}),
      running_mean({channels}),
      running_var({channels}, 1.0),
      c_(channels),
      momentum_(momentum),
      eps_(eps) {
  if (channels < 1) throw ConfigError("batchnorm: channels must be >= 1");
}

Tensor BatchNorm::forward(const Tensor& x, bool training) {
  if ((x.rank() != 2 && x.rank() != 3) || x.dim(1) != c_) {
    throw ConfigError("batchnorm: expected [B," + std::to_string(c_) + "(,W)], got " +
                      shape_string(x.shape));
  }
  const int b = x.dim(0);
  const int w = x.rank() == 3 ? x.dim(2) : 1;
  if (training && b < 2) throw ConfigError("batchnorm: batch size 1 in training mode");
  trained_ = training;
  const double n = static_cast<double>(b) * w;
  const auto at = [&](int bi, int ci, int wi) {
    return (static_cast<std::size_t>(bi) * c_ + ci) * static_cast<std::size_t>(w) + wi;
  };
  xhat_ = Tensor(x.shape);
  inv_std_.assign(static_cast<std::size_t>(c_), 0.0);
  Tensor y(x.shape);
  for (int ci = 0; ci < c_; ++ci) {
    const auto cu = static_cast<std::size_t>(ci);
    double mean, var;
    if (training) {
      double s = 0.0;
      for (int bi = 0; bi < b; ++bi)
        for (int wi = 0; wi < w; ++wi) s += x[at(bi, ci, wi)];
      mean = s / n;
      double ss = 0.0;
      for (int bi = 0; bi < b; ++bi)
        for (int wi = 0; wi < w; ++wi) ss += (x[at(bi, ci, wi)] - mean) * (x[at(bi, ci, wi)] - mean);
      var = ss / n;
      running_mean[cu] = (1.0 - momentum_) * running_mean[cu] + momentum_ * mean;
      running_var[cu] = (1.0 - momentum_) * running_var[cu] + momentum_ * ss / (n - 1.0);
    } else {
      mean = running_mean[cu];
      var = running_var[cu];
    }
    const double is = 1.0 / std::sqrt(var + eps_);
    inv_std_[cu] = is;
    for (int bi = 0; bi < b; ++bi) {
      for (int wi = 0; wi < w; ++wi) {
        const std::size_t i = at(bi, ci, wi);
        xhat_[i] = (x[i] - mean) * is;
        y[i] = gamma[cu] * xhat_[i] + beta[cu];
      }
    }
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& gy) {
  require_same_shape(xhat_, gy, "batchnorm");
  const int b = gy.dim(0);
  const int w = gy.rank() == 3 ? gy.dim(2) : 1;
  const double n = static_cast<double>(b) * w;
  const auto at = [&](int bi, int ci, int wi) {
    return (static_cast<std::size_t>(bi) * c_ + ci) * static_cast<std::size_t>(w) + wi;
  };
  Tensor gx(gy.shape);
  for (int ci = 0; ci < c_; ++ci) {
    const auto cu = static_cast<std::size_t>(ci);
    double sum_g = 0.0, sum_gx = 0.0;
    for (int bi = 0; bi < b; ++bi) {
      for (int wi = 0; wi < w; ++wi) {
        const std::size_t i = at(bi, ci, wi);
        sum_g += gy[i];
        sum_gx += gy[i] * xhat_[i];
      }
    }
    gamma_grad[cu] += sum_gx;
    beta_grad[cu] += sum_g;
    const double g = gamma[cu], is = inv_std_[cu];
    for (int bi = 0; bi < b; ++bi) {
      for (int wi = 0; wi < w; ++wi) {
        const std::size_t i = at(bi, ci, wi);
        if (trained_) {
          gx[i] = g * is / n * (n * gy[i] - sum_g - xhat_[i] * sum_gx);
        } else {
          gx[i] = g * is * gy[i];
        }
      }
    }
  }
  return gx;
}

void BatchNorm::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "gamma", &gamma, &gamma_grad, nullptr});
  out.push_back({prefix + "beta", &beta, &beta_grad, nullptr});
}

void BatchNorm::collect_buffers(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + "running_mean", &running_mean, nullptr, nullptr});
  out.push_back({prefix + "running_var", &running_var, nullptr, nullptr});
}

// ---------------------------------------------------------------- Flatten

Tensor Flatten::forward(const Tensor& x, bool) {
  if (x.rank() < 1) throw ConfigError("flatten: scalar input");
  in_shape_ = x.shape;
  const int b = x.dim(0);
  return x.reshaped({b, static_cast<int>(x.numel() / static_cast<std::size_t>(std::max(b, 1)))});
}

Tensor Flatten::backward(const Tensor& gy) { return gy.reshaped(in_shape_); }

// ---------------------------------------------------------------- containers

Sequential& Sequential::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, bool training) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, training);
  return h;
}

Tensor Sequential::backward(const Tensor& gy) {
  Tensor g = gy;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->collect(prefix + std::to_string(i) + ".", out);
  }
}

void Sequential::collect_buffers(const std::string& prefix, std::vector<ParamRef>& out) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i]->collect_buffers(prefix + std::to_string(i) + ".", out);
  }
}

Residual::Residual(std::unique_ptr<Layer> inner) : inner_(std::move(inner)) {}

Tensor Residual::forward(const Tensor& x, bool training) {
  Tensor y = inner_->forward(x, training);
  require_same_shape(x, y, "residual");
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += x[i];
  return y;
}

Tensor Residual::backward(const Tensor& gy) {
  Tensor gx = inner_->backward(gy);
  for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gy[i];
  return gx;
}

void Residual::collect(const std::string& prefix, std::vector<ParamRef>& out) {
  inner_->collect(prefix + "inner.", out);
}

void Residual::collect_buffers(const std::string& prefix, std::vector<ParamRef>& out) {
  inner_->collect_buffers(prefix + "inner.", out);
}

std::unique_ptr<Sequential> make_mlp(const std::vector<int>& widths, Activation act,
                                     std::mt19937_64& rng) {
  if (widths.size() < 2) throw ConfigError("mlp: need at least input and output widths");
  auto seq = std::make_unique<Sequential>();
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    seq->add(std::make_unique<Linear>(widths[i], widths[i + 1], rng));
    if (i + 2 < widths.size()) {
      if (act == Activation::kReLU) seq->add(std::make_unique<ReLU>());
      if (act == Activation::kTanh) seq->add(std::make_unique<Tanh>());
    }
  }
  return seq;
}

std::vector<ParamRef> parameters(Layer& layer) {
  std::vector<ParamRef> out;
  layer.collect("", out);
  return out;
}

std::size_t parameter_count(const std::vector<ParamRef>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value->numel();
  return n;
}

void zero_grad(const std::vector<ParamRef>& params) {
  for (const auto& p : params) {
    if (p.grad) p.grad->fill(0.0);
  }
}

// ---------------------------------------------------------------- Adam

Adam::Adam(std::vector<ParamRef> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr >= 0.0) || !(cfg_.eps > 0.0) || !(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) ||
      !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
    throw ConfigError("adam: invalid hyperparameters");
  }
  for (const auto& p : params_) {
    if (!p.value || !p.grad || p.value->shape != p.grad->shape) {
      throw ConfigError("adam: parameter '" + p.name + "' has mismatched gradient");
    }
    if (p.frozen && p.frozen->size() != p.value->numel()) {
      throw ConfigError("adam: frozen mask size mismatch for '" + p.name + "'");
    }
    m_.emplace_back(p.value->numel(), 0.0);
    v_.emplace_back(p.value->numel(), 0.0);
  }
  lr_scale_.assign(params_.size(), 1.0);
}

void Adam::set_lr_scale(const std::string& name, double scale) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) {
      lr_scale_[i] = scale;
      return;
    }
  }
  throw ConfigError("adam: no parameter named '" + name + "'");
}

void Adam::step() {
  for (const auto& p : params_) {
    for (double g : p.grad->data) {
      if (!std::isfinite(g)) throw NumericalError("adam: non-finite gradient in parameter '" + p.name + "'");
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    const auto& p = params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    const double lr = cfg_.lr * lr_scale_[k];
    for (std::size_t i = 0; i < p.value->numel(); ++i) {
      if (p.frozen && (*p.frozen)[i]) continue;
      const double g = (*p.grad)[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      (*p.value)[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::zero_grad() { nn::zero_grad(params_); }

// ---------------------------------------------------------------- gradient checks

double finite_diff_max_rel(const std::function<double(const std::vector<double>&)>& f,
                           const std::vector<double>& x, const std::vector<double>& analytic,
                           double step) {
  if (!(step > 0.0)) throw ConfigError("finite_diff: step must be > 0");
  if (analytic.size() != x.size()) throw ConfigError("finite_diff: size mismatch");
  std::vector<double> numeric(x.size());
  std::vector<double> xp = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + step;
    const double fp = f(xp);
    xp[i] = x[i] - step;
    const double fm = f(xp);
    xp[i] = x[i];
    numeric[i] = (fp - fm) / (2.0 * step);
  }
  double scale = 0.0;
  for (double a : analytic) scale = std::max(scale, std::abs(a));
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double den = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-6 * scale, 1e-300});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / den);
  }
  return worst;
}

GradCheckResult finite_diff_check(Layer& layer, const Tensor& input, double step,
                                  bool training, std::uint64_t seed) {
  if (!(step > 0.0)) throw ConfigError("finite_diff_check: step must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Tensor y = layer.forward(input, training);
  std::vector<double> w(y.numel());
  for (double& v : w) v = gauss(rng);
  const auto scalar = [&](const Tensor& x) {
    const Tensor out = layer.forward(x, training);
    return std::inner_product(out.data.begin(), out.data.end(), w.begin(), 0.0);
  };

  auto params = parameters(layer);
  zero_grad(params);
  Tensor gy(y.shape);
  gy.data = w;
  const Tensor gx = layer.backward(gy);

  GradCheckResult res;
  const auto consider = [&](double err, const std::string& name) {
    if (res.worst.empty() || err > res.max_rel_error) {
      res.max_rel_error = err;
      res.worst = name;
    }
  };

  {
    const std::vector<double> x0 = input.data;
    const auto f = [&](const std::vector<double>& xv) {
      Tensor t(input.shape);
      t.data = xv;
      return scalar(t);
    };
    consider(finite_diff_max_rel(f, x0, gx.data, step), "input");
  }
  for (auto& p : params) {
    const std::vector<double> analytic = p.grad->data;
    const std::vector<double> saved = p.value->data;
    const auto f = [&](const std::vector<double>& pv) {
      p.value->data = pv;
      const double v = scalar(input);
      return v;
    };
    const double err = finite_diff_max_rel(f, saved, analytic, step);
    p.value->data = saved;
    consider(err, p.name);
  }
  return res;
}

}  // namespace rfslam::nn
