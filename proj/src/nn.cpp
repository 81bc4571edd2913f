#include "dfmim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "dfmim/errors.hpp"

namespace dfmim::nn {

Tensor fan_in_uniform(std::size_t fan_in, ad::Shape shape, std::mt19937_64& rng, double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Dense Dense::init(std::size_t in, std::size_t out, std::mt19937_64& rng, bool random_bias, double gain) {
  Dense d;
  d.weight = fan_in_uniform(in, {in, out}, rng, gain);
  d.bias = random_bias ? fan_in_uniform(in, {1, out}, rng) : Tensor::zeros({1, out}, true);
  return d;
}

Tensor dense(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias, Activation act) {
  if (x.cols() != weight.rows())
    throw ShapeError("dense: input width " + std::to_string(x.cols()) + " vs weight " + ad::to_string(weight.shape()));
  Tensor z = tape.add(tape.matmul(x, weight), bias);
  switch (act) {
    case Activation::tanh: return tape.tanh(z);
    case Activation::relu: return tape.relu(z);
    case Activation::identity: break;
  }
  return z;
}

AttentionWeights AttentionWeights::init(std::size_t d, std::mt19937_64& rng) {
  AttentionWeights w;
  w.wq = fan_in_uniform(d, {d, d}, rng);
  w.wk = fan_in_uniform(d, {d, d}, rng);
  w.wv = fan_in_uniform(d, {d, d}, rng);
  w.wo = fan_in_uniform(d, {d, d}, rng);
  return w;
}

Tensor self_attention(Tape& tape, const Tensor& x, const AttentionWeights& w, std::size_t heads,
                      std::vector<Tensor>* weights_out) {
  const std::size_t d = x.cols();
  if (heads == 0 || d % heads != 0)
    throw std::invalid_argument("self_attention: model dimension " + std::to_string(d) +
                                " is not divisible by " + std::to_string(heads) + " heads");
  if (w.wq.rows() != d || w.wq.cols() != d) throw ShapeError("self_attention: projection shape mismatch");
  const std::size_t dh = d / heads;
  const Tensor q = tape.matmul(x, w.wq);
  const Tensor k = tape.matmul(x, w.wk);
  const Tensor v = tape.matmul(x, w.wv);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outputs;
  outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t b = h * dh, e = b + dh;
    const Tensor qh = heads == 1 ? q : tape.slice_cols(q, b, e);
    const Tensor kh = heads == 1 ? k : tape.slice_cols(k, b, e);
    const Tensor vh = heads == 1 ? v : tape.slice_cols(v, b, e);
    const Tensor attn = tape.softmax(tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt));
    if (weights_out) weights_out->push_back(attn);
    outputs.push_back(tape.matmul(attn, vh));
  }
  const Tensor joined = heads == 1 ? outputs.front() : tape.concat_cols(outputs);
  return tape.matmul(joined, w.wo);
}

EncoderLayer EncoderLayer::init(std::size_t d, std::size_t ff_dim, std::mt19937_64& rng) {
  EncoderLayer l;
  l.attention = AttentionWeights::init(d, rng);
  l.norm1_gain = Tensor({1, d}, std::vector<double>(d, 1.0), true);
  l.norm1_shift = Tensor::zeros({1, d}, true);
  l.ff1 = Dense::init(d, ff_dim, rng);
  l.ff2 = Dense::init(ff_dim, d, rng);
  l.norm2_gain = Tensor({1, d}, std::vector<double>(d, 1.0), true);
  l.norm2_shift = Tensor::zeros({1, d}, true);
  return l;
}

Tensor transformer_encoder(Tape& tape, const Tensor& x, const EncoderLayer& layer, const EncoderOptions& opt) {
  const bool drop = opt.train && opt.dropout > 0.0;
  if (drop && opt.rng == nullptr) throw std::invalid_argument("transformer_encoder: dropout needs an rng");
  if (opt.norm_first) {
    Tensor sa = self_attention(tape, tape.layer_norm(x, layer.norm1_gain, layer.norm1_shift), layer.attention, opt.heads);
    if (drop) sa = tape.dropout(sa, opt.dropout, *opt.rng);
    const Tensor y = tape.add(x, sa);
    const Tensor n = tape.layer_norm(y, layer.norm2_gain, layer.norm2_shift);
    Tensor ff = dense(tape, dense(tape, n, layer.ff1, Activation::relu), layer.ff2, Activation::identity);
    if (drop) ff = tape.dropout(ff, opt.dropout, *opt.rng);
    return tape.add(y, ff);
  }
  Tensor sa = self_attention(tape, x, layer.attention, opt.heads);
  if (drop) sa = tape.dropout(sa, opt.dropout, *opt.rng);
  const Tensor y = tape.layer_norm(tape.add(x, sa), layer.norm1_gain, layer.norm1_shift);
  Tensor ff = dense(tape, dense(tape, y, layer.ff1, Activation::relu), layer.ff2, Activation::identity);
  if (drop) ff = tape.dropout(ff, opt.dropout, *opt.rng);
  return tape.layer_norm(tape.add(y, ff), layer.norm2_gain, layer.norm2_shift);
}

void adam_step(AdamState& state, std::span<Tensor> params) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), 0.0);
      state.v.emplace_back(p.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: parameter count changed");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (state.m[i].size() != params[i].size()) throw ShapeError("adam_step: parameter shape changed");

  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto value = params[i].data();
    const auto grad = std::as_const(params[i]).grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < value.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * grad[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * grad[j] * grad[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      value[j] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

Tensor focal_loss(Tape& tape, const Tensor& logits, std::size_t label, const FocalLossParams& params) {
  double w = 1.0;
  if (!params.class_weights.empty()) {
    if (params.class_weights.size() != logits.cols())
      throw std::invalid_argument("focal_loss: class weight count does not match logits");
    if (label >= params.class_weights.size()) throw std::invalid_argument("focal_loss: label out of range");
    w = params.class_weights[label];
    if (!(w > 0.0)) throw std::invalid_argument("focal_loss: class weights must be > 0");
  }
  return tape.focal_loss(logits, label, params.gamma, w);
}

Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("mse_loss: shapes differ, " + ad::to_string(pred.shape()) + " vs " + ad::to_string(target.shape()));
  const Tensor diff = tape.sub(pred, target);
  return tape.mean(tape.mul(diff, diff));
}

namespace {

// Central differences cannot resolve gradients much below ~1e-10 * |f|
// (cancellation at h ~ 1e-5), so tiny entries are compared on that scale.
constexpr double kGradFloor = 1e-6;

double relative_error(double analytic, double numeric, double f_scale) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradFloor * std::max(1.0, f_scale)});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace

double grad_check(const ScalarFn& f, const Tensor& x_in, double eps) {
  Tensor x = x_in.clone();
  x.set_requires_grad(true);
  x.zero_grad();
  double f_scale = 0.0;
  {
    Tape tape;
    const Tensor y = f(tape, x);
    if (y.size() != 1) throw std::invalid_argument("grad_check: function is not scalar-valued");
    f_scale = std::abs(y.item());
    tape.backward(y);
  }
  const std::vector<double> analytic(x.grad().begin(), x.grad().end());
  auto eval = [&] {
    Tape tape;
    return f(tape, x).item();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x.data()[i];
    x.data()[i] = orig + eps;
    const double fp = eval();
    x.data()[i] = orig - eps;
    const double fm = eval();
    x.data()[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * eps), f_scale));
  }
  return worst;
}

double grad_check(const ParamFn& f, std::span<Tensor> params, double eps, std::size_t stride) {
  if (stride == 0) stride = 1;
  for (auto& p : params) p.zero_grad();
  double f_scale = 0.0;
  {
    Tape tape;
    const Tensor y = f(tape);
    if (y.size() != 1) throw std::invalid_argument("grad_check: function is not scalar-valued");
    f_scale = std::abs(y.item());
    tape.backward(y);
  }
  auto eval = [&] {
    Tape tape;
    return f(tape).item();
  };
  double worst = 0.0;
  std::size_t counter = 0;
  for (auto& p : params) {
    const std::vector<double> analytic(p.grad().begin(), p.grad().end());
    for (std::size_t i = 0; i < p.size(); ++i, ++counter) {
      if (counter % stride != 0) continue;
      const double orig = p.data()[i];
      p.data()[i] = orig + eps;
      const double fp = eval();
      p.data()[i] = orig - eps;
      const double fm = eval();
      p.data()[i] = orig;
      worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * eps), f_scale));
    }
  }
  return worst;
}

}  // namespace dfmim::nn
