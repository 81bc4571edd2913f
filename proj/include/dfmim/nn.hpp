#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "dfmim/tensor.hpp"

namespace dfmim::nn {

using ad::Tape;
using ad::Tensor;

enum class Activation { identity, tanh, relu };

/// U(-gain/sqrt(fan_in), gain/sqrt(fan_in)) entries.
Tensor fan_in_uniform(std::size_t fan_in, ad::Shape shape, std::mt19937_64& rng, double gain = 1.0);

struct Dense {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out

  /// Weights U(+-gain/sqrt(in)); biases zero or U(+-1/sqrt(in)).
  static Dense init(std::size_t in, std::size_t out, std::mt19937_64& rng, bool random_bias = false,
                    double gain = 1.0);
  std::size_t in() const noexcept { return weight.rows(); }
  std::size_t out() const noexcept { return weight.cols(); }
};

/// activation(x W + b), b broadcast over the rows of x.
Tensor dense(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias, Activation act);
inline Tensor dense(Tape& tape, const Tensor& x, const Dense& layer, Activation act) {
  return dense(tape, x, layer.weight, layer.bias, act);
}

struct AttentionWeights {
  Tensor wq, wk, wv, wo;  // d x d each

  static AttentionWeights init(std::size_t d, std::mt19937_64& rng);
};

/// Multi-head scaled dot-product self-attention over the rows of x (seq x d).
/// If `weights_out` is given it receives each head's seq x seq attention matrix.
Tensor self_attention(Tape& tape, const Tensor& x, const AttentionWeights& w, std::size_t heads,
                      std::vector<Tensor>* weights_out = nullptr);

struct EncoderLayer {
  AttentionWeights attention;
  Tensor norm1_gain, norm1_shift;
  Dense ff1, ff2;
  Tensor norm2_gain, norm2_shift;

  static EncoderLayer init(std::size_t d, std::size_t ff_dim, std::mt19937_64& rng);
};

struct EncoderOptions {
  std::size_t heads = 1;
  double dropout = 0.0;
  bool train = false;
  std::mt19937_64* rng = nullptr;  // required when train && dropout > 0
  bool norm_first = false;
};

/// Post-norm block: y = LN(x + drop(SA(x))); out = LN(y + drop(FF(y))), with
/// FF = dense(relu) -> dense(identity). With norm_first:
/// y = x + drop(SA(LN(x))); out = y + drop(FF(LN(y))).
Tensor transformer_encoder(Tape& tape, const Tensor& x, const EncoderLayer& layer, const EncoderOptions& opt);

struct AdamState {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;
};

/// One bias-corrected Adam update using each parameter's accumulated gradient.
void adam_step(AdamState& state, std::span<Tensor> params);

struct FocalLossParams {
  double gamma = 2.0;
  std::vector<double> class_weights;  // empty: all 1
};

Tensor focal_loss(Tape& tape, const Tensor& logits, std::size_t label, const FocalLossParams& params);
Tensor mse_loss(Tape& tape, const Tensor& pred, const Tensor& target);

using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;
using ParamFn = std::function<Tensor(Tape&)>;

/// Max relative error between tape gradients and central differences,
/// denominator max(|analytic|, |numeric|, 1e-6 * max(1, |f(x)|)).
double grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

/// Same check over every coordinate of every parameter (f reads them by
/// handle). `stride` > 1 checks every stride-th coordinate only.
double grad_check(const ParamFn& f, std::span<Tensor> params, double eps = 1e-5, std::size_t stride = 1);

}  // namespace dfmim::nn
