#include "dfmim/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "dfmim/dsp.hpp"
#include "dfmim/funcore.hpp"
#include "dfmim/model.hpp"
#include "dfmim/nn.hpp"

namespace dfmim::cli {

namespace {

using ad::Tape;
using ad::Tensor;

Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& v : t.data()) v = nd(rng);
  return t;
}

// Weighted sum so that every output entry gets a distinct upstream gradient.
Tensor probe(Tape& tape, const Tensor& y, const Tensor& w) { return tape.sum(tape.mul(y, w)); }

model::DfmimConfig tiny_config(model::Task task, std::uint64_t seed) {
  model::DfmimConfig c;
  c.task = task;
  c.C = task == model::Task::classification ? 3 : 1;
  c.n_grid = 8;
  c.p = 2;
  c.K = 2;
  c.n_enc = 2;
  c.heads = 1;
  c.ff_dim = 8;
  c.dropout = 0.0;
  c.micro_width = 8;
  c.micro_depth = 2;
  c.head_width = 8;
  c.seed = seed;
  return c;
}

double end_to_end(model::Task task, bool norm_first, std::uint64_t seed) {
  auto cfg = tiny_config(task, seed);
  cfg.norm_first = norm_first;
  model::DfmimModel m(cfg);
  if (task == model::Task::regression) m.output_affine = Tensor({1, 2}, {0.3, 1.7});
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> nd;
  model::Dataset d;
  for (std::size_t i = 0; i < 3; ++i) {
    d.x.push_back(random_tensor({cfg.n_grid, cfg.p}, rng));
    d.y.push_back(nd(rng));
    d.y_clean.push_back(d.y.back());
    d.labels.push_back(i % cfg.C);
  }
  const std::vector<std::size_t> batch{0, 1, 2};
  auto params = m.trainable();
  return nn::grad_check([&](Tape& t) { return model::total_loss(t, m, d, batch, {}); }, params);
}

}  // namespace

std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckResult> out;
  auto check = [&](std::string name, const nn::ParamFn& f, std::vector<Tensor> params) {
    out.push_back({std::move(name), nn::grad_check(f, params)});
  };

  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), c = random_tensor({3, 4}, rng);
  const Tensor row = random_tensor({1, 4}, rng), w34 = random_tensor({3, 4}, rng), w35 = random_tensor({3, 5}, rng);
  const Tensor w38 = random_tensor({3, 8}, rng), w32 = random_tensor({3, 2}, rng);
  const Tensor gain = random_tensor({1, 4}, rng), shift = random_tensor({1, 4}, rng);
  const Tensor logits = random_tensor({1, 4}, rng);

  check("matmul", [&](Tape& t) { return probe(t, t.matmul(a, b), w35); }, {a, b});
  check("transpose", [&](Tape& t) { return probe(t, t.transpose(t.transpose(a)), w34); }, {a});
  check("add", [&](Tape& t) { return probe(t, t.add(a, row), w34); }, {a, row});
  check("sub", [&](Tape& t) { return probe(t, t.sub(a, c), w34); }, {a, c});
  check("mul", [&](Tape& t) { return probe(t, t.mul(a, c), w34); }, {a, c});
  check("scale", [&](Tape& t) { return probe(t, t.scale(a, -1.3), w34); }, {a});
  check("tanh", [&](Tape& t) { return probe(t, t.tanh(a), w34); }, {a});
  check("relu", [&](Tape& t) { return probe(t, t.relu(a), w34); }, {a});
  check("softmax", [&](Tape& t) { return probe(t, t.softmax(a), w34); }, {a});
  check("layer_norm", [&](Tape& t) { return probe(t, t.layer_norm(a, gain, shift), w34); }, {a, gain, shift});
  check("concat_cols", [&](Tape& t) {
    const std::vector<Tensor> parts{a, c};
    return probe(t, t.concat_cols(parts), w38);
  }, {a, c});
  check("slice_cols", [&](Tape& t) { return probe(t, t.slice_cols(a, 1, 3), w32); }, {a});
  check("repeat_cols", [&](Tape& t) { return probe(t, t.repeat_cols(a, 2), w38); }, {a});
  check("mean", [&](Tape& t) { return t.mean(t.tanh(a)); }, {a});
  check("focal_loss", [&](Tape& t) { return t.focal_loss(logits, 2, 2.0, 1.5); }, {logits});

  const Tensor x = random_tensor({6, 4}, rng), w64 = random_tensor({6, 4}, rng);
  auto dense = nn::Dense::init(4, 4, rng, true);
  check("dense", [&](Tape& t) { return probe(t, nn::dense(t, x, dense.weight, dense.bias, nn::Activation::tanh), w64); },
        {x, dense.weight, dense.bias});
  auto attn = nn::AttentionWeights::init(4, rng);
  check("self_attention", [&](Tape& t) { return probe(t, nn::self_attention(t, x, attn, 2), w64); },
        {x, attn.wq, attn.wk, attn.wv, attn.wo});
  auto enc = nn::EncoderLayer::init(4, 8, rng);
  for (bool norm_first : {false, true}) {
    nn::EncoderOptions opt;
    opt.heads = 2;
    opt.norm_first = norm_first;
    check(norm_first ? "encoder_pre_norm" : "encoder_post_norm",
          [&](Tape& t) { return probe(t, nn::transformer_encoder(t, x, enc, opt), w64); },
          {x, enc.attention.wq, enc.attention.wk, enc.attention.wv, enc.attention.wo, enc.norm1_gain, enc.norm1_shift,
           enc.ff1.weight, enc.ff1.bias, enc.ff2.weight, enc.ff2.bias, enc.norm2_gain, enc.norm2_shift});
  }
  const Tensor pred = random_tensor({5, 1}, rng), target = random_tensor({5, 1}, rng);
  check("mse_loss", [&](Tape& t) { return nn::mse_loss(t, pred, target); }, {pred});

  const auto grid = funcore::make_grid(8);
  auto node = model::BasisNode::init(8, 2, rng);
  const Tensor channel = random_tensor({8, 1}, rng);
  std::vector<Tensor> node_params{channel};
  for (const auto& l : node.layers) {
    node_params.push_back(l.weight);
    node_params.push_back(l.bias);
  }
  check("basis_score", [&](Tape& t) { return model::basis_score(t, node, channel, grid); }, node_params);

  out.push_back({"model_regression", end_to_end(model::Task::regression, false, seed)});
  out.push_back({"model_classification", end_to_end(model::Task::classification, false, seed)});
  out.push_back({"model_regression_pre_norm", end_to_end(model::Task::regression, true, seed)});
  return out;
}

std::vector<SelfTestResult> run_selftest() {
  std::vector<SelfTestResult> out;
  auto record = [&](std::string name, bool ok, double value) {
    std::ostringstream os;
    os << value;
    out.push_back({std::move(name), ok, os.str()});
  };

  {
    // Closed-form Gram matrix; sin(2 pi t) and cos(3 pi t) (and sin(3 pi t),
    // cos(2 pi t)) are not orthogonal on [0, 1].
    using std::numbers::pi;
    const double gram[4][4] = {{12.5, 0.0, 0.0, -12.0 / pi},
                               {0.0, 12.5, 18.0 / pi, 0.0},
                               {0.0, 18.0 / pi, 4.5, 0.0},
                               {-12.0 / pi, 0.0, 0.0, 4.5}};
    const auto grid = funcore::make_grid(30);
    double worst = 0.0;
    for (int i = 1; i <= 4; ++i)
      for (int j = 1; j <= 4; ++j) {
        const double v = funcore::inner_product(funcore::beta_curve(i, grid), funcore::beta_curve(j, grid));
        const double e = gram[i - 1][j - 1];
        worst = std::max(worst, std::abs(v - e) / std::max(1.0, std::abs(e)));
      }
    record("beta_quadrature", worst < 1e-2, worst);
  }
  {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    std::vector<double> x(40);
    for (double& v : x) v = nd(rng);
    const auto back = dsp::dct3(dsp::dct2(x));
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(back[i] - x[i]));
    record("dct_round_trip", worst < 1e-8, worst);
  }
  {
    const model::Confusion cm{{5, 0, 0, 0}, {0, 5, 0, 0}, {0, 0, 5, 0}, {0, 0, 0, 5}};
    const auto m = model::classification_metrics(cm);
    record("metrics_diagonal", m.wa == 1.0 && m.ua == 1.0, m.ua);
  }
  {
    double worst = 0.0;
    for (const auto& r : run_gradchecks(0)) worst = std::max(worst, r.max_rel_error);
    record("gradcheck", worst < 1e-4, worst);
  }
  return out;
}

}  // namespace dfmim::cli
