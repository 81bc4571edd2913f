#include "dfmim/model.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "dfmim/errors.hpp"
#include "kv.hpp"

namespace dfmim::model {

std::string_view to_string(Task t) { return t == Task::regression ? "regression" : "classification"; }

Task parse_task(std::string_view s) {
  if (s == "regression") return Task::regression;
  if (s == "classification") return Task::classification;
  throw std::invalid_argument("unknown task '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- config

void DfmimConfig::validate() const {
  auto fail = [](const char* key, const std::string& what) { throw ConfigError(key, what); };
  if (n_grid < 2) fail("n_grid", "must be >= 2");
  if (p < 1) fail("p", "must be >= 1");
  if (K < 1) fail("K", "must be >= 1");
  if (task == Task::classification && C < 2) fail("C", "classification needs >= 2 classes");
  if (task == Task::regression && C != 1) fail("C", "regression has a single output");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout", "must lie in [0,1)");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr", "must be finite and >= 0");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (!(focal_gamma >= 0.0)) fail("focal_gamma", "must be >= 0");
  if (!(basis_lambda >= 0.0)) fail("basis_lambda", "must be >= 0");
  if (micro_width < 1) fail("micro_width", "must be >= 1");
  if (micro_depth < 1) fail("micro_depth", "must be >= 1");
  if (head_width < 1) fail("head_width", "must be >= 1");
  if (transform) {
    if (n_enc >= 1 && (heads < 1 || p % heads != 0)) fail("heads", "model dimension p must be divisible by heads");
    if (n_enc >= 1 && ff_dim < 1) fail("ff_dim", "must be >= 1");
  }
}

namespace {

std::string num(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::string DfmimConfig::to_text() const {
  std::ostringstream os;
  os << "task = " << to_string(task) << '\n'
     << "n_grid = " << n_grid << '\n'
     << "p = " << p << '\n'
     << "K = " << K << '\n'
     << "C = " << C << '\n'
     << "n_enc = " << n_enc << '\n'
     << "heads = " << heads << '\n'
     << "ff_dim = " << ff_dim << '\n'
     << "dropout = " << num(dropout) << '\n'
     << "lr = " << num(lr) << '\n'
     << "batch_size = " << batch_size << '\n'
     << "epochs = " << epochs << '\n'
     << "focal_gamma = " << num(focal_gamma) << '\n'
     << "basis_lambda = " << num(basis_lambda) << '\n'
     << "seed = " << seed << '\n'
     << "micro_width = " << micro_width << '\n'
     << "micro_depth = " << micro_depth << '\n'
     << "head_width = " << head_width << '\n'
     << "positional_encoding = " << (positional_encoding ? "true" : "false") << '\n'
     << "transform = " << (transform ? "true" : "false") << '\n'
     << "norm_first = " << (norm_first ? "true" : "false") << '\n';
  return os.str();
}

bool DfmimConfig::set(std::string_view key, std::string_view v) {
  const std::string k(key);
  auto signed_count = [&] {
    const auto n = kv::to_int(key, v);
    if (n < 0) throw ConfigError(k, "must be >= 0, got " + std::string(v));
    return static_cast<std::size_t>(n);
  };
  if (key == "task") {
    try {
      task = parse_task(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(k, e.what());
    }
  } else if (key == "n_grid") n_grid = signed_count();
  else if (key == "p") p = signed_count();
  else if (key == "K") K = signed_count();
  else if (key == "C") C = signed_count();
  else if (key == "n_enc") n_enc = signed_count();
  else if (key == "heads") heads = signed_count();
  else if (key == "ff_dim") ff_dim = signed_count();
  else if (key == "dropout") dropout = kv::to_double(key, v);
  else if (key == "lr") lr = kv::to_double(key, v);
  else if (key == "batch_size") batch_size = signed_count();
  else if (key == "epochs") epochs = signed_count();
  else if (key == "focal_gamma") focal_gamma = kv::to_double(key, v);
  else if (key == "basis_lambda") basis_lambda = kv::to_double(key, v);
  else if (key == "seed") seed = static_cast<std::uint64_t>(signed_count());
  else if (key == "micro_width") micro_width = signed_count();
  else if (key == "micro_depth") micro_depth = signed_count();
  else if (key == "head_width") head_width = signed_count();
  else if (key == "positional_encoding") positional_encoding = kv::to_bool(key, v);
  else if (key == "transform") transform = kv::to_bool(key, v);
  else if (key == "norm_first") norm_first = kv::to_bool(key, v);
  else return false;
  return true;
}

DfmimConfig DfmimConfig::from_text(const std::string& text) {
  DfmimConfig cfg;
  for (const auto& [k, v] : kv::parse(text))
    if (!cfg.set(k, v)) throw ConfigError(k, "unknown model key");
  cfg.validate();
  return cfg;
}

// ---------------------------------------------------------------- basis nodes

BasisNode BasisNode::init(std::size_t width, std::size_t depth, std::mt19937_64& rng) {
  BasisNode node;
  // Variance-preserving gains (sqrt 6 for relu layers, sqrt 3 for the linear
  // output) so theta starts at unit scale instead of shrinking per layer.
  std::size_t in = 1;
  for (std::size_t l = 0; l < depth; ++l) {
    node.layers.push_back(nn::Dense::init(in, width, rng, /*random_bias=*/true, std::sqrt(6.0)));
    in = width;
  }
  node.layers.push_back(nn::Dense::init(in, 1, rng, /*random_bias=*/true, std::sqrt(3.0)));
  return node;
}

Tensor BasisNode::evaluate(Tape& tape, const Tensor& t) const {
  Tensor h = t;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) h = nn::dense(tape, h, layers[l], nn::Activation::relu);
  return nn::dense(tape, h, layers.back(), nn::Activation::identity);
}

Tensor grid_column(const funcore::Grid& grid) {
  const auto pts = grid.points();
  return Tensor({grid.size(), 1}, std::vector<double>(pts.begin(), pts.end()));
}

Tensor quadrature_row(const funcore::Grid& grid) {
  const auto w = grid.trapezoid_weights();
  return Tensor({1, grid.size()}, std::vector<double>(w.begin(), w.end()));
}

funcore::Curve basis_evaluate(const BasisNode& node, const funcore::Grid& grid) {
  Tape tape;
  const Tensor theta = node.evaluate(tape, grid_column(grid));
  return funcore::Curve(grid, std::vector<double>(theta.data().begin(), theta.data().end()));
}

Tensor basis_score(Tape& tape, const BasisNode& node, const Tensor& channel, const funcore::Grid& grid) {
  if (channel.rows() != grid.size() || channel.cols() != 1)
    throw std::invalid_argument("basis_score: channel has shape " + ad::to_string(channel.shape()) +
                                ", grid has " + std::to_string(grid.size()) + " points");
  const Tensor theta = node.evaluate(tape, grid_column(grid));
  return tape.matmul(quadrature_row(grid), tape.mul(theta, channel));
}

double basis_score(const BasisNode& node, const funcore::Curve& channel) {
  Tape tape;
  const auto v = channel.values();
  const Tensor c({v.size(), 1}, std::vector<double>(v.begin(), v.end()));
  return basis_score(tape, node, c, channel.grid()).item();
}

// ---------------------------------------------------------------- model

DfmimModel::DfmimModel(DfmimConfig cfg) : cfg_(std::move(cfg)), grid_(funcore::make_grid(std::max<std::size_t>(cfg_.n_grid, 2))) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  if (cfg_.transform)
    for (std::size_t l = 0; l < cfg_.n_enc; ++l) encoder.push_back(nn::EncoderLayer::init(cfg_.p, cfg_.ff_dim, rng));
  for (std::size_t b = 0; b < cfg_.p * cfg_.K; ++b) basis.push_back(BasisNode::init(cfg_.micro_width, cfg_.micro_depth, rng));
  head1 = nn::Dense::init(cfg_.p * cfg_.K, cfg_.head_width, rng, true, std::sqrt(3.0));
  head2 = nn::Dense::init(cfg_.head_width, cfg_.head_width, rng, true, std::sqrt(3.0));
  head_out = nn::Dense::init(cfg_.head_width, cfg_.outputs(), rng);
  output_affine = Tensor({1, 2}, {0.0, 1.0});
}

std::vector<std::pair<std::string, Tensor>> DfmimModel::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < encoder.size(); ++l) {
    const std::string p = "encoder." + std::to_string(l) + ".";
    const auto& e = encoder[l];
    out.emplace_back(p + "attention.wq", e.attention.wq);
    out.emplace_back(p + "attention.wk", e.attention.wk);
    out.emplace_back(p + "attention.wv", e.attention.wv);
    out.emplace_back(p + "attention.wo", e.attention.wo);
    out.emplace_back(p + "norm1.gain", e.norm1_gain);
    out.emplace_back(p + "norm1.shift", e.norm1_shift);
    out.emplace_back(p + "ff1.weight", e.ff1.weight);
    out.emplace_back(p + "ff1.bias", e.ff1.bias);
    out.emplace_back(p + "ff2.weight", e.ff2.weight);
    out.emplace_back(p + "ff2.bias", e.ff2.bias);
    out.emplace_back(p + "norm2.gain", e.norm2_gain);
    out.emplace_back(p + "norm2.shift", e.norm2_shift);
  }
  for (std::size_t b = 0; b < basis.size(); ++b) {
    const std::string p =
        "basis." + std::to_string(b / cfg_.K) + "." + std::to_string(b % cfg_.K) + ".layer";
    for (std::size_t l = 0; l < basis[b].layers.size(); ++l) {
      out.emplace_back(p + std::to_string(l) + ".weight", basis[b].layers[l].weight);
      out.emplace_back(p + std::to_string(l) + ".bias", basis[b].layers[l].bias);
    }
  }
  out.emplace_back("head.0.weight", head1.weight);
  out.emplace_back("head.0.bias", head1.bias);
  out.emplace_back("head.1.weight", head2.weight);
  out.emplace_back("head.1.bias", head2.bias);
  out.emplace_back("head.out.weight", head_out.weight);
  out.emplace_back("head.out.bias", head_out.bias);
  out.emplace_back("output.affine", output_affine);
  return out;
}

std::vector<Tensor> DfmimModel::trainable() const {
  std::vector<Tensor> out;
  for (const auto& [name, t] : named_parameters())
    if (t.requires_grad()) out.push_back(t);
  return out;
}

std::vector<Tensor> DfmimModel::basis_weight_matrices() const {
  std::vector<Tensor> out;
  for (const auto& node : basis)
    for (const auto& l : node.layers) out.push_back(l.weight);
  return out;
}

DfmimModel DfmimModel::clone() const {
  DfmimModel copy(cfg_);
  copy.copy_values_from(*this);
  return copy;
}

void DfmimModel::copy_values_from(const DfmimModel& other) {
  auto dst = named_parameters();
  const auto src = other.named_parameters();
  if (dst.size() != src.size()) throw ShapeError("copy_values_from: parameter sets differ");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].first != src[i].first || dst[i].second.shape() != src[i].second.shape())
      throw ShapeError("copy_values_from: mismatch at " + dst[i].first);
    std::copy(src[i].second.data().begin(), src[i].second.data().end(), dst[i].second.data().begin());
  }
}

// ---------------------------------------------------------------- forward

Tensor positional_encoding(std::size_t tokens, std::size_t dim) {
  Tensor pe = Tensor::zeros({tokens, dim});
  for (std::size_t pos = 0; pos < tokens; ++pos)
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * freq;
      pe.at(pos, i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  return pe;
}

Tensor transform_module(Tape& tape, const Tensor& x, const DfmimModel& model, const ForwardContext& ctx) {
  const auto& cfg = model.config();
  if (x.cols() != cfg.p)
    throw ShapeError("transform_module: input has " + std::to_string(x.cols()) + " channels, model expects " +
                     std::to_string(cfg.p));
  if (!cfg.transform) return x;
  Tensor h = cfg.positional_encoding ? tape.add(x, positional_encoding(x.rows(), x.cols())) : x;
  nn::EncoderOptions opt{cfg.heads, cfg.dropout, ctx.train, ctx.rng, cfg.norm_first};
  for (const auto& layer : model.encoder) h = nn::transformer_encoder(tape, h, layer, opt);
  return h;
}

Tensor basis_curves(Tape& tape, const DfmimModel& model) {
  const Tensor t = grid_column(model.grid());
  std::vector<Tensor> cols;
  cols.reserve(model.basis.size());
  for (const auto& node : model.basis) cols.push_back(node.evaluate(tape, t));
  return tape.concat_cols(cols);
}

Tensor dfn_scores(Tape& tape, const DfmimModel& model, const Tensor& z, const Tensor& curves) {
  const auto& cfg = model.config();
  if (z.cols() != cfg.p || z.rows() != model.grid().size())
    throw ShapeError("dfn_scores: expected " + std::to_string(model.grid().size()) + "x" + std::to_string(cfg.p) +
                     ", got " + ad::to_string(z.shape()));
  const Tensor zz = cfg.K == 1 ? z : tape.repeat_cols(z, cfg.K);
  return tape.matmul(quadrature_row(model.grid()), tape.mul(zz, curves));
}

Tensor dfn_scores(Tape& tape, const DfmimModel& model, const Tensor& z) {
  return dfn_scores(tape, model, z, basis_curves(tape, model));
}

Tensor head_forward(Tape& tape, const Tensor& scores, const DfmimModel& model, const ForwardContext& ctx) {
  const auto& cfg = model.config();
  if (scores.cols() != cfg.p * cfg.K || scores.rows() != 1)
    throw ShapeError("head_forward: expected 1x" + std::to_string(cfg.p * cfg.K) + " scores, got " +
                     ad::to_string(scores.shape()));
  const bool drop = ctx.train && cfg.dropout > 0.0;
  if (drop && ctx.rng == nullptr) throw std::invalid_argument("head_forward: dropout needs an rng");
  Tensor h = nn::dense(tape, scores, model.head1, nn::Activation::tanh);
  if (drop) h = tape.dropout(h, cfg.dropout, *ctx.rng);
  h = nn::dense(tape, h, model.head2, nn::Activation::tanh);
  if (drop) h = tape.dropout(h, cfg.dropout, *ctx.rng);
  Tensor out = nn::dense(tape, h, model.head_out, nn::Activation::identity);
  if (cfg.task == Task::regression) {
    const double shift = model.output_affine.data()[0];
    const double scale = model.output_affine.data()[1];
    out = tape.add(tape.scale(out, scale), Tensor::scalar(shift));
  }
  return out;
}

Tensor model_forward(Tape& tape, const DfmimModel& model, const Tensor& x, const Tensor& curves,
                     const ForwardContext& ctx) {
  if (x.rows() != model.grid().size() || x.cols() != model.config().p)
    throw ShapeError("model_forward: expected " + std::to_string(model.grid().size()) + "x" +
                     std::to_string(model.config().p) + " input, got " + ad::to_string(x.shape()));
  const Tensor z = transform_module(tape, x, model, ctx);
  return head_forward(tape, dfn_scores(tape, model, z, curves), model, ctx);
}

Tensor model_forward(Tape& tape, const DfmimModel& model, const Tensor& x, const ForwardContext& ctx) {
  return model_forward(tape, model, x, basis_curves(tape, model), ctx);
}

// ---------------------------------------------------------------- losses

Tensor basis_penalty(Tape& tape, const DfmimModel& model) {
  std::vector<Tensor> terms;
  for (const auto& w : model.basis_weight_matrices()) terms.push_back(tape.sum(tape.mul(w, w)));
  return tape.scale(tape.add_n(terms), model.config().basis_lambda);
}

Tensor total_loss(Tape& tape, const DfmimModel& model, const Dataset& data, std::span<const std::size_t> batch,
                  const ForwardContext& ctx, std::vector<Tensor>* outputs) {
  if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
  const auto& cfg = model.config();
  const Tensor curves = basis_curves(tape, model);
  const double scale = model.output_affine.data()[1];
  nn::FocalLossParams focal{cfg.focal_gamma, {}};
  std::vector<Tensor> losses;
  losses.reserve(batch.size());
  for (const std::size_t i : batch) {
    if (i >= data.size()) throw std::out_of_range("total_loss: sample index out of range");
    const Tensor out = model_forward(tape, model, data.x[i], curves, ctx);
    if (outputs) outputs->push_back(out);
    if (cfg.task == Task::classification) {
      losses.push_back(nn::focal_loss(tape, out, data.labels.at(i), focal));
    } else {
      const Tensor diff = tape.scale(tape.sub(out, Tensor::scalar(data.y.at(i))), 1.0 / scale);
      losses.push_back(tape.mul(diff, diff));
    }
  }
  Tensor task_loss = tape.scale(tape.add_n(losses), 1.0 / static_cast<double>(batch.size()));
  if (cfg.basis_lambda == 0.0) return task_loss;
  return tape.add(task_loss, basis_penalty(tape, model));
}

std::vector<double> predict_regression(const DfmimModel& model, const Dataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  Tape curves_tape;
  const Tensor curves = basis_curves(curves_tape, model);
  for (const auto& x : data.x) {
    Tape tape;
    out.push_back(model_forward(tape, model, x, curves, {}).item());
  }
  return out;
}

std::vector<std::size_t> predict_classes(const DfmimModel& model, const Dataset& data) {
  std::vector<std::size_t> out;
  out.reserve(data.size());
  Tape curves_tape;
  const Tensor curves = basis_curves(curves_tape, model);
  for (const auto& x : data.x) {
    Tape tape;
    const Tensor logits = model_forward(tape, model, x, curves, {});
    const auto d = logits.data();
    out.push_back(static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin()));
  }
  return out;
}

// ---------------------------------------------------------------- metrics

RegressionMetrics regression_rmse(std::span<const double> pred, std::span<const double> y,
                                  std::span<const double> y_clean) {
  if (pred.size() != y.size() || pred.size() != y_clean.size())
    throw std::invalid_argument("regression_rmse: length mismatch");
  if (pred.empty()) throw std::invalid_argument("regression_rmse: empty dataset");
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    a += (pred[i] - y[i]) * (pred[i] - y[i]);
    b += (pred[i] - y_clean[i]) * (pred[i] - y_clean[i]);
  }
  const auto n = static_cast<double>(pred.size());
  return {std::sqrt(a / n), std::sqrt(b / n)};
}

ClassificationMetrics classification_metrics(const Confusion& confusion) {
  ClassificationMetrics m;
  m.confusion = confusion;
  std::size_t total = 0, correct = 0;
  double recall_sum = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < confusion.size(); ++i) {
    if (confusion[i].size() != confusion.size()) throw std::invalid_argument("confusion matrix must be square");
    const std::size_t row = std::accumulate(confusion[i].begin(), confusion[i].end(), std::size_t{0});
    total += row;
    correct += confusion[i][i];
    if (row > 0) {
      recall_sum += static_cast<double>(confusion[i][i]) / static_cast<double>(row);
      ++present;
    }
  }
  if (total == 0) throw std::invalid_argument("classification metrics of an empty dataset");
  m.wa = static_cast<double>(correct) / static_cast<double>(total);
  m.ua = recall_sum / static_cast<double>(present);
  return m;
}

RegressionMetrics evaluate_regression(const DfmimModel& model, const Dataset& data) {
  if (model.config().task != Task::regression) throw std::invalid_argument("evaluate_regression: not a regression model");
  if (data.size() == 0) throw std::invalid_argument("evaluate_regression: empty dataset");
  const auto pred = predict_regression(model, data);
  const auto& clean = data.y_clean.empty() ? data.y : data.y_clean;
  return regression_rmse(pred, data.y, clean);
}

ClassificationMetrics evaluate_classification(const DfmimModel& model, const Dataset& data) {
  if (model.config().task != Task::classification)
    throw std::invalid_argument("evaluate_classification: not a classification model");
  if (data.size() == 0) throw std::invalid_argument("evaluate_classification: empty dataset");
  const std::size_t c = model.config().C;
  Confusion conf(c, std::vector<std::size_t>(c, 0));
  const auto pred = predict_classes(model, data);
  for (std::size_t i = 0; i < pred.size(); ++i) ++conf.at(data.labels.at(i)).at(pred[i]);
  return classification_metrics(conf);
}

// ---------------------------------------------------------------- training

namespace {

void check_dataset(const DfmimConfig& cfg, const Dataset& d, const char* name) {
  if (d.size() == 0) throw std::invalid_argument(std::string("train: ") + name + " set is empty");
  for (const auto& x : d.x)
    if (x.rows() != cfg.n_grid || x.cols() != cfg.p)
      throw ShapeError(std::string("train: ") + name + " sample has shape " + ad::to_string(x.shape()));
  if (cfg.task == Task::classification) {
    if (d.labels.size() != d.size()) throw std::invalid_argument(std::string("train: ") + name + " labels missing");
    for (auto l : d.labels)
      if (l >= cfg.C) throw std::invalid_argument(std::string("train: ") + name + " label out of range");
  } else if (d.y.size() != d.size()) {
    throw std::invalid_argument(std::string("train: ") + name + " targets missing");
  }
}

double validation_loss(const DfmimModel& model, const Dataset& d) {
  const auto pred = predict_regression(model, d);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - d.y[i]) * (pred[i] - d.y[i]);
  return acc / static_cast<double>(pred.size());
}

void check_outputs(const std::vector<Tensor>& outputs, Task task) {
  for (const auto& o : outputs) {
    for (double v : o.data())
      if (!std::isfinite(v)) throw std::runtime_error("non-finite model output");
    if (task == Task::classification) {
      const auto d = o.data();
      const double mx = *std::max_element(d.begin(), d.end());
      double z = 0.0;
      for (double v : d) z += std::exp(v - mx);
      double s = 0.0;
      for (double v : d) s += std::exp(v - mx) / z;
      if (std::abs(s - 1.0) > 1e-6) throw std::runtime_error("softmax probabilities do not sum to 1");
    }
  }
}

}  // namespace

std::pair<DfmimModel, TrainReport> train(const DfmimConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                                         const Dataset& test_set) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate();
  check_dataset(cfg, train_set, "training");
  check_dataset(cfg, val_set, "validation");
  check_dataset(cfg, test_set, "test");

  DfmimModel model(cfg);
  TrainReport report;
  report.task = cfg.task;
  report.seed = cfg.seed;
  report.selection = cfg.task == Task::regression ? "val_loss" : "val_ua";

  if (cfg.task == Task::regression) {
    const auto n = static_cast<double>(train_set.size());
    const double mean = std::accumulate(train_set.y.begin(), train_set.y.end(), 0.0) / n;
    double var = 0.0;
    for (double v : train_set.y) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / n);
    model.output_affine.data()[0] = mean;
    model.output_affine.data()[1] = sd > 0.0 ? sd : 1.0;
    const std::vector<double> baseline(test_set.size(), mean);
    const auto& clean = test_set.y_clean.empty() ? test_set.y : test_set.y_clean;
    const auto b = regression_rmse(baseline, test_set.y, clean);
    report.baseline_rmse_vs_clean = b.rmse_vs_clean;
    report.baseline_rmse_vs_noisy = b.rmse_vs_noisy;
  }

  auto params = model.trainable();
  nn::AdamState adam;
  adam.lr = cfg.lr;
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5DEECE66DULL);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0xA5A5A5A5A5A5A5A5ULL);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  DfmimModel best = model.clone();
  double best_metric = 0.0;
  auto better = [&](double m) {
    if (report.best_epoch < 0) return true;
    return cfg.task == Task::regression ? m < best_metric : m > best_metric;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::span<const std::size_t> batch(order.data() + b, std::min(cfg.batch_size, order.size() - b));
      for (auto& p : params) p.zero_grad();
      Tape tape;
      std::vector<Tensor> outputs;
      ForwardContext ctx{true, &dropout_rng};
      const Tensor loss = total_loss(tape, model, train_set, batch, ctx, &outputs);
      const double lv = loss.item();
      try {
        if (!std::isfinite(lv)) throw std::runtime_error("non-finite loss");
        check_outputs(outputs, cfg.task);
      } catch (const std::runtime_error& e) {
        report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        throw TrainingDiverged(std::string("training diverged at epoch ") + std::to_string(epoch) + ": " + e.what(),
                               report);
      }
      tape.backward(loss);
      nn::adam_step(adam, params);
      loss_sum += lv;
      ++batches;
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(batches));

    const double metric =
        cfg.task == Task::regression ? validation_loss(model, val_set) : evaluate_classification(model, val_set).ua;
    report.val_metric.push_back(metric);
    if (better(metric)) {
      best_metric = metric;
      report.best_epoch = static_cast<int>(epoch);
      best.copy_values_from(model);
    }
  }
  if (report.best_epoch >= 0) model.copy_values_from(best);

  if (cfg.task == Task::regression)
    report.test_regression = evaluate_regression(model, test_set);
  else
    report.test_classification = evaluate_classification(model, test_set);
  report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(report)};
}

}  // namespace dfmim::model
