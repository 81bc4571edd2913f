#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dfmim/funcore.hpp"
#include "dfmim/nn.hpp"
#include "dfmim/tensor.hpp"

namespace dfmim::model {

using ad::Tape;
using ad::Tensor;

enum class Task { regression, classification };

std::string_view to_string(Task t);
Task parse_task(std::string_view s);

/// Model and training hyperparameters. Defaults are the speech setting.
struct DfmimConfig {
  Task task = Task::classification;
  std::size_t n_grid = 64;  // grid points per curve (tokens)
  std::size_t p = 40;       // channels
  std::size_t K = 4;        // basis nodes per channel
  std::size_t C = 4;        // classes; 1 for regression
  std::size_t n_enc = 2;
  std::size_t heads = 4;
  std::size_t ff_dim = 160;
  double dropout = 0.2;
  double lr = 3e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 15;
  double focal_gamma = 2.0;
  double basis_lambda = 1e-4;
  std::uint64_t seed = 0;
  std::size_t micro_width = 128;
  std::size_t micro_depth = 3;
  std::size_t head_width = 64;
  bool positional_encoding = true;
  bool transform = true;  // false skips the encoder stack and positional encoding
  bool norm_first = false;  // pre-norm encoder blocks (residual stream not normalised)

  void validate() const;
  std::size_t outputs() const noexcept { return task == Task::classification ? C : 1; }
  /// Stable key=value rendering used for reports and checkpoints.
  std::string to_text() const;
  static DfmimConfig from_text(const std::string& text);
  /// Applies one key=value setting; false if the key is not a model key.
  /// Malformed values raise ConfigError naming the key.
  bool set(std::string_view key, std::string_view value);
  friend bool operator==(const DfmimConfig&, const DfmimConfig&) = default;
};

/// Micro-network t -> theta(t): 1 -> width (relu) x depth -> 1.
struct BasisNode {
  std::vector<nn::Dense> layers;

  static BasisNode init(std::size_t width, std::size_t depth, std::mt19937_64& rng);
  /// t: n x 1 column of abscissae; returns n x 1.
  Tensor evaluate(Tape& tape, const Tensor& t) const;
};

Tensor grid_column(const funcore::Grid& grid);
/// Trapezoid weights as a 1 x n row.
Tensor quadrature_row(const funcore::Grid& grid);

funcore::Curve basis_evaluate(const BasisNode& node, const funcore::Grid& grid);

/// <theta, channel> by trapezoid quadrature; channel is n x 1 on `grid`.
Tensor basis_score(Tape& tape, const BasisNode& node, const Tensor& channel, const funcore::Grid& grid);
double basis_score(const BasisNode& node, const funcore::Curve& channel);

class DfmimModel {
 public:
  explicit DfmimModel(DfmimConfig cfg);
  // Tensors are handles; copying would alias parameters. Use clone().
  DfmimModel(const DfmimModel&) = delete;
  DfmimModel& operator=(const DfmimModel&) = delete;
  DfmimModel(DfmimModel&&) = default;
  DfmimModel& operator=(DfmimModel&&) = default;

  const DfmimConfig& config() const noexcept { return cfg_; }
  const funcore::Grid& grid() const noexcept { return grid_; }

  std::vector<nn::EncoderLayer> encoder;
  std::vector<BasisNode> basis;  // channel-major: index j*K + k
  nn::Dense head1, head2, head_out;
  /// Regression output affine: prediction = scale * raw + shift.
  Tensor output_affine;  // 1 x 2: shift, scale (not trained)

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> trainable() const;
  std::vector<Tensor> basis_weight_matrices() const;

  /// Deep copy of all parameter values.
  DfmimModel clone() const;
  void copy_values_from(const DfmimModel& other);

 private:
  DfmimConfig cfg_;
  funcore::Grid grid_;
};

struct ForwardContext {
  bool train = false;
  std::mt19937_64* rng = nullptr;
};

Tensor positional_encoding(std::size_t tokens, std::size_t dim);

/// x: n_grid x p (tokens = grid points). Adds the positional encoding and runs
/// the encoder stack; identity when the transform is disabled.
Tensor transform_module(Tape& tape, const Tensor& x, const DfmimModel& model, const ForwardContext& ctx);

/// All basis curves as an n_grid x (p*K) matrix, column j*K + k.
Tensor basis_curves(Tape& tape, const DfmimModel& model);

/// 1 x (p*K) scores, score[j*K + k] = <theta_{j,k}, z_j>.
Tensor dfn_scores(Tape& tape, const DfmimModel& model, const Tensor& z, const Tensor& curves);
Tensor dfn_scores(Tape& tape, const DfmimModel& model, const Tensor& z);

/// dense(tanh) -> dropout -> dense(tanh) -> dropout -> linear; regression
/// output passes through the output affine.
Tensor head_forward(Tape& tape, const Tensor& scores, const DfmimModel& model, const ForwardContext& ctx);

Tensor model_forward(Tape& tape, const DfmimModel& model, const Tensor& x, const ForwardContext& ctx);
/// Forward sharing precomputed basis curves (one evaluation per batch).
Tensor model_forward(Tape& tape, const DfmimModel& model, const Tensor& x, const Tensor& curves,
                     const ForwardContext& ctx);

/// Supervised samples; x[i] is n_grid x p. Regression uses y (and y_clean for
/// reporting), classification uses labels.
struct Dataset {
  std::vector<Tensor> x;
  std::vector<double> y;
  std::vector<double> y_clean;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return x.size(); }
};

/// lambda * sum of squared entries of the basis weight matrices.
Tensor basis_penalty(Tape& tape, const DfmimModel& model);

/// Mean task loss over `batch` + basis penalty. Regression loss is MSE in
/// target-standardised units (divided by the output scale).
Tensor total_loss(Tape& tape, const DfmimModel& model, const Dataset& data, std::span<const std::size_t> batch,
                  const ForwardContext& ctx, std::vector<Tensor>* outputs = nullptr);

std::vector<double> predict_regression(const DfmimModel& model, const Dataset& data);
std::vector<std::size_t> predict_classes(const DfmimModel& model, const Dataset& data);

struct RegressionMetrics {
  double rmse_vs_noisy = 0.0;
  double rmse_vs_clean = 0.0;
};

RegressionMetrics regression_rmse(std::span<const double> pred, std::span<const double> y,
                                  std::span<const double> y_clean);

using Confusion = std::vector<std::vector<std::size_t>>;  // [true][predicted]

struct ClassificationMetrics {
  double wa = 0.0;
  double ua = 0.0;
  Confusion confusion;
};

/// WA = trace / total; UA = mean recall over classes present in the data.
ClassificationMetrics classification_metrics(const Confusion& confusion);

RegressionMetrics evaluate_regression(const DfmimModel& model, const Dataset& data);
ClassificationMetrics evaluate_classification(const DfmimModel& model, const Dataset& data);

struct TrainReport {
  Task task = Task::regression;
  std::uint64_t seed = 0;
  std::vector<double> train_loss;
  std::vector<double> val_metric;
  std::string selection;  // "val_loss" (minimised) or "val_ua" (maximised)
  int best_epoch = -1;    // -1: no epoch ran
  RegressionMetrics test_regression;
  double baseline_rmse_vs_clean = 0.0;  // train-mean predictor on the test set
  double baseline_rmse_vs_noisy = 0.0;
  ClassificationMetrics test_classification;
  double wall_clock_s = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, TrainReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const TrainReport& report() const noexcept { return report_; }

 private:
  TrainReport report_;
};

/// Seeded init, shuffled mini-batches, Adam; keeps the parameters of the best
/// validation epoch and evaluates them on the test set.
std::pair<DfmimModel, TrainReport> train(const DfmimConfig& cfg, const Dataset& train_set, const Dataset& val_set,
                                         const Dataset& test_set);

}  // namespace dfmim::model
