#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dfmim::ad {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

/// Row-major n-dimensional array of doubles with an optional gradient buffer.
/// Copies are handles onto the same storage; use clone() for a deep copy.
/// Tape operations work on rank <= 2 tensors (rank 0/1 read as one row).
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  const Shape& shape() const noexcept;
  std::size_t size() const noexcept;
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<double> data() noexcept;
  std::span<const double> data() const noexcept;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;
  double item() const;

  bool requires_grad() const noexcept;
  void set_requires_grad(bool v) noexcept;

  /// Gradient buffer, allocated (zeroed) on first access.
  std::span<double> grad();
  std::span<const double> grad() const;
  void zero_grad();

  Tensor clone() const;
  bool same_storage(const Tensor& other) const noexcept { return impl_ == other.impl_; }

 private:
  friend class Tape;
  struct Impl {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<double>& ensure_grad() {
      if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
      return grad;
    }
  };
  explicit Tensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<Impl> impl_;
};

/// Records primitive operations in execution order; backward() replays their
/// gradient rules in reverse. One tape per forward pass; not thread-safe.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose(const Tensor& a);
  /// a + b where b has a's shape, is a 1 x cols row (broadcast over rows) or 1 x 1.
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double s);
  Tensor tanh(const Tensor& a);
  Tensor relu(const Tensor& a);
  /// Row-wise softmax.
  Tensor softmax(const Tensor& a);
  /// Row-wise normalisation followed by per-column gain and shift (1 x cols).
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps = 1e-5);
  /// Inverted dropout: zero with probability p, scale survivors by 1/(1-p).
  Tensor dropout(const Tensor& a, double p, std::mt19937_64& rng);
  Tensor concat_cols(std::span<const Tensor> parts);
  Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
  /// Each column repeated `times` times in place: [c0 c0 c1 c1 ...].
  Tensor repeat_cols(const Tensor& a, std::size_t times);
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  /// Elementwise sum of equally shaped tensors.
  Tensor add_n(std::span<const Tensor> parts);
  /// -w (1 - p_y)^gamma log p_y with p = softmax(logits), logits 1 x C.
  Tensor focal_loss(const Tensor& logits, std::size_t label, double gamma, double weight = 1.0);

  /// Seeds d(scalar)/d(scalar) = 1 and runs every recorded rule in reverse.
  void backward(const Tensor& scalar);

  std::size_t size() const noexcept { return rules_.size(); }

 private:
  using Impl = Tensor::Impl;
  Tensor make(Shape shape, std::vector<double> value, bool requires_grad);
  void record(std::function<void()> rule) { rules_.push_back(std::move(rule)); }

  std::vector<std::function<void()>> rules_;
};

}  // namespace dfmim::ad
