#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace dfmim::funcore {

/// Equally spaced abscissae {i/(n-1)} on [0,1]. Copies share the same storage.
class Grid {
 public:
  explicit Grid(std::size_t n);

  std::size_t size() const noexcept { return points_->size(); }
  double spacing() const noexcept { return 1.0 / static_cast<double>(size() - 1); }
  double operator[](std::size_t i) const { return (*points_)[i]; }
  std::span<const double> points() const noexcept { return *points_; }

  /// Composite trapezoid weights: h/2 at the endpoints, h elsewhere.
  std::span<const double> trapezoid_weights() const noexcept { return *weights_; }

  /// Pointer identity or identical content.
  friend bool operator==(const Grid& a, const Grid& b) noexcept;

 private:
  std::shared_ptr<const std::vector<double>> points_;
  std::shared_ptr<const std::vector<double>> weights_;
};

Grid make_grid(std::size_t n);

/// A function sampled on a Grid.
class Curve {
 public:
  Curve(Grid grid, std::vector<double> values);

  const Grid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const noexcept { return values_.size(); }

 private:
  Grid grid_;
  std::vector<double> values_;
};

/// p curves on one shared grid.
class MultiCurve {
 public:
  explicit MultiCurve(std::vector<Curve> channels);

  const Grid& grid() const noexcept { return channels_.front().grid(); }
  std::size_t channels() const noexcept { return channels_.size(); }
  const Curve& channel(std::size_t j) const { return channels_.at(j); }

  /// Row-major n_grid x p matrix: row = grid point, column = channel.
  std::vector<double> to_matrix() const;

 private:
  std::vector<Curve> channels_;
};

/// Trapezoid approximation of the L2 inner product on [0,1].
double inner_product(const Curve& a, const Curve& b);

/// beta_1..beta_4 of the simulation study: 5 sin(2 pi t), 5 sin(3 pi t),
/// 3 cos(2 pi t), 3 cos(3 pi t).
double beta_value(int j, double t);
Curve beta_curve(int j, const Grid& grid);

enum class Transform { square, abs };
Curve pointwise_transform(const Curve& c, Transform kind);

}  // namespace dfmim::funcore
