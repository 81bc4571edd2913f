#include "dfmim/funcore.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dfmim::funcore {

Grid::Grid(std::size_t n) {
  if (n < 2) throw std::invalid_argument("grid needs at least 2 points, got " + std::to_string(n));
  std::vector<double> pts(n);
  std::vector<double> w(n);
  const double h = 1.0 / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    pts[i] = static_cast<double>(i) / static_cast<double>(n - 1);
    w[i] = h;
  }
  w.front() = w.back() = 0.5 * h;
  points_ = std::make_shared<const std::vector<double>>(std::move(pts));
  weights_ = std::make_shared<const std::vector<double>>(std::move(w));
}

bool operator==(const Grid& a, const Grid& b) noexcept {
  return a.points_ == b.points_ || *a.points_ == *b.points_;
}

Grid make_grid(std::size_t n) { return Grid(n); }

Curve::Curve(Grid grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.size() != grid_.size())
    throw std::invalid_argument("curve has " + std::to_string(values_.size()) + " values for a grid of " +
                                std::to_string(grid_.size()));
  for (double v : values_)
    if (!std::isfinite(v)) throw std::invalid_argument("curve values must be finite");
}

MultiCurve::MultiCurve(std::vector<Curve> channels) : channels_(std::move(channels)) {
  if (channels_.empty()) throw std::invalid_argument("multicurve needs at least one channel");
  for (const auto& c : channels_)
    if (!(c.grid() == channels_.front().grid()))
      throw std::invalid_argument("multicurve channels must share one grid");
}

std::vector<double> MultiCurve::to_matrix() const {
  const std::size_t n = grid().size();
  const std::size_t p = channels_.size();
  std::vector<double> m(n * p);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t i = 0; i < n; ++i) m[i * p + j] = channels_[j][i];
  return m;
}

double inner_product(const Curve& a, const Curve& b) {
  if (!(a.grid() == b.grid())) throw std::invalid_argument("inner_product: curves live on different grids");
  const auto w = a.grid().trapezoid_weights();
  double acc = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) acc += w[i] * (a[i] * b[i]);  // exactly symmetric
  return acc;
}

double beta_value(int j, double t) {
  using std::numbers::pi;
  switch (j) {
    case 1: return 5.0 * std::sin(2.0 * pi * t);
    case 2: return 5.0 * std::sin(3.0 * pi * t);
    case 3: return 3.0 * std::cos(2.0 * pi * t);
    case 4: return 3.0 * std::cos(3.0 * pi * t);
    default: throw std::invalid_argument("beta index must be in 1..4, got " + std::to_string(j));
  }
}

Curve beta_curve(int j, const Grid& grid) {
  std::vector<double> v(grid.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = beta_value(j, grid[i]);
  return Curve(grid, std::move(v));
}

Curve pointwise_transform(const Curve& c, Transform kind) {
  std::vector<double> v(c.values().begin(), c.values().end());
  for (double& x : v) x = kind == Transform::square ? x * x : std::abs(x);
  return Curve(c.grid(), std::move(v));
}

}  // namespace dfmim::funcore
