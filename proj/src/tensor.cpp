#include "dfmim/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "dfmim/errors.hpp"

namespace dfmim::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;

std::size_t product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t rows_of(const Shape& s) {
  if (s.size() <= 1) return 1;
  if (s.size() == 2) return s[0];
  return product(s) / s.back();
}

std::size_t cols_of(const Shape& s) { return s.empty() ? 1 : s.back(); }

void require_matrix(const Shape& s, const char* op) {
  if (s.size() > 2) throw ShapeError(std::string(op) + ": expected rank <= 2, got " + to_string(s));
}

MapMat view(std::vector<double>& v, std::size_t r, std::size_t c) {
  return MapMat(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

enum class Broadcast { same, row, scalar };

Broadcast broadcast_kind(const Shape& a, const Shape& b, const char* op) {
  require_matrix(a, op);
  require_matrix(b, op);
  const std::size_t ar = rows_of(a), ac = cols_of(a), br = rows_of(b), bc = cols_of(b);
  if (ar == br && ac == bc) return Broadcast::same;
  if (br == 1 && bc == ac) return Broadcast::row;
  if (br == 1 && bc == 1) return Broadcast::scalar;
  throw ShapeError(std::string(op) + ": cannot broadcast " + to_string(b) + " onto " + to_string(a));
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------- Tensor

Tensor::Tensor() : impl_(std::make_shared<Impl>()) { impl_->shape = {0}; }

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  if (product(shape) != data.size())
    throw ShapeError("tensor of shape " + to_string(shape) + " given " + std::to_string(data.size()) + " values");
  impl_->shape = std::move(shape);
  impl_->value = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const auto n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor({1, 1}, {v}, requires_grad); }

const Shape& Tensor::shape() const noexcept { return impl_->shape; }
std::size_t Tensor::size() const noexcept { return impl_->value.size(); }
std::size_t Tensor::rows() const noexcept { return rows_of(impl_->shape); }
std::size_t Tensor::cols() const noexcept { return cols_of(impl_->shape); }
std::span<double> Tensor::data() noexcept { return impl_->value; }
std::span<const double> Tensor::data() const noexcept { return impl_->value; }

double& Tensor::at(std::size_t r, std::size_t c) {
  if (r >= rows() || c >= cols()) throw std::out_of_range("tensor index out of range");
  return impl_->value[r * cols() + c];
}
double Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) throw std::out_of_range("tensor index out of range");
  return impl_->value[r * cols() + c];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return impl_->value[0];
}

bool Tensor::requires_grad() const noexcept { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool v) noexcept { impl_->requires_grad = v; }
std::span<double> Tensor::grad() { return impl_->ensure_grad(); }
std::span<const double> Tensor::grad() const { return impl_->ensure_grad(); }
void Tensor::zero_grad() { impl_->grad.assign(impl_->value.size(), 0.0); }

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->value, impl_->requires_grad); }

// ---------------------------------------------------------------- Tape

Tensor Tape::make(Shape shape, std::vector<double> value, bool requires_grad) {
  return Tensor(std::move(shape), std::move(value), requires_grad);
}

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a.shape(), "matmul");
  require_matrix(b.shape(), "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw ShapeError("matmul: inner dimensions differ, " + to_string(a.shape()) + " x " + to_string(b.shape()));
  std::vector<double> out(m * n);
  view(out, m, n).noalias() = view(a.impl_->value, m, k) * view(b.impl_->value, k, n);
  const bool rg = a.requires_grad() || b.requires_grad();
  Tensor y = make({m, n}, std::move(out), rg);
  if (rg) {
    record([ai = a.impl_, bi = b.impl_, yi = y.impl_, m, k, n] {
      const auto dy = view(yi->ensure_grad(), m, n);
      if (ai->requires_grad) view(ai->ensure_grad(), m, k).noalias() += dy * view(bi->value, k, n).transpose();
      if (bi->requires_grad) view(bi->ensure_grad(), k, n).noalias() += view(ai->value, m, k).transpose() * dy;
    });
  }
  return y;
}

Tensor Tape::transpose(const Tensor& a) {
  require_matrix(a.shape(), "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  view(out, c, r) = view(a.impl_->value, r, c).transpose();
  Tensor y = make({c, r}, std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    record([ai = a.impl_, yi = y.impl_, r, c] {
      view(ai->ensure_grad(), r, c) += view(yi->ensure_grad(), c, r).transpose();
    });
  }
  return y;
}

namespace {

// Shared forward/backward for add (sign=+1) and sub (sign=-1).
struct AddSub {
  static std::vector<double> forward(const std::vector<double>& a, const std::vector<double>& b, std::size_t cols,
                                     Broadcast kind, double sign) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double bv = kind == Broadcast::same ? b[i] : kind == Broadcast::row ? b[i % cols] : b[0];
      out[i] = a[i] + sign * bv;
    }
    return out;
  }
};

}  // namespace

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind(a.shape(), b.shape(), "add");
  const std::size_t cols = a.cols();
  const bool rg = a.requires_grad() || b.requires_grad();
  Tensor y = make(a.shape(), AddSub::forward(a.impl_->value, b.impl_->value, cols, kind, 1.0), rg);
  if (rg) {
    record([ai = a.impl_, bi = b.impl_, yi = y.impl_, kind, cols] {
      const auto& dy = yi->ensure_grad();
      if (ai->requires_grad) {
        auto& da = ai->ensure_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (bi->requires_grad) {
        auto& db = bi->ensure_grad();
        for (std::size_t i = 0; i < dy.size(); ++i)
          db[kind == Broadcast::same ? i : kind == Broadcast::row ? i % cols : 0] += dy[i];
      }
    });
  }
  return y;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  const auto kind = broadcast_kind(a.shape(), b.shape(), "sub");
  const std::size_t cols = a.cols();
  const bool rg = a.requires_grad() || b.requires_grad();
  Tensor y = make(a.shape(), AddSub::forward(a.impl_->value, b.impl_->value, cols, kind, -1.0), rg);
  if (rg) {
    record([ai = a.impl_, bi = b.impl_, yi = y.impl_, kind, cols] {
      const auto& dy = yi->ensure_grad();
      if (ai->requires_grad) {
        auto& da = ai->ensure_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
      }
      if (bi->requires_grad) {
        auto& db = bi->ensure_grad();
        for (std::size_t i = 0; i < dy.size(); ++i)
          db[kind == Broadcast::same ? i : kind == Broadcast::row ? i % cols : 0] -= dy[i];
      }
    });
  }
  return y;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  require_matrix(a.shape(), "mul");
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("mul: shapes differ, " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.impl_->value[i] * b.impl_->value[i];
  const bool rg = a.requires_grad() || b.requires_grad();
  Tensor y = make(a.shape(), std::move(out), rg);
  if (rg) {
    record([ai = a.impl_, bi = b.impl_, yi = y.impl_] {
      const auto& dy = yi->ensure_grad();
      // Read values before touching grads: a and b may be the same tensor.
      if (ai->requires_grad) {
        auto& da = ai->ensure_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * bi->value[i];
      }
      if (bi->requires_grad) {
        auto& db = bi->ensure_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * ai->value[i];
      }
    });
  }
  return y;
}

Tensor Tape::scale(const Tensor& a, double s) {
  std::vector<double> out(a.impl_->value);
  for (double& v : out) v *= s;
  Tensor y = make(a.shape(), std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    record([ai = a.impl_, yi = y.impl_, s] {
      const auto& dy = yi->ensure_grad();
      auto& da = ai->ensure_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += s * dy[i];
    });
  }
  return y;
}

Tensor Tape::tanh(const Tensor& a) {
  std::vector<double> out(a.impl_->value);
  for (double& v : out) v = std::tanh(v);
  Tensor y = make(a.shape(), std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    record([ai = a.impl_, yi = y.impl_] {
      const auto& dy = yi->ensure_grad();
      auto& da = ai->ensure_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * (1.0 - yi->value[i] * yi->value[i]);
    });
  }
  return y;
}

Tensor Tape::relu(const Tensor& a) {
  std::vector<double> out(a.impl_->value);
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  Tensor y = make(a.shape(), std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    record([ai = a.impl_, yi = y.impl_] {
      const auto& dy = yi->ensure_grad();
      auto& da = ai->ensure_grad();
      for (std::size_t i = 0; i < dy.size(); ++i)
        if (ai->value[i] > 0.0) da[i] += dy[i];
    });
  }
  return y;
}

Tensor Tape::softmax(const Tensor& a) {
  require_matrix(a.shape(), "softmax");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* x = a.impl_->value.data() + i * c;
    double* y = out.data() + i * c;
    const double mx = *std::max_element(x, x + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < c; ++j) y[j] /= z;
  }
  Tensor y = make(a.shape(), std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    record([ai = a.impl_, yi = y.impl_, r, c] {
      const auto& dy = yi->ensure_grad();
      auto& da = ai->ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        const double* p = yi->value.data() + i * c;
        const double* g = dy.data() + i * c;
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += g[j] * p[j];
        for (std::size_t j = 0; j < c; ++j) da[i * c + j] += p[j] * (g[j] - dot);
      }
    });
  }
  return y;
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& shift, double eps) {
  require_matrix(x.shape(), "layer_norm");
  const std::size_t r = x.rows(), c = x.cols();
  if (gain.size() != c || shift.size() != c)
    throw ShapeError("layer_norm: gain/shift must have " + std::to_string(c) + " entries");
  std::vector<double> xhat(x.size()), out(x.size()), inv_sd(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* v = x.impl_->value.data() + i * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += v[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (v[j] - mu) * (v[j] - mu);
    var /= static_cast<double>(c);
    inv_sd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (v[j] - mu) * inv_sd[i];
      out[i * c + j] = gain.impl_->value[j] * xhat[i * c + j] + shift.impl_->value[j];
    }
  }
  const bool rg = x.requires_grad() || gain.requires_grad() || shift.requires_grad();
  Tensor y = make(x.shape(), std::move(out), rg);
  if (rg) {
    record([xi = x.impl_, gi = gain.impl_, bi = shift.impl_, yi = y.impl_, xhat = std::move(xhat),
            inv_sd = std::move(inv_sd), r, c] {
      const auto& dy = yi->ensure_grad();
      if (gi->requires_grad) {
        auto& dg = gi->ensure_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) dg[i % c] += dy[i] * xhat[i];
      }
      if (bi->requires_grad) {
        auto& db = bi->ensure_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) db[i % c] += dy[i];
      }
      if (xi->requires_grad) {
        auto& dx = xi->ensure_grad();
        std::vector<double> dxhat(c);
        for (std::size_t i = 0; i < r; ++i) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t j = 0; j < c; ++j) {
            dxhat[j] = dy[i * c + j] * gi->value[j];
            m1 += dxhat[j];
            m2 += dxhat[j] * xhat[i * c + j];
          }
          m1 /= static_cast<double>(c);
          m2 /= static_cast<double>(c);
          for (std::size_t j = 0; j < c; ++j) dx[i * c + j] += inv_sd[i] * (dxhat[j] - m1 - xhat[i * c + j] * m2);
        }
      }
    });
  }
  return y;
}

Tensor Tape::dropout(const Tensor& a, double p, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw std::invalid_argument("dropout probability must lie in [0,1)");
  if (p == 0.0) return a;
  const double keep = 1.0 - p;
  std::bernoulli_distribution draw(keep);
  std::vector<double> mask(a.size());
  for (double& m : mask) m = draw(rng) ? 1.0 / keep : 0.0;
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.impl_->value[i] * mask[i];
  Tensor y = make(a.shape(), std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    record([ai = a.impl_, yi = y.impl_, mask = std::move(mask)] {
      const auto& dy = yi->ensure_grad();
      auto& da = ai->ensure_grad();
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * mask[i];
    });
  }
  return y;
}

Tensor Tape::concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: nothing to concatenate");
  const std::size_t r = parts.front().rows();
  std::size_t total = 0;
  bool rg = false;
  for (const auto& t : parts) {
    require_matrix(t.shape(), "concat_cols");
    if (t.rows() != r) throw ShapeError("concat_cols: row counts differ");
    total += t.cols();
    rg = rg || t.requires_grad();
  }
  std::vector<double> out(r * total);
  std::size_t offset = 0;
  for (const auto& t : parts) {
    const std::size_t c = t.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(t.impl_->value.data() + i * c, c, out.data() + i * total + offset);
    offset += c;
  }
  Tensor y = make({r, total}, std::move(out), rg);
  if (rg) {
    std::vector<std::shared_ptr<Impl>> impls;
    for (const auto& t : parts) impls.push_back(t.impl_);
    record([impls = std::move(impls), yi = y.impl_, r, total] {
      const auto& dy = yi->ensure_grad();
      std::size_t off = 0;
      for (const auto& pi : impls) {
        const std::size_t c = cols_of(pi->shape);
        if (pi->requires_grad) {
          auto& dp = pi->ensure_grad();
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) dp[i * c + j] += dy[i * total + off + j];
        }
        off += c;
      }
    });
  }
  return y;
}

Tensor Tape::slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a.shape(), "slice_cols");
  const std::size_t r = a.rows(), c = a.cols();
  if (begin >= end || end > c) throw ShapeError("slice_cols: bad range for " + to_string(a.shape()));
  const std::size_t w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(a.impl_->value.data() + i * c + begin, w, out.data() + i * w);
  Tensor y = make({r, w}, std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    record([ai = a.impl_, yi = y.impl_, r, c, w, begin] {
      const auto& dy = yi->ensure_grad();
      auto& da = ai->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) da[i * c + begin + j] += dy[i * w + j];
    });
  }
  return y;
}

Tensor Tape::repeat_cols(const Tensor& a, std::size_t times) {
  require_matrix(a.shape(), "repeat_cols");
  if (times == 0) throw ShapeError("repeat_cols: times must be >= 1");
  const std::size_t r = a.rows(), c = a.cols(), w = c * times;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = a.impl_->value[i * c + j / times];
  Tensor y = make({r, w}, std::move(out), a.requires_grad());
  if (a.requires_grad()) {
    record([ai = a.impl_, yi = y.impl_, r, c, w, times] {
      const auto& dy = yi->ensure_grad();
      auto& da = ai->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) da[i * c + j / times] += dy[i * w + j];
    });
  }
  return y;
}

Tensor Tape::sum(const Tensor& a) {
  const double s = std::accumulate(a.impl_->value.begin(), a.impl_->value.end(), 0.0);
  Tensor y = make({1, 1}, {s}, a.requires_grad());
  if (a.requires_grad()) {
    record([ai = a.impl_, yi = y.impl_] {
      const double g = yi->ensure_grad()[0];
      for (double& d : ai->ensure_grad()) d += g;
    });
  }
  return y;
}

Tensor Tape::mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor Tape::add_n(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("add_n: nothing to add");
  const Shape shape = parts.front().shape();
  std::vector<double> out(parts.front().size(), 0.0);
  bool rg = false;
  for (const auto& t : parts) {
    if (t.size() != out.size()) throw ShapeError("add_n: shapes differ");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.impl_->value[i];
    rg = rg || t.requires_grad();
  }
  Tensor y = make(shape, std::move(out), rg);
  if (rg) {
    std::vector<std::shared_ptr<Impl>> impls;
    for (const auto& t : parts) impls.push_back(t.impl_);
    record([impls = std::move(impls), yi = y.impl_] {
      const auto& dy = yi->ensure_grad();
      for (const auto& pi : impls) {
        if (!pi->requires_grad) continue;
        auto& dp = pi->ensure_grad();
        for (std::size_t i = 0; i < dy.size(); ++i) dp[i] += dy[i];
      }
    });
  }
  return y;
}

Tensor Tape::focal_loss(const Tensor& logits, std::size_t label, double gamma, double weight) {
  require_matrix(logits.shape(), "focal_loss");
  if (logits.rows() != 1) throw ShapeError("focal_loss: logits must be a single row");
  const std::size_t c = logits.cols();
  if (label >= c) throw std::invalid_argument("focal_loss: label " + std::to_string(label) + " out of range");
  if (!(gamma >= 0.0)) throw std::invalid_argument("focal_loss: gamma must be >= 0");
  const auto& z = logits.impl_->value;
  const double mx = *std::max_element(z.begin(), z.end());
  double denom = 0.0;
  for (double v : z) denom += std::exp(v - mx);
  const double lse = mx + std::log(denom);
  std::vector<double> p(c);
  for (std::size_t j = 0; j < c; ++j) p[j] = std::exp(z[j] - lse);
  const double log_pt = z[label] - lse;
  double one_minus = 0.0;  // sum of the other probabilities, exact near p_y = 1
  for (std::size_t j = 0; j < c; ++j)
    if (j != label) one_minus += p[j];
  const double modulator = gamma == 0.0 ? 1.0 : std::pow(one_minus, gamma);
  const double loss = -weight * modulator * log_pt;

  Tensor y = make({1, 1}, {loss}, logits.requires_grad());
  if (logits.requires_grad()) {
    // dL/dz_j = g (delta_jy - p_j) with g = p_y dL/dp_y.
    double g = -weight * modulator;
    if (gamma != 0.0 && one_minus > 0.0)
      g += weight * gamma * std::pow(one_minus, gamma - 1.0) * p[label] * log_pt;
    record([li = logits.impl_, yi = y.impl_, p = std::move(p), g, label] {
      const double dy = yi->ensure_grad()[0];
      auto& dz = li->ensure_grad();
      for (std::size_t j = 0; j < p.size(); ++j) dz[j] += dy * g * ((j == label ? 1.0 : 0.0) - p[j]);
    });
  }
  return y;
}

void Tape::backward(const Tensor& scalar) {
  if (scalar.size() != 1) throw std::invalid_argument("backward needs a scalar, got " + to_string(scalar.shape()));
  if (!scalar.requires_grad()) return;
  scalar.impl_->ensure_grad()[0] += 1.0;
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
}

}  // namespace dfmim::ad
