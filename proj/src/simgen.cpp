#include "dfmim/simgen.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "binio.hpp"
#include "dfmim/errors.hpp"
#include "fileio.hpp"

namespace dfmim::simgen {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be > 0");
}

double covariance(const GpSpec& spec, double s, double t) {
  return std::visit(
      overloaded{
          [&](const Brownian&) { return std::min(s, t); },
          [&](const FractionalBrownian& f) {
            const double h2 = 2.0 * f.hurst;
            return 0.5 * (std::pow(s, h2) + std::pow(t, h2) - std::pow(std::abs(s - t), h2));
          },
          [&](const ExpVariogram& e) { return e.sill * std::exp(-std::abs(s - t) / e.range); },
          [&](const Matern32& m) {
            const double r = std::sqrt(3.0) * std::abs(s - t) / m.lengthscale;
            return m.variance * (1.0 + r) * std::exp(-r);
          },
      },
      spec);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

}  // namespace

void validate(const GpSpec& spec) {
  std::visit(overloaded{
                 [](const Brownian&) {},
                 [](const FractionalBrownian& f) {
                   if (!(f.hurst > 0.0 && f.hurst < 1.0))
                     throw std::invalid_argument("hurst must lie in (0,1)");
                 },
                 [](const ExpVariogram& e) {
                   require_positive(e.range, "range");
                   require_positive(e.sill, "sill");
                 },
                 [](const Matern32& m) {
                   require_positive(m.lengthscale, "lengthscale");
                   require_positive(m.variance, "variance");
                 },
             },
             spec);
}

std::string describe(const GpSpec& spec) {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const Brownian&) { os << "brownian"; },
                 [&](const FractionalBrownian& f) { os << "fbm(hurst=" << f.hurst << ")"; },
                 [&](const ExpVariogram& e) { os << "exp_variogram(range=" << e.range << ",sill=" << e.sill << ")"; },
                 [&](const Matern32& m) {
                   os << "matern(nu=1.5,lengthscale=" << m.lengthscale << ",variance=" << m.variance << ")";
                 },
             },
             spec);
  return os.str();
}

Eigen::MatrixXd covariance_matrix(const GpSpec& spec, const funcore::Grid& grid) {
  validate(spec);
  const auto n = static_cast<Eigen::Index>(grid.size());
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) c(i, j) = c(j, i) = covariance(spec, grid[i], grid[j]);
  return c;
}

GpSampler::GpSampler(const GpSpec& spec, funcore::Grid grid) : grid_(std::move(grid)) {
  const Eigen::MatrixXd c = covariance_matrix(spec, grid_);
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    if (c(i, i) > 0.0) active_.push_back(static_cast<std::size_t>(i));
  const auto m = static_cast<Eigen::Index>(active_.size());
  if (m == 0) {
    factor_.resize(0, 0);
    return;
  }
  Eigen::MatrixXd sub(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j) sub(i, j) = c(active_[i], active_[j]);

  const double scale = sub.trace() / static_cast<double>(m);
  double jitter = 1e-12;
  for (int attempt = 0; attempt <= 5; ++attempt, jitter *= 10.0) {
    Eigen::MatrixXd a = sub;
    a.diagonal().array() += jitter * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      factor_ = llt.matrixL();
      jitter_ = jitter * scale;
      return;
    }
  }
  throw NumericalFailure("Cholesky failed after jitter escalation for " + describe(spec));
}

funcore::Curve GpSampler::sample(std::mt19937_64& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd z(factor_.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  const Eigen::VectorXd path = factor_.triangularView<Eigen::Lower>() * z;
  std::vector<double> values(grid_.size(), 0.0);
  for (std::size_t i = 0; i < active_.size(); ++i) values[active_[i]] = path(static_cast<Eigen::Index>(i));
  return funcore::Curve(grid_, std::move(values));
}

funcore::Curve sample_gp(const GpSpec& spec, const funcore::Grid& grid, std::mt19937_64& rng) {
  return GpSampler(spec, grid).sample(rng);
}

Scenario parse_scenario(std::string_view s) {
  if (s == "S1" || s == "s1" || s == "1") return Scenario::S1;
  if (s == "S2" || s == "s2" || s == "2") return Scenario::S2;
  if (s == "S3" || s == "s3" || s == "3") return Scenario::S3;
  throw std::invalid_argument("unknown scenario '" + std::string(s) + "' (expected S1, S2 or S3)");
}

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::S1: return "S1";
    case Scenario::S2: return "S2";
    case Scenario::S3: return "S3";
  }
  return "?";
}

double scenario_response(Scenario scenario, const funcore::MultiCurve& x) {
  if (x.channels() != 4)
    throw std::invalid_argument("scenario covariates need 4 channels, got " + std::to_string(x.channels()));
  const auto& grid = x.grid();
  // index_sum(k) = sum_j <beta_k, X^(j)>
  auto index_sum = [&](int k) {
    const auto beta = funcore::beta_curve(k, grid);
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += funcore::inner_product(beta, x.channel(j));
    return s;
  };
  switch (scenario) {
    case Scenario::S1: {
      const double a = index_sum(1), b = index_sum(2);
      return a * a + b * b;
    }
    case Scenario::S2: {
      double acc = 0.0;
      for (int k = 1; k <= 4; ++k) {
        const double v = index_sum(k);
        acc += v * v;
      }
      return acc;
    }
    case Scenario::S3: {
      using funcore::Transform;
      const double u1 = funcore::inner_product(funcore::beta_curve(1, grid),
                                               funcore::pointwise_transform(x.channel(0), Transform::square));
      const double u2 = funcore::inner_product(funcore::beta_curve(2, grid),
                                               funcore::pointwise_transform(x.channel(1), Transform::abs));
      const double u3 = funcore::inner_product(funcore::beta_curve(3, grid), x.channel(2));
      const double u4 = funcore::inner_product(funcore::beta_curve(4, grid), x.channel(3));
      const double first = u1 + u2 + u3 * u4;
      const double second = u1 * u2 + u3 + u4;
      return first * first + second * second;
    }
  }
  throw std::invalid_argument("unknown scenario");
}

std::array<GpSpec, 4> scenario_processes(const GpParams& p) {
  return {GpSpec{ExpVariogram{p.exp_range, p.exp_sill}}, GpSpec{Brownian{}},
          GpSpec{FractionalBrownian{p.hurst}}, GpSpec{Matern32{p.matern_lengthscale, p.matern_variance}}};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
  return splitmix64(splitmix64(splitmix64(seed) ^ index) ^ (stream * 0xD1B54A32D192ED03ULL));
}

SimDataset make_scenario_dataset(Scenario scenario, std::size_t n, std::uint64_t seed, const GpParams& params) {
  if (n < 1) throw std::invalid_argument("dataset size must be >= 1");
  SimDataset ds;
  ds.scenario = scenario;
  ds.seed = seed;
  ds.grid = funcore::make_grid(kSimGridPoints);
  std::vector<GpSampler> samplers;
  for (const auto& spec : scenario_processes(params)) samplers.emplace_back(spec, ds.grid);

  const double noise_sd = std::sqrt(kNoiseVariance);
  ds.x.reserve(n);
  ds.y.reserve(n);
  ds.y_clean.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::mt19937_64 rng(derive_seed(seed, i, 0));
    std::vector<funcore::Curve> channels;
    for (const auto& s : samplers) channels.push_back(s.sample(rng));
    funcore::MultiCurve x(std::move(channels));
    const double clean = scenario_response(scenario, x);
    std::mt19937_64 noise_rng(derive_seed(seed, i, 1));
    std::normal_distribution<double> noise(0.0, noise_sd);
    ds.y_clean.push_back(clean);
    ds.y.push_back(clean + noise(noise_rng));
    ds.x.push_back(std::move(x));
  }
  return ds;
}

namespace {
constexpr char kDatasetMagic[4] = {'D', 'F', 'M', 'S'};
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

void save_dataset(const SimDataset& ds, const std::filesystem::path& path) {
  std::string out(kDatasetMagic, 4);
  const std::uint32_t p = ds.x.empty() ? 0 : static_cast<std::uint32_t>(ds.x.front().channels());
  binio::put_u32(out, kDatasetVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(ds.scenario));
  binio::put_u64(out, ds.seed);
  binio::put_u32(out, static_cast<std::uint32_t>(ds.size()));
  binio::put_u32(out, p);
  binio::put_u32(out, static_cast<std::uint32_t>(ds.grid.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    binio::put_f64(out, ds.y[i]);
    binio::put_f64(out, ds.y_clean[i]);
    for (std::size_t j = 0; j < p; ++j)
      for (double v : ds.x[i].channel(j).values()) binio::put_f64(out, v);
  }
  fileio::write_all(path, out);
}

SimDataset load_dataset(const std::filesystem::path& path) {
  const std::string data = fileio::read_all(path);
  binio::Reader r(data);
  if (r.bytes(4) != std::string_view(kDatasetMagic, 4)) throw CorruptFile(path.string() + ": not a dataset file");
  if (r.u32() != kDatasetVersion) throw VersionMismatch(path.string() + ": unsupported dataset version");
  SimDataset ds;
  const auto sc = r.u32();
  if (sc < 1 || sc > 3) throw CorruptFile(path.string() + ": bad scenario tag");
  ds.scenario = static_cast<Scenario>(sc);
  ds.seed = r.u64();
  const auto n = r.u32();
  const auto p = r.u32();
  const auto n_grid = r.u32();
  if (p == 0 || n_grid < 2) throw CorruptFile(path.string() + ": bad dimensions");
  if (r.remaining() != static_cast<std::size_t>(n) * (2 + static_cast<std::size_t>(p) * n_grid) * 8)
    throw CorruptFile(path.string() + ": size does not match header");
  ds.grid = funcore::make_grid(n_grid);
  for (std::uint32_t i = 0; i < n; ++i) {
    ds.y.push_back(r.f64());
    ds.y_clean.push_back(r.f64());
    std::vector<funcore::Curve> channels;
    for (std::uint32_t j = 0; j < p; ++j) {
      std::vector<double> v(n_grid);
      for (auto& x : v) x = r.f64();
      channels.emplace_back(ds.grid, std::move(v));
    }
    ds.x.emplace_back(std::move(channels));
  }
  return ds;
}

void write_dataset_table(const SimDataset& ds, const std::filesystem::path& path) {
  std::ostringstream os;
  os.precision(17);
  os << "sample,channel,grid_index,value\n";
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (std::size_t j = 0; j < ds.x[i].channels(); ++j)
      for (std::size_t g = 0; g < ds.grid.size(); ++g)
        os << i << ',' << j << ',' << g << ',' << ds.x[i].channel(j)[g] << '\n';
  os << "sample,y,y_clean\n";
  for (std::size_t i = 0; i < ds.size(); ++i) os << i << ',' << ds.y[i] << ',' << ds.y_clean[i] << '\n';
  fileio::write_all(path, os.str());
}

}  // namespace dfmim::simgen
