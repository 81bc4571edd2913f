#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "dfmim/funcore.hpp"

namespace dfmim::simgen {

struct Brownian {};
struct FractionalBrownian {
  double hurst = 0.7;
};
struct ExpVariogram {
  double range = 0.3;
  double sill = 1.0;
};
/// Matern covariance with smoothness fixed at nu = 3/2.
struct Matern32 {
  double lengthscale = 0.2;
  double variance = 1.0;
};

using GpSpec = std::variant<Brownian, FractionalBrownian, ExpVariogram, Matern32>;

void validate(const GpSpec& spec);
std::string describe(const GpSpec& spec);

/// Covariance of the process at every pair of grid points.
Eigen::MatrixXd covariance_matrix(const GpSpec& spec, const funcore::Grid& grid);

/// Draws sample paths L z from a fixed covariance. Zero-variance grid points
/// are pinned to 0; the rest is factored by Cholesky with escalating jitter
/// (1e-12 times the mean variance, x10 per retry, at most 5 retries).
class GpSampler {
 public:
  GpSampler(const GpSpec& spec, funcore::Grid grid);

  funcore::Curve sample(std::mt19937_64& rng) const;
  double jitter() const noexcept { return jitter_; }

 private:
  funcore::Grid grid_;
  std::vector<std::size_t> active_;
  Eigen::MatrixXd factor_;
  double jitter_ = 0.0;
};

funcore::Curve sample_gp(const GpSpec& spec, const funcore::Grid& grid, std::mt19937_64& rng);

enum class Scenario { S1 = 1, S2 = 2, S3 = 3 };

Scenario parse_scenario(std::string_view s);
std::string_view to_string(Scenario s);

/// Noiseless response g(...) of the scenario for a 4-channel covariate.
double scenario_response(Scenario scenario, const funcore::MultiCurve& x);

/// Process parameters for the four covariate channels.
struct GpParams {
  double hurst = 0.7;
  double exp_range = 0.3;
  double exp_sill = 1.0;
  double matern_lengthscale = 0.2;
  double matern_variance = 1.0;
};

/// Channel processes in order: exponential variogram, Brownian, fractional
/// Brownian, Matern.
std::array<GpSpec, 4> scenario_processes(const GpParams& params);

inline constexpr std::size_t kSimGridPoints = 30;
inline constexpr double kNoiseVariance = 0.04;

struct SimDataset {
  Scenario scenario = Scenario::S1;
  std::uint64_t seed = 0;
  funcore::Grid grid{kSimGridPoints};
  std::vector<funcore::MultiCurve> x;
  std::vector<double> y;
  std::vector<double> y_clean;

  std::size_t size() const noexcept { return y.size(); }
};

/// Index-derived seed, so sample i does not depend on samples before it.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index, std::uint64_t stream = 0);

/// n samples; covariates of sample i come from derive_seed(seed, i, 0) and its
/// noise from derive_seed(seed, i, 1), so y_clean is recoverable exactly.
SimDataset make_scenario_dataset(Scenario scenario, std::size_t n, std::uint64_t seed,
                                 const GpParams& params = {});

/// Binary dump: "DFMS", version, scenario, seed, n, p, n_grid, then per
/// sample y, y_clean and the p x n_grid values (little-endian f64).
void save_dataset(const SimDataset& ds, const std::filesystem::path& path);
SimDataset load_dataset(const std::filesystem::path& path);

/// Text table: sample,channel,grid_index,value rows followed by sample,y,y_clean rows.
void write_dataset_table(const SimDataset& ds, const std::filesystem::path& path);

}  // namespace dfmim::simgen
