#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dfmim::cli {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
};

/// Central-difference checks of every tape op and layer type plus the tiny
/// end-to-end model (n_grid=8, p=2, K=2) for both tasks, all from `seed`.
std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed);

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick numerical sanity checks (quadrature, DCT round trip, metrics,
/// gradients); a few seconds in total.
std::vector<SelfTestResult> run_selftest();

}  // namespace dfmim::cli
