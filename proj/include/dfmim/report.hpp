#pragma once

#include <string>
#include <vector>

#include "dfmim/pipeline.hpp"

namespace dfmim::cli {

/// Reports are `key=value` lines, a `--- json` separator and a JSON document
/// with the same content. Wall-clock time is only included on request so the
/// default rendering is reproducible byte for byte.
std::string format_train_report(const model::TrainReport& r, const std::vector<std::string>& labels,
                                bool include_timing = false);
std::string format_sim_report(const SimRun& run, bool include_timing = false);
std::string format_ser_report(const SerRun& run, const std::vector<std::string>& labels,
                              bool include_timing = false);
std::string format_regression_eval(const std::string& source, std::size_t n, const model::RegressionMetrics& m);
std::string format_classification_eval(const model::ClassificationMetrics& m, const std::vector<std::string>& labels);
std::string format_confusion(const model::Confusion& confusion, const std::vector<std::string>& labels);

}  // namespace dfmim::cli
