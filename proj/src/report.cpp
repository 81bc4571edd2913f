#include "dfmim/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <sstream>

namespace dfmim::cli {

namespace {

using Json = nlohmann::ordered_json;

std::string num(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + num(v[i]);
  return out;
}

Json train_json(const model::TrainReport& r, bool timing) {
  Json j;
  j["task"] = std::string(model::to_string(r.task));
  j["seed"] = r.seed;
  j["epochs"] = r.train_loss.size();
  j["selection"] = r.selection;
  j["best_epoch"] = r.best_epoch;
  j["train_loss"] = r.train_loss;
  j["val_metric"] = r.val_metric;
  if (r.task == model::Task::regression) {
    j["test_rmse_vs_noisy"] = r.test_regression.rmse_vs_noisy;
    j["test_rmse_vs_clean"] = r.test_regression.rmse_vs_clean;
    j["baseline_rmse_vs_noisy"] = r.baseline_rmse_vs_noisy;
    j["baseline_rmse_vs_clean"] = r.baseline_rmse_vs_clean;
  } else {
    j["test_wa"] = r.test_classification.wa;
    j["test_ua"] = r.test_classification.ua;
    j["confusion"] = r.test_classification.confusion;
  }
  if (timing) j["wall_clock_s"] = r.wall_clock_s;
  return j;
}

void train_lines(std::ostringstream& os, const model::TrainReport& r, const std::string& prefix, bool timing) {
  os << prefix << "task=" << model::to_string(r.task) << '\n'
     << prefix << "seed=" << r.seed << '\n'
     << prefix << "epochs=" << r.train_loss.size() << '\n'
     << prefix << "selection=" << r.selection << '\n'
     << prefix << "best_epoch=" << r.best_epoch << '\n'
     << prefix << "train_loss=" << join(r.train_loss) << '\n'
     << prefix << "val_metric=" << join(r.val_metric) << '\n';
  if (r.task == model::Task::regression) {
    os << prefix << "test_rmse_vs_noisy=" << num(r.test_regression.rmse_vs_noisy) << '\n'
       << prefix << "test_rmse_vs_clean=" << num(r.test_regression.rmse_vs_clean) << '\n'
       << prefix << "baseline_rmse_vs_noisy=" << num(r.baseline_rmse_vs_noisy) << '\n'
       << prefix << "baseline_rmse_vs_clean=" << num(r.baseline_rmse_vs_clean) << '\n';
  } else {
    os << prefix << "test_wa=" << num(r.test_classification.wa) << '\n'
       << prefix << "test_ua=" << num(r.test_classification.ua) << '\n';
  }
  if (timing) os << prefix << "wall_clock_s=" << num(r.wall_clock_s) << '\n';
}

}  // namespace

std::string format_confusion(const model::Confusion& confusion, const std::vector<std::string>& labels) {
  std::size_t width = 8;
  for (const auto& l : labels) width = std::max(width, l.size() + 1);
  std::ostringstream os;
  os << std::setw(static_cast<int>(width)) << "true\\pred";
  for (std::size_t c = 0; c < confusion.size(); ++c)
    os << std::setw(static_cast<int>(width)) << (c < labels.size() ? labels[c] : std::to_string(c));
  os << '\n';
  for (std::size_t r = 0; r < confusion.size(); ++r) {
    os << std::setw(static_cast<int>(width)) << (r < labels.size() ? labels[r] : std::to_string(r));
    for (auto v : confusion[r]) os << std::setw(static_cast<int>(width)) << v;
    os << '\n';
  }
  return os.str();
}

std::string format_train_report(const model::TrainReport& r, const std::vector<std::string>& labels, bool timing) {
  std::ostringstream os;
  train_lines(os, r, "", timing);
  if (r.task == model::Task::classification && !r.test_classification.confusion.empty())
    os << format_confusion(r.test_classification.confusion, labels);
  os << "--- json\n" << train_json(r, timing).dump(2) << '\n';
  return os.str();
}

std::string format_sim_report(const SimRun& run, bool timing) {
  const double reference = kReferenceRmse[static_cast<int>(run.scenario) - 1];
  const auto& r = run.report;
  const double reduction =
      r.baseline_rmse_vs_clean > 0.0 ? 1.0 - r.test_regression.rmse_vs_clean / r.baseline_rmse_vs_clean : 0.0;
  std::ostringstream os;
  os << "scenario=" << simgen::to_string(run.scenario) << '\n';
  train_lines(os, r, "", timing);
  os << "reduction_vs_baseline=" << num(reduction) << '\n' << "reference_rmse=" << num(reference) << '\n';
  Json j;
  j["scenario"] = std::string(simgen::to_string(run.scenario));
  j["report"] = train_json(r, timing);
  j["reduction_vs_baseline"] = reduction;
  j["reference_rmse"] = reference;
  os << "--- json\n" << j.dump(2) << '\n';
  return os.str();
}

std::string format_ser_report(const SerRun& run, const std::vector<std::string>& labels, bool timing) {
  std::ostringstream os;
  Json folds = Json::array();
  for (std::size_t i = 0; i < run.folds.size(); ++i) {
    const auto& f = run.folds[i];
    const std::string prefix = "fold" + std::to_string(i) + ".";
    os << prefix << "test_speaker=" << f.fold.test << '\n' << prefix << "validation_speaker=" << f.fold.validation << '\n';
    train_lines(os, f.report, prefix, timing);
    os << format_confusion(f.report.test_classification.confusion, labels);
    Json fj;
    fj["test_speaker"] = f.fold.test;
    fj["validation_speaker"] = f.fold.validation;
    fj["train_speakers"] = f.fold.train;
    fj["report"] = train_json(f.report, timing);
    folds.push_back(std::move(fj));
  }
  os << "folds=" << run.folds.size() << '\n'
     << "mean_wa=" << num(run.mean_wa) << '\n'
     << "mean_ua=" << num(run.mean_ua) << '\n';
  Json j;
  j["labels"] = labels;
  j["folds"] = std::move(folds);
  j["mean_wa"] = run.mean_wa;
  j["mean_ua"] = run.mean_ua;
  os << "--- json\n" << j.dump(2) << '\n';
  return os.str();
}

std::string format_regression_eval(const std::string& source, std::size_t n, const model::RegressionMetrics& m) {
  std::ostringstream os;
  os << "source=" << source << '\n'
     << "n=" << n << '\n'
     << "rmse_vs_noisy=" << num(m.rmse_vs_noisy) << '\n'
     << "rmse_vs_clean=" << num(m.rmse_vs_clean) << '\n';
  Json j;
  j["source"] = source;
  j["n"] = n;
  j["rmse_vs_noisy"] = m.rmse_vs_noisy;
  j["rmse_vs_clean"] = m.rmse_vs_clean;
  os << "--- json\n" << j.dump(2) << '\n';
  return os.str();
}

std::string format_classification_eval(const model::ClassificationMetrics& m, const std::vector<std::string>& labels) {
  std::ostringstream os;
  os << "wa=" << num(m.wa) << '\n' << "ua=" << num(m.ua) << '\n' << format_confusion(m.confusion, labels);
  Json j;
  j["labels"] = labels;
  j["wa"] = m.wa;
  j["ua"] = m.ua;
  j["confusion"] = m.confusion;
  os << "--- json\n" << j.dump(2) << '\n';
  return os.str();
}

}  // namespace dfmim::cli
