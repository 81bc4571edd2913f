// dfmim command-line tool: simulation study, feature extraction, speech
// emotion training/evaluation and diagnostics.
#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dfmim/checkpoint.hpp"
#include "dfmim/config.hpp"
#include "dfmim/corpus.hpp"
#include "dfmim/diagnostics.hpp"
#include "dfmim/errors.hpp"
#include "dfmim/manifest.hpp"
#include "dfmim/pipeline.hpp"
#include "dfmim/report.hpp"
#include "dfmim/simgen.hpp"

namespace fs = std::filesystem;
using namespace dfmim;

namespace {

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  bool quiet = false;
};

cli::Settings settings_from(const Globals& g) {
  return g.config.empty() ? cli::parse_config("") : cli::load_config(g.config);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

void emit(const Globals& g, const std::string& text) {
  if (!g.quiet) std::cout << text << std::flush;
}

void echo_config(const Globals& g, const cli::Settings& s) { emit(g, "# resolved config\n" + s.to_text() + "# ---\n"); }

fs::path require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw CLI::ValidationError("--out", std::string("required: ") + what);
  return g.out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

int cmd_simulate(const Globals& g, const std::string& scenario_name, std::size_t n, const std::string& table) {
  const auto settings = settings_from(g);
  const auto scenario = simgen::parse_scenario(scenario_name);
  const auto ds = simgen::make_scenario_dataset(scenario, n, g.seed, settings.gp);
  const fs::path out = require_out(g, "dataset file");
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  simgen::save_dataset(ds, out);
  if (!table.empty()) simgen::write_dataset_table(ds, table);
  double mean = 0.0;
  for (double y : ds.y) mean += y;
  mean /= static_cast<double>(std::max<std::size_t>(n, 1));
  std::ostringstream os;
  os << "scenario=" << simgen::to_string(scenario) << " n=" << n << " seed=" << g.seed << " y_mean=" << mean
     << " out=" << out.string() << '\n';
  emit(g, os.str());
  return 0;
}

int cmd_train_sim(const Globals& g, const std::string& scenario_name) {
  const auto settings = settings_from(g);
  echo_config(g, settings);
  const auto scenario = simgen::parse_scenario(scenario_name);
  const auto run = cli::run_simulation(settings, scenario, g.seed);
  const std::string report = cli::format_sim_report(run);
  emit(g, report);
  if (!g.out.empty()) {
    const fs::path dir = g.out;
    fs::create_directories(dir);
    write_text(dir / "report.txt", report);
    write_text(dir / "config.txt", settings.to_text());
    if (run.model) cli::save_checkpoint(*run.model, dir / "model.ckpt");
  }
  return 0;
}

int cmd_eval_sim(const Globals& g, const std::string& checkpoint, const std::string& data,
                 const std::string& scenario_name, std::size_t n) {
  const auto settings = settings_from(g);
  const auto m = cli::load_checkpoint(checkpoint);
  simgen::SimDataset ds;
  std::string source;
  if (!data.empty()) {
    ds = simgen::load_dataset(data);
    source = data;
  } else {
    if (scenario_name.empty()) throw CLI::ValidationError("--scenario", "needed when --data is not given");
    ds = simgen::make_scenario_dataset(simgen::parse_scenario(scenario_name), n, g.seed, settings.gp);
    source = scenario_name + ":seed=" + std::to_string(g.seed);
  }
  const auto metrics = model::evaluate_regression(m, cli::to_dataset(ds));
  const std::string report = cli::format_regression_eval(source, ds.y.size(), metrics);
  emit(g, report);
  if (!g.out.empty()) write_text(g.out, report);
  return 0;
}

int cmd_extract(const Globals& g, const std::string& manifest_path) {
  const auto settings = settings_from(g);
  echo_config(g, settings);
  const auto manifest = cli::load_manifest(manifest_path, settings.labels);
  const auto corpus = cli::extract_corpus(manifest, settings.features);
  const fs::path out = require_out(g, "feature directory");
  cli::write_features(corpus, out);
  std::size_t chunks = 0, resampled = 0;
  for (const auto& u : corpus) {
    chunks += u.chunks.chunks.size();
    resampled += u.resampled ? 1 : 0;
  }
  std::ostringstream os;
  os << "utterances=" << corpus.size() << " chunks=" << chunks << " resampled=" << resampled
     << " out=" << out.string() << '\n';
  emit(g, os.str());
  return 0;
}

int cmd_train_ser(const Globals& g, const std::string& manifest_path, std::size_t max_folds, std::size_t jobs) {
  const auto settings = settings_from(g);
  echo_config(g, settings);
  const auto manifest = cli::load_manifest(manifest_path, settings.labels);
  const auto plan = cli::build_folds(manifest);
  cli::check_fold_plan(plan, manifest.speakers());
  const auto corpus = cli::extract_corpus(manifest, settings.features);
  const auto run = cli::run_ser(settings, corpus, plan, g.seed, max_folds, jobs);
  const std::string report = cli::format_ser_report(run, settings.labels.labels);
  emit(g, report);
  if (!g.out.empty()) {
    const fs::path dir = g.out;
    fs::create_directories(dir);
    write_text(dir / "report.txt", report);
    write_text(dir / "config.txt", settings.to_text());
    for (std::size_t i = 0; i < run.folds.size(); ++i)
      if (run.folds[i].model) cli::save_checkpoint(*run.folds[i].model, dir / ("fold" + std::to_string(i) + ".ckpt"));
  }
  return 0;
}

int cmd_eval_ser(const Globals& g, const std::string& checkpoint, const std::string& manifest_path,
                 const std::string& speakers_arg) {
  const auto settings = settings_from(g);
  const auto m = cli::load_checkpoint(checkpoint, settings.ser);
  const auto manifest = cli::load_manifest(manifest_path, settings.labels);
  const auto speakers = speakers_arg.empty() ? manifest.speakers() : split_list(speakers_arg);
  const auto corpus = cli::extract_corpus(manifest, settings.features);
  const auto data = cli::chunk_dataset(corpus, speakers);
  if (data.size() == 0) throw std::invalid_argument("no chunks for the selected speakers");
  const auto metrics = model::evaluate_classification(m, data);
  const std::string report = cli::format_classification_eval(metrics, settings.labels.labels);
  emit(g, report);
  if (!g.out.empty()) write_text(g.out, report);
  return 0;
}

int cmd_gradcheck(const Globals& g, std::size_t seeds, double tolerance) {
  double worst = 0.0;
  std::ostringstream os;
  for (std::size_t s = 0; s < seeds; ++s) {
    for (const auto& r : cli::run_gradchecks(g.seed + s)) {
      os << "seed=" << g.seed + s << " check=" << r.name << " max_rel_error=" << r.max_rel_error << '\n';
      worst = std::max(worst, r.max_rel_error);
    }
  }
  const bool ok = worst < tolerance;
  os << "max_rel_error=" << worst << " tolerance=" << tolerance << " status=" << (ok ? "pass" : "fail") << '\n';
  emit(g, os.str());
  if (!g.out.empty()) write_text(g.out, os.str());
  return ok ? 0 : 1;
}

int cmd_selftest(const Globals& g) {
  bool ok = true;
  std::ostringstream os;
  for (const auto& r : cli::run_selftest()) {
    os << (r.passed ? "PASS " : "FAIL ") << r.name << " value=" << r.detail << '\n';
    ok = ok && r.passed;
  }
  emit(g, os.str());
  return ok ? 0 : 1;
}

int cmd_synth_corpus(const Globals& g, const cli::SyntheticCorpusSpec& spec) {
  const fs::path manifest = cli::write_synthetic_corpus(require_out(g, "corpus directory"), spec);
  emit(g, "manifest=" + manifest.string() + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep functional multiple-index model toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  Globals g;
  app.add_option("--config", g.config, "key = value settings file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed for all randomness");
  app.add_option("--out", g.out, "output file or directory");
  app.add_flag("--quiet", g.quiet, "suppress stdout");

  std::string scenario, data, checkpoint, manifest, table, speakers;
  std::size_t n = 2000, max_folds = 0, jobs = 1, seeds = 5;
  double tolerance = 1e-4;
  cli::SyntheticCorpusSpec corpus;

  auto* simulate = app.add_subcommand("simulate", "draw a scenario dataset");
  simulate->add_option("--scenario", scenario, "S1, S2 or S3")->required();
  simulate->add_option("--n", n, "number of samples");
  simulate->add_option("--table", table, "also write a CSV table");

  auto* train_sim = app.add_subcommand("train-sim", "train and test on a simulated scenario");
  train_sim->add_option("--scenario", scenario, "S1, S2 or S3")->required();

  auto* eval_sim = app.add_subcommand("eval-sim", "evaluate a regression checkpoint");
  eval_sim->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval_sim->add_option("--data", data, "dataset file from simulate")->check(CLI::ExistingFile);
  eval_sim->add_option("--scenario", scenario, "generate a fresh set instead");
  eval_sim->add_option("--n", n, "size of the generated set");

  auto* extract = app.add_subcommand("extract", "MFCC chunk features for a manifest");
  extract->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);

  auto* train_ser = app.add_subcommand("train-ser", "speaker-independent cross-validation");
  train_ser->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  train_ser->add_option("--folds", max_folds, "train only the first N folds (0 = all)");
  train_ser->add_option("--jobs", jobs, "folds trained concurrently")->check(CLI::PositiveNumber);

  auto* eval_ser = app.add_subcommand("eval-ser", "evaluate a classifier checkpoint");
  eval_ser->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval_ser->add_option("--manifest", manifest)->required()->check(CLI::ExistingFile);
  eval_ser->add_option("--speakers", speakers, "comma-separated speakers (default: all)");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gradcheck->add_option("--seeds", seeds, "number of seeds starting at --seed")->check(CLI::PositiveNumber);
  gradcheck->add_option("--tolerance", tolerance);

  auto* selftest = app.add_subcommand("selftest", "quick numerical checks");

  auto* synth = app.add_subcommand("synth-corpus", "write a synthetic 4-class audio corpus");
  synth->add_option("--speakers", corpus.speakers);
  synth->add_option("--utterances", corpus.utterances);
  synth->add_option("--duration", corpus.duration_s, "seconds per utterance");
  synth->add_option("--corpus-seed", corpus.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*simulate) return cmd_simulate(g, scenario, n, table);
    if (*train_sim) return cmd_train_sim(g, scenario);
    if (*eval_sim) return cmd_eval_sim(g, checkpoint, data, scenario, n);
    if (*extract) return cmd_extract(g, manifest);
    if (*train_ser) return cmd_train_ser(g, manifest, max_folds, jobs);
    if (*eval_ser) return cmd_eval_ser(g, checkpoint, manifest, speakers);
    if (*gradcheck) return cmd_gradcheck(g, seeds, tolerance);
    if (*selftest) return cmd_selftest(g);
    if (*synth) return cmd_synth_corpus(g, corpus);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
