#include "dfmim/pipeline.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <set>
#include <sstream>
#include <thread>

#include "fileio.hpp"

namespace dfmim::cli {

model::Dataset to_dataset(const simgen::SimDataset& ds) {
  model::Dataset d;
  for (const auto& x : ds.x) d.x.emplace_back(ad::Shape{ds.grid.size(), x.channels()}, x.to_matrix());
  d.y = ds.y;
  d.y_clean = ds.y_clean;
  return d;
}

SimSplits make_sim_splits(const Settings& s, simgen::Scenario scenario, std::uint64_t seed) {
  return {simgen::make_scenario_dataset(scenario, s.n_train, simgen::derive_seed(seed, 0, 99), s.gp),
          simgen::make_scenario_dataset(scenario, s.n_val, simgen::derive_seed(seed, 1, 99), s.gp),
          simgen::make_scenario_dataset(scenario, s.n_test, simgen::derive_seed(seed, 2, 99), s.gp)};
}

SimRun run_simulation(const Settings& settings, simgen::Scenario scenario, std::uint64_t seed) {
  const auto splits = make_sim_splits(settings, scenario, seed);
  auto cfg = settings.sim;
  cfg.seed = seed;
  auto [m, report] = model::train(cfg, to_dataset(splits.train), to_dataset(splits.val), to_dataset(splits.test));
  SimRun run;
  run.scenario = scenario;
  run.seed = seed;
  run.model.emplace(std::move(m));
  run.report = std::move(report);
  return run;
}

std::vector<Utterance> extract_corpus(const Manifest& manifest, const dsp::FeatureConfig& features) {
  const dsp::FeatureExtractor extract(features);
  std::vector<Utterance> out;
  out.reserve(manifest.rows.size());
  for (const auto& row : manifest.rows) {
    auto f = extract(dsp::load_wav(row.path));
    out.push_back({row, std::move(f.chunks), f.resampled});
  }
  return out;
}

void write_features(const std::vector<Utterance>& corpus, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::ostringstream manifest;
  manifest << "source,chunk_index,label,speaker,record\n";
  for (std::size_t u = 0; u < corpus.size(); ++u) {
    char name[32];
    std::snprintf(name, sizeof name, "utt_%05zu.bin", u);
    dsp::save_chunk_record(out_dir / name, corpus[u].chunks);
    for (std::size_t c = 0; c < corpus[u].chunks.chunks.size(); ++c)
      manifest << corpus[u].row.path.generic_string() << ',' << c << ',' << corpus[u].row.label << ','
               << corpus[u].row.speaker << ',' << name << '\n';
  }
  fileio::write_all(out_dir / "chunks.csv", manifest.str());
}

model::Dataset chunk_dataset(const std::vector<Utterance>& corpus, const std::vector<std::string>& speakers) {
  const std::set<std::string> keep(speakers.begin(), speakers.end());
  model::Dataset d;
  for (const auto& u : corpus) {
    if (!keep.count(u.row.speaker)) continue;
    for (const auto& c : u.chunks.chunks) {
      const auto rows = static_cast<std::size_t>(c.rows()), cols = static_cast<std::size_t>(c.cols());
      d.x.emplace_back(ad::Shape{rows, cols}, std::vector<double>(c.data(), c.data() + c.size()));
      d.labels.push_back(u.row.label_index);
    }
  }
  return d;
}

SerRun run_ser(const Settings& settings, const std::vector<Utterance>& corpus, const FoldPlan& plan,
               std::uint64_t seed, std::size_t max_folds, std::size_t jobs) {
  const std::size_t n = max_folds == 0 ? plan.size() : std::min(max_folds, plan.size());
  SerRun run;
  run.folds.resize(n);
  std::vector<std::exception_ptr> errors(n);

  auto work = [&](std::size_t i) {
    try {
      auto& fr = run.folds[i];
      fr.fold = plan[i];
      fr.seed = simgen::derive_seed(seed, i, 77);
      auto cfg = settings.ser;
      cfg.seed = fr.seed;
      auto [m, report] = model::train(cfg, chunk_dataset(corpus, fr.fold.train),
                                      chunk_dataset(corpus, {fr.fold.validation}),
                                      chunk_dataset(corpus, {fr.fold.test}));
      fr.model.emplace(std::move(m));
      fr.report = std::move(report);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(jobs, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) work(i);
      });
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  for (const auto& f : run.folds) {
    run.mean_wa += f.report.test_classification.wa;
    run.mean_ua += f.report.test_classification.ua;
  }
  if (n > 0) {
    run.mean_wa /= static_cast<double>(n);
    run.mean_ua /= static_cast<double>(n);
  }
  return run;
}

}  // namespace dfmim::cli
