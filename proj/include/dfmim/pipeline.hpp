#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dfmim/config.hpp"
#include "dfmim/dsp.hpp"
#include "dfmim/manifest.hpp"
#include "dfmim/model.hpp"
#include "dfmim/simgen.hpp"

namespace dfmim::cli {

/// Reference RMSE values reported for the three scenarios (S1, S2, S3).
inline constexpr double kReferenceRmse[3] = {0.085, 0.074, 0.031};

model::Dataset to_dataset(const simgen::SimDataset& ds);

struct SimSplits {
  simgen::SimDataset train, val, test;
};

/// Train/validation/test sets drawn from independent seeds derived from `seed`.
SimSplits make_sim_splits(const Settings& settings, simgen::Scenario scenario, std::uint64_t seed);

struct SimRun {
  simgen::Scenario scenario = simgen::Scenario::S1;
  std::uint64_t seed = 0;
  std::optional<model::DfmimModel> model;
  model::TrainReport report;
};

SimRun run_simulation(const Settings& settings, simgen::Scenario scenario, std::uint64_t seed);

struct Utterance {
  ManifestRow row;
  dsp::ChunkSet chunks;
  bool resampled = false;
};

std::vector<Utterance> extract_corpus(const Manifest& manifest, const dsp::FeatureConfig& features);

/// Writes one chunk record per utterance (utt_NNNNN.bin) and chunks.csv
/// (source,chunk_index,label,speaker,record) into `out_dir`.
void write_features(const std::vector<Utterance>& corpus, const std::filesystem::path& out_dir);

/// Chunk-level dataset of the utterances whose speaker is in `speakers`;
/// each chunk inherits its utterance's label.
model::Dataset chunk_dataset(const std::vector<Utterance>& corpus, const std::vector<std::string>& speakers);

struct FoldRun {
  Fold fold;
  std::uint64_t seed = 0;
  std::optional<model::DfmimModel> model;
  model::TrainReport report;
};

struct SerRun {
  std::vector<FoldRun> folds;
  double mean_wa = 0.0;
  double mean_ua = 0.0;
};

/// Trains the first `max_folds` folds of the speaker-independent plan (all if
/// 0), up to `jobs` folds concurrently, each from a fold-derived seed.
SerRun run_ser(const Settings& settings, const std::vector<Utterance>& corpus, const FoldPlan& plan,
               std::uint64_t seed, std::size_t max_folds = 0, std::size_t jobs = 1);

}  // namespace dfmim::cli
