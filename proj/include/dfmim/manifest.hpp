#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dfmim/config.hpp"

namespace dfmim::cli {

struct ManifestRow {
  std::filesystem::path path;  // resolved against the manifest's directory
  std::string speaker;
  std::string session;
  std::string label;       // as written
  std::size_t label_index;  // into the declared label set
};

struct Manifest {
  std::vector<ManifestRow> rows;

  std::vector<std::string> speakers() const;  // sorted, distinct
};

/// Comma-separated `path,speaker,session,label` with that header line.
Manifest load_manifest(const std::filesystem::path& path, const LabelSet& labels);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct Fold {
  std::string test;
  std::string validation;
  std::vector<std::string> train;
};

using FoldPlan = std::vector<Fold>;

/// One fold per speaker (sorted order) as test; validation is the cyclic
/// successor; every other speaker trains.
FoldPlan build_folds(const std::vector<std::string>& speakers);
FoldPlan build_folds(const Manifest& manifest);

/// Throws std::logic_error if the plan breaks a partition or coverage rule.
void check_fold_plan(const FoldPlan& plan, const std::vector<std::string>& speakers);

}  // namespace dfmim::cli
