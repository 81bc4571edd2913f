#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dfmim/dsp.hpp"
#include "dfmim/model.hpp"
#include "dfmim/simgen.hpp"

namespace dfmim::cli {

/// Declared label set plus a many-to-one relabelling applied first
/// (e.g. excited -> happy).
struct LabelSet {
  std::vector<std::string> labels{"neutral", "happy", "angry", "sad"};
  std::map<std::string, std::string> mapping{{"excited", "happy"}};

  /// Index of the (mapped) label; throws std::invalid_argument if undeclared.
  std::size_t index(const std::string& raw) const;
};

/// Fully resolved settings for every subcommand.
struct Settings {
  model::DfmimConfig ser;  // speech model; p tracks n_mfcc and n_grid tracks the chunk length
  model::DfmimConfig sim;  // simulation model
  dsp::FeatureConfig features;
  simgen::GpParams gp;
  std::size_t n_train = 2000;
  std::size_t n_val = 500;
  std::size_t n_test = 500;
  LabelSet labels;

  Settings();
  void validate() const;
  std::string to_text() const;
};

model::DfmimConfig default_sim_config();

/// Parses `key = value` lines over the defaults. Unprefixed model keys set
/// the speech model, `sim.`-prefixed keys the simulation model, `gp.` keys the
/// covariate processes. Unknown keys and constraint violations raise
/// ConfigError naming the key.
Settings parse_config(const std::string& text);
Settings load_config(const std::filesystem::path& path);

}  // namespace dfmim::cli
