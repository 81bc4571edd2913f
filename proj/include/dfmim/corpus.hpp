#pragma once

#include <cstdint>
#include <filesystem>

namespace dfmim::cli {

struct SyntheticCorpusSpec {
  std::size_t speakers = 20;
  std::size_t utterances = 400;
  double duration_s = 1.5;
  double sample_rate = 16000.0;
  std::uint64_t seed = 7;
};

/// Writes a labelled 4-class audio corpus (16-bit WAV files plus
/// manifest.csv) into `dir`. Classes neutral/happy/angry/sad get a harmonic
/// low tone, a vibrato high tone, white noise and a rising chirp; each
/// speaker shifts pitch and level. Returns the manifest path.
std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticCorpusSpec& spec);

}  // namespace dfmim::cli
