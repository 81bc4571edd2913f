#include "dfmim/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dfmim/dsp.hpp"
#include "dfmim/simgen.hpp"
#include "fileio.hpp"

namespace dfmim::cli {

namespace {

constexpr const char* kLabels[] = {"neutral", "happy", "angry", "sad"};

std::vector<double> render(std::size_t cls, double pitch, double level, double duration, double rate,
                           std::mt19937_64& rng) {
  using std::numbers::pi;
  const auto n = static_cast<std::size_t>(duration * rate);
  std::vector<double> s(n);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * pi);
  const double phase = phase_dist(rng);
  double chirp_phase = phase;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double v = 0.0;
    switch (cls) {
      case 0:  // harmonic low tone
        v = 0.6 * std::sin(2 * pi * 200 * pitch * t + phase) + 0.3 * std::sin(4 * pi * 200 * pitch * t) +
            0.1 * std::sin(6 * pi * 200 * pitch * t);
        break;
      case 1:  // high tone with vibrato
        v = std::sin(2 * pi * 1200 * pitch * t + 8.0 * std::sin(2 * pi * 6 * t) + phase);
        break;
      case 2:  // broadband noise
        v = 0.5 * noise(rng);
        break;
      default: {  // rising chirp 500 -> 3000 Hz
        const double f = pitch * (500.0 + 2500.0 * t / duration);
        chirp_phase += 2 * pi * f / rate;
        v = std::sin(chirp_phase);
      }
    }
    s[i] = std::clamp(level * v + 0.01 * noise(rng), -1.0, 1.0);
  }
  return s;
}

}  // namespace

std::filesystem::path write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticCorpusSpec& spec) {
  if (spec.speakers < 1 || spec.utterances < 1) throw std::invalid_argument("corpus needs speakers and utterances");
  std::filesystem::create_directories(dir / "wav");
  std::ostringstream manifest;
  manifest << "path,speaker,session,label\n";
  for (std::size_t u = 0; u < spec.utterances; ++u) {
    const std::size_t spk = u % spec.speakers;
    const std::size_t cls = (u / spec.speakers) % 4;
    std::mt19937_64 spk_rng(simgen::derive_seed(spec.seed, spk, 11));
    std::uniform_real_distribution<double> pitch_dist(0.9, 1.1), level_dist(0.2, 0.6);
    const double pitch = pitch_dist(spk_rng);
    const double level = level_dist(spk_rng);
    std::mt19937_64 rng(simgen::derive_seed(spec.seed, u, 12));
    dsp::AudioSignal sig;
    sig.sample_rate = spec.sample_rate;
    sig.samples = render(cls, pitch, level, spec.duration_s, spec.sample_rate, rng);
    char name[64];
    std::snprintf(name, sizeof name, "wav/utt%05zu.wav", u);
    dsp::save_wav(dir / name, sig);
    char speaker[32];
    std::snprintf(speaker, sizeof speaker, "spk%02zu", spk);
    manifest << name << ',' << speaker << ",ses" << (spk / 2 + 1) << ',' << kLabels[cls] << '\n';
  }
  const auto path = dir / "manifest.csv";
  fileio::write_all(path, manifest.str());
  return path;
}

}  // namespace dfmim::cli
