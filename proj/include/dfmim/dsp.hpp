#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace dfmim::dsp {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct AudioSignal {
  std::vector<double> samples;
  double sample_rate = 16000.0;
};

/// Reads 8/16-bit PCM WAV; 16-bit samples are scaled by 1/32768, 8-bit by
/// (x-128)/128, and channels are averaged to mono.
AudioSignal load_wav(const std::filesystem::path& path);

/// Writes mono 16-bit PCM, clamping to [-1, 32767/32768].
void save_wav(const std::filesystem::path& path, const AudioSignal& signal);

/// Naive linear-interpolation resampler.
AudioSignal resample_linear(const AudioSignal& signal, double target_rate);

enum class WindowKind { hann };

struct StftConfig {
  std::size_t window_width = 400;  // M
  std::size_t fft_size = 512;      // N
  std::size_t hop = 160;
  WindowKind window = WindowKind::hann;

  void validate() const;
};

/// Periodic Hann window of width M.
std::vector<double> hann_window(std::size_t width);

/// Magnitude STFT, frames x (N/2 + 1). Frame t is centred on sample t*hop of
/// the signal reflect-padded by M/2 on both sides, giving ceil(len/hop) frames.
Matrix spectrogram(const AudioSignal& signal, const StftConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

struct MelFilterBank {
  Matrix weights;  // filters x (N/2 + 1)
  std::vector<double> centers_hz;
  double f_min = 0.0;
  double f_max = 8000.0;

  std::size_t filters() const noexcept { return static_cast<std::size_t>(weights.rows()); }
  std::size_t bins() const noexcept { return static_cast<std::size_t>(weights.cols()); }
};

/// Triangular filters with centres equally spaced in mel between mel(f_min)
/// and mel(f_max), unit peak, evaluated at FFT bin frequencies.
MelFilterBank make_mel_filter_bank(std::size_t n_filters, std::size_t fft_size, double sample_rate,
                                   double f_min, double f_max);

Matrix mel_spectrogram(const Matrix& spec, const MelFilterBank& bank);
Matrix mel_spectrogram(const Matrix& spec, const Matrix& bank_weights);

inline constexpr double kLogFloor = 1e-10;

enum class MfccVariant { dct2, paper_complex };

struct MFCCMatrix {
  Matrix values;  // frames x coeffs

  std::size_t frames() const noexcept { return static_cast<std::size_t>(values.rows()); }
  std::size_t coeffs() const noexcept { return static_cast<std::size_t>(values.cols()); }
};

/// Orthonormal DCT-II / DCT-III (inverse of each other).
std::vector<double> dct2(std::span<const double> x);
std::vector<double> dct3(std::span<const double> x);

/// dct2: orthonormal DCT-II of log(mel + kLogFloor), first n_mfcc coefficients.
/// paper_complex: Re[(1/F) sum_{f=0..F} log(mel) exp(i 2 pi (m-1) f / (F+1))]
/// for m = 1..n_mfcc with F + 1 filters.
MFCCMatrix mfcc(const Matrix& melspec, std::size_t n_mfcc, MfccVariant variant = MfccVariant::dct2);

struct ChunkSet {
  std::vector<Matrix> chunks;  // each chunk_len x coeffs
  std::size_t hop_frames = 0;
  std::size_t source_frames = 0;
};

std::size_t chunk_hop(std::size_t chunk_len, double overlap);
std::size_t chunk_count(std::size_t frames, std::size_t chunk_len, double overlap);

/// Chunks start every round(chunk_len*(1-overlap)) frames; a short input
/// gives one zero-padded chunk and trailing frames that do not fill a chunk
/// are dropped.
ChunkSet chunk_mfcc(const MFCCMatrix& m, std::size_t chunk_len = 64, double overlap = 0.25);

struct FeatureConfig {
  double sample_rate = 16000.0;
  StftConfig stft;
  std::size_t n_mels = 64;
  double f_min = 0.0;
  double f_max = 8000.0;
  std::size_t n_mfcc = 40;
  MfccVariant variant = MfccVariant::dct2;
  std::size_t chunk_len = 64;
  double overlap = 0.25;
};

struct Features {
  MFCCMatrix mfcc;
  ChunkSet chunks;
  bool resampled = false;
};

/// Full chain: (resample) -> spectrogram -> mel -> mfcc -> chunks.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureConfig cfg);

  Features operator()(const AudioSignal& signal) const;
  const FeatureConfig& config() const noexcept { return cfg_; }
  const MelFilterBank& bank() const noexcept { return bank_; }

 private:
  FeatureConfig cfg_;
  MelFilterBank bank_;
};

/// Chunk record: u32 n_chunks, u32 chunk_len, u32 n_mfcc, then little-endian
/// float32 values chunk by chunk, row-major.
void save_chunk_record(const std::filesystem::path& path, const ChunkSet& chunks);
std::vector<Matrix> load_chunk_record(const std::filesystem::path& path);

}  // namespace dfmim::dsp
