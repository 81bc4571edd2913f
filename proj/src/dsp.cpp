#include "dfmim/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "binio.hpp"
#include "dfmim/errors.hpp"
#include "fileio.hpp"

namespace dfmim::dsp {

namespace {

// FFTW planning is not thread-safe; execution on distinct buffers is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard lock(plan_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    {
      std::lock_guard lock(plan_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() noexcept { return in_; }
  void execute() { fftw_execute(plan_); }
  double magnitude(std::size_t k) const { return std::hypot(out_[k][0], out_[k][1]); }

 private:
  std::size_t n_;
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

class CosineTransform {
 public:
  CosineTransform(std::size_t n, fftw_r2r_kind kind) : n_(n) {
    in_ = fftw_alloc_real(n);
    out_ = fftw_alloc_real(n);
    std::lock_guard lock(plan_mutex());
    plan_ = fftw_plan_r2r_1d(static_cast<int>(n), in_, out_, kind, FFTW_ESTIMATE);
  }
  ~CosineTransform() {
    {
      std::lock_guard lock(plan_mutex());
      fftw_destroy_plan(plan_);
    }
    fftw_free(in_);
    fftw_free(out_);
  }
  CosineTransform(const CosineTransform&) = delete;
  CosineTransform& operator=(const CosineTransform&) = delete;

  double* input() noexcept { return in_; }
  const double* output() const noexcept { return out_; }
  void execute() { fftw_execute(plan_); }

 private:
  std::size_t n_;
  double* in_;
  double* out_;
  fftw_plan plan_;
};

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::uint16_t u16_at(std::string_view s, std::size_t pos) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(s[pos]) |
                                    (static_cast<unsigned char>(s[pos + 1]) << 8));
}
std::uint32_t u32_at(std::string_view s, std::size_t pos) {
  return static_cast<std::uint32_t>(u16_at(s, pos)) | (static_cast<std::uint32_t>(u16_at(s, pos + 2)) << 16);
}

}  // namespace

AudioSignal load_wav(const std::filesystem::path& path) {
  const std::string data = fileio::read_all(path);
  const std::string_view buf(data);
  const std::string name = path.string();
  if (buf.size() < 12 || buf.substr(0, 4) != "RIFF" || buf.substr(8, 4) != "WAVE")
    throw IoError(name + ": not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::string_view payload;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const auto id = buf.substr(pos, 4);
    const std::size_t size = u32_at(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (size > buf.size() - body) throw IoError(name + ": truncated chunk '" + std::string(id) + "'");
    if (id == "fmt ") {
      if (size < 16) throw IoError(name + ": short fmt chunk");
      format = u16_at(buf, body);
      channels = u16_at(buf, body + 2);
      rate = u32_at(buf, body + 4);
      bits = u16_at(buf, body + 14);
      // WAVE_FORMAT_EXTENSIBLE carries the real format in the sub-format GUID.
      if (format == 0xFFFE && size >= 26) format = u16_at(buf, body + 24);
      have_fmt = true;
    } else if (id == "data") {
      payload = buf.substr(body, size);
      have_data = true;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt || !have_data) throw IoError(name + ": missing fmt or data chunk");
  if (format != 1) throw UnsupportedFormat(name + ": only integer PCM is supported (format tag " +
                                           std::to_string(format) + ")");
  if (bits != 8 && bits != 16) throw UnsupportedFormat(name + ": unsupported bit depth " + std::to_string(bits));
  if (channels == 0 || rate == 0) throw IoError(name + ": invalid channel count or sample rate");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = payload.size() / frame_bytes;
  if (frames == 0) throw IoError(name + ": no samples");

  AudioSignal sig;
  sig.sample_rate = rate;
  sig.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = f * frame_bytes + c * bytes_per_sample;
      if (bits == 16) {
        acc += static_cast<std::int16_t>(u16_at(payload, off)) / 32768.0;
      } else {
        acc += (static_cast<unsigned char>(payload[off]) - 128.0) / 128.0;
      }
    }
    sig.samples[f] = acc / channels;
  }
  return sig;
}

void save_wav(const std::filesystem::path& path, const AudioSignal& signal) {
  const auto rate = static_cast<std::uint32_t>(std::lround(signal.sample_rate));
  const auto data_bytes = static_cast<std::uint32_t>(signal.samples.size() * 2);
  std::string out = "RIFF";
  binio::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  binio::put_u32(out, 16);
  binio::put_uint<std::uint16_t>(out, 1);
  binio::put_uint<std::uint16_t>(out, 1);
  binio::put_u32(out, rate);
  binio::put_u32(out, rate * 2);
  binio::put_uint<std::uint16_t>(out, 2);
  binio::put_uint<std::uint16_t>(out, 16);
  out += "data";
  binio::put_u32(out, data_bytes);
  for (double s : signal.samples) {
    const long v = std::clamp(std::lround(s * 32768.0), -32768L, 32767L);
    binio::put_uint<std::uint16_t>(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  fileio::write_all(path, out);
}

AudioSignal resample_linear(const AudioSignal& signal, double target_rate) {
  if (!(target_rate > 0.0)) throw std::invalid_argument("target sample rate must be > 0");
  if (signal.samples.empty()) throw std::invalid_argument("cannot resample an empty signal");
  if (target_rate == signal.sample_rate) return signal;
  const double ratio = signal.sample_rate / target_rate;
  const auto n_out = static_cast<std::size_t>(
      std::max(1.0, std::floor(static_cast<double>(signal.samples.size() - 1) / ratio) + 1.0));
  AudioSignal out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  const std::size_t last = signal.samples.size() - 1;
  for (std::size_t i = 0; i < n_out; ++i) {
    const double src = static_cast<double>(i) * ratio;
    const auto i0 = std::min(static_cast<std::size_t>(src), last);
    const std::size_t i1 = std::min(i0 + 1, last);
    const double frac = src - static_cast<double>(i0);
    out.samples[i] = (1.0 - frac) * signal.samples[i0] + frac * signal.samples[i1];
  }
  return out;
}

void StftConfig::validate() const {
  if (window_width == 0 || window_width > fft_size)
    throw std::invalid_argument("window width must satisfy 0 < M <= N");
  if (hop == 0) throw std::invalid_argument("hop must be > 0");
  if (!is_power_of_two(fft_size)) throw std::invalid_argument("FFT size must be a power of two");
}

std::vector<double> hann_window(std::size_t width) {
  std::vector<double> w(width);
  for (std::size_t i = 0; i < width; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(width));
  return w;
}

Matrix spectrogram(const AudioSignal& signal, const StftConfig& cfg) {
  cfg.validate();
  const std::size_t len = signal.samples.size();
  const std::size_t m = cfg.window_width;
  if (len < m) throw std::invalid_argument("signal shorter than one analysis window");
  const std::size_t half = m / 2;

  // Reflect padding without repeating the edge sample.
  std::vector<double> padded(len + 2 * half);
  for (std::size_t i = 0; i < half; ++i) {
    padded[half - 1 - i] = signal.samples[i + 1];
    padded[half + len + i] = signal.samples[len - 2 - i];
  }
  std::copy(signal.samples.begin(), signal.samples.end(), padded.begin() + static_cast<std::ptrdiff_t>(half));

  const std::size_t frames = (len + cfg.hop - 1) / cfg.hop;
  const std::size_t bins = cfg.fft_size / 2 + 1;
  const auto window = hann_window(m);
  Matrix spec(frames, bins);
  RealFft fft(cfg.fft_size);
  double* in = fft.input();
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * cfg.hop;
    std::fill(in, in + cfg.fft_size, 0.0);
    for (std::size_t u = 0; u < m; ++u) in[u] = padded[start + u] * window[u];
    fft.execute();
    for (std::size_t k = 0; k < bins; ++k) spec(t, k) = fft.magnitude(k);
  }
  return spec;
}

double hz_to_mel(double hz) {
  if (hz < 0.0 || std::isnan(hz)) throw std::invalid_argument("frequency must be >= 0");
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterBank make_mel_filter_bank(std::size_t n_filters, std::size_t fft_size, double sample_rate, double f_min,
                                   double f_max) {
  if (n_filters == 0) throw std::invalid_argument("need at least one mel filter");
  if (!is_power_of_two(fft_size)) throw std::invalid_argument("FFT size must be a power of two");
  if (!(f_min >= 0.0 && f_max > f_min && f_max <= sample_rate / 2.0))
    throw std::invalid_argument("mel band edges must satisfy 0 <= f_min < f_max <= sample_rate/2");
  const std::size_t bins = fft_size / 2 + 1;
  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_filters + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / static_cast<double>(n_filters + 1));

  MelFilterBank bank;
  bank.f_min = f_min;
  bank.f_max = f_max;
  bank.weights = Matrix::Zero(static_cast<Eigen::Index>(n_filters), static_cast<Eigen::Index>(bins));
  for (std::size_t f = 0; f < n_filters; ++f) {
    const double lo = edges[f], mid = edges[f + 1], hi = edges[f + 2];
    bank.centers_hz.push_back(mid);
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double freq = static_cast<double>(k) * sample_rate / static_cast<double>(fft_size);
      double w = 0.0;
      if (freq > lo && freq <= mid) w = (freq - lo) / (mid - lo);
      else if (freq > mid && freq < hi) w = (hi - freq) / (hi - mid);
      bank.weights(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(k)) = w;
      any = any || w > 0.0;
    }
    if (!any)
      throw std::invalid_argument("mel filter " + std::to_string(f) +
                                  " covers no FFT bin; use fewer filters or a larger FFT");
  }
  return bank;
}

Matrix mel_spectrogram(const Matrix& spec, const Matrix& bank_weights) {
  if (spec.cols() != bank_weights.cols())
    throw std::invalid_argument("spectrogram has " + std::to_string(spec.cols()) + " bins, filter bank expects " +
                                std::to_string(bank_weights.cols()));
  return spec * bank_weights.transpose();
}

Matrix mel_spectrogram(const Matrix& spec, const MelFilterBank& bank) { return mel_spectrogram(spec, bank.weights); }

std::vector<double> dct2(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  CosineTransform t(n, FFTW_REDFT10);
  std::copy(x.begin(), x.end(), t.input());
  t.execute();
  std::vector<double> out(t.output(), t.output() + n);
  const double s0 = std::sqrt(1.0 / (4.0 * static_cast<double>(n)));
  const double s = std::sqrt(1.0 / (2.0 * static_cast<double>(n)));
  out[0] *= s0;
  for (std::size_t k = 1; k < n; ++k) out[k] *= s;
  return out;
}

std::vector<double> dct3(std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  CosineTransform t(n, FFTW_REDFT01);
  double* in = t.input();
  in[0] = x[0] / std::sqrt(static_cast<double>(n));
  for (std::size_t k = 1; k < n; ++k) in[k] = x[k] / std::sqrt(2.0 * static_cast<double>(n));
  t.execute();
  return std::vector<double>(t.output(), t.output() + n);
}

MFCCMatrix mfcc(const Matrix& melspec, std::size_t n_mfcc, MfccVariant variant) {
  const auto filters = static_cast<std::size_t>(melspec.cols());
  if (n_mfcc == 0 || n_mfcc > filters)
    throw std::invalid_argument("n_mfcc must be in 1.." + std::to_string(filters) + ", got " + std::to_string(n_mfcc));
  if ((melspec.array() < 0.0).any()) throw std::invalid_argument("mel spectrogram entries must be >= 0");

  MFCCMatrix out;
  out.values.resize(melspec.rows(), static_cast<Eigen::Index>(n_mfcc));
  const Matrix logmel = (melspec.array() + kLogFloor).log().matrix();

  if (variant == MfccVariant::dct2) {
    CosineTransform t(filters, FFTW_REDFT10);
    const double s0 = std::sqrt(1.0 / (4.0 * static_cast<double>(filters)));
    const double s = std::sqrt(1.0 / (2.0 * static_cast<double>(filters)));
    for (Eigen::Index r = 0; r < logmel.rows(); ++r) {
      std::copy(logmel.row(r).data(), logmel.row(r).data() + filters, t.input());
      t.execute();
      for (std::size_t m = 0; m < n_mfcc; ++m)
        out.values(r, static_cast<Eigen::Index>(m)) = t.output()[m] * (m == 0 ? s0 : s);
    }
    return out;
  }

  // Real part of the complex exponential sum; F + 1 = filters.
  const double big_f = static_cast<double>(filters) - 1.0;
  if (filters < 2) throw std::invalid_argument("paper_complex variant needs at least two filters");
  Matrix basis(static_cast<Eigen::Index>(filters), static_cast<Eigen::Index>(n_mfcc));
  for (std::size_t f = 0; f < filters; ++f)
    for (std::size_t m = 0; m < n_mfcc; ++m)
      basis(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(m)) =
          std::cos(2.0 * std::numbers::pi * static_cast<double>(m) * static_cast<double>(f) /
                   static_cast<double>(filters)) /
          big_f;
  out.values = logmel * basis;
  return out;
}

std::size_t chunk_hop(std::size_t chunk_len, double overlap) {
  if (chunk_len == 0) throw std::invalid_argument("chunk length must be >= 1");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw std::invalid_argument("overlap must lie in [0,1)");
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(chunk_len) * (1.0 - overlap))));
}

std::size_t chunk_count(std::size_t frames, std::size_t chunk_len, double overlap) {
  const std::size_t hop = chunk_hop(chunk_len, overlap);
  if (frames < chunk_len) return 1;
  return (frames - chunk_len) / hop + 1;
}

ChunkSet chunk_mfcc(const MFCCMatrix& m, std::size_t chunk_len, double overlap) {
  ChunkSet set;
  set.hop_frames = chunk_hop(chunk_len, overlap);
  set.source_frames = m.frames();
  const std::size_t count = chunk_count(m.frames(), chunk_len, overlap);
  const auto len = static_cast<Eigen::Index>(chunk_len);
  for (std::size_t c = 0; c < count; ++c) {
    Matrix chunk = Matrix::Zero(len, m.values.cols());
    const auto start = static_cast<Eigen::Index>(c * set.hop_frames);
    const Eigen::Index take = std::min<Eigen::Index>(len, m.values.rows() - start);
    chunk.topRows(take) = m.values.middleRows(start, take);
    set.chunks.push_back(std::move(chunk));
  }
  return set;
}

FeatureExtractor::FeatureExtractor(FeatureConfig cfg)
    : cfg_(std::move(cfg)),
      bank_(make_mel_filter_bank(cfg_.n_mels, cfg_.stft.fft_size, cfg_.sample_rate, cfg_.f_min, cfg_.f_max)) {
  cfg_.stft.validate();
  if (cfg_.n_mfcc == 0 || cfg_.n_mfcc > cfg_.n_mels) throw std::invalid_argument("n_mfcc must be in 1..n_mels");
  chunk_hop(cfg_.chunk_len, cfg_.overlap);
}

Features FeatureExtractor::operator()(const AudioSignal& signal) const {
  Features out;
  const AudioSignal* input = &signal;
  AudioSignal resampled;
  if (signal.sample_rate != cfg_.sample_rate) {
    resampled = resample_linear(signal, cfg_.sample_rate);
    input = &resampled;
    out.resampled = true;
  }
  const Matrix spec = spectrogram(*input, cfg_.stft);
  out.mfcc = mfcc(mel_spectrogram(spec, bank_), cfg_.n_mfcc, cfg_.variant);
  out.chunks = chunk_mfcc(out.mfcc, cfg_.chunk_len, cfg_.overlap);
  return out;
}

void save_chunk_record(const std::filesystem::path& path, const ChunkSet& chunks) {
  std::string out;
  const std::uint32_t len = chunks.chunks.empty() ? 0 : static_cast<std::uint32_t>(chunks.chunks.front().rows());
  const std::uint32_t coeffs = chunks.chunks.empty() ? 0 : static_cast<std::uint32_t>(chunks.chunks.front().cols());
  binio::put_u32(out, static_cast<std::uint32_t>(chunks.chunks.size()));
  binio::put_u32(out, len);
  binio::put_u32(out, coeffs);
  for (const auto& c : chunks.chunks)
    for (Eigen::Index r = 0; r < c.rows(); ++r)
      for (Eigen::Index k = 0; k < c.cols(); ++k) binio::put_f32(out, static_cast<float>(c(r, k)));
  fileio::write_all(path, out);
}

std::vector<Matrix> load_chunk_record(const std::filesystem::path& path) {
  const std::string data = fileio::read_all(path);
  binio::Reader r(data);
  const auto n = r.u32();
  const auto len = r.u32();
  const auto coeffs = r.u32();
  if (r.remaining() != static_cast<std::size_t>(n) * len * coeffs * 4)
    throw CorruptFile(path.string() + ": size does not match chunk header");
  std::vector<Matrix> chunks;
  for (std::uint32_t c = 0; c < n; ++c) {
    Matrix m(len, coeffs);
    for (std::uint32_t i = 0; i < len; ++i)
      for (std::uint32_t k = 0; k < coeffs; ++k) m(i, k) = r.f32();
    chunks.push_back(std::move(m));
  }
  return chunks;
}

}  // namespace dfmim::dsp
