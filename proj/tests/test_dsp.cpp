#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "dfmim/dsp.hpp"
#include "dfmim/errors.hpp"

using namespace dfmim;
using namespace dfmim::dsp;
namespace fs = std::filesystem;
using std::numbers::pi;

namespace {

fs::path temp_dir() {
  const auto d = fs::temp_directory_path() / "dfmim_dsp_test";
  fs::create_directories(d);
  return d;
}

void le(std::string& s, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// Hand-assembled RIFF/WAVE file.
void write_raw_wav(const fs::path& path, std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                   std::uint16_t bits, const std::string& data) {
  std::string fmt;
  le(fmt, format, 2);
  le(fmt, channels, 2);
  le(fmt, rate, 4);
  le(fmt, rate * channels * bits / 8, 4);
  le(fmt, channels * bits / 8, 2);
  le(fmt, bits, 2);
  std::string body = "WAVE";
  body += "fmt ";
  le(body, static_cast<std::uint32_t>(fmt.size()), 4);
  body += fmt;
  body += "data";
  le(body, static_cast<std::uint32_t>(data.size()), 4);
  body += data;
  std::string file = "RIFF";
  le(file, static_cast<std::uint32_t>(body.size()), 4);
  file += body;
  std::ofstream(path, std::ios::binary) << file;
}

std::string pcm16(const std::vector<std::int16_t>& v) {
  std::string s;
  for (auto x : v) le(s, static_cast<std::uint16_t>(x), 2);
  return s;
}

AudioSignal sine(double hz, double seconds, double rate = 16000.0, double amp = 0.5) {
  AudioSignal s;
  s.sample_rate = rate;
  const auto n = static_cast<std::size_t>(seconds * rate);
  for (std::size_t i = 0; i < n; ++i) s.samples.push_back(amp * std::sin(2 * pi * hz * i / rate));
  return s;
}

// O(n^2) orthonormal DCT-II.
std::vector<double> dct2_oracle(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * std::cos(pi * (i + 0.5) * k / n);
    out[k] = acc * std::sqrt((k == 0 ? 1.0 : 2.0) / n);
  }
  return out;
}

}  // namespace

TEST_CASE("wav: silence, extremes, stereo averaging, 8-bit") {
  const auto dir = temp_dir();
  write_raw_wav(dir / "silence.wav", 1, 1, 16000, 16, pcm16(std::vector<std::int16_t>(16000, 0)));
  const auto s = load_wav(dir / "silence.wav");
  CHECK(s.samples.size() == 16000);
  CHECK(s.sample_rate == 16000.0);
  for (double v : s.samples) CHECK(v == 0.0);

  write_raw_wav(dir / "ext.wav", 1, 1, 16000, 16, pcm16({-32768, 32767, 16384}));
  const auto e = load_wav(dir / "ext.wav");
  CHECK(e.samples[0] == -1.0);
  CHECK(e.samples[1] == 32767.0 / 32768.0);
  CHECK(e.samples[2] == 0.5);

  write_raw_wav(dir / "stereo.wav", 1, 2, 8000, 16, pcm16({16384, -16384, 16384, -16384}));
  const auto st = load_wav(dir / "stereo.wav");
  CHECK(st.samples.size() == 2);
  CHECK(st.samples[0] == 0.0);
  CHECK(st.samples[1] == 0.0);
  CHECK(st.sample_rate == 8000.0);

  write_raw_wav(dir / "u8.wav", 1, 1, 8000, 8, std::string{char(128), char(0), char(255)});
  const auto u8 = load_wav(dir / "u8.wav");
  CHECK(u8.samples[0] == 0.0);
  CHECK(u8.samples[1] == -1.0);
  CHECK(u8.samples[2] == 127.0 / 128.0);
}

TEST_CASE("wav errors") {
  const auto dir = temp_dir();
  CHECK_THROWS_AS(load_wav(dir / "nope.wav"), IoError);
  std::ofstream(dir / "junk.wav", std::ios::binary) << "not a wav file at all";
  CHECK_THROWS_AS(load_wav(dir / "junk.wav"), IoError);
  write_raw_wav(dir / "float.wav", 3, 1, 16000, 32, std::string(16, '\0'));
  CHECK_THROWS_AS(load_wav(dir / "float.wav"), UnsupportedFormat);
  write_raw_wav(dir / "b24.wav", 1, 1, 16000, 24, std::string(12, '\0'));
  CHECK_THROWS_AS(load_wav(dir / "b24.wav"), UnsupportedFormat);
  // Truncated data chunk.
  std::string bytes;
  {
    write_raw_wav(dir / "ok.wav", 1, 1, 16000, 16, pcm16(std::vector<std::int16_t>(100, 7)));
    std::ifstream in(dir / "ok.wav", std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  std::ofstream(dir / "trunc.wav", std::ios::binary) << bytes.substr(0, 30);
  CHECK_THROWS_AS(load_wav(dir / "trunc.wav"), IoError);
}

TEST_CASE("wav save/load round trip") {
  const auto dir = temp_dir();
  AudioSignal s{{0.0, 0.25, -0.5, 0.999, -1.0}, 22050.0};
  save_wav(dir / "rt.wav", s);
  const auto back = load_wav(dir / "rt.wav");
  CHECK(back.sample_rate == 22050.0);
  REQUIRE(back.samples.size() == s.samples.size());
  for (std::size_t i = 0; i < s.samples.size(); ++i) CHECK(std::abs(back.samples[i] - s.samples[i]) <= 1.0 / 32768.0);
}

TEST_CASE("linear resampler") {
  AudioSignal s{{0.0, 1.0, 2.0, 3.0}, 4.0};
  const auto up = resample_linear(s, 8.0);
  CHECK(up.sample_rate == 8.0);
  CHECK(up.samples[1] == doctest::Approx(0.5));
  CHECK(up.samples[2] == doctest::Approx(1.0));
  const auto same = resample_linear(s, 4.0);
  CHECK(same.samples == s.samples);
  CHECK_THROWS_AS(resample_linear(s, 0.0), std::invalid_argument);
}

TEST_CASE("stft config validation") {
  StftConfig c;
  CHECK_NOTHROW(c.validate());
  c.fft_size = 500;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = StftConfig{};
  c.window_width = 600;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = StftConfig{};
  c.hop = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = StftConfig{};
  c.window_width = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("hann window is periodic") {
  const auto w = hann_window(4);
  CHECK(w[0] == 0.0);
  CHECK(w[1] == doctest::Approx(0.5));
  CHECK(w[2] == doctest::Approx(1.0));
  CHECK(w[3] == doctest::Approx(0.5));
}

TEST_CASE("spectrogram shape, zeros, homogeneity and bin-centred sine") {
  const StftConfig cfg;
  AudioSignal zero{std::vector<double>(4000, 0.0), 16000.0};
  const auto z = spectrogram(zero, cfg);
  CHECK(z.rows() == 25);  // ceil(4000 / 160)
  CHECK(z.cols() == 257);
  CHECK(z.cwiseAbs().maxCoeff() == 0.0);

  // Frames whose window lies inside the signal peak at the bin of a
  // bin-centred sine; edge frames see the reflect padding.
  const std::size_t k0 = 37;
  const auto s = sine(k0 * 16000.0 / 512.0, 0.3);
  const auto spec = spectrogram(s, cfg);
  CHECK(static_cast<std::size_t>(spec.rows()) == (s.samples.size() + 159) / 160);
  for (Eigen::Index t = 2; t * 160 + 200 <= static_cast<Eigen::Index>(s.samples.size()); ++t) {
    Eigen::Index arg = 0;
    spec.row(t).maxCoeff(&arg);
    CHECK(arg == static_cast<Eigen::Index>(k0));
  }
  // A 1 kHz cosine (period 16 samples, bin 32) whose last sample sits on an
  // extremum is continued exactly by reflect padding, so every frame peaks at 32.
  AudioSignal c{std::vector<double>(4801), 16000.0};
  for (std::size_t i = 0; i < c.samples.size(); ++i) c.samples[i] = 0.5 * std::cos(2 * pi * i / 16.0);
  const auto cspec = spectrogram(c, cfg);
  for (Eigen::Index t = 0; t < cspec.rows(); ++t) {
    Eigen::Index arg = 0;
    cspec.row(t).maxCoeff(&arg);
    CHECK(arg == 32);
  }
  CHECK(spec.minCoeff() >= 0.0);

  AudioSignal doubled = s;
  for (double& v : doubled.samples) v *= 2.0;
  const auto spec2 = spectrogram(doubled, cfg);
  CHECK((spec2 - 2.0 * spec).cwiseAbs().maxCoeff() < 1e-9);

  AudioSignal tiny{std::vector<double>(399, 0.1), 16000.0};
  CHECK_THROWS_AS(spectrogram(tiny, cfg), std::invalid_argument);
}

TEST_CASE("mel scale") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-4));
  CHECK(hz_to_mel(1400.0) == doctest::Approx(1238.1).epsilon(1e-4));
  CHECK(mel_to_hz(hz_to_mel(1234.5)) == doctest::Approx(1234.5));
  CHECK_THROWS_AS(hz_to_mel(-1.0), std::invalid_argument);
}

TEST_CASE("mel filter bank invariants") {
  const auto bank = make_mel_filter_bank(64, 512, 16000.0, 0.0, 8000.0);
  CHECK(bank.filters() == 64);
  CHECK(bank.bins() == 257);
  CHECK(bank.weights.minCoeff() >= 0.0);
  for (Eigen::Index f = 0; f < bank.weights.rows(); ++f) {
    const auto row = bank.weights.row(f);
    CHECK(row.maxCoeff() > 0.0);
    // unimodal: non-decreasing up to the peak, non-increasing after it
    Eigen::Index peak = 0;
    row.maxCoeff(&peak);
    for (Eigen::Index k = 1; k <= peak; ++k) CHECK(row(k) >= row(k - 1));
    for (Eigen::Index k = peak + 1; k < row.size(); ++k) CHECK(row(k) <= row(k - 1));
  }
  const double step = (hz_to_mel(8000.0) - hz_to_mel(0.0)) / 65.0;
  for (std::size_t f = 0; f < bank.centers_hz.size(); ++f)
    CHECK(hz_to_mel(bank.centers_hz[f]) == doctest::Approx(step * (f + 1)).epsilon(1e-9));
  CHECK_THROWS_AS(make_mel_filter_bank(64, 512, 16000.0, 0.0, 9000.0), std::invalid_argument);
  CHECK_THROWS_AS(make_mel_filter_bank(64, 512, 16000.0, 500.0, 100.0), std::invalid_argument);
  // Far too many filters for 257 bins: some triangles would be empty.
  CHECK_THROWS_AS(make_mel_filter_bank(400, 512, 16000.0, 0.0, 8000.0), std::invalid_argument);
}

TEST_CASE("mel spectrogram") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Matrix spec(5, 9);
  for (Eigen::Index i = 0; i < spec.size(); ++i) spec.data()[i] = u(rng);
  Matrix select = Matrix::Zero(3, 9);
  select(0, 2) = 1.0;
  select(1, 5) = 1.0;
  select(2, 8) = 1.0;
  const auto m = mel_spectrogram(spec, select);
  CHECK(m.col(0) == spec.col(2));
  CHECK(m.col(1) == spec.col(5));
  CHECK(m.col(2) == spec.col(8));
  CHECK(mel_spectrogram(Matrix::Zero(5, 9), select).cwiseAbs().maxCoeff() == 0.0);
  CHECK((mel_spectrogram(spec, Matrix(2.0 * select)) - 2.0 * m).cwiseAbs().maxCoeff() == 0.0);
  CHECK((mel_spectrogram(Matrix(3.0 * spec), select) - 3.0 * m).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(mel_spectrogram(spec, Matrix::Zero(3, 8)), std::invalid_argument);
}

TEST_CASE("dct matches brute-force oracle and inverts") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> nd;
  for (std::size_t n : {1, 2, 8, 40, 64}) {
    std::vector<double> x(n);
    for (double& v : x) v = nd(rng);
    const auto fast = dct2(x);
    const auto slow = dct2_oracle(x);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(fast[k] - slow[k]) < 1e-10);
    const auto back = dct3(fast);
    for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(back[k] - x[k]) < 1e-8);
  }
}

TEST_CASE("mfcc dct2 variant") {
  Matrix c = Matrix::Constant(3, 16, 2.5);
  const auto m = mfcc(c, 10);
  CHECK(m.coeffs() == 10);
  CHECK(m.frames() == 3);
  for (Eigen::Index t = 0; t < 3; ++t) {
    CHECK(m.values(t, 0) == doctest::Approx(std::log(2.5 + kLogFloor) * 4.0));  // sqrt(16)
    for (Eigen::Index k = 1; k < 10; ++k) CHECK(std::abs(m.values(t, k)) < 1e-12);
  }

  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.01, 5.0);
  Matrix r(8, 8);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = u(rng);
  const auto full = mfcc(r, 8);
  for (Eigen::Index t = 0; t < 8; ++t) {
    std::vector<double> logrow(8);
    for (int f = 0; f < 8; ++f) logrow[f] = std::log(r(t, f) + kLogFloor);
    const auto oracle = dct2_oracle(logrow);
    for (int k = 0; k < 8; ++k) CHECK(std::abs(full.values(t, k) - oracle[k]) < 1e-10);
  }

  Matrix silent = Matrix::Zero(2, 8);
  const auto s = mfcc(silent, 4);
  CHECK(s.values.allFinite());
  CHECK_THROWS_AS(mfcc(r, 9), std::invalid_argument);
  Matrix neg = r;
  neg(0, 0) = -1.0;
  CHECK_THROWS_AS(mfcc(neg, 4), std::invalid_argument);
}

TEST_CASE("mfcc paper_complex variant") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  const int filters = 12;  // F + 1
  const double F = filters - 1;
  Matrix r(4, filters);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = u(rng);
  const auto m = mfcc(r, 5, MfccVariant::paper_complex);
  for (Eigen::Index t = 0; t < 4; ++t) {
    double sum = 0.0;
    for (int f = 0; f < filters; ++f) sum += std::log(r(t, f) + kLogFloor);
    // m = 1: exp term is 1, so (1/F) * sum over F + 1 filters = (F+1)/F * mean.
    CHECK(m.values(t, 0) == doctest::Approx(sum / F).epsilon(1e-12));
    for (int k = 1; k < 5; ++k) {
      double re = 0.0;
      for (int f = 0; f < filters; ++f) re += std::log(r(t, f) + kLogFloor) * std::cos(2 * pi * k * f / filters);
      CHECK(m.values(t, k) == doctest::Approx(re / F).epsilon(1e-12));
    }
  }
}

TEST_CASE("chunking") {
  CHECK(chunk_hop(64, 0.25) == 48);
  for (std::size_t tf = 1; tf <= 500; ++tf) {
    const std::size_t expected = tf < 64 ? 1 : (tf - 64) / 48 + 1;
    CHECK(chunk_count(tf, 64, 0.25) == expected);
  }
  auto make = [](std::size_t frames) {
    MFCCMatrix m;
    m.values = Matrix(frames, 3);
    for (Eigen::Index i = 0; i < m.values.rows(); ++i)
      for (Eigen::Index j = 0; j < 3; ++j) m.values(i, j) = static_cast<double>(i * 10 + j + 1);
    return m;
  };
  CHECK(chunk_mfcc(make(64)).chunks.size() == 1);
  const auto c160 = chunk_mfcc(make(160));
  CHECK(c160.chunks.size() == 3);
  CHECK(c160.hop_frames == 48);
  CHECK(c160.source_frames == 160);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(c160.chunks[i].rows() == 64);
    CHECK(c160.chunks[i](0, 0) == static_cast<double>(i * 48 * 10 + 1));
  }
  const auto c50 = chunk_mfcc(make(50));
  REQUIRE(c50.chunks.size() == 1);
  CHECK(c50.chunks[0].rows() == 64);
  CHECK(c50.chunks[0](49, 2) == 493.0);
  for (Eigen::Index r = 50; r < 64; ++r) CHECK(c50.chunks[0].row(r).cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(chunk_mfcc(make(10), 0), std::invalid_argument);
  CHECK_THROWS_AS(chunk_mfcc(make(10), 64, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(chunk_mfcc(make(10), 64, -0.1), std::invalid_argument);
}

TEST_CASE("feature pipeline is deterministic and records round trip") {
  const auto dir = temp_dir();
  FeatureExtractor fx(FeatureConfig{});
  const auto s = sine(440.0, 1.0);
  const auto a = fx(s);
  const auto b = fx(s);
  CHECK(a.mfcc.values == b.mfcc.values);
  CHECK(a.mfcc.frames() == 100);
  CHECK(a.mfcc.coeffs() == 40);
  CHECK(a.chunks.chunks.size() == 1);
  CHECK_FALSE(a.resampled);
  save_chunk_record(dir / "a.bin", a.chunks);
  save_chunk_record(dir / "b.bin", b.chunks);
  std::ifstream fa(dir / "a.bin", std::ios::binary), fb(dir / "b.bin", std::ios::binary);
  const std::string ba((std::istreambuf_iterator<char>(fa)), {}), bb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(ba == bb);
  CHECK(ba.size() == 12 + 64 * 40 * 4);
  const auto loaded = load_chunk_record(dir / "a.bin");
  REQUIRE(loaded.size() == 1);
  CHECK(((loaded[0] - a.chunks.chunks[0]).cwiseAbs().maxCoeff()) <
        1e-5 * (1.0 + a.chunks.chunks[0].cwiseAbs().maxCoeff()));

  const auto r = fx(sine(440.0, 1.0, 8000.0));
  CHECK(r.resampled);
  CHECK(r.mfcc.frames() == 100);

  std::ofstream(dir / "bad.bin", std::ios::binary) << ba.substr(0, 100);
  CHECK_THROWS_AS(load_chunk_record(dir / "bad.bin"), CorruptFile);
}
