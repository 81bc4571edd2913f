#include "dfmim/config.hpp"

#include <charconv>
#include <sstream>

#include "dfmim/errors.hpp"
#include "fileio.hpp"
#include "kv.hpp"

namespace dfmim::cli {

namespace {

std::string num(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  while (true) {
    const auto pos = s.find(sep);
    out.emplace_back(kv::trim(s.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    s = s.substr(pos + 1);
  }
  return out;
}

void prefixed(const std::string& prefix, const model::DfmimConfig& cfg) {
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.key(), e.detail());
  }
}

}  // namespace

std::size_t LabelSet::index(const std::string& raw) const {
  std::string label = raw;
  if (auto it = mapping.find(raw); it != mapping.end()) label = it->second;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return i;
  throw std::invalid_argument("label '" + raw + "' is not in the declared label set");
}

model::DfmimConfig default_sim_config() {
  model::DfmimConfig c;
  c.task = model::Task::regression;
  c.n_grid = simgen::kSimGridPoints;
  c.p = 4;
  c.K = 4;
  c.C = 1;
  c.n_enc = 2;
  c.heads = 1;
  c.ff_dim = 16;
  c.dropout = 0.0;
  c.lr = 1e-3;
  c.batch_size = 32;
  c.epochs = 60;
  c.basis_lambda = 1e-4;
  c.micro_width = 128;
  c.micro_depth = 3;
  c.head_width = 64;
  c.norm_first = true;  // post-norm over 4 channels strips the per-token mean the indexes need
  return c;
}

Settings::Settings() : sim(default_sim_config()) {
  ser.p = features.n_mfcc;
  ser.n_grid = features.chunk_len;
  ser.C = labels.labels.size();
}

void Settings::validate() const {
  prefixed("", ser);
  prefixed("sim.", sim);
  if (sim.p != 4) throw ConfigError("sim.p", "simulated covariates have 4 channels");
  if (sim.n_grid != simgen::kSimGridPoints) throw ConfigError("sim.n_grid", "simulated curves have 30 grid points");
  if (sim.task != model::Task::regression) throw ConfigError("sim.task", "simulations are regression tasks");
  if (ser.task != model::Task::classification) throw ConfigError("task", "speech model is a classifier");
  try {
    features.stft.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("fft_size", e.what());
  }
  if (features.n_mfcc > features.n_mels) throw ConfigError("p", "n_mfcc cannot exceed n_mels");
  if (!(features.overlap >= 0.0 && features.overlap < 1.0)) throw ConfigError("overlap", "must lie in [0,1)");
  if (features.chunk_len < 2) throw ConfigError("chunk", "must be >= 2");
  if (!(features.sample_rate > 0.0)) throw ConfigError("sample_rate", "must be > 0");
  if (!(features.f_max > features.f_min && features.f_max <= features.sample_rate / 2))
    throw ConfigError("f_max", "must satisfy f_min < f_max <= sample_rate/2");
  if (n_train < 1) throw ConfigError("n_train", "must be >= 1");
  if (n_val < 1) throw ConfigError("n_val", "must be >= 1");
  if (n_test < 1) throw ConfigError("n_test", "must be >= 1");
  if (labels.labels.size() < 2) throw ConfigError("labels", "need at least two labels");
  for (const auto& gp_spec : simgen::scenario_processes(gp)) {
    try {
      simgen::validate(gp_spec);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("gp", e.what());
    }
  }
}

std::string Settings::to_text() const {
  std::ostringstream os;
  os << "# speech model\n";
  std::istringstream ser_text(ser.to_text());
  for (std::string line; std::getline(ser_text, line);) {
    // p, n_grid and C are derived from the feature and label settings.
    if (line.rfind("p =", 0) == 0 || line.rfind("n_grid =", 0) == 0 || line.rfind("C =", 0) == 0 ||
        line.rfind("task =", 0) == 0)
      continue;
    os << line << '\n';
  }
  os << "# features\n"
     << "p = " << features.n_mfcc << '\n'
     << "chunk = " << features.chunk_len << '\n'
     << "overlap = " << num(features.overlap) << '\n'
     << "sample_rate = " << num(features.sample_rate) << '\n'
     << "window_width = " << features.stft.window_width << '\n'
     << "fft_size = " << features.stft.fft_size << '\n'
     << "hop = " << features.stft.hop << '\n'
     << "n_mels = " << features.n_mels << '\n'
     << "f_min = " << num(features.f_min) << '\n'
     << "f_max = " << num(features.f_max) << '\n'
     << "mfcc_variant = " << (features.variant == dsp::MfccVariant::dct2 ? "dct2" : "paper_complex") << '\n';
  os << "labels = ";
  for (std::size_t i = 0; i < labels.labels.size(); ++i) os << (i ? "," : "") << labels.labels[i];
  os << "\nlabel_map = ";
  bool first = true;
  for (const auto& [from, to] : labels.mapping) {
    os << (first ? "" : ",") << from << ':' << to;
    first = false;
  }
  os << "\n# simulation\n"
     << "n_train = " << n_train << '\n'
     << "n_val = " << n_val << '\n'
     << "n_test = " << n_test << '\n'
     << "gp.hurst = " << num(gp.hurst) << '\n'
     << "gp.exp_range = " << num(gp.exp_range) << '\n'
     << "gp.exp_sill = " << num(gp.exp_sill) << '\n'
     << "gp.matern_lengthscale = " << num(gp.matern_lengthscale) << '\n'
     << "gp.matern_variance = " << num(gp.matern_variance) << '\n';
  std::istringstream sim_text(sim.to_text());
  for (std::string line; std::getline(sim_text, line);) {
    if (line.rfind("task =", 0) == 0 || line.rfind("n_grid =", 0) == 0 || line.rfind("p =", 0) == 0 ||
        line.rfind("C =", 0) == 0)
      continue;
    os << "sim." << line << '\n';
  }
  return os.str();
}

Settings parse_config(const std::string& text) {
  Settings s;
  for (const auto& [key, value] : kv::parse(text)) {
    const std::string_view k = key;
    if (k == "p") {
      s.features.n_mfcc = kv::to_count(k, value);
      s.ser.p = s.features.n_mfcc;
    } else if (k == "chunk") {
      s.features.chunk_len = kv::to_count(k, value);
      s.ser.n_grid = s.features.chunk_len;
    } else if (k == "overlap") {
      s.features.overlap = kv::to_double(k, value);
    } else if (k == "sample_rate") {
      s.features.sample_rate = kv::to_double(k, value);
    } else if (k == "window_width") {
      s.features.stft.window_width = kv::to_count(k, value);
    } else if (k == "fft_size") {
      s.features.stft.fft_size = kv::to_count(k, value);
    } else if (k == "hop") {
      s.features.stft.hop = kv::to_count(k, value);
    } else if (k == "n_mels") {
      s.features.n_mels = kv::to_count(k, value);
    } else if (k == "f_min") {
      s.features.f_min = kv::to_double(k, value);
    } else if (k == "f_max") {
      s.features.f_max = kv::to_double(k, value);
    } else if (k == "mfcc_variant") {
      if (value == "dct2") s.features.variant = dsp::MfccVariant::dct2;
      else if (value == "paper_complex") s.features.variant = dsp::MfccVariant::paper_complex;
      else throw ConfigError(key, "expected dct2 or paper_complex");
    } else if (k == "labels") {
      s.labels.labels = split(value, ',');
      for (const auto& l : s.labels.labels)
        if (l.empty()) throw ConfigError(key, "empty label");
      s.ser.C = s.labels.labels.size();
    } else if (k == "label_map") {
      s.labels.mapping.clear();
      if (!value.empty())
        for (const auto& pair : split(value, ',')) {
          const auto parts = split(pair, ':');
          if (parts.size() != 2 || parts[0].empty() || parts[1].empty())
            throw ConfigError(key, "expected from:to pairs, got '" + pair + "'");
          s.labels.mapping[parts[0]] = parts[1];
        }
    } else if (k == "n_train") {
      s.n_train = kv::to_count(k, value);
    } else if (k == "n_val") {
      s.n_val = kv::to_count(k, value);
    } else if (k == "n_test") {
      s.n_test = kv::to_count(k, value);
    } else if (k == "gp.hurst") {
      s.gp.hurst = kv::to_double(k, value);
    } else if (k == "gp.exp_range") {
      s.gp.exp_range = kv::to_double(k, value);
    } else if (k == "gp.exp_sill") {
      s.gp.exp_sill = kv::to_double(k, value);
    } else if (k == "gp.matern_lengthscale") {
      s.gp.matern_lengthscale = kv::to_double(k, value);
    } else if (k == "gp.matern_variance") {
      s.gp.matern_variance = kv::to_double(k, value);
    } else if (k.starts_with("sim.")) {
      const auto sub = k.substr(4);
      if (sub == "p" || sub == "n_grid" || sub == "C" || sub == "task")
        throw ConfigError(key, "fixed by the simulation design");
      try {
        if (!s.sim.set(sub, value)) throw ConfigError(key, "unknown key");
      } catch (const ConfigError& e) {
        if (e.key() == key) throw;
        throw ConfigError(key, e.detail());
      }
    } else if (k == "n_grid" || k == "C" || k == "task") {
      throw ConfigError(key, "derived from chunk / labels; set those instead");
    } else if (!s.ser.set(k, value)) {
      throw ConfigError(key, "unknown key");
    }
  }
  s.validate();
  return s;
}

Settings load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = fileio::read_all(path);
  } catch (const IoError& e) {
    throw ConfigError("--config", e.what());
  }
  return parse_config(text);
}

}  // namespace dfmim::cli
