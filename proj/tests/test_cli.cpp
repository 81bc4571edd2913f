#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "dfmim/checkpoint.hpp"
#include "dfmim/config.hpp"
#include "dfmim/corpus.hpp"
#include "dfmim/errors.hpp"
#include "dfmim/manifest.hpp"
#include "dfmim/pipeline.hpp"
#include "dfmim/report.hpp"

namespace fs = std::filesystem;
using namespace dfmim;
using namespace dfmim::cli;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dfmim_test_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

model::DfmimConfig tiny_classifier(std::uint64_t seed = 0) {
  model::DfmimConfig c;
  c.n_grid = 8;
  c.p = 2;
  c.K = 2;
  c.C = 3;
  c.heads = 1;
  c.ff_dim = 8;
  c.micro_width = 8;
  c.micro_depth = 2;
  c.head_width = 8;
  c.seed = seed;
  return c;
}

std::string config_error_key(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "";
}

}  // namespace

TEST_CASE("empty config resolves to the defaults") {
  const Settings s = parse_config("");
  CHECK(s.ser.lr == 3e-4);
  CHECK(s.ser.batch_size == 32);
  CHECK(s.ser.epochs == 15);
  CHECK(s.ser.K == 4);
  CHECK(s.ser.p == 40);
  CHECK(s.ser.n_enc == 2);
  CHECK(s.ser.dropout == 0.2);
  CHECK(s.features.chunk_len == 64);
  CHECK(s.features.overlap == 0.25);
  CHECK(s.ser.n_grid == 64);
  CHECK(s.ser.C == 4);
  CHECK(s.sim.task == model::Task::regression);
  CHECK(s.sim.p == 4);
  CHECK(s.sim.n_grid == 30);
  CHECK(s.n_train == 2000);
  CHECK(s.to_text() == Settings{}.to_text());
  // Comments and blank lines are ignored.
  CHECK(parse_config("# nothing\n\n").to_text() == s.to_text());
}

TEST_CASE("config overrides and errors") {
  Settings k2 = parse_config("K = 2\n");
  CHECK(k2.ser.K == 2);
  k2.ser.K = 4;
  CHECK(k2.to_text() == Settings{}.to_text());

  CHECK(config_error_key("epochs = -1\n") == "epochs");
  CHECK(config_error_key("bogus = 1\n") == "bogus");
  CHECK(config_error_key("lr = fast\n") == "lr");
  CHECK(config_error_key("sim.epochs = -3\n") == "sim.epochs");
  CHECK(config_error_key("sim.p = 5\n") == "sim.p");
  CHECK(config_error_key("heads = 3\n") == "heads");
  CHECK(config_error_key("overlap = 1.0\n") == "overlap");

  const Settings custom = parse_config("p = 12\nchunk = 32\nlabels = a,b\nlabel_map =\nsim.lr = 0.002\ngp.hurst = 0.7\n");
  CHECK(custom.ser.p == 12);
  CHECK(custom.ser.n_grid == 32);
  CHECK(custom.ser.C == 2);
  CHECK(custom.labels.mapping.empty());
  CHECK(custom.sim.lr == 0.002);
  CHECK(custom.gp.hurst == 0.7);
  // The echoed config parses back to the same settings.
  CHECK(parse_config(custom.to_text()).to_text() == custom.to_text());

  const fs::path dir = scratch("config");
  write_text(dir / "c.txt", "epochs = 3\n");
  CHECK(load_config(dir / "c.txt").ser.epochs == 3);
  CHECK_THROWS_AS(load_config(dir / "missing.txt"), ConfigError);
}

TEST_CASE("label mapping") {
  const LabelSet labels;
  CHECK(labels.index("neutral") == 0);
  CHECK(labels.index("excited") == labels.index("happy"));
  CHECK_THROWS_AS(labels.index("bored"), std::invalid_argument);
}

TEST_CASE("manifest loading") {
  const fs::path dir = scratch("manifest");
  const LabelSet labels;
  write_text(dir / "ok.csv",
             "path,speaker,session,label\n"
             "a.wav,s1,1,neutral\n"
             "sub/b.wav,s2,1,excited\n"
             "c.wav,s1,2,sad\n");
  const Manifest m = load_manifest(dir / "ok.csv", labels);
  REQUIRE(m.rows.size() == 3);
  CHECK(m.rows[1].path == dir / "sub/b.wav");
  CHECK(m.rows[1].label == "excited");
  CHECK(m.rows[1].label_index == 1);
  CHECK(m.speakers() == std::vector<std::string>{"s1", "s2"});

  save_manifest(dir / "copy.csv", m);
  const Manifest again = load_manifest(dir / "copy.csv", labels);
  REQUIRE(again.rows.size() == 3);
  CHECK(again.rows[2].path == m.rows[2].path);

  write_text(dir / "header.csv", "file,speaker,session,label\na.wav,s1,1,neutral\n");
  write_text(dir / "fields.csv", "path,speaker,session,label\na.wav,s1,1\n");
  write_text(dir / "speaker.csv", "path,speaker,session,label\na.wav,,1,neutral\n");
  write_text(dir / "dup.csv", "path,speaker,session,label\na.wav,s1,1,neutral\na.wav,s2,1,sad\n");
  write_text(dir / "label.csv", "path,speaker,session,label\na.wav,s1,1,bored\n");
  write_text(dir / "empty.csv", "");
  for (const char* name : {"header.csv", "fields.csv", "speaker.csv", "dup.csv", "label.csv", "empty.csv"}) {
    CAPTURE(name);
    CHECK_THROWS_AS(load_manifest(dir / name, labels), std::invalid_argument);
  }
  CHECK_THROWS_AS(load_manifest(dir / "missing.csv", labels), IoError);
}

TEST_CASE("fold plans") {
  std::vector<std::string> ten;
  for (int i = 0; i < 10; ++i) ten.push_back("spk" + std::to_string(i));
  std::shuffle(ten.begin(), ten.end(), std::mt19937_64(3));
  const FoldPlan plan = build_folds(ten);
  REQUIRE(plan.size() == 10);
  std::vector<std::string> sorted = ten;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(plan[i].test == sorted[i]);
    CHECK(plan[i].validation == sorted[(i + 1) % 10]);
    CHECK(plan[i].train.size() == 8);
    std::set<std::string> roles(plan[i].train.begin(), plan[i].train.end());
    CHECK(roles.size() == 8);
    CHECK_FALSE(roles.count(plan[i].test));
    CHECK_FALSE(roles.count(plan[i].validation));
  }
  CHECK_NOTHROW(check_fold_plan(plan, sorted));
  CHECK(build_folds(ten).size() == plan.size());

  const FoldPlan three = build_folds({"c", "a", "b"});
  REQUIRE(three.size() == 3);
  for (const auto& f : three) CHECK(f.train.size() == 1);
  CHECK(three[2].test == "c");
  CHECK(three[2].validation == "a");
  CHECK(three[2].train == std::vector<std::string>{"b"});

  CHECK_THROWS_AS(build_folds({"a", "b"}), std::invalid_argument);
  CHECK_THROWS_AS(build_folds({"a", "a", "b"}), std::invalid_argument);

  FoldPlan broken = plan;
  broken[0].validation = broken[0].test;
  CHECK_THROWS_AS(check_fold_plan(broken, sorted), std::logic_error);
  broken = plan;
  broken[1].train.push_back(broken[1].test);
  CHECK_THROWS_AS(check_fold_plan(broken, sorted), std::logic_error);
  broken = plan;
  broken.pop_back();
  CHECK_THROWS_AS(check_fold_plan(broken, sorted), std::logic_error);
}

TEST_CASE("checkpoint round trip") {
  const fs::path dir = scratch("ckpt");
  model::DfmimModel m(tiny_classifier(5));
  save_checkpoint(m, dir / "a.ckpt");
  const auto loaded = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(loaded, dir / "b.ckpt");
  CHECK(read_bytes(dir / "a.ckpt") == read_bytes(dir / "b.ckpt"));
  CHECK(loaded.config() == m.config());
  CHECK(read_bytes(dir / "a.ckpt").substr(0, 4) == "DFMX");

  // Every parameter appears exactly once by name.
  std::set<std::string> names;
  for (const auto& [name, t] : m.named_parameters()) CHECK(names.insert(name).second);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 3; ++trial) {
    ad::Tensor x = ad::Tensor::zeros({8, 2});
    for (double& v : x.data()) v = nd(rng);
    ad::Tape tape;
    const auto ya = model::model_forward(tape, m, x, {});
    const auto yb = model::model_forward(tape, loaded, x, {});
    CHECK(std::equal(ya.data().begin(), ya.data().end(), yb.data().begin()));
  }
}

TEST_CASE("checkpoint corruption and mismatch") {
  const fs::path dir = scratch("ckpt_bad");
  model::DfmimModel m(tiny_classifier(6));
  save_checkpoint(m, dir / "a.ckpt");
  const std::string bytes = read_bytes(dir / "a.ckpt");

  write_text(dir / "trunc.ckpt", bytes.substr(0, bytes.size() - 17));
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.ckpt"), CorruptFile);
  write_text(dir / "short.ckpt", bytes.substr(0, 10));
  CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), CorruptFile);

  std::string flipped = bytes;
  flipped[flipped.size() - 3] ^= 0x40;
  write_text(dir / "flip.ckpt", flipped);
  CHECK_THROWS_AS(load_checkpoint(dir / "flip.ckpt"), CorruptFile);

  std::string magic = bytes;
  magic[0] = 'X';
  write_text(dir / "magic.ckpt", magic);
  CHECK_THROWS_AS(load_checkpoint(dir / "magic.ckpt"), CorruptFile);

  std::string version = bytes;
  version[4] = 9;
  write_text(dir / "version.ckpt", version);
  CHECK_THROWS_AS(load_checkpoint(dir / "version.ckpt"), VersionMismatch);

  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);

  model::DfmimConfig other = tiny_classifier(6);
  other.K = 3;
  CHECK_THROWS_AS(load_checkpoint(dir / "a.ckpt", other), ShapeError);
  CHECK_NOTHROW(load_checkpoint(dir / "a.ckpt", tiny_classifier(6)));
}

TEST_CASE("reports are byte-stable and exclude timing by default") {
  model::TrainReport r;
  r.task = model::Task::classification;
  r.seed = 3;
  r.train_loss = {1.5, 0.75};
  r.val_metric = {0.25, 0.5};
  r.selection = "val_ua";
  r.best_epoch = 1;
  r.test_classification = model::classification_metrics({{9, 1}, {50, 50}});
  r.wall_clock_s = 12.5;
  const std::vector<std::string> labels{"a", "b"};
  const std::string text = format_train_report(r, labels);
  CHECK(text == format_train_report(r, labels));
  CHECK(text.find("wall_clock") == std::string::npos);
  CHECK(format_train_report(r, labels, true).find("wall_clock") != std::string::npos);
  CHECK(text.find("test_wa=") != std::string::npos);
  CHECK(text.find("--- json\n") != std::string::npos);
  const auto j = nlohmann::json::parse(text.substr(text.find("--- json\n") + 9));
  CHECK(j["best_epoch"] == 1);
  CHECK(j["test_ua"].get<double>() == r.test_classification.ua);

  const std::string grid = format_confusion({{9, 1}, {50, 50}}, labels);
  CHECK(grid.find("true\\pred") != std::string::npos);
  CHECK(grid.find("50") != std::string::npos);

  const std::string reg = format_regression_eval("test", 4, {0.5, 0.25});
  CHECK(reg.find("rmse_vs_clean=0.25\n") != std::string::npos);
}

TEST_CASE("speech pipeline on a small synthetic corpus") {
  const fs::path dir = scratch("ser");
  SyntheticCorpusSpec spec;
  spec.speakers = 3;
  spec.utterances = 24;
  spec.duration_s = 0.5;
  const fs::path manifest_path = write_synthetic_corpus(dir / "corpus", spec);
  const fs::path again = write_synthetic_corpus(dir / "corpus2", spec);
  CHECK(read_bytes(dir / "corpus/manifest.csv") == read_bytes(again));

  Settings s = parse_config(
      "p = 8\nn_mels = 16\nchunk = 16\nepochs = 2\nmicro_width = 8\nmicro_depth = 1\nhead_width = 8\n"
      "ff_dim = 8\nheads = 2\ndropout = 0.1\n");
  const Manifest manifest = load_manifest(manifest_path, s.labels);
  CHECK(manifest.rows.size() == 24);
  CHECK(manifest.speakers().size() == 3);
  const auto corpus = extract_corpus(manifest, s.features);
  REQUIRE(corpus.size() == 24);
  for (const auto& u : corpus) CHECK(u.chunks.chunks.size() >= 1);

  write_features(corpus, dir / "feats");
  write_features(corpus, dir / "feats2");
  CHECK(read_bytes(dir / "feats/chunks.csv") == read_bytes(dir / "feats2/chunks.csv"));
  CHECK(read_bytes(dir / "feats/utt_00000.bin") == read_bytes(dir / "feats2/utt_00000.bin"));

  const FoldPlan plan = build_folds(manifest);
  const auto run = run_ser(s, corpus, plan, 4, 0, 2);
  REQUIRE(run.folds.size() == 3);
  const std::string report = format_ser_report(run, s.labels.labels);
  const auto j = nlohmann::json::parse(report.substr(report.find("--- json\n") + 9));
  double wa = 0.0, ua = 0.0;
  for (const auto& f : j["folds"]) {
    wa += f["report"]["test_wa"].get<double>();
    ua += f["report"]["test_ua"].get<double>();
  }
  CHECK(std::abs(wa / 3.0 - j["mean_wa"].get<double>()) < 1e-10);
  CHECK(std::abs(ua / 3.0 - j["mean_ua"].get<double>()) < 1e-10);

  // Parallel and serial fold execution agree byte for byte.
  const auto serial = run_ser(s, corpus, plan, 4, 0, 1);
  CHECK(format_ser_report(serial, s.labels.labels) == report);
  // Fold subsets keep the plan's order and seeds.
  const auto first = run_ser(s, corpus, plan, 4, 1, 1);
  REQUIRE(first.folds.size() == 1);
  CHECK(first.folds[0].seed == run.folds[0].seed);
  CHECK(first.folds[0].report.train_loss == run.folds[0].report.train_loss);

  const auto train_speakers = plan[0].train;
  const auto ds = chunk_dataset(corpus, train_speakers);
  std::size_t expected = 0;
  for (const auto& u : corpus)
    if (u.row.speaker == train_speakers[0]) expected += u.chunks.chunks.size();
  CHECK(ds.size() == expected);
  CHECK(ds.labels.size() == ds.size());
}
