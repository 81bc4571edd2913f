#include "dfmim/manifest.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

#include "dfmim/errors.hpp"
#include "fileio.hpp"
#include "kv.hpp"

namespace dfmim::cli {

std::vector<std::string> Manifest::speakers() const {
  std::set<std::string> s;
  for (const auto& r : rows) s.insert(r.speaker);
  return {s.begin(), s.end()};
}

Manifest load_manifest(const std::filesystem::path& path, const LabelSet& labels) {
  const std::string text = fileio::read_all(path);
  std::istringstream in(text);
  std::string line;
  const std::string where = path.string();
  if (!std::getline(in, line)) throw std::invalid_argument(where + ": empty manifest");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (kv::trim(line) != "path,speaker,session,label")
    throw std::invalid_argument(where + ": header must be 'path,speaker,session,label'");

  Manifest m;
  std::set<std::filesystem::path> seen;
  const auto base = path.parent_path();
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (kv::trim(line).empty()) continue;
    std::vector<std::string> f;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) f.emplace_back(kv::trim(cell));
    if (f.size() != 4) throw std::invalid_argument(where + ":" + std::to_string(line_no) + ": expected 4 fields");
    if (f[0].empty()) throw std::invalid_argument(where + ":" + std::to_string(line_no) + ": empty path");
    if (f[1].empty()) throw std::invalid_argument(where + ":" + std::to_string(line_no) + ": empty speaker id");
    std::filesystem::path p = f[0];
    if (p.is_relative()) p = base / p;
    p = p.lexically_normal();
    if (!seen.insert(p).second)
      throw std::invalid_argument(where + ":" + std::to_string(line_no) + ": duplicate path " + f[0]);
    ManifestRow r{p, f[1], f[2], f[3], 0};
    try {
      r.label_index = labels.index(f[3]);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + ":" + std::to_string(line_no) + ": " + e.what());
    }
    m.rows.push_back(std::move(r));
  }
  return m;
}

void save_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ostringstream os;
  os << "path,speaker,session,label\n";
  const auto base = path.parent_path();
  for (const auto& r : manifest.rows) {
    const auto rel = r.path.lexically_relative(base);
    os << (rel.empty() ? r.path : rel).generic_string() << ',' << r.speaker << ',' << r.session << ',' << r.label
       << '\n';
  }
  fileio::write_all(path, os.str());
}

FoldPlan build_folds(const std::vector<std::string>& speakers_in) {
  std::vector<std::string> speakers = speakers_in;
  std::sort(speakers.begin(), speakers.end());
  speakers.erase(std::unique(speakers.begin(), speakers.end()), speakers.end());
  if (speakers.size() < 3)
    throw std::invalid_argument("speaker-independent folds need at least 3 speakers, got " +
                                std::to_string(speakers.size()));
  FoldPlan plan;
  const std::size_t n = speakers.size();
  for (std::size_t i = 0; i < n; ++i) {
    Fold f;
    f.test = speakers[i];
    f.validation = speakers[(i + 1) % n];
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && j != (i + 1) % n) f.train.push_back(speakers[j]);
    plan.push_back(std::move(f));
  }
  return plan;
}

FoldPlan build_folds(const Manifest& manifest) { return build_folds(manifest.speakers()); }

void check_fold_plan(const FoldPlan& plan, const std::vector<std::string>& speakers_in) {
  std::set<std::string> speakers(speakers_in.begin(), speakers_in.end());
  if (plan.size() != speakers.size()) throw std::logic_error("fold count differs from speaker count");
  std::set<std::string> tested;
  for (const auto& f : plan) {
    if (f.test == f.validation) throw std::logic_error("test and validation speaker coincide");
    std::set<std::string> roles(f.train.begin(), f.train.end());
    if (roles.size() != f.train.size()) throw std::logic_error("duplicate training speaker");
    if (roles.count(f.test) || roles.count(f.validation)) throw std::logic_error("speaker in two roles");
    roles.insert(f.test);
    roles.insert(f.validation);
    if (roles != speakers) throw std::logic_error("fold does not cover every speaker exactly once");
    if (!tested.insert(f.test).second) throw std::logic_error("speaker used as test twice");
  }
  if (tested != speakers) throw std::logic_error("not every speaker is a test speaker");
}

}  // namespace dfmim::cli
