#include "fpl/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fpl/rng.hpp"

namespace fpl {

using nlohmann::json;

void PacketSeries::validate() const {
  if (timestamps.size() != sizes.size()) {
    throw DataError("timestamps and sizes differ in length");
  }
  if (directions && directions->size() != timestamps.size()) {
    throw DataError("directions length differs from timestamps");
  }
  if (!timestamps.empty() && timestamps.front() != 0.0) {
    throw DataError("first timestamp must be 0.0");
  }
  for (std::size_t i = 1; i < timestamps.size(); ++i) {
    if (timestamps[i] < timestamps[i - 1]) throw DataError("timestamps must be nondecreasing");
  }
  for (int s : sizes) {
    if (s < 1 || s > kMaxPacketSize) throw DataError("packet size out of [1, 1500]");
  }
  if (directions) {
    for (int d : *directions) {
      if (d != 1 && d != -1) throw DataError("direction must be +1 or -1");
    }
  }
}

Dataset::Dataset(std::vector<FlowRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    if (r.label.empty()) throw DataError("empty label for flow '" + r.flow_id + "'");
    if (!by_id_.emplace(r.flow_id, i).second) {
      throw DataError("duplicate flow_id '" + r.flow_id + "'");
    }
    class_index_[r.label].push_back(i);
  }
}

std::vector<std::string> Dataset::labels() const {
  std::vector<std::string> out;
  out.reserve(class_index_.size());
  for (const auto& [label, _] : class_index_) out.push_back(label);
  return out;
}

std::size_t Dataset::index_of(const std::string& flow_id) const {
  auto it = by_id_.find(flow_id);
  if (it == by_id_.end()) throw DataError("unknown flow_id '" + flow_id + "'");
  return it->second;
}

Dataset Dataset::partition(const std::string& partition) const {
  std::vector<FlowRecord> out;
  for (const auto& r : records_) {
    if (r.partition && *r.partition == partition) out.push_back(r);
  }
  return Dataset(std::move(out));
}

Dataset Dataset::subset(const std::vector<std::string>& ids) const {
  std::vector<FlowRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(records_[index_of(id)]);
  return Dataset(std::move(out));
}

FlowRecord parse_flow_line(const std::string& line, std::size_t& clipped) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("record is not a JSON object");

  FlowRecord r;
  try {
    r.flow_id = j.at("flow_id").get<std::string>();
    r.label = j.at("label").get<std::string>();
    if (j.contains("partition") && !j["partition"].is_null()) {
      r.partition = j["partition"].get<std::string>();
    }
    auto ts = j.at("timestamps").get<std::vector<double>>();
    auto sizes = j.at("sizes").get<std::vector<long long>>();
    if (ts.empty()) throw DataError("empty packet series");
    if (ts.size() != sizes.size()) throw DataError("timestamps and sizes differ in length");
    const double t0 = ts.front();
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (!std::isfinite(ts[i])) throw DataError("non-finite timestamp");
      if (i > 0 && ts[i] < ts[i - 1]) throw DataError("timestamps must be nondecreasing");
    }
    r.series.timestamps.reserve(ts.size());
    for (double t : ts) r.series.timestamps.push_back(t - t0);
    r.series.sizes.reserve(sizes.size());
    for (long long s : sizes) {
      if (s < 1) throw DataError("packet size must be >= 1");
      if (s > kMaxPacketSize) {
        ++clipped;
        s = kMaxPacketSize;
      }
      r.series.sizes.push_back(static_cast<int>(s));
    }
    if (j.contains("directions") && !j["directions"].is_null()) {
      r.series.directions = j["directions"].get<std::vector<int>>();
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("schema error: ") + e.what());
  }
  if (r.label.empty()) throw DataError("empty label");
  r.series.validate();
  return r;
}

std::string format_flow_line(const FlowRecord& r) {
  json j;
  j["flow_id"] = r.flow_id;
  j["label"] = r.label;
  j["partition"] = r.partition ? json(*r.partition) : json(nullptr);
  j["timestamps"] = r.series.timestamps;
  j["sizes"] = r.series.sizes;
  j["directions"] = r.series.directions ? json(*r.series.directions) : json(nullptr);
  return j.dump();
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset '" + path.string() + "'");
  std::vector<FlowRecord> records;
  std::size_t clipped = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(parse_flow_line(line, clipped));
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (records.empty()) throw DataError("dataset '" + path.string() + "' is empty");
  Dataset d(std::move(records));
  d.clipped_sizes = clipped;
  return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (const auto& r : dataset.records()) out << format_flow_line(r) << '\n';
}

Dataset filter_min_packets(const Dataset& dataset, std::size_t n) {
  std::vector<FlowRecord> kept;
  for (const auto& r : dataset.records()) {
    if (r.series.size() > n) kept.push_back(r);
  }
  return Dataset(std::move(kept));
}

Dataset filter_min_class_size(const Dataset& dataset, std::size_t m) {
  std::set<std::string> keep;
  for (const auto& [label, idx] : dataset.class_index()) {
    if (idx.size() >= m) keep.insert(label);
  }
  std::vector<FlowRecord> kept;
  for (const auto& r : dataset.records()) {
    if (keep.contains(r.label)) kept.push_back(r);
  }
  return Dataset(std::move(kept));
}

std::string to_string(SplitScheme scheme) {
  switch (scheme) {
    case SplitScheme::FewshotFolds: return "fewshot_folds";
    case SplitScheme::TrainVal: return "train_val";
    case SplitScheme::Stratified801010: return "stratified_801010";
  }
  return "";
}

SplitScheme split_scheme_from_string(const std::string& name) {
  if (name == "fewshot_folds") return SplitScheme::FewshotFolds;
  if (name == "train_val") return SplitScheme::TrainVal;
  if (name == "stratified_801010") return SplitScheme::Stratified801010;
  throw DataError("unknown split scheme '" + name + "'");
}

std::size_t round_half_up(double x) {
  // 1e-9 absorbs representation error such as 0.1 * 25 = 2.4999...
  return static_cast<std::size_t>(std::floor(x + 0.5 + 1e-9));
}

namespace {

std::vector<std::string> shuffled_class_ids(const Dataset& d, const std::vector<std::size_t>& idx,
                                            Rng& rng) {
  std::vector<std::string> ids;
  ids.reserve(idx.size());
  for (auto i : idx) ids.push_back(d.at(i).flow_id);
  rng.shuffle(std::span(ids));
  return ids;
}

void check_disjoint(const Fold& f, std::size_t fold_index) {
  std::set<std::string> seen;
  for (const auto* part : {&f.train_ids, &f.val_ids, &f.test_ids}) {
    for (const auto& id : *part) {
      if (!seen.insert(id).second) {
        throw DataError("fold " + std::to_string(fold_index) + ": id '" + id +
                        "' appears in more than one part");
      }
    }
  }
}

}  // namespace

void SplitManifest::validate_against(const Dataset& dataset) const {
  for (std::size_t i = 0; i < folds.size(); ++i) {
    check_disjoint(folds[i], i);
    for (const auto* part : {&folds[i].train_ids, &folds[i].val_ids, &folds[i].test_ids}) {
      for (const auto& id : *part) {
        if (!dataset.contains(id)) {
          throw DataError("manifest references unknown flow_id '" + id + "'");
        }
      }
    }
  }
}

SplitManifest make_fewshot_folds(const Dataset& dataset, std::size_t k, std::size_t per_class,
                                 std::uint64_t seed) {
  if (k == 0 || per_class == 0) throw DataError("k and per_class must be positive");
  for (const auto& [label, idx] : dataset.class_index()) {
    if (idx.size() < k * per_class) {
      throw DataError("class '" + label + "' has " + std::to_string(idx.size()) +
                      " flows; need " + std::to_string(k * per_class));
    }
  }
  SplitManifest m;
  m.scheme = SplitScheme::FewshotFolds;
  m.seed = seed;
  m.params.k = k;
  m.params.per_class = per_class;
  m.folds.resize(k);
  Rng rng(seed);
  for (const auto& [label, idx] : dataset.class_index()) {
    auto ids = shuffled_class_ids(dataset, idx, rng);
    for (std::size_t f = 0; f < k; ++f) {
      auto first = ids.begin() + static_cast<std::ptrdiff_t>(f * per_class);
      m.folds[f].train_ids.insert(m.folds[f].train_ids.end(), first,
                                  first + static_cast<std::ptrdiff_t>(per_class));
    }
  }
  return m;
}

std::vector<TrainValSplit> make_train_val(const Dataset& dataset,
                                          const std::vector<std::string>& ids, std::size_t s,
                                          double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw DataError("train ratio must be in (0, 1)");
  std::map<std::string, std::vector<std::string>> by_class;
  for (const auto& id : ids) by_class[dataset.at(dataset.index_of(id)).label].push_back(id);

  std::vector<TrainValSplit> out(s);
  Rng rng(seed);
  for (std::size_t split = 0; split < s; ++split) {
    for (const auto& [label, class_ids] : by_class) {
      auto shuffled = class_ids;
      rng.shuffle(std::span(shuffled));
      const auto n_train = std::min(round_half_up(ratio * static_cast<double>(shuffled.size())),
                                    shuffled.size());
      auto mid = shuffled.begin() + static_cast<std::ptrdiff_t>(n_train);
      out[split].train_ids.insert(out[split].train_ids.end(), shuffled.begin(), mid);
      out[split].val_ids.insert(out[split].val_ids.end(), mid, shuffled.end());
    }
  }
  return out;
}

SplitManifest make_train_val_manifest(const Dataset& dataset, const std::vector<std::string>& ids,
                                      std::size_t s, double ratio, std::uint64_t seed) {
  SplitManifest m;
  m.scheme = SplitScheme::TrainVal;
  m.seed = seed;
  m.params.s = s;
  m.params.ratios = {ratio, 1.0 - ratio};
  for (auto& split : make_train_val(dataset, ids, s, ratio, seed)) {
    m.folds.push_back(Fold{std::move(split.train_ids), std::move(split.val_ids), {}});
  }
  return m;
}

SplitManifest make_stratified_split(const Dataset& dataset, const std::vector<double>& ratios,
                                    std::uint64_t seed) {
  if (ratios.size() != 3) throw DataError("stratified split needs (train, val, test) ratios");
  for (double r : ratios) {
    if (!(r > 0.0)) throw DataError("split ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw DataError("split ratios must sum to 1");
  }
  SplitManifest m;
  m.scheme = SplitScheme::Stratified801010;
  m.seed = seed;
  m.params.ratios = ratios;
  m.folds.resize(1);
  auto& fold = m.folds.front();
  Rng rng(seed);
  for (const auto& [label, idx] : dataset.class_index()) {
    if (idx.size() < 3) {
      throw DataError("class '" + label + "' has fewer than 3 flows; cannot split");
    }
    auto ids = shuffled_class_ids(dataset, idx, rng);
    const double n = static_cast<double>(ids.size());
    // val and test get at least one flow each; train takes the remainder.
    const auto n_val = std::max<std::size_t>(1, round_half_up(ratios[1] * n));
    const auto n_test = std::max<std::size_t>(1, round_half_up(ratios[2] * n));
    if (n_val + n_test >= ids.size()) {
      throw DataError("class '" + label + "' too small for the requested ratios");
    }
    const auto n_train = ids.size() - n_val - n_test;
    auto a = ids.begin() + static_cast<std::ptrdiff_t>(n_train);
    auto b = a + static_cast<std::ptrdiff_t>(n_val);
    fold.train_ids.insert(fold.train_ids.end(), ids.begin(), a);
    fold.val_ids.insert(fold.val_ids.end(), a, b);
    fold.test_ids.insert(fold.test_ids.end(), b, ids.end());
  }
  return m;
}

std::string manifest_to_json(const SplitManifest& m) {
  json j;
  j["scheme"] = to_string(m.scheme);
  j["seed"] = m.seed;
  j["params"] = {{"per_class", m.params.per_class},
                 {"k", m.params.k},
                 {"s", m.params.s},
                 {"ratios", m.params.ratios}};
  j["folds"] = json::array();
  for (const auto& f : m.folds) {
    j["folds"].push_back(
        {{"train_ids", f.train_ids}, {"val_ids", f.val_ids}, {"test_ids", f.test_ids}});
  }
  return j.dump(2);
}

SplitManifest manifest_from_json(const std::string& text) {
  SplitManifest m;
  try {
    const auto j = json::parse(text);
    m.scheme = split_scheme_from_string(j.at("scheme").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& p = j.at("params");
    m.params.per_class = p.at("per_class").get<std::size_t>();
    m.params.k = p.at("k").get<std::size_t>();
    m.params.s = p.at("s").get<std::size_t>();
    m.params.ratios = p.at("ratios").get<std::vector<double>>();
    for (const auto& f : j.at("folds")) {
      m.folds.push_back(Fold{f.at("train_ids").get<std::vector<std::string>>(),
                             f.at("val_ids").get<std::vector<std::string>>(),
                             f.at("test_ids").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest schema mismatch: ") + e.what());
  }
  return m;
}

void save_manifest(const SplitManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << manifest_to_json(manifest) << '\n';
}

SplitManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return manifest_from_json(ss.str());
}

}  // namespace fpl
