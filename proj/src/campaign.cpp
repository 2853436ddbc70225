#include "fpl/campaign.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "fpl/nn/checkpoint.hpp"

namespace fpl::campaign {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Method m) {
  switch (m) {
    case Method::Supervised: return "supervised";
    case Method::SimclrFinetune: return "simclr_finetune";
    case Method::BoostBaseline: return "boost_baseline";
  }
  return "";
}

Method method_from_string(const std::string& name) {
  if (name == "supervised") return Method::Supervised;
  if (name == "simclr_finetune") return Method::SimclrFinetune;
  if (name == "boost_baseline") return Method::BoostBaseline;
  throw std::invalid_argument("unknown method '" + name + "'");
}

namespace {

json split_to_json(const SplitSpec& s) {
  json j = {{"scheme", to_string(s.scheme)}, {"k", s.k},   {"per_class", s.per_class},
            {"s", s.s},                      {"train_ratio", s.train_ratio},
            {"ratios", s.ratios},            {"seed", s.seed}};
  j["pool_partition"] = s.pool_partition ? json(*s.pool_partition) : json(nullptr);
  return j;
}

SplitSpec split_from_json(const json& j, SplitSpec s) {
  if (j.contains("scheme")) s.scheme = split_scheme_from_string(j["scheme"].get<std::string>());
  s.k = j.value("k", s.k);
  s.per_class = j.value("per_class", s.per_class);
  s.s = j.value("s", s.s);
  s.train_ratio = j.value("train_ratio", s.train_ratio);
  s.ratios = j.value("ratios", s.ratios);
  s.seed = j.value("seed", s.seed);
  if (j.contains("pool_partition")) {
    s.pool_partition = j["pool_partition"].is_null() ? std::nullopt
                                                     : std::optional(j["pool_partition"].get<std::string>());
  }
  if (s.k < 1) throw std::invalid_argument("split.k must be >= 1");
  if (s.s < 1) throw std::invalid_argument("split.s must be >= 1");
  if (!(s.train_ratio > 0.0 && s.train_ratio < 1.0)) throw std::invalid_argument("split.train_ratio must be in (0, 1)");
  return s;
}

json entry_to_json(const AugmentationEntry& e) {
  json specs = json::array();
  for (const auto& s : e.specs) specs.push_back(fpl::to_json(s));
  return {{"label", e.label}, {"specs", specs}};
}

AugmentationEntry entry_from_json(const json& j) {
  AugmentationEntry e;
  e.label = j.at("label").get<std::string>();
  for (const auto& s : j.at("specs")) e.specs.push_back(augmentation_from_json(s));
  return e;
}

std::string default_label(const std::vector<AugmentationSpec>& specs) {
  std::string out;
  for (const auto& s : specs) out += (out.empty() ? "" : "+") + kind_name(s);
  return out.empty() ? "none" : out;
}

// Grid entry: "kind", {"kind": ..., "label": ...}, or for pairs a two-element
// array of those, or {"label": ..., "specs": [a, b]}.
AugmentationEntry parse_grid_entry(const json& j, bool pair) {
  AugmentationEntry e;
  std::optional<std::string> label;
  json specs;
  if (pair) {
    if (j.is_object()) {
      if (j.contains("label")) label = j["label"].get<std::string>();
      specs = j.at("specs");
    } else {
      specs = j;
    }
    if (!specs.is_array() || specs.size() != 2) throw std::invalid_argument("augmentation pair must have 2 entries");
  } else {
    if (j.is_object() && j.contains("label")) label = j["label"].get<std::string>();
    specs = json::array({j});
  }
  for (const auto& s : specs) e.specs.push_back(augmentation_from_json(s));
  e.label = label ? *label : default_label(e.specs);
  return e;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json metric_set_to_json(const stats::MetricSet& m) {
  json confusion = json::array();
  for (Eigen::Index r = 0; r < m.confusion.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.confusion.cols(); ++c) row.push_back(m.confusion(r, c));
    confusion.push_back(row);
  }
  json per_class = json::array();
  for (const auto& c : m.per_class) {
    per_class.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  return {{"accuracy", m.accuracy}, {"weighted_f1", m.weighted_f1}, {"macro_f1", m.macro_f1},
          {"per_class", per_class}, {"confusion", confusion}};
}

stats::MetricSet metric_set_from_json(const json& j) {
  stats::MetricSet m;
  m.accuracy = j.at("accuracy").get<double>();
  m.weighted_f1 = j.at("weighted_f1").get<double>();
  m.macro_f1 = j.at("macro_f1").get<double>();
  for (const auto& c : j.at("per_class")) {
    m.per_class.push_back({c.at("precision").get<double>(), c.at("recall").get<double>(), c.at("f1").get<double>(),
                           c.at("support").get<std::size_t>()});
  }
  const auto& rows = j.at("confusion");
  const auto n = static_cast<Eigen::Index>(rows.size());
  m.confusion = Eigen::MatrixXi::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) m.confusion(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<int>();
  }
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path.string() + "'");
  return json::parse(in);
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  return {{"index", c.index},
          {"id", c.id},
          {"dataset", c.dataset.generic_string()},
          {"manifest", c.manifest.generic_string()},
          {"split", split_to_json(c.split)},
          {"fold", c.fold},
          {"val_split", c.val_split},
          {"method", to_string(c.method)},
          {"augmentation", entry_to_json(c.augmentation)},
          {"resolution", c.resolution},
          {"window", c.window},
          {"normalization", fpl::to_string(c.normalization)},
          {"with_dropout", c.with_dropout},
          {"projection_dim", c.projection_dim},
          {"train", nn::to_json(c.train)},
          {"pretrain", nn::to_json(c.pretrain)},
          {"finetune", nn::to_json(c.finetune)},
          {"expansion", c.expansion},
          {"finetune_shots", c.finetune_shots},
          {"boost",
           {{"n_rounds", c.boost.n_rounds},
            {"max_depth", c.boost.max_depth},
            {"learning_rate", c.boost.learning_rate},
            {"lambda", c.boost.lambda},
            {"min_child_weight", c.boost.min_child_weight},
            {"gamma", c.boost.gamma}}},
          {"baseline_features", c.baseline_features == gbdt::FeatureSource::FlattenedFlowpic ? "flowpic" : "timeseries"},
          {"baseline_packets", c.baseline_packets},
          {"test_partitions", c.test_partitions},
          {"seeds", {{"split", c.seeds.split}, {"init", c.seeds.init}, {"aug", c.seeds.aug}}}};
}

ExperimentConfig experiment_from_json(const json& j) {
  ExperimentConfig c;
  c.index = j.value("index", c.index);
  c.id = j.value("id", c.id);
  c.dataset = j.value("dataset", std::string());
  c.manifest = j.value("manifest", std::string());
  if (j.contains("split")) c.split = split_from_json(j["split"], c.split);
  c.fold = j.value("fold", c.fold);
  c.val_split = j.value("val_split", c.val_split);
  if (j.contains("method")) c.method = method_from_string(j["method"].get<std::string>());
  if (j.contains("augmentation")) c.augmentation = entry_from_json(j["augmentation"]);
  c.resolution = j.value("resolution", c.resolution);
  c.window = j.value("window", c.window);
  if (j.contains("normalization")) c.normalization = normalization_from_string(j["normalization"].get<std::string>());
  c.with_dropout = j.value("with_dropout", c.with_dropout);
  c.projection_dim = j.value("projection_dim", c.projection_dim);
  if (j.contains("train")) c.train = nn::train_config_from_json(j["train"], c.train);
  if (j.contains("pretrain")) c.pretrain = nn::train_config_from_json(j["pretrain"], c.pretrain);
  if (j.contains("finetune")) c.finetune = nn::train_config_from_json(j["finetune"], c.finetune);
  c.expansion = j.value("expansion", c.expansion);
  c.finetune_shots = j.value("finetune_shots", c.finetune_shots);
  if (j.contains("boost")) {
    const auto& b = j["boost"];
    c.boost.n_rounds = b.value("n_rounds", c.boost.n_rounds);
    c.boost.max_depth = b.value("max_depth", c.boost.max_depth);
    c.boost.learning_rate = b.value("learning_rate", c.boost.learning_rate);
    c.boost.lambda = b.value("lambda", c.boost.lambda);
    c.boost.min_child_weight = b.value("min_child_weight", c.boost.min_child_weight);
    c.boost.gamma = b.value("gamma", c.boost.gamma);
    c.boost.validate();
  }
  if (j.contains("baseline_features")) {
    const auto name = j["baseline_features"].get<std::string>();
    if (name == "flowpic") c.baseline_features = gbdt::FeatureSource::FlattenedFlowpic;
    else if (name == "timeseries") c.baseline_features = gbdt::FeatureSource::EarlyTimeseries;
    else throw std::invalid_argument("unknown baseline_features '" + name + "'");
  }
  c.baseline_packets = j.value("baseline_packets", c.baseline_packets);
  c.test_partitions = j.value("test_partitions", c.test_partitions);
  if (j.contains("seeds")) {
    const auto& s = j["seeds"];
    c.seeds = {s.value("split", c.seeds.split), s.value("init", c.seeds.init), s.value("aug", c.seeds.aug)};
  }
  if (c.resolution < 2) throw std::invalid_argument("resolution must be >= 2");
  if (!(c.window > 0.0)) throw std::invalid_argument("window must be positive");
  if (c.expansion < 1) throw std::invalid_argument("expansion must be >= 1");
  if (c.finetune_shots < 1) throw std::invalid_argument("finetune_shots must be >= 1");
  return c;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string text = to_json(cfg).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

GridSpec grid_from_json(const json& j, const fs::path& base_dir) {
  GridSpec g;
  auto resolve = [&](const std::string& p) { return p.empty() || fs::path(p).is_absolute() ? fs::path(p) : base_dir / p; };
  g.name = j.value("name", g.name);
  g.seed = j.value("seed", g.seed);
  if (!j.contains("dataset")) throw std::invalid_argument("grid: 'dataset' is required");
  g.dataset = resolve(j["dataset"].get<std::string>());
  g.manifest = resolve(j.value("manifest", std::string()));
  if (j.contains("methods")) {
    g.methods.clear();
    for (const auto& m : j["methods"]) {
      try {
        g.methods.push_back(method_from_string(m.get<std::string>()));
      } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("grid: methods: ") + e.what());
      }
    }
  }
  auto parse_list = [&](const char* key, bool pair) {
    std::vector<AugmentationEntry> out;
    std::size_t i = 0;
    for (const auto& e : j.at(key)) {
      try {
        out.push_back(parse_grid_entry(e, pair));
      } catch (const std::exception& ex) {
        throw std::invalid_argument(std::string("grid: ") + key + "[" + std::to_string(i) + "]: " + ex.what());
      }
      ++i;
    }
    return out;
  };
  if (j.contains("augmentations")) {
    g.augmentations = parse_list("augmentations", false);
  } else {
    for (const auto& s : default_augmentations()) g.augmentations.push_back({kind_name(s), {s}});
  }
  if (j.contains("augmentation_pairs")) {
    g.augmentation_pairs = parse_list("augmentation_pairs", true);
  } else {
    g.augmentation_pairs.push_back({"change_rtt+time_shift", {ChangeRtt{}, TimeShift{}}});
  }
  if (j.contains("resolutions")) g.resolutions = j["resolutions"].get<std::vector<int>>();
  for (int r : g.resolutions) {
    if (r < 2) throw std::invalid_argument("grid: resolutions: " + std::to_string(r) + " is below 2");
  }
  g.split.seed = derive_seed(g.seed, 0x5711);
  if (j.contains("split")) {
    try {
      g.split = split_from_json(j["split"], g.split);
    } catch (const std::exception& e) {
      throw std::invalid_argument(std::string("grid: split: ") + e.what());
    }
  }
  if (j.contains("experiment")) g.overrides = j["experiment"];
  if (!g.overrides.is_object()) throw std::invalid_argument("grid: 'experiment' must be an object");
  for (const char* reserved : {"index", "id", "dataset", "manifest", "split", "fold", "val_split", "method",
                               "augmentation", "resolution", "seeds"}) {
    if (g.overrides.contains(reserved)) {
      throw std::invalid_argument(std::string("grid: experiment.") + reserved + " is set by the grid itself");
    }
  }
  // Fail at planning time rather than in every experiment.
  try {
    experiment_from_json(g.overrides);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("grid: experiment: ") + e.what());
  }
  return g;
}

GridSpec load_grid(const fs::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const json::exception& e) {
    throw std::invalid_argument("grid '" + path.string() + "': " + e.what());
  }
  return grid_from_json(j, path.parent_path());
}

std::vector<ExperimentConfig> plan_campaign(const GridSpec& grid) {
  ExperimentConfig base = experiment_from_json(grid.overrides);
  base.dataset = grid.dataset;
  base.manifest = grid.manifest;
  base.split = grid.split;
  const std::size_t splits_per_fold = grid.split.s;
  const std::size_t folds = grid.split.folds();

  std::vector<ExperimentConfig> plan;
  for (Method method : grid.methods) {
    std::vector<AugmentationEntry> entries;
    if (method == Method::Supervised) entries = grid.augmentations;
    else if (method == Method::SimclrFinetune) entries = grid.augmentation_pairs;
    else entries.push_back({"none", {}});
    for (const auto& entry : entries) {
      for (int res : grid.resolutions) {
        for (std::size_t fold = 0; fold < folds; ++fold) {
          for (std::size_t vs = 0; vs < splits_per_fold; ++vs) {
            ExperimentConfig c = base;
            c.index = plan.size();
            c.method = method;
            c.augmentation = entry;
            c.resolution = res;
            c.fold = fold;
            c.val_split = vs;
            const std::uint64_t s = derive_seed(grid.seed, c.index);
            c.seeds = {grid.split.seed, derive_seed(s, 1), derive_seed(s, 2)};
            plan.push_back(std::move(c));
          }
        }
      }
    }
  }
  const std::size_t width = std::max<std::size_t>(4, std::to_string(plan.size()).size());
  for (auto& c : plan) {
    std::string digits = std::to_string(c.index);
    c.id = "e" + std::string(width - digits.size(), '0') + digits;
  }
  return plan;
}

json metrics_json(const RunRecord& r) {
  json j = {{"id", r.id},
            {"config_hash", r.config_hash},
            {"status", r.status == RunStatus::Completed ? "completed" : "failed"},
            {"method", to_string(r.config.method)},
            {"augmentation", r.config.augmentation.label},
            {"resolution", r.config.resolution},
            {"fold", r.config.fold},
            {"val_split", r.config.val_split}};
  if (r.status == RunStatus::Completed) {
    json parts = json::object();
    for (const auto& [name, pm] : r.metrics) {
      auto m = metric_set_to_json(pm.metrics);
      m["n"] = pm.n;
      parts[name] = m;
    }
    j["partitions"] = parts;
    j["epochs"] = r.epochs;
  } else {
    j["stage"] = r.failed_stage;
    j["error"] = r.error;
  }
  return j;
}

namespace {

RunRecord record_from_metrics(const ExperimentConfig& cfg, const json& m) {
  RunRecord r;
  r.config = cfg;
  r.id = cfg.id;
  r.index = cfg.index;
  r.config_hash = m.value("config_hash", config_hash(cfg));
  r.status = m.value("status", std::string()) == "completed" ? RunStatus::Completed : RunStatus::Failed;
  if (r.status == RunStatus::Completed) {
    for (const auto& [name, pm] : m.at("partitions").items()) {
      r.metrics[name] = {pm.at("n").get<std::size_t>(), metric_set_from_json(pm)};
    }
    r.epochs = m.value("epochs", 0);
  } else {
    r.failed_stage = m.value("stage", std::string());
    r.error = m.value("error", std::string());
  }
  return r;
}

std::vector<std::string> ids_of(const Dataset& d) {
  std::vector<std::string> out;
  out.reserve(d.size());
  for (const auto& r : d.records()) out.push_back(r.flow_id);
  return out;
}

struct ResolvedSplit {
  std::vector<std::string> train, val, test, fold_train;
};

ResolvedSplit resolve_split(const ExperimentConfig& cfg, const SharedInputs& in) {
  const auto& m = in.manifest;
  ResolvedSplit out;
  switch (m.scheme) {
    case SplitScheme::FewshotFolds: {
      if (cfg.fold >= m.folds.size()) throw std::out_of_range("fold " + std::to_string(cfg.fold) + " not in manifest");
      out.fold_train = m.folds[cfg.fold].train_ids;
      const auto splits = make_train_val(in.dataset, out.fold_train, cfg.split.s, cfg.split.train_ratio,
                                         derive_seed(m.seed, cfg.fold + 1));
      const auto& tv = splits.at(cfg.val_split);
      out.train = tv.train_ids;
      out.val = tv.val_ids;
      out.test = m.folds[cfg.fold].test_ids;
      break;
    }
    case SplitScheme::TrainVal: {
      const auto& f = m.folds.at(cfg.val_split);
      out.train = f.train_ids;
      out.val = f.val_ids;
      out.test = f.test_ids;
      break;
    }
    case SplitScheme::Stratified801010: {
      const auto& f = m.folds.at(cfg.fold);
      out.train = f.train_ids;
      out.val = f.val_ids;
      out.test = f.test_ids;
      break;
    }
  }
  if (out.fold_train.empty()) {
    out.fold_train = out.train;
    out.fold_train.insert(out.fold_train.end(), out.val.begin(), out.val.end());
  }
  return out;
}

struct Labeled {
  std::vector<PacketSeries> series;
  std::vector<int> labels;
};

Labeled labeled_from(const Dataset& d, const std::map<std::string, int>& classes) {
  Labeled out;
  for (const auto& r : d.records()) {
    auto it = classes.find(r.label);
    if (it == classes.end()) continue;
    out.series.push_back(r.series);
    out.labels.push_back(it->second);
  }
  return out;
}

std::vector<ImageF> plain_images(const std::vector<PacketSeries>& series, const FlowpicOptions& opts) {
  std::vector<ImageF> out;
  out.reserve(series.size());
  for (const auto& s : series) out.push_back(to_model_input<float>(build_flowpic(s, opts.resolution, opts.window), opts.normalization));
  return out;
}

class Log {
 public:
  void line(const std::string& s) { os_ << s << '\n'; }
  void history(const nn::CheckpointMetadata& meta) {
    for (const auto& [name, values] : meta.history) {
      for (std::size_t e = 0; e < values.size(); ++e) os_ << "  epoch " << e + 1 << ' ' << name << ' ' << values[e] << '\n';
    }
    os_ << "  best epoch " << meta.epoch << '\n';
  }
  std::string str() const { return os_.str(); }

 private:
  std::ostringstream os_;
};

}  // namespace

SharedInputs resolve_inputs(const ExperimentConfig& cfg) {
  SharedInputs in;
  in.dataset_path = cfg.dataset;
  in.dataset = load_dataset(cfg.dataset);
  in.manifest_path = cfg.manifest;
  if (!cfg.manifest.empty()) {
    in.manifest = load_manifest(cfg.manifest);
    in.manifest.validate_against(in.dataset);
    return in;
  }
  const Dataset pool = cfg.split.pool_partition ? in.dataset.partition(*cfg.split.pool_partition) : in.dataset;
  if (pool.empty()) throw DataError("split pool is empty");
  switch (cfg.split.scheme) {
    case SplitScheme::FewshotFolds:
      in.manifest = make_fewshot_folds(pool, cfg.split.k, cfg.split.per_class, cfg.split.seed);
      break;
    case SplitScheme::TrainVal:
      in.manifest = make_train_val_manifest(pool, ids_of(pool), cfg.split.s, cfg.split.train_ratio, cfg.split.seed);
      break;
    case SplitScheme::Stratified801010:
      in.manifest = make_stratified_split(pool, cfg.split.ratios, cfg.split.seed);
      break;
  }
  return in;
}

RunRecord run_experiment(const ExperimentConfig& cfg, const fs::path& out_root, const SharedInputs* shared) {
  const auto started = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config = cfg;
  rec.id = cfg.id;
  rec.index = cfg.index;
  rec.config_hash = config_hash(cfg);
  const fs::path dir = out_root / cfg.id;
  rec.log = dir / "log.txt";
  Log log;
  log.line("experiment " + cfg.id + " " + to_string(cfg.method) + " " + cfg.augmentation.label + " res " +
           std::to_string(cfg.resolution) + " fold " + std::to_string(cfg.fold) + " split " +
           std::to_string(cfg.val_split));
  std::string stage = "setup";
  try {
    fs::create_directories(dir);
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");

    stage = "load";
    SharedInputs local;
    if (!shared) {
      local = resolve_inputs(cfg);
      shared = &local;
    }
    const Dataset& data = shared->dataset;
    std::map<std::string, int> classes;
    for (const auto& label : data.labels()) classes.emplace(label, static_cast<int>(classes.size()));
    const int num_classes = static_cast<int>(classes.size());

    stage = "split";
    const auto split = resolve_split(cfg, *shared);
    const auto train = labeled_from(data.subset(split.train), classes);
    const auto val = labeled_from(data.subset(split.val), classes);
    std::vector<std::pair<std::string, Labeled>> tests;
    std::vector<std::string> test_names = cfg.test_partitions;
    if (test_names.empty()) test_names.push_back(split.test.empty() ? "leftover" : "test");
    for (const auto& name : test_names) {
      if (name == "test") {
        tests.emplace_back(name, labeled_from(data.subset(split.test), classes));
      } else if (name == "leftover") {
        std::set<std::string> used(split.fold_train.begin(), split.fold_train.end());
        used.insert(split.train.begin(), split.train.end());
        used.insert(split.val.begin(), split.val.end());
        used.insert(split.test.begin(), split.test.end());
        const Dataset pool = cfg.split.pool_partition ? data.partition(*cfg.split.pool_partition) : data;
        std::vector<std::string> rest;
        for (const auto& r : pool.records()) {
          if (!used.contains(r.flow_id)) rest.push_back(r.flow_id);
        }
        tests.emplace_back(name, labeled_from(data.subset(rest), classes));
      } else {
        tests.emplace_back(name, labeled_from(data.partition(name), classes));
      }
      if (tests.back().second.series.empty()) throw DataError("test partition '" + name + "' is empty");
    }
    if (train.series.empty()) throw DataError("training set is empty");
    log.line("train " + std::to_string(train.series.size()) + " val " + std::to_string(val.series.size()));

    const FlowpicOptions opts{cfg.resolution, cfg.window, cfg.normalization};
    std::vector<std::vector<int>> predictions(tests.size());

    if (cfg.method == Method::Supervised) {
      stage = "augment";
      if (cfg.augmentation.specs.size() != 1) throw std::invalid_argument("supervised runs take one augmentation");
      if (val.series.empty()) throw DataError("validation set is empty");
      Rng aug_rng(cfg.seeds.aug);
      nn::LabeledImages train_set;
      train_set.images = expand_training_set(train.series, cfg.augmentation.specs.front(), cfg.expansion, opts, aug_rng);
      for (int y : train.labels) train_set.labels.insert(train_set.labels.end(), cfg.expansion, y);
      const nn::LabeledImages val_set{plain_images(val.series, opts), val.labels};
      log.line("expanded training set " + std::to_string(train_set.size()));

      stage = "train";
      nn::NetworkConfig net_cfg{cfg.resolution, num_classes, cfg.with_dropout, nn::NetworkMode::Supervised, std::nullopt};
      auto net = nn::build_network<float>(net_cfg, cfg.seeds.init);
      auto train_cfg = cfg.train;
      train_cfg.seed = derive_seed(cfg.seeds.init, 3);
      const auto ckpt = nn::train_supervised(net, train_set, val_set, train_cfg);
      log.history(ckpt.metadata);
      rec.epochs = static_cast<int>(ckpt.metadata.history.at("val_loss").size());
      rec.checkpoint = dir / "model.ckpt";
      nn::save_checkpoint(ckpt, rec.checkpoint);

      stage = "evaluate";
      for (std::size_t t = 0; t < tests.size(); ++t) {
        predictions[t] = nn::evaluate(net, plain_images(tests[t].second.series, opts)).predictions;
      }
    } else if (cfg.method == Method::SimclrFinetune) {
      stage = "pretrain";
      if (cfg.augmentation.specs.size() != 2) throw std::invalid_argument("SimCLR runs take an augmentation pair");
      const auto pool = labeled_from(data.subset(split.fold_train), classes);
      nn::NetworkConfig net_cfg{cfg.resolution, num_classes, cfg.with_dropout, nn::NetworkMode::SimclrPretrain,
                                cfg.projection_dim};
      auto net = nn::build_network<float>(net_cfg, cfg.seeds.init);
      auto pre_cfg = cfg.pretrain;
      pre_cfg.seed = derive_seed(cfg.seeds.aug, 4);
      const auto pretrained = nn::pretrain_simclr(
          net, pool.series, {cfg.augmentation.specs[0], cfg.augmentation.specs[1]}, opts, pre_cfg);
      log.line("pretrain on " + std::to_string(pool.series.size()) + " unlabeled flows");
      log.history(pretrained.metadata);

      stage = "finetune";
      // Shots are drawn per class from the pretraining pool.
      std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(num_classes));
      for (std::size_t i = 0; i < pool.labels.size(); ++i) by_class[static_cast<std::size_t>(pool.labels[i])].push_back(i);
      Rng shot_rng(derive_seed(cfg.seeds.aug, 5));
      std::vector<std::size_t> chosen;
      for (auto& members : by_class) {
        shot_rng.shuffle(std::span(members));
        const auto n = std::min(members.size(), cfg.finetune_shots);
        chosen.insert(chosen.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n));
      }
      nn::LabeledImages shots;
      for (auto i : chosen) {
        shots.images.push_back(to_model_input<float>(build_flowpic(pool.series[i], opts.resolution, opts.window), opts.normalization));
        shots.labels.push_back(pool.labels[i]);
      }
      auto ft_cfg = cfg.finetune;
      ft_cfg.seed = derive_seed(cfg.seeds.init, 6);
      const auto tuned = nn::finetune(pretrained, shots, num_classes, ft_cfg);
      log.line("finetune on " + std::to_string(shots.size()) + " labeled flows");
      log.history(tuned.metadata);
      rec.epochs = static_cast<int>(tuned.metadata.history.at("train_loss").size());
      rec.checkpoint = dir / "model.ckpt";
      nn::save_checkpoint(tuned, rec.checkpoint);
      nn::save_checkpoint(pretrained, dir / "pretrained.ckpt");

      stage = "evaluate";
      auto model = nn::restore_network(tuned);
      for (std::size_t t = 0; t < tests.size(); ++t) {
        predictions[t] = nn::evaluate(model, plain_images(tests[t].second.series, opts)).predictions;
      }
    } else {
      stage = "features";
      gbdt::FeatureSpec spec;
      spec.source = cfg.baseline_features;
      spec.resolution = cfg.resolution;
      spec.window = cfg.window;
      spec.packets = cfg.baseline_packets;
      auto matrix_of = [&](const Labeled& l) {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(l.series.size()), static_cast<Eigen::Index>(spec.length()));
        for (std::size_t i = 0; i < l.series.size(); ++i) {
          FlowRecord r{"", "", std::nullopt, l.series[i]};
          x.row(static_cast<Eigen::Index>(i)) = gbdt::extract_features(r, spec).values.transpose();
        }
        return x;
      };
      stage = "train";
      const auto model = gbdt::fit(matrix_of(train), train.labels, cfg.boost);
      rec.epochs = static_cast<int>(model.rounds.size());
      log.line("boosting rounds " + std::to_string(model.rounds.size()) + " final train loss " +
               std::to_string(model.train_loss.back()));
      rec.checkpoint = dir / "model.json";
      gbdt::save_model(model, rec.checkpoint);

      stage = "evaluate";
      for (std::size_t t = 0; t < tests.size(); ++t) {
        predictions[t] = gbdt::predict_labels(model, matrix_of(tests[t].second));
      }
    }

    stage = "metrics";
    for (std::size_t t = 0; t < tests.size(); ++t) {
      const auto& truth = tests[t].second.labels;
      auto m = stats::compute_metrics(truth, predictions[t], num_classes);
      log.line("partition " + tests[t].first + " n " + std::to_string(truth.size()) + " accuracy " +
               std::to_string(m.accuracy) + " weighted_f1 " + std::to_string(m.weighted_f1));
      rec.metrics[tests[t].first] = {truth.size(), std::move(m)};
    }
    rec.status = RunStatus::Completed;
  } catch (const std::exception& e) {
    rec.status = RunStatus::Failed;
    rec.failed_stage = stage;
    rec.error = e.what();
    rec.metrics.clear();
    log.line("failed at stage " + stage + ": " + e.what());
  }
  try {
    fs::create_directories(dir);
    write_text(dir / "metrics.json", metrics_json(rec).dump(2) + "\n");
    write_text(rec.log, log.str());
  } catch (const std::exception& e) {
    if (rec.status == RunStatus::Completed) {
      rec.status = RunStatus::Failed;
      rec.failed_stage = "write";
      rec.error = e.what();
      rec.metrics.clear();
    }
  }
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rec;
}

std::vector<RunRecord> run_campaign(const std::vector<ExperimentConfig>& plan, std::size_t workers,
                                    const fs::path& out_root) {
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  fs::create_directories(out_root);
  json plan_doc = json::array();
  for (const auto& c : plan) plan_doc.push_back(to_json(c));
  write_text(out_root / "plan.json", plan_doc.dump(2) + "\n");

  // Inputs are resolved once per distinct (dataset, manifest, split) so
  // workers share immutable data.
  std::map<std::string, std::size_t> group_of;
  std::vector<std::optional<SharedInputs>> groups;
  std::vector<std::string> group_errors;
  std::vector<std::size_t> group_index(plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const auto& c = plan[i];
    const std::string key =
        c.dataset.generic_string() + "\n" + c.manifest.generic_string() + "\n" + split_to_json(c.split).dump();
    auto [it, fresh] = group_of.emplace(key, groups.size());
    if (fresh) {
      try {
        groups.emplace_back(resolve_inputs(c));
        group_errors.emplace_back();
        if (c.manifest.empty()) {
          const auto name = group_of.size() == 1 ? std::string("manifest.json")
                                                 : "manifest_" + std::to_string(it->second) + ".json";
          save_manifest(groups.back()->manifest, out_root / name);
        }
      } catch (const std::exception& e) {
        groups.emplace_back(std::nullopt);
        group_errors.emplace_back(e.what());
      }
    }
    group_index[i] = it->second;
  }

  std::vector<RunRecord> records(plan.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < plan.size(); i = next++) {
      const auto g = group_index[i];
      if (groups[g]) {
        records[i] = run_experiment(plan[i], out_root, &*groups[g]);
        continue;
      }
      RunRecord r;
      r.config = plan[i];
      r.id = plan[i].id;
      r.index = plan[i].index;
      r.config_hash = config_hash(plan[i]);
      r.failed_stage = "load";
      r.error = group_errors[g];
      r.log = out_root / r.id / "log.txt";
      fs::create_directories(out_root / r.id);
      write_text(out_root / r.id / "config.json", to_json(plan[i]).dump(2) + "\n");
      write_text(out_root / r.id / "metrics.json", metrics_json(r).dump(2) + "\n");
      write_text(r.log, "failed at stage load: " + r.error + "\n");
      records[i] = std::move(r);
    }
  };
  const std::size_t n = std::min(workers, std::max<std::size_t>(plan.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  std::ofstream out(out_root / "records.jsonl");
  for (const auto& r : records) {
    json line = metrics_json(r);
    line["wall_seconds"] = r.wall_seconds;
    line["checkpoint"] = r.checkpoint.generic_string();
    line["log"] = r.log.generic_string();
    out << line.dump() << '\n';
  }
  return records;
}

std::vector<RunRecord> load_records(const fs::path& out_root) {
  const json plan = read_json(out_root / "plan.json");
  std::map<std::string, json> extra;
  if (std::ifstream in(out_root / "records.jsonl"); in) {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto j = json::parse(line);
      extra[j.at("id").get<std::string>()] = j;
    }
  }
  std::vector<RunRecord> out;
  for (const auto& cj : plan) {
    const auto cfg = experiment_from_json(cj);
    const fs::path metrics = out_root / cfg.id / "metrics.json";
    RunRecord r;
    if (fs::exists(metrics)) {
      r = record_from_metrics(cfg, read_json(metrics));
    } else {
      r.config = cfg;
      r.id = cfg.id;
      r.index = cfg.index;
      r.config_hash = config_hash(cfg);
      r.failed_stage = "missing";
      r.error = "no metrics.json";
    }
    if (auto it = extra.find(cfg.id); it != extra.end()) {
      r.wall_seconds = it->second.value("wall_seconds", 0.0);
      r.checkpoint = it->second.value("checkpoint", std::string());
      r.log = it->second.value("log", std::string());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace fpl::campaign
