// Command line front end: curation, splits, single runs, campaigns, reports
// and standalone statistics.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "fpl/campaign.hpp"
#include "fpl/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace fpl;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRunFailed = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read '" + path.string() + "'");
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw UsageError("not a number: '" + s + "'");
  return v;
}

bool is_number(const std::string& s) {
  try {
    to_double(s);
    return true;
  } catch (const UsageError&) {
    return false;
  }
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path.string() + ": " + e.what());
  }
}

AugmentationSpec parse_augmentation(const std::string& text) {
  if (!text.empty() && text.front() == '{') return augmentation_from_json(json::parse(text));
  return augmentation_from_name(text);
}

// Flags shared by the single-run subcommands.
struct RunFlags {
  std::string dataset;
  std::string manifest;
  std::string scheme = "fewshot_folds";
  std::size_t k = 5, per_class = 100, s = 3;
  double train_ratio = 0.8;
  std::string pool_partition;
  std::uint64_t split_seed = 0;
  std::size_t fold = 0, val_split = 0;
  int resolution = 32;
  double window = kDefaultWindow;
  std::string normalization = "raw";
  bool no_dropout = false;
  std::vector<std::string> tests;
  std::string config;
  std::uint64_t seed = 0;
  std::string out;

  void add_to(CLI::App* app) {
    app->add_option("dataset", dataset, "Dataset (JSON Lines)")->required();
    app->add_option("--manifest", manifest, "Split manifest; built from the split flags when omitted");
    app->add_option("--scheme", scheme, "fewshot_folds | train_val | stratified_801010")->capture_default_str();
    app->add_option("--k", k, "Folds")->capture_default_str();
    app->add_option("--per-class", per_class, "Flows per class per fold")->capture_default_str();
    app->add_option("--s", s, "Train/validation resplits per fold")->capture_default_str();
    app->add_option("--train-ratio", train_ratio, "Training share of a fold")->capture_default_str();
    app->add_option("--pool-partition", pool_partition, "Draw folds from this partition only");
    app->add_option("--split-seed", split_seed, "Split seed")->capture_default_str();
    app->add_option("--fold", fold, "Fold index")->capture_default_str();
    app->add_option("--val-split", val_split, "Train/validation split index")->capture_default_str();
    app->add_option("--resolution", resolution, "Flowpic resolution")->capture_default_str();
    app->add_option("--window", window, "Flowpic window in seconds")->capture_default_str();
    app->add_option("--normalization", normalization, "raw | unit_max")->capture_default_str();
    app->add_flag("--no-dropout", no_dropout, "Replace dropout layers by identities");
    app->add_option("--test", tests, "Test partition(s): test, leftover or a partition tag");
    app->add_option("--config", config, "JSON file with experiment settings (train, boost, ...)");
    app->add_option("--seed", seed, "Run seed")->capture_default_str();
    app->add_option("--out", out, "Output directory")->required();
  }

  campaign::ExperimentConfig experiment(campaign::Method method) const {
    json base = config.empty() ? json::object() : read_json_file(config);
    campaign::ExperimentConfig c = campaign::experiment_from_json(base);
    c.id = "run";
    c.dataset = dataset;
    c.manifest = manifest;
    c.split.scheme = split_scheme_from_string(scheme);
    c.split.k = k;
    c.split.per_class = per_class;
    c.split.s = s;
    c.split.train_ratio = train_ratio;
    if (!pool_partition.empty()) c.split.pool_partition = pool_partition;
    c.split.seed = split_seed;
    c.fold = fold;
    c.val_split = val_split;
    c.method = method;
    c.resolution = resolution;
    c.window = window;
    c.normalization = normalization_from_string(normalization);
    if (no_dropout) c.with_dropout = false;
    if (!tests.empty()) c.test_partitions = tests;
    c.seeds = {split_seed, derive_seed(seed, 1), derive_seed(seed, 2)};
    return c;
  }
};

int finish_run(const campaign::RunRecord& r) {
  std::cout << campaign::metrics_json(r).dump(2) << '\n';
  if (r.status != campaign::RunStatus::Completed) {
    std::cerr << "run failed at stage " << r.failed_stage << ": " << r.error << '\n';
    return kRunFailed;
  }
  return kOk;
}

void print_rank_table(const stats::RankTable& t, std::optional<double> cd,
                      const std::vector<std::vector<std::size_t>>& groups) {
  std::cout << "method,avg_rank\n";
  for (std::size_t i = 0; i < t.methods.size(); ++i) {
    std::cout << t.methods[i] << ',' << t.average_ranks[static_cast<Eigen::Index>(i)] << '\n';
  }
  std::cout << "friedman," << stats::friedman_statistic(t) << '\n';
  if (cd) {
    std::cout << "cd," << *cd << '\n';
    for (const auto& g : groups) {
      std::cout << "group";
      for (auto m : g) std::cout << ',' << t.methods[m];
      std::cout << '\n';
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Flowpic traffic-classification experiment toolkit"};
  app.require_subcommand(1);

  // synth
  SyntheticOptions synth_opts;
  std::string synth_out, synth_partition;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic burst-pattern dataset");
  synth->add_option("--out", synth_out, "Output dataset")->required();
  synth->add_option("--classes", synth_opts.classes, "Classes")->capture_default_str();
  synth->add_option("--flows-per-class", synth_opts.flows_per_class, "Flows per class")->capture_default_str();
  synth->add_option("--size-shift", synth_opts.size_shift, "Bytes added to every packet size")->capture_default_str();
  synth->add_option("--partition", synth_partition, "Partition tag");
  synth->add_option("--id-prefix", synth_opts.id_prefix, "Flow id prefix")->capture_default_str();
  synth->add_option("--seed", synth_opts.seed, "Seed")->capture_default_str();

  // curate
  std::string cur_in, cur_out;
  std::size_t min_packets = 0, min_class = 1;
  auto* curate = app.add_subcommand("curate", "Apply the packet-count and class-size filters");
  curate->add_option("input", cur_in, "Input dataset")->required();
  curate->add_option("output", cur_out, "Output dataset")->required();
  curate->add_option("--min-packets", min_packets, "Keep flows with more than N packets")->capture_default_str();
  curate->add_option("--min-class-size", min_class, "Drop classes with fewer than M flows")->capture_default_str();

  // split
  std::string sp_dataset, sp_out, sp_scheme = "fewshot_folds", sp_partition;
  std::size_t sp_k = 5, sp_per_class = 100, sp_s = 3;
  double sp_ratio = 0.8;
  std::vector<double> sp_ratios{0.8, 0.1, 0.1};
  std::uint64_t sp_seed = 0;
  auto* split = app.add_subcommand("split", "Write a split manifest");
  split->add_option("dataset", sp_dataset, "Dataset")->required();
  split->add_option("--scheme", sp_scheme, "fewshot_folds | train_val | stratified_801010")->capture_default_str();
  split->add_option("--k", sp_k, "Folds (fewshot_folds)")->capture_default_str();
  split->add_option("--per-class", sp_per_class, "Flows per class per fold (fewshot_folds)")->capture_default_str();
  split->add_option("--s", sp_s, "Splits (train_val)")->capture_default_str();
  split->add_option("--ratio", sp_ratio, "Training ratio (train_val)")->capture_default_str();
  split->add_option("--ratios", sp_ratios, "train val test ratios (stratified_801010)")->expected(3);
  split->add_option("--partition", sp_partition, "Use only flows of this partition");
  split->add_option("--seed", sp_seed, "Seed")->capture_default_str();
  split->add_option("--out", sp_out, "Manifest path")->required();

  // flowpic
  std::string fp_dataset, fp_id, fp_csv, fp_pgm;
  int fp_res = 32;
  double fp_window = kDefaultWindow;
  auto* flowpic = app.add_subcommand("flowpic", "Export one flow's flowpic as CSV and/or PGM");
  flowpic->add_option("dataset", fp_dataset, "Dataset")->required();
  flowpic->add_option("--flow-id", fp_id, "Flow id")->required();
  flowpic->add_option("--resolution", fp_res, "Resolution")->capture_default_str();
  flowpic->add_option("--window", fp_window, "Window in seconds")->capture_default_str();
  flowpic->add_option("--csv", fp_csv, "CSV output");
  flowpic->add_option("--pgm", fp_pgm, "PGM output");

  // train
  RunFlags train_flags;
  std::string tr_aug = "no_aug";
  auto* train = app.add_subcommand("train", "One supervised run: expand, train, evaluate");
  train_flags.add_to(train);
  train->add_option("--augmentation", tr_aug, "Augmentation name or JSON spec")->capture_default_str();
  std::size_t tr_expansion = 10;
  train->add_option("--expansion", tr_expansion, "Augmented copies per training flow")->capture_default_str();

  // pretrain
  RunFlags pre_flags;
  std::vector<std::string> pre_pair{"change_rtt", "time_shift"};
  int pre_proj = 30;
  auto* pretrain = app.add_subcommand("pretrain", "SimCLR pretraining on a fold's flows, labels unused");
  pre_flags.add_to(pretrain);
  pretrain->add_option("--pair", pre_pair, "Two augmentations")->expected(2)->capture_default_str();
  pretrain->add_option("--projection-dim", pre_proj, "Projection size")->capture_default_str();

  // finetune
  RunFlags ft_flags;
  std::string ft_ckpt;
  std::size_t ft_shots = 10;
  auto* finetune = app.add_subcommand("finetune", "Fine-tune a pretrained checkpoint on few labeled flows");
  ft_flags.add_to(finetune);
  finetune->add_option("--checkpoint", ft_ckpt, "Pretrained checkpoint")->required();
  finetune->add_option("--shots", ft_shots, "Labeled flows per class")->capture_default_str();

  // baseline
  RunFlags base_flags;
  std::string base_features = "flowpic";
  int base_rounds = 100, base_depth = 6;
  auto* baseline = app.add_subcommand("baseline", "Boosted-tree baseline run");
  base_flags.add_to(baseline);
  baseline->add_option("--features", base_features, "flowpic | timeseries[:k]")->capture_default_str();
  baseline->add_option("--rounds", base_rounds, "Boosting rounds")->capture_default_str();
  baseline->add_option("--depth", base_depth, "Maximum tree depth")->capture_default_str();

  // campaign run
  auto* camp = app.add_subcommand("campaign", "Experiment campaigns");
  camp->require_subcommand(1);
  std::string grid_path, camp_out;
  std::size_t workers = 1;
  bool plan_only = false;
  auto* run = camp->add_subcommand("run", "Plan and run a grid, then write the report");
  run->add_option("grid", grid_path, "Grid config (JSON)")->required();
  run->add_option("--workers", workers, "Parallel workers")->capture_default_str()->check(CLI::PositiveNumber);
  run->add_option("--out", camp_out, "Campaign directory")->required();
  run->add_flag("--plan-only", plan_only, "Print the plan size and write plan.json without running");

  // report
  std::string rep_dir, rep_metric = "accuracy";
  double rep_alpha = 0.05;
  auto* report = app.add_subcommand("report", "Summarize a campaign directory into DIR/report");
  report->add_option("dir", rep_dir, "Campaign directory")->required();
  report->add_option("--metric", rep_metric, "accuracy | weighted_f1 | macro_f1")->capture_default_str();
  report->add_option("--alpha", rep_alpha, "Significance level (0.05 or 0.10 for CD)")->capture_default_str();

  // drift
  std::string dr_dataset, dr_out;
  std::vector<std::string> dr_parts;
  int dr_res = 32;
  double dr_window = kDefaultWindow;
  auto* drift = app.add_subcommand("drift", "Per-class mean flowpics and packet-size KDEs per partition");
  drift->add_option("dataset", dr_dataset, "Dataset")->required();
  drift->add_option("--partitions", dr_parts, "Partition tags (all flows when omitted)");
  drift->add_option("--resolution", dr_res, "Resolution")->capture_default_str();
  drift->add_option("--window", dr_window, "Window in seconds")->capture_default_str();
  drift->add_option("--out", dr_out, "Output directory")->required();

  // stats
  auto* st = app.add_subcommand("stats", "Standalone statistics on CSV input");
  st->require_subcommand(1);
  std::string st_csv, st_svg;
  double st_alpha = 0.05, st_level = 0.95;
  auto* st_cd = st->add_subcommand("cd", "Average ranks and Nemenyi CD; CSV header = methods, one row per trial");
  st_cd->add_option("csv", st_csv, "Input CSV")->required();
  st_cd->add_option("--alpha", st_alpha, "0.05 or 0.10")->capture_default_str();
  st_cd->add_option("--svg", st_svg, "Write the CD diagram here");
  auto* st_tukey = st->add_subcommand("tukey", "Tukey HSD; CSV rows group,value");
  st_tukey->add_option("csv", st_csv, "Input CSV")->required();
  st_tukey->add_option("--alpha", st_alpha, "Significance level")->capture_default_str();
  auto* st_ci = st->add_subcommand("ci", "t confidence interval of a single column of values");
  st_ci->add_option("csv", st_csv, "Input CSV")->required();
  st_ci->add_option("--level", st_level, "Confidence level")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) {
      if (!synth_partition.empty()) synth_opts.partition = synth_partition;
      const auto d = make_synthetic_dataset(synth_opts);
      save_dataset(d, synth_out);
      std::cout << d.size() << " flows written to " << synth_out << '\n';
    } else if (*curate) {
      const auto in = load_dataset(cur_in);
      const auto out = filter_min_class_size(filter_min_packets(in, min_packets), min_class);
      save_dataset(out, cur_out);
      std::cout << in.size() << " flows in, " << out.size() << " kept, " << out.class_index().size()
                << " classes, " << in.clipped_sizes << " sizes clipped\n";
    } else if (*split) {
      const auto all = load_dataset(sp_dataset);
      const auto d = sp_partition.empty() ? all : all.partition(sp_partition);
      SplitManifest m;
      switch (split_scheme_from_string(sp_scheme)) {
        case SplitScheme::FewshotFolds: m = make_fewshot_folds(d, sp_k, sp_per_class, sp_seed); break;
        case SplitScheme::TrainVal: {
          std::vector<std::string> ids;
          for (const auto& r : d.records()) ids.push_back(r.flow_id);
          m = make_train_val_manifest(d, ids, sp_s, sp_ratio, sp_seed);
          break;
        }
        case SplitScheme::Stratified801010: m = make_stratified_split(d, sp_ratios, sp_seed); break;
      }
      save_manifest(m, sp_out);
      std::cout << m.folds.size() << " folds written to " << sp_out << '\n';
    } else if (*flowpic) {
      const auto d = load_dataset(fp_dataset);
      const auto fp = build_flowpic(d.at(d.index_of(fp_id)).series, fp_res, fp_window);
      if (!fp_csv.empty()) write_flowpic_csv(fp, fp_csv);
      if (!fp_pgm.empty()) write_flowpic_pgm(fp, fp_pgm);
      if (fp_csv.empty() && fp_pgm.empty()) std::cout << fp.counts << '\n';
      std::cout << "packets in window: " << fp.total() << '\n';
    } else if (*train) {
      auto c = train_flags.experiment(campaign::Method::Supervised);
      const auto spec = parse_augmentation(tr_aug);
      c.augmentation = {kind_name(spec), {spec}};
      c.expansion = tr_expansion;
      return finish_run(campaign::run_experiment(c, train_flags.out));
    } else if (*baseline) {
      auto c = base_flags.experiment(campaign::Method::BoostBaseline);
      const auto spec = gbdt::feature_spec_from_string(base_features);
      c.baseline_features = spec.source;
      if (spec.source == gbdt::FeatureSource::EarlyTimeseries) c.baseline_packets = spec.packets;
      c.boost.n_rounds = base_rounds;
      c.boost.max_depth = base_depth;
      c.boost.validate();
      c.augmentation = {"none", {}};
      return finish_run(campaign::run_experiment(c, base_flags.out));
    } else if (*pretrain) {
      auto c = pre_flags.experiment(campaign::Method::SimclrFinetune);
      const auto inputs = campaign::resolve_inputs(c);
      const auto& m = inputs.manifest;
      if (c.fold >= m.folds.size()) throw UsageError("fold out of range");
      auto ids = m.folds[c.fold].train_ids;
      if (m.scheme != SplitScheme::FewshotFolds) ids.insert(ids.end(), m.folds[c.fold].val_ids.begin(), m.folds[c.fold].val_ids.end());
      std::vector<PacketSeries> unlabeled;
      for (const auto& id : ids) unlabeled.push_back(inputs.dataset.at(inputs.dataset.index_of(id)).series);
      nn::NetworkConfig net_cfg{c.resolution, static_cast<int>(inputs.dataset.class_index().size()), c.with_dropout,
                                nn::NetworkMode::SimclrPretrain, pre_proj};
      auto net = nn::build_network<float>(net_cfg, c.seeds.init);
      auto cfg = c.pretrain;
      cfg.seed = derive_seed(c.seeds.aug, 4);
      const auto ckpt = nn::pretrain_simclr(net, unlabeled, {parse_augmentation(pre_pair[0]), parse_augmentation(pre_pair[1])},
                                            {c.resolution, c.window, c.normalization}, cfg);
      fs::create_directories(pre_flags.out);
      nn::save_checkpoint(ckpt, fs::path(pre_flags.out) / "pretrained.ckpt");
      const auto& agree = ckpt.metadata.history.at("top_k_agreement");
      std::cout << "pretrained on " << unlabeled.size() << " flows for " << agree.size() << " epochs; best epoch "
                << ckpt.metadata.epoch << " top-" << cfg.top_k << " agreement "
                << agree.at(static_cast<std::size_t>(ckpt.metadata.epoch - 1)) << '\n';
    } else if (*finetune) {
      auto c = ft_flags.experiment(campaign::Method::SimclrFinetune);
      const auto pretrained = nn::load_checkpoint(ft_ckpt);
      const auto inputs = campaign::resolve_inputs(c);
      const auto& data = inputs.dataset;
      const auto& m = inputs.manifest;
      if (c.fold >= m.folds.size()) throw UsageError("fold out of range");
      std::map<std::string, int> classes;
      for (const auto& l : data.labels()) classes.emplace(l, static_cast<int>(classes.size()));
      std::map<int, std::vector<std::string>> by_class;
      for (const auto& id : m.folds[c.fold].train_ids) by_class[classes.at(data.at(data.index_of(id)).label)].push_back(id);
      Rng rng(derive_seed(c.seeds.aug, 5));
      const FlowpicOptions opts{c.resolution, c.window, c.normalization};
      nn::LabeledImages shots;
      for (auto& [y, ids] : by_class) {
        rng.shuffle(std::span(ids));
        for (std::size_t i = 0; i < std::min(ids.size(), ft_shots); ++i) {
          shots.images.push_back(to_model_input<float>(build_flowpic(data.at(data.index_of(ids[i])).series, opts.resolution, opts.window), opts.normalization));
          shots.labels.push_back(y);
        }
      }
      auto cfg = c.finetune;
      cfg.seed = derive_seed(c.seeds.init, 6);
      const auto tuned = nn::finetune(pretrained, shots, static_cast<int>(classes.size()), cfg);
      fs::create_directories(ft_flags.out);
      nn::save_checkpoint(tuned, fs::path(ft_flags.out) / "model.ckpt");
      auto net = nn::restore_network(tuned);
      json out = json::object();
      auto tests = c.test_partitions;
      if (tests.empty()) tests.push_back(m.folds[c.fold].test_ids.empty() ? "leftover" : "test");
      for (const auto& name : tests) {
        std::vector<std::string> ids;
        if (name == "test") {
          ids = m.folds[c.fold].test_ids;
        } else if (name == "leftover") {
          std::set<std::string> used(m.folds[c.fold].train_ids.begin(), m.folds[c.fold].train_ids.end());
          const auto pool = c.split.pool_partition ? data.partition(*c.split.pool_partition) : data;
          for (const auto& r : pool.records()) {
            if (!used.contains(r.flow_id)) ids.push_back(r.flow_id);
          }
        } else {
          for (const auto& r : data.partition(name).records()) ids.push_back(r.flow_id);
        }
        if (ids.empty()) throw UsageError("test partition '" + name + "' is empty");
        std::vector<ImageF> images;
        std::vector<int> truth;
        for (const auto& id : ids) {
          const auto& r = data.at(data.index_of(id));
          images.push_back(to_model_input<float>(build_flowpic(r.series, opts.resolution, opts.window), opts.normalization));
          truth.push_back(classes.at(r.label));
        }
        const auto pred = nn::evaluate(net, images).predictions;
        const auto ms = stats::compute_metrics(truth, pred, static_cast<int>(classes.size()));
        out[name] = {{"n", truth.size()}, {"accuracy", ms.accuracy}, {"weighted_f1", ms.weighted_f1}};
      }
      std::ofstream(fs::path(ft_flags.out) / "metrics.json") << out.dump(2) << '\n';
      std::cout << out.dump(2) << '\n';
    } else if (*camp && *run) {
      if (!fs::is_regular_file(grid_path)) throw UsageError("cannot read '" + grid_path + "'");
      const auto grid = campaign::load_grid(grid_path);
      const auto plan = campaign::plan_campaign(grid);
      std::cout << plan.size() << " experiments planned\n";
      if (plan_only) {
        fs::create_directories(camp_out);
        json doc = json::array();
        for (const auto& c : plan) doc.push_back(campaign::to_json(c));
        std::ofstream(fs::path(camp_out) / "plan.json") << doc.dump(2) << '\n';
        return kOk;
      }
      const auto records = campaign::run_campaign(plan, workers, camp_out);
      const auto rep = campaign::summarize(records);
      campaign::write_report(rep, fs::path(camp_out) / "report");
      std::cout << rep.completed << " completed, " << rep.failed << " failed; report in "
                << (fs::path(camp_out) / "report").string() << '\n';
      for (const auto& r : records) {
        if (r.status == campaign::RunStatus::Failed) {
          std::cerr << r.id << " failed at stage " << r.failed_stage << ": " << r.error << '\n';
        }
      }
      return rep.failed ? kRunFailed : kOk;
    } else if (*report) {
      const auto records = campaign::load_records(rep_dir);
      const auto rep = campaign::summarize(records, {rep_metric, rep_alpha});
      campaign::write_report(rep, fs::path(rep_dir) / "report");
      std::cout << campaign::render_markdown(rep);
      return rep.failed ? kRunFailed : kOk;
    } else if (*drift) {
      const auto d = load_dataset(dr_dataset);
      const auto rep = stats::drift_diagnostics(d, dr_parts, dr_res, dr_window);
      stats::write_drift_report(rep, dr_out);
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
      for (const auto& [part, classes] : rep.partitions) {
        for (const auto& [label, cd] : classes) {
          std::cout << part << ' ' << label << " flows " << cd.flows << " bandwidth " << cd.bandwidth << '\n';
        }
      }
    } else if (*st) {
      auto rows = read_csv(st_csv);
      if (*st_cd) {
        if (rows.size() < 2) throw UsageError("need a header and at least one trial row");
        const auto& methods = rows.front();
        Eigen::MatrixXd obs(static_cast<Eigen::Index>(methods.size()), static_cast<Eigen::Index>(rows.size() - 1));
        for (std::size_t t = 1; t < rows.size(); ++t) {
          if (rows[t].size() != methods.size()) throw UsageError("row " + std::to_string(t + 1) + " has the wrong width");
          for (std::size_t m = 0; m < methods.size(); ++m) {
            obs(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(t - 1)) = to_double(rows[t][m]);
          }
        }
        const auto table = stats::rank_methods(methods, obs);
        const double cd = stats::nemenyi_cd(static_cast<int>(methods.size()), static_cast<int>(table.trials()), st_alpha);
        const auto groups = stats::cd_groups(table, cd);
        print_rank_table(table, cd, groups);
        if (!st_svg.empty()) std::ofstream(st_svg) << stats::render_cd_svg(table, cd, groups);
      } else if (*st_tukey) {
        std::vector<std::string> names;
        std::vector<std::vector<double>> groups;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (rows[i].size() != 2) throw UsageError("row " + std::to_string(i + 1) + ": expected group,value");
          if (i == 0 && !is_number(rows[i][1])) continue;  // header
          auto it = std::find(names.begin(), names.end(), rows[i][0]);
          if (it == names.end()) {
            names.push_back(rows[i][0]);
            groups.emplace_back();
            it = names.end() - 1;
          }
          groups[static_cast<std::size_t>(it - names.begin())].push_back(to_double(rows[i][1]));
        }
        std::cout << "group_a,group_b,p_value,different\n";
        for (const auto& c : stats::tukey_hsd(groups, st_alpha)) {
          std::cout << names[c.a] << ',' << names[c.b] << ',' << c.p_value << ',' << (c.different ? "yes" : "no") << '\n';
        }
      } else {
        std::vector<double> values;
        for (std::size_t i = 0; i < rows.size(); ++i) {
          if (i == 0 && !is_number(rows[i].front())) continue;
          values.push_back(to_double(rows[i].front()));
        }
        const auto ci = stats::t_confidence_interval(values, st_level);
        std::cout << "n,mean,half_width\n" << ci.n << ',' << ci.mean << ',' << ci.half_width << '\n';
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRunFailed;
  }
  return kOk;
}
