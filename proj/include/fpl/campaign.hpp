#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fpl/augment.hpp"
#include "fpl/dataio.hpp"
#include "fpl/gbdt.hpp"
#include "fpl/nn/train.hpp"
#include "fpl/stats.hpp"

namespace fpl::campaign {

enum class Method { Supervised, SimclrFinetune, BoostBaseline };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

/// How the labeled pool is split. Folds are drawn from the flows of
/// `pool_partition` (the whole dataset when unset).
struct SplitSpec {
  SplitScheme scheme = SplitScheme::FewshotFolds;
  std::size_t k = 5;
  std::size_t per_class = 100;
  /// Train/validation resplits per fold.
  std::size_t s = 3;
  double train_ratio = 0.8;
  std::vector<double> ratios{0.8, 0.1, 0.1};
  std::optional<std::string> pool_partition;
  std::uint64_t seed = 0;

  /// Number of folds a plan iterates over.
  std::size_t folds() const { return scheme == SplitScheme::Stratified801010 ? 1 : k; }
};

/// An augmentation setting with its report label. Supervised runs use one
/// spec; SimCLR runs use a pair.
struct AugmentationEntry {
  std::string label;
  std::vector<AugmentationSpec> specs;
};

struct Seeds {
  std::uint64_t split = 0;
  std::uint64_t init = 0;
  std::uint64_t aug = 0;
};

struct ExperimentConfig {
  std::size_t index = 0;
  std::string id;
  std::filesystem::path dataset;
  /// Manifest file; when empty the split is rebuilt from `split`.
  std::filesystem::path manifest;
  SplitSpec split;
  std::size_t fold = 0;
  std::size_t val_split = 0;
  Method method = Method::Supervised;
  AugmentationEntry augmentation;
  int resolution = 32;
  double window = kDefaultWindow;
  Normalization normalization = Normalization::Raw;
  bool with_dropout = true;
  int projection_dim = 30;
  nn::TrainConfig train = nn::TrainConfig::supervised();
  nn::TrainConfig pretrain = nn::TrainConfig::simclr();
  nn::TrainConfig finetune = nn::TrainConfig::finetune();
  std::size_t expansion = 10;
  std::size_t finetune_shots = 10;
  gbdt::BoostParams boost;
  gbdt::FeatureSource baseline_features = gbdt::FeatureSource::FlattenedFlowpic;
  int baseline_packets = 10;
  /// "test" (the fold's test ids), "leftover" (pool flows outside the
  /// fold's train and validation ids), or a partition tag.
  std::vector<std::string> test_partitions;
  Seeds seeds;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
/// FNV-1a 64 of the canonical JSON form, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Declarative campaign description (JSON). Expanded as
/// methods x augmentations x resolutions x folds x val splits.
struct GridSpec {
  std::string name = "campaign";
  std::uint64_t seed = 0;
  std::filesystem::path dataset;
  std::filesystem::path manifest;
  std::vector<Method> methods{Method::Supervised};
  std::vector<AugmentationEntry> augmentations;
  std::vector<AugmentationEntry> augmentation_pairs;
  std::vector<int> resolutions{32};
  SplitSpec split;
  /// Overrides every experiment's settings; keys as in config.json.
  nlohmann::json overrides = nlohmann::json::object();
};

/// Throws std::invalid_argument naming the offending entry.
GridSpec grid_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
GridSpec load_grid(const std::filesystem::path& path);

/// Experiment i gets base = derive_seed(campaign seed, i); init and
/// augmentation seeds are derive_seed(base, 1) and derive_seed(base, 2).
/// The split seed is shared so every method sees the same folds.
std::vector<ExperimentConfig> plan_campaign(const GridSpec& grid);

struct PartitionMetrics {
  std::size_t n = 0;
  stats::MetricSet metrics;
};

enum class RunStatus { Completed, Failed };

struct RunRecord {
  std::string id;
  std::size_t index = 0;
  std::string config_hash;
  RunStatus status = RunStatus::Failed;
  std::string failed_stage;
  std::string error;
  std::map<std::string, PartitionMetrics> metrics;
  int epochs = 0;
  double wall_seconds = 0.0;
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  ExperimentConfig config;
};

/// Deterministic metrics document (no timings).
nlohmann::json metrics_json(const RunRecord& record);

/// Dataset and split resolved once and shared by every experiment.
struct SharedInputs {
  std::filesystem::path dataset_path;
  Dataset dataset;
  std::filesystem::path manifest_path;
  SplitManifest manifest;
};

/// Loads the dataset and the manifest (or builds it from `split`).
SharedInputs resolve_inputs(const ExperimentConfig& cfg);

/// Runs one experiment, writing config.json, metrics.json, the model file and
/// log.txt under out_root/<id>. Stage failures are recorded, not thrown.
RunRecord run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_root,
                         const SharedInputs* shared = nullptr);

/// Work-queue execution. Results are ordered by experiment index and do not
/// depend on `workers`. Writes plan.json and records.jsonl under out_root.
std::vector<RunRecord> run_campaign(const std::vector<ExperimentConfig>& plan, std::size_t workers,
                                    const std::filesystem::path& out_root);

/// Reads back the records of a campaign directory.
std::vector<RunRecord> load_records(const std::filesystem::path& out_root);

struct Cell {
  std::string method;
  std::string augmentation;
  int resolution = 0;
  std::string partition;
  std::vector<double> values;
  std::optional<stats::ConfidenceInterval> ci;
};

struct RankAnalysis {
  std::string scope;  // "pooled" or "res<r>"
  std::string method;
  std::string partition;
  stats::RankTable table;
  std::optional<double> cd;
  std::vector<std::vector<std::size_t>> groups;
};

struct ResolutionComparison {
  std::string method;
  std::string partition;
  std::vector<std::string> resolutions;
  std::vector<stats::TukeyComparison> comparisons;
};

struct CampaignReport {
  std::string metric = "accuracy";
  std::size_t planned = 0;
  std::size_t completed = 0;
  std::size_t failed = 0;
  std::vector<Cell> cells;
  std::vector<RankAnalysis> ranks;
  std::vector<ResolutionComparison> resolution_tests;
};

struct SummaryOptions {
  std::string metric = "accuracy";  // or "weighted_f1", "macro_f1"
  double alpha = 0.05;
};

/// Cells keyed by (method, augmentation, resolution, partition) with mean and
/// 95% t-interval; rank/CD analysis across augmentations per method and
/// partition, pooled over resolutions and per resolution, over trials where
/// every augmentation completed; Tukey comparison of resolutions.
CampaignReport summarize(const std::vector<RunRecord>& records, const SummaryOptions& options = {});

std::string render_markdown(const CampaignReport& report);
/// Writes summary.md, cells.csv, ranks_*.csv, cd_*.svg and tukey_*.csv.
void write_report(const CampaignReport& report, const std::filesystem::path& dir);

}  // namespace fpl::campaign
