#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace fpl {

/// Largest packet size kept at ingestion; larger sizes are clipped.
inline constexpr int kMaxPacketSize = 1500;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Per-flow packet time series. Timestamps are seconds relative to the first
/// packet; directions are +1 upstream / -1 downstream when present.
struct PacketSeries {
  std::vector<double> timestamps;
  std::vector<int> sizes;
  std::optional<std::vector<int>> directions;

  std::size_t size() const noexcept { return timestamps.size(); }
  bool empty() const noexcept { return timestamps.empty(); }

  /// Throws DataError when an invariant is violated.
  void validate() const;

  bool operator==(const PacketSeries&) const = default;
};

struct FlowRecord {
  std::string flow_id;
  std::string label;
  std::optional<std::string> partition;
  PacketSeries series;

  bool operator==(const FlowRecord&) const = default;
};

/// Ordered flow collection with a label -> record-index map.
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::vector<FlowRecord> records);

  const std::vector<FlowRecord>& records() const noexcept { return records_; }
  const std::map<std::string, std::vector<std::size_t>>& class_index() const noexcept {
    return class_index_;
  }
  std::vector<std::string> labels() const;
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }

  const FlowRecord& at(std::size_t i) const { return records_.at(i); }
  /// Record index for a flow id; throws DataError for unknown ids.
  std::size_t index_of(const std::string& flow_id) const;
  bool contains(const std::string& flow_id) const { return by_id_.contains(flow_id); }

  /// Total number of sizes clipped to kMaxPacketSize while loading.
  std::size_t clipped_sizes = 0;

  /// Records whose partition tag equals `partition`.
  Dataset partition(const std::string& partition) const;
  /// Records with the given ids, in the order given.
  Dataset subset(const std::vector<std::string>& ids) const;

 private:
  std::vector<FlowRecord> records_;
  std::map<std::string, std::vector<std::size_t>> class_index_;
  std::map<std::string, std::size_t> by_id_;
};

/// Parses one JSON Lines record. Applies clipping and rebasing; `clipped`
/// receives the number of clipped sizes.
FlowRecord parse_flow_line(const std::string& line, std::size_t& clipped);
std::string format_flow_line(const FlowRecord& record);

Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Keeps flows with strictly more than `n` packets.
Dataset filter_min_packets(const Dataset& dataset, std::size_t n);
/// Drops classes with fewer than `m` flows.
Dataset filter_min_class_size(const Dataset& dataset, std::size_t m);

enum class SplitScheme { FewshotFolds, TrainVal, Stratified801010 };

std::string to_string(SplitScheme scheme);
SplitScheme split_scheme_from_string(const std::string& name);

struct Fold {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;

  bool operator==(const Fold&) const = default;
};

struct SplitParams {
  std::size_t per_class = 0;
  std::size_t k = 0;
  std::size_t s = 0;
  std::vector<double> ratios;

  bool operator==(const SplitParams&) const = default;
};

struct SplitManifest {
  SplitScheme scheme = SplitScheme::FewshotFolds;
  std::uint64_t seed = 0;
  std::vector<Fold> folds;
  SplitParams params;

  /// Throws DataError if any id is missing from `dataset` or if a fold's
  /// parts overlap.
  void validate_against(const Dataset& dataset) const;

  bool operator==(const SplitManifest&) const = default;
};

/// Rounds half up; used for every split size.
std::size_t round_half_up(double x);

SplitManifest make_fewshot_folds(const Dataset& dataset, std::size_t k, std::size_t per_class,
                                 std::uint64_t seed);

struct TrainValSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

/// `s` independent per-class random splits of `ids` with round(ratio*N_c)
/// training flows per class.
std::vector<TrainValSplit> make_train_val(const Dataset& dataset,
                                          const std::vector<std::string>& ids, std::size_t s,
                                          double ratio, std::uint64_t seed);

/// Manifest form of make_train_val (scheme train_val, one fold per split).
SplitManifest make_train_val_manifest(const Dataset& dataset, const std::vector<std::string>& ids,
                                      std::size_t s, double ratio, std::uint64_t seed);

SplitManifest make_stratified_split(const Dataset& dataset, const std::vector<double>& ratios,
                                    std::uint64_t seed);

void save_manifest(const SplitManifest& manifest, const std::filesystem::path& path);
SplitManifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const SplitManifest& manifest);
SplitManifest manifest_from_json(const std::string& text);

}  // namespace fpl
