#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "fpl/dataio.hpp"

namespace fpl {

/// Parameters of the synthetic flow generator. Class c emits packets with
/// sizes in its own band of width 1500 / classes and in periodic bursts whose
/// period grows with c, so classes occupy disjoint flowpic rows.
struct SyntheticOptions {
  int classes = 5;
  int flows_per_class = 500;
  int min_packets = 20;
  int max_packets = 80;
  double duration = 12.0;
  /// Added to every packet size before clipping; models a partition shift.
  int size_shift = 0;
  std::optional<std::string> partition;
  std::string id_prefix = "f";
  std::uint64_t seed = 0;
};

Dataset make_synthetic_dataset(const SyntheticOptions& opts);

}  // namespace fpl
