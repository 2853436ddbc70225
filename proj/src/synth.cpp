#include "fpl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fpl/rng.hpp"

namespace fpl {

Dataset make_synthetic_dataset(const SyntheticOptions& opts) {
  if (opts.classes < 2) throw std::invalid_argument("synthetic data needs at least 2 classes");
  if (opts.min_packets < 1 || opts.max_packets < opts.min_packets) {
    throw std::invalid_argument("bad packet count range");
  }
  Rng rng(opts.seed);
  const int band = kMaxPacketSize / opts.classes;
  std::vector<FlowRecord> records;
  records.reserve(static_cast<std::size_t>(opts.classes * opts.flows_per_class));
  for (int c = 0; c < opts.classes; ++c) {
    const double period = 0.5 + 0.6 * c;
    const int size_lo = c * band + band / 30 + 1;
    const int size_hi = (c + 1) * band - band / 5;
    for (int i = 0; i < opts.flows_per_class; ++i) {
      const int n = opts.min_packets +
                    static_cast<int>(rng.below(static_cast<std::uint64_t>(opts.max_packets - opts.min_packets + 1)));
      FlowRecord r;
      r.flow_id = opts.id_prefix + std::to_string(c) + "-" + std::to_string(i);
      r.label = "class" + std::to_string(c);
      r.partition = opts.partition;
      auto& s = r.series;
      s.directions.emplace();
      double t = rng.uniform(0.0, 0.5);
      while (static_cast<int>(s.size()) < n) {
        const int burst = 3 + static_cast<int>(rng.below(4));
        for (int b = 0; b < burst && static_cast<int>(s.size()) < n; ++b) {
          s.timestamps.push_back(t + 0.005 * b);
          const int size = size_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(size_hi - size_lo + 1)));
          s.sizes.push_back(std::clamp(size + opts.size_shift, 1, kMaxPacketSize));
          s.directions->push_back(rng.bernoulli(0.5) ? 1 : -1);
        }
        t += period * rng.uniform(0.8, 1.2);
        if (t > opts.duration) break;
      }
      const double t0 = s.timestamps.front();
      for (auto& ts : s.timestamps) ts -= t0;
      records.push_back(std::move(r));
    }
  }
  return Dataset(std::move(records));
}

}  // namespace fpl
