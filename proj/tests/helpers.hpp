#pragma once

#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "fpl/dataio.hpp"
#include "fpl/rng.hpp"

namespace testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("fpl_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

/// A flow of `n` evenly spaced packets of size `size`.
inline fpl::FlowRecord flow(const std::string& id, const std::string& label, std::size_t n, int size = 100,
                            double spacing = 0.1) {
  fpl::FlowRecord r;
  r.flow_id = id;
  r.label = label;
  for (std::size_t i = 0; i < n; ++i) {
    r.series.timestamps.push_back(spacing * static_cast<double>(i));
    r.series.sizes.push_back(size);
  }
  return r;
}

/// `count` flows per class, ids "<label>-<i>".
inline fpl::Dataset classes(const std::vector<std::pair<std::string, std::size_t>>& spec, std::size_t packets = 12) {
  std::vector<fpl::FlowRecord> out;
  for (const auto& [label, count] : spec) {
    for (std::size_t i = 0; i < count; ++i) out.push_back(flow(label + "-" + std::to_string(i), label, packets));
  }
  return fpl::Dataset(std::move(out));
}

/// Random series: sorted U[0, horizon) timestamps starting at 0, sizes U{1..1500}.
inline fpl::PacketSeries random_series(fpl::Rng& rng, std::size_t n, double horizon) {
  fpl::PacketSeries s;
  for (std::size_t i = 0; i < n; ++i) s.timestamps.push_back(i == 0 ? 0.0 : rng.uniform(0.0, horizon));
  std::sort(s.timestamps.begin(), s.timestamps.end());
  for (std::size_t i = 0; i < n; ++i) s.sizes.push_back(1 + static_cast<int>(rng.below(1500)));
  return s;
}

}  // namespace testing
