#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

#include "fpl/dataio.hpp"

namespace fpl {

using CountMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Image = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using ImageF = Image<float>;

inline constexpr double kDefaultWindow = 15.0;

/// Time x packet-size histogram of a flow. Rows are packet-size bins (row 0
/// holds the smallest sizes), columns are time bins (column 0 the earliest).
struct Flowpic {
  int resolution = 32;
  double window = kDefaultWindow;
  CountMatrix counts;

  std::int64_t total() const { return counts.cast<std::int64_t>().sum(); }
};

/// Bins packets with 0 <= t < window. A packet (t, s) lands in row
/// min(floor(s * res / 1500), res - 1) and column floor(t * res / window).
Flowpic build_flowpic(const PacketSeries& series, int resolution = 32,
                      double window = kDefaultWindow);

enum class Normalization { Raw, UnitMax };

std::string to_string(Normalization n);
Normalization normalization_from_string(const std::string& name);

template <typename Scalar = float>
Image<Scalar> to_model_input(const Flowpic& fp, Normalization norm = Normalization::Raw) {
  Image<Scalar> out = fp.counts.template cast<Scalar>();
  if (norm == Normalization::UnitMax) {
    const auto peak = std::max<std::int32_t>(fp.counts.size() ? fp.counts.maxCoeff() : 0, 1);
    out /= static_cast<Scalar>(peak);
  }
  return out;
}

/// Debug exports: comma-separated counts, and a log-scaled 8-bit PGM.
void write_flowpic_csv(const Flowpic& fp, const std::filesystem::path& path);
void write_flowpic_pgm(const Flowpic& fp, const std::filesystem::path& path);

}  // namespace fpl
