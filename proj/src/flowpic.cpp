#include "fpl/flowpic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace fpl {

Flowpic build_flowpic(const PacketSeries& series, int resolution, double window) {
  if (resolution < 2) throw std::invalid_argument("flowpic resolution must be >= 2");
  if (!(window > 0.0)) throw std::invalid_argument("flowpic window must be positive");
  Flowpic fp{resolution, window, CountMatrix::Zero(resolution, resolution)};
  const double time_scale = static_cast<double>(resolution) / window;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double t = series.timestamps[i];
    if (t < 0.0 || t >= window) continue;
    const auto col = std::min(static_cast<int>(std::floor(t * time_scale)), resolution - 1);
    const auto row = std::min(
        static_cast<int>(static_cast<std::int64_t>(series.sizes[i]) * resolution / kMaxPacketSize),
        resolution - 1);
    ++fp.counts(row, col);
  }
  return fp;
}

std::string to_string(Normalization n) { return n == Normalization::Raw ? "raw" : "unit_max"; }

Normalization normalization_from_string(const std::string& name) {
  if (name == "raw") return Normalization::Raw;
  if (name == "unit_max") return Normalization::UnitMax;
  throw std::invalid_argument("unknown normalization '" + name + "'");
}

void write_flowpic_csv(const Flowpic& fp, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  for (Eigen::Index r = 0; r < fp.counts.rows(); ++r) {
    for (Eigen::Index c = 0; c < fp.counts.cols(); ++c) {
      if (c) out << ',';
      out << fp.counts(r, c);
    }
    out << '\n';
  }
}

void write_flowpic_pgm(const Flowpic& fp, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << "P5\n" << fp.resolution << ' ' << fp.resolution << "\n255\n";
  const double peak = std::log1p(std::max(fp.counts.maxCoeff(), 1));
  for (Eigen::Index r = 0; r < fp.counts.rows(); ++r) {
    for (Eigen::Index c = 0; c < fp.counts.cols(); ++c) {
      // dark = many packets
      const double v = std::log1p(fp.counts(r, c)) / peak;
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * (1.0 - v)))));
    }
  }
}

}  // namespace fpl
