#include <doctest.h>

#include <fstream>
#include <numeric>

#include "fpl/flowpic.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace fpl;

namespace {

PacketSeries series(std::vector<double> t, std::vector<int> s) { return {std::move(t), std::move(s), std::nullopt}; }

}  // namespace

TEST_CASE("empty series gives a zero matrix") {
  const auto fp = build_flowpic({}, 32);
  CHECK(fp.counts.rows() == 32);
  CHECK(fp.counts.cols() == 32);
  CHECK(fp.total() == 0);
}

TEST_CASE("single packets land in the expected bins") {
  CHECK(build_flowpic(series({0.0}, {1}), 32).counts(0, 0) == 1);
  CHECK(build_flowpic(series({0.0}, {1}), 32).total() == 1);
  CHECK(build_flowpic(series({0.0}, {1500}), 32).counts(31, 0) == 1);
  CHECK(build_flowpic(series({0.0}, {1499}), 32).counts(31, 0) == 1);
  CHECK(build_flowpic(series({0.0}, {46}), 32).counts(0, 0) == 1);
  CHECK(build_flowpic(series({0.0}, {47}), 32).counts(1, 0) == 1);
  // 468.75 ms bins for a 15 s window
  const auto fp = build_flowpic(series({0.0, 0.46874, 0.46875, 14.99}, {100, 100, 100, 100}), 32);
  CHECK(fp.counts(2, 0) == 2);
  CHECK(fp.counts(2, 1) == 1);
  CHECK(fp.counts(2, 31) == 1);
}

TEST_CASE("the window is half open") {
  const auto fp = build_flowpic(series({0.0, 15.0, 20.0}, {100, 100, 100}), 32, 15.0);
  CHECK(fp.total() == 1);
  CHECK(build_flowpic(series({0.0, 5.0}, {10, 10}), 8, 5.0).total() == 1);
}

TEST_CASE("matches the brute-force binning oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const auto s = testing::random_series(rng, 1 + rng.below(120), 25.0);
    for (int res : {2, 7, 32, 64}) {
      const auto fp = build_flowpic(s, res, 15.0);
      CHECK(fp.counts.cast<int>() == oracle::flowpic(s, res, 15.0));
      std::int64_t in_window = 0;
      for (double t : s.timestamps) in_window += t < 15.0;
      CHECK(fp.total() == in_window);
    }
  }
}

TEST_CASE("64x64 block sums equal the 32x32 flowpic") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = testing::random_series(rng, 200, 16.0);
    const auto fine = build_flowpic(s, 64);
    const auto coarse = build_flowpic(s, 32);
    CountMatrix summed(32, 32);
    for (int r = 0; r < 32; ++r) {
      for (int c = 0; c < 32; ++c) summed(r, c) = fine.counts.block(2 * r, 2 * c, 2, 2).sum();
    }
    CHECK(summed == coarse.counts);
  }
}

TEST_CASE("packet order does not matter") {
  Rng rng(5);
  auto s = testing::random_series(rng, 80, 15.0);
  const auto before = build_flowpic(s, 32);
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span(order));
  PacketSeries shuffled;
  for (auto i : order) {
    shuffled.timestamps.push_back(s.timestamps[i]);
    shuffled.sizes.push_back(s.sizes[i]);
  }
  CHECK(build_flowpic(shuffled, 32).counts == before.counts);
}

TEST_CASE("model input normalization") {
  Flowpic fp{3, 15.0, CountMatrix::Zero(3, 3)};
  CHECK(to_model_input(fp, Normalization::UnitMax).isZero());
  fp.counts(0, 0) = 0;
  fp.counts(0, 1) = 2;
  fp.counts(0, 2) = 4;
  const auto unit = to_model_input(fp, Normalization::UnitMax);
  CHECK(unit(0, 0) == 0.0f);
  CHECK(unit(0, 1) == 0.5f);
  CHECK(unit(0, 2) == 1.0f);
  const auto raw = to_model_input<double>(fp, Normalization::Raw);
  CHECK(raw == fp.counts.cast<double>());
  CHECK(normalization_from_string("unit_max") == Normalization::UnitMax);
  CHECK_THROWS_AS(normalization_from_string("log"), std::invalid_argument);
}

TEST_CASE("invalid parameters are rejected") {
  CHECK_THROWS_AS(build_flowpic({}, 1), std::invalid_argument);
  CHECK_THROWS_AS(build_flowpic({}, 32, 0.0), std::invalid_argument);
}

TEST_CASE("debug exports") {
  testing::TempDir dir("fpexport");
  const auto fp = build_flowpic(series({0.0, 1.0, 1.0}, {100, 1500, 1500}), 4);
  write_flowpic_csv(fp, dir / "fp.csv");
  write_flowpic_pgm(fp, dir / "fp.pgm");
  std::ifstream csv(dir / "fp.csv");
  std::string first;
  std::getline(csv, first);
  CHECK(first == "1,0,0,0");
  std::ifstream pgm(dir / "fp.pgm", std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  pgm >> magic >> w >> h >> maxval;
  pgm.get();
  CHECK(magic == "P5");
  CHECK(w == 4);
  CHECK(h == 4);
  CHECK(maxval == 255);
  std::vector<unsigned char> px(16);
  pgm.read(reinterpret_cast<char*>(px.data()), 16);
  CHECK(px[3 * 4 + 0] == 0);    // row 3, col 0 holds the maximum: black
  CHECK(px[1] == 255);           // empty cell: white
}
