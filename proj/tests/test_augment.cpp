#include <doctest.h>

#include <cmath>

#include "fpl/augment.hpp"
#include "helpers.hpp"

using namespace fpl;

namespace {

ImageF random_image(Rng& rng, int n = 32) {
  ImageF m(n, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.bernoulli(0.2) ? static_cast<float>(rng.below(9)) : 0.0f;
  return m;
}

const std::vector<AugmentationSpec> kTimeseriesSpecs{ChangeRtt{}, TimeShift{}, PacketLoss{0.3}, NoAug{}};

}  // namespace

TEST_CASE("ChangeRtt scales timestamps") {
  Rng rng(1);
  PacketSeries s{{0.0, 10.0, 14.0}, {10, 20, 30}, std::nullopt};
  CHECK(apply_timeseries(s, ChangeRtt{1.0, 1.0}, rng) == s);
  const auto half = apply_timeseries(s, ChangeRtt{0.5, 0.5}, rng);
  CHECK(half.timestamps == std::vector<double>{0.0, 5.0, 7.0});
  CHECK(half.sizes == s.sizes);
}

TEST_CASE("TimeShift offsets and drops packets before zero") {
  Rng rng(2);
  PacketSeries s{{0.0, 0.5, 2.0}, {10, 20, 30}, std::vector<int>{1, -1, 1}};
  CHECK(apply_timeseries(s, TimeShift{0.0, 0.0}, rng) == s);
  const auto back = shift_time(s, -0.75);
  CHECK(back.timestamps == std::vector<double>{1.25});
  CHECK(back.sizes == std::vector<int>{30});
  CHECK(back.directions == std::vector<int>{1});
  const auto fwd = shift_time(s, 1.0);
  CHECK(fwd.timestamps == std::vector<double>{1.0, 1.5, 3.0});
}

TEST_CASE("PacketLoss extremes") {
  Rng rng(3);
  Rng gen(4);
  const auto s = testing::random_series(gen, 100, 10.0);
  CHECK(apply_timeseries(s, PacketLoss{1.0}, rng).empty());
  CHECK(apply_timeseries(s, PacketLoss{0.0}, rng) == s);
}

TEST_CASE("PacketLoss keep rate is binomial") {
  for (double p : {0.01, 0.5}) {
    Rng rng(static_cast<std::uint64_t>(p * 1000));
    Rng gen(8);
    const auto s = testing::random_series(gen, 10000, 15.0);
    const auto kept = static_cast<double>(apply_timeseries(s, PacketLoss{p}, rng).size());
    const double mean = (1.0 - p) * 1e4;
    const double sigma = std::sqrt(1e4 * p * (1.0 - p));
    CHECK(std::abs(kept - mean) <= 3.0 * sigma);
  }
}

TEST_CASE("time-series augmentations never alter sizes and keep order") {
  Rng gen(12);
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = testing::random_series(gen, 1 + gen.below(60), 12.0);
    for (const auto& spec : kTimeseriesSpecs) {
      const auto out = apply_timeseries(s, spec, rng);
      CHECK(std::is_sorted(out.timestamps.begin(), out.timestamps.end()));
      // every output size is an input size at a position that survives in order
      std::size_t j = 0;
      for (int size : out.sizes) {
        while (j < s.sizes.size() && s.sizes[j] != size) ++j;
        CHECK(j < s.sizes.size());
        ++j;
      }
    }
  }
}

TEST_CASE("ChangeRtt with alpha <= 1 keeps in-window packets") {
  Rng gen(21);
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = testing::random_series(gen, 50, 14.9);
    const auto out = apply_timeseries(s, ChangeRtt{0.5, 1.0}, rng);
    CHECK(build_flowpic(out).total() == build_flowpic(s).total());
  }
}

TEST_CASE("image augmentations") {
  Rng rng(30);
  const auto img = random_image(rng);
  CHECK(flip_horizontal(flip_horizontal(img)) == img);
  CHECK(apply_image(apply_image(img, HorizontalFlip{}, rng), HorizontalFlip{}, rng) == img);
  CHECK(apply_image(img, Rotate{0.0}, rng) == img);
  CHECK(rotate_image(img, 0.0) == img);
  CHECK(jitter_colors(img, 1.0, 0.0) == img);
  CHECK(apply_image(img, ColorJitter{0.0, 0.0}, rng) == img);
  CHECK(apply_image(img, NoAug{}, rng) == img);

  ImageF one = ImageF::Zero(32, 32);
  one(5, 0) = 1.0f;
  const auto flipped = flip_horizontal(one);
  CHECK(flipped(5, 31) == 1.0f);
  CHECK(flipped.sum() == 1.0f);
}

TEST_CASE("rotation by 90 degrees on an odd grid is a permutation") {
  ImageF m(5, 5);
  for (Eigen::Index i = 0; i < 25; ++i) m.data()[i] = static_cast<float>(i);
  const auto r = rotate_image(m, 90.0);
  CHECK(r.sum() == m.sum());
  CHECK(r(2, 2) == m(2, 2));
  CHECK(rotate_image(rotate_image(rotate_image(r, 90.0), 90.0), 90.0) == m);
}

TEST_CASE("small rotations keep values and fill with zeros") {
  Rng rng(31);
  ImageF ones = ImageF::Ones(32, 32);
  const auto r = rotate_image(ones, 10.0);
  CHECK(r.minCoeff() == 0.0f);
  CHECK(r.maxCoeff() == 1.0f);
  CHECK(r(16, 16) == 1.0f);
}

TEST_CASE("color jitter clamps at zero and scales with the image max") {
  ImageF m(1, 3);
  m << 0.0f, 2.0f, 4.0f;
  const auto j = jitter_colors(m, 1.5, -0.25);
  CHECK(j(0, 0) == 0.0f);   // 0 - 1 clamped
  CHECK(j(0, 1) == 2.0f);   // 3 - 1
  CHECK(j(0, 2) == 5.0f);   // 6 - 1
}

TEST_CASE("augmentations reject the wrong domain") {
  Rng rng(0);
  CHECK_THROWS_AS(apply_timeseries({}, Rotate{}, rng), std::invalid_argument);
  CHECK_THROWS_AS(apply_image(ImageF::Zero(2, 2), ChangeRtt{}, rng), std::invalid_argument);
  CHECK_THROWS_AS(validate(PacketLoss{1.5}), std::invalid_argument);
  CHECK_THROWS_AS(validate(ChangeRtt{0.0, 1.0}), std::invalid_argument);
  CHECK_THROWS_AS(validate(ChangeRtt{1.5, 0.5}), std::invalid_argument);
}

TEST_CASE("views") {
  Rng gen(40);
  const auto s = testing::random_series(gen, 60, 14.0);
  const FlowpicOptions opts;
  const ImageF plain = build_flowpic(s).counts.cast<float>();
  Rng rng(41);
  auto [a, b] = make_views(s, {NoAug{}, NoAug{}}, opts, rng);
  CHECK(a == plain);
  CHECK(b == plain);
  auto [c, d] = make_views(s, {ChangeRtt{1.0, 1.0}, TimeShift{0.0, 0.0}}, opts, rng);
  CHECK(c == plain);
  CHECK(d == plain);

  Rng r1(7), r2(7);
  const auto v1 = make_views(s, {ChangeRtt{}, TimeShift{}}, opts, r1);
  const auto v2 = make_views(s, {ChangeRtt{}, TimeShift{}}, opts, r2);
  CHECK(v1.first == v2.first);
  CHECK(v1.second == v2.second);
  CHECK_FALSE(v1.first == v1.second);
}

TEST_CASE("expanding a training set") {
  Rng gen(50);
  std::vector<PacketSeries> samples;
  for (int i = 0; i < 100; ++i) samples.push_back(testing::random_series(gen, 30, 10.0));
  Rng rng(51);
  const FlowpicOptions opts;
  CHECK(expand_training_set(samples, ChangeRtt{}, 10, opts, rng).size() == 1000);

  const auto copies = expand_training_set({samples[0]}, NoAug{}, 3, opts, rng);
  REQUIRE(copies.size() == 3);
  CHECK(copies[0] == copies[1]);
  CHECK(copies[1] == copies[2]);

  const auto same = expand_training_set({samples[0], samples[1]}, Rotate{0.0}, 1, opts, rng);
  CHECK(same[0] == build_flowpic(samples[0]).counts.cast<float>());
  CHECK(same[1] == build_flowpic(samples[1]).counts.cast<float>());

  const auto varied = expand_training_set({samples[0]}, Rotate{}, 4, opts, rng);
  CHECK_FALSE(varied[0] == varied[1]);
  CHECK_THROWS_AS(expand_training_set(samples, NoAug{}, 0, opts, rng), std::invalid_argument);
}

TEST_CASE("spec serialization") {
  for (const auto& spec : default_augmentations()) {
    CHECK(kind_name(augmentation_from_json(to_json(spec))) == kind_name(spec));
  }
  const auto rot = augmentation_from_json(nlohmann::json{{"kind", "rotate"}, {"max_degrees", 20.0}});
  CHECK(std::get<Rotate>(rot).max_degrees == 20.0);
  CHECK(std::get<PacketLoss>(augmentation_from_json("packet_loss")).p == 0.01);
  CHECK_THROWS_AS(augmentation_from_name("mixup"), std::invalid_argument);
  CHECK(default_augmentations().size() == 7);
}
