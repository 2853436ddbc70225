#include <doctest.h>

#include <cmath>

#include "fpl/gbdt.hpp"
#include "fpl/synth.hpp"
#include "helpers.hpp"

using namespace fpl;
using namespace fpl::gbdt;

namespace {

struct Stump {
  int feature = -1;
  double threshold = 0.0;
  double left = 0.0, right = 0.0;
};

/// Exhaustive best single split of one class's first-round gradients.
Stump best_stump(const Eigen::MatrixXd& x, const std::vector<int>& y, int k, int classes, double lambda, double lr) {
  const double p = 1.0 / classes;
  const auto n = x.rows();
  auto score = [&](double g, double h) { return g * g / (h + lambda); };
  Stump best;
  double best_gain = 1e-12;
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    std::vector<double> u(x.col(f).data(), x.col(f).data() + n);
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    for (std::size_t b = 0; b + 1 < u.size(); ++b) {
      const double thr = 0.5 * (u[b] + u[b + 1]);
      double gl = 0, hl = 0, gr = 0, hr = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double g = p - (y[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0);
        const double h = p * (1 - p);
        (x(i, f) < thr ? gl : gr) += g;
        (x(i, f) < thr ? hl : hr) += h;
      }
      const double gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(gl + gr, hl + hr));
      if (gain > best_gain) {
        best_gain = gain;
        best = {static_cast<int>(f), thr, -lr * gl / (hl + lambda), -lr * gr / (hr + lambda)};
      }
    }
  }
  return best;
}

/// Three Gaussian blobs in 2D.
void blobs(Rng& rng, std::size_t per_class, Eigen::MatrixXd& x, std::vector<int>& y) {
  x.resize(static_cast<Eigen::Index>(3 * per_class), 2);
  y.clear();
  const double cx[3] = {0.0, 4.0, 0.0}, cy[3] = {0.0, 0.0, 4.0};
  for (std::size_t i = 0; i < 3 * per_class; ++i) {
    const int c = static_cast<int>(i % 3);
    const auto r = static_cast<Eigen::Index>(i);
    x(r, 0) = cx[c] + rng.uniform(-1.5, 1.5);
    x(r, 1) = cy[c] + rng.uniform(-1.5, 1.5);
    y.push_back(c);
  }
}

}  // namespace

TEST_CASE("tree traversal") {
  Tree t;
  t.nodes = {{0, 1.5, 1, 2, 0.0}, {-1, 0.0, -1, -1, -1.0}, {1, 0.0, 3, 4, 0.0}, {-1, 0, -1, -1, 2.0},
             {-1, 0, -1, -1, 3.0}};
  Eigen::RowVector2d a(1.0, 9.0), b(1.5, -1.0), c(2.0, 0.0);
  CHECK(t.predict(a) == -1.0);
  CHECK(t.predict(b) == 2.0);  // equal to the threshold goes right
  CHECK(t.predict(c) == 3.0);
  CHECK(t.leaf_index(c) == 4);
  CHECK(t.depth() == 2);
}

TEST_CASE("first round matches an exhaustive stump search") {
  Rng rng(3);
  Eigen::MatrixXd x(30, 3);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < 30; ++i) {
    for (Eigen::Index f = 0; f < 3; ++f) x(i, f) = rng.uniform(-1, 1);
    y.push_back(static_cast<int>(i % 3));
    x(i, 1) += 0.8 * y.back();
  }
  BoostParams p;
  p.n_rounds = 1;
  p.max_depth = 1;
  p.min_child_weight = 0.0;
  const auto model = fit(x, y, p);
  REQUIRE(model.rounds.size() == 1);
  REQUIRE(model.train_loss[1] < model.train_loss[0]);  // no step halving
  for (int k = 0; k < 3; ++k) {
    const auto expect = best_stump(x, y, k, 3, p.lambda, p.learning_rate);
    const auto& t = model.rounds[0][static_cast<std::size_t>(k)];
    REQUIRE(t.nodes.size() == 3);
    CHECK(t.nodes[0].feature == expect.feature);
    CHECK(t.nodes[0].threshold == doctest::Approx(expect.threshold));
    CHECK(t.nodes[static_cast<std::size_t>(t.nodes[0].left)].weight == doctest::Approx(expect.left));
    CHECK(t.nodes[static_cast<std::size_t>(t.nodes[0].right)].weight == doctest::Approx(expect.right));
  }
}

TEST_CASE("fits separable blobs") {
  Rng rng(4);
  Eigen::MatrixXd x, xt;
  std::vector<int> y, yt;
  blobs(rng, 60, x, y);
  blobs(rng, 60, xt, yt);
  BoostParams p;
  p.n_rounds = 30;
  const auto model = fit(x, y, p);
  CHECK(predict_labels(model, x) == y);
  const auto pred = predict_labels(model, xt);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < yt.size(); ++i) ok += pred[i] == yt[i];
  CHECK(ok >= 0.95 * static_cast<double>(yt.size()));
  for (std::size_t r = 1; r < model.train_loss.size(); ++r) CHECK(model.train_loss[r] <= model.train_loss[r - 1]);
  CHECK(log_loss(model, x, y) == doctest::Approx(model.train_loss.back()).epsilon(1e-9));
  for (const auto& round : model.rounds) {
    for (const auto& t : round) CHECK(t.depth() <= p.max_depth);
  }
  const auto pr = predict(model, xt.row(0));
  CHECK(pr.probabilities.sum() == doctest::Approx(1.0));
  CHECK(pr.label == pred[0]);
}

TEST_CASE("depth limit and determinism") {
  Rng rng(5);
  Eigen::MatrixXd x;
  std::vector<int> y;
  blobs(rng, 40, x, y);
  BoostParams p;
  p.n_rounds = 5;
  p.max_depth = 2;
  const auto a = fit(x, y, p), b = fit(x, y, p);
  CHECK(a == b);
  for (const auto& round : a.rounds) {
    for (const auto& t : round) CHECK(t.depth() <= 2);
  }
}

TEST_CASE("model json round trip") {
  testing::TempDir dir("gbdt");
  Rng rng(6);
  Eigen::MatrixXd x;
  std::vector<int> y;
  blobs(rng, 20, x, y);
  BoostParams p;
  p.n_rounds = 4;
  const auto m = fit(x, y, p);
  save_model(m, dir / "m.json");
  const auto back = load_model(dir / "m.json");
  CHECK(back == m);
  CHECK(predict_labels(back, x) == predict_labels(m, x));
  CHECK(predict(back, x.row(3)).probabilities.isApprox(predict(m, x.row(3)).probabilities));
  CHECK_THROWS_AS(predict(m, Eigen::RowVector3d(1, 2, 3)), std::invalid_argument);
}

TEST_CASE("invalid inputs") {
  Eigen::MatrixXd x(3, 1);
  x << 1, 2, 3;
  CHECK_THROWS_AS(fit(x, {0, 0, 0}, {}), std::invalid_argument);
  CHECK_THROWS_AS(fit(x, {0, 1}, {}), std::invalid_argument);
  CHECK_THROWS_AS(fit(x, {0, -1, 1}, {}), std::invalid_argument);
  BoostParams bad;
  bad.max_depth = 0;
  CHECK_THROWS_AS(fit(x, {0, 1, 1}, bad), std::invalid_argument);
  bad = {};
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("feature extraction") {
  FlowRecord f;
  f.flow_id = "x";
  f.label = "a";
  f.series = {{0.0, 0.5, 2.0, 14.9}, {100, 1500, 40, 800}, std::vector<int>{1, -1, 1, -1}};
  SUBCASE("flattened flowpic is row-major counts") {
    const auto fv = extract_features(f, {});
    REQUIRE(fv.values.size() == 1024);
    const auto fp = build_flowpic(f.series, 32);
    for (int r = 0; r < 32; ++r) {
      for (int c = 0; c < 32; ++c) CHECK(fv.values[r * 32 + c] == fp.counts(r, c));
    }
    CHECK(fv.values.sum() == 4);
  }
  SUBCASE("early time series is zero padded") {
    const auto spec = feature_spec_from_string("timeseries:6");
    const auto fv = extract_features(f, spec);
    REQUIRE(fv.values.size() == 18);
    Eigen::VectorXd expect(18);
    expect << 100, 1500, 40, 800, 0, 0, 1, -1, 1, -1, 0, 0, 0, 0.5, 1.5, 12.9, 0, 0;
    CHECK(fv.values.isApprox(expect));
  }
  SUBCASE("feature matrix") {
    const auto d = testing::classes({{"a", 2}, {"b", 3}});
    const auto m = feature_matrix(d, feature_spec_from_string("flowpic:8"));
    CHECK(m.rows() == 5);
    CHECK(m.cols() == 64);
  }
  SUBCASE("spec parsing") {
    CHECK(feature_spec_from_string("flowpic").resolution == 32);
    CHECK(feature_spec_from_string("flowpic:64").length() == 4096);
    CHECK(feature_spec_from_string("timeseries").length() == 30);
    CHECK(to_string(feature_spec_from_string("timeseries:20")) == "timeseries:20");
    CHECK_THROWS_AS(feature_spec_from_string("pixels"), std::invalid_argument);
    CHECK_THROWS_AS(feature_spec_from_string("flowpic:1"), std::invalid_argument);
  }
}

TEST_CASE("synthetic classes are learnable from flowpics") {
  SyntheticOptions so;
  so.flows_per_class = 30;
  so.seed = 8;
  const auto d = make_synthetic_dataset(so);
  const auto x = feature_matrix(d, {});
  const auto names = d.labels();
  std::vector<int> y;
  for (const auto& r : d.records()) y.push_back(static_cast<int>(std::find(names.begin(), names.end(), r.label) - names.begin()));
  BoostParams p;
  p.n_rounds = 10;
  const auto m = fit(x, y, p);
  CHECK(predict_labels(m, x) == y);
}

TEST_CASE("worked examples") {
  SUBCASE("one threshold separates two classes after one round") {
    Eigen::MatrixXd x(8, 1);
    x << 0.1, 0.4, 0.2, 0.3, 2.0, 2.5, 2.2, 3.1;
    const std::vector<int> y{0, 0, 0, 0, 1, 1, 1, 1};
    BoostParams p;
    p.n_rounds = 1;
    const auto m = fit(x, y, p);
    CHECK(predict_labels(m, x) == y);
    CHECK(m.rounds[0][0].nodes[0].threshold == doctest::Approx(1.2));
  }
  SUBCASE("zero rounds predict uniform probabilities") {
    Eigen::MatrixXd x(3, 1);
    x << 1, 2, 3;
    BoostParams p;
    p.n_rounds = 0;
    const auto m = fit(x, {0, 1, 2}, p);
    CHECK(predict(m, x.row(0)).probabilities.isApprox(Eigen::Vector3d::Constant(1.0 / 3.0)));
  }
  SUBCASE("short flows are zero padded") {
    FlowRecord f;
    f.series = {{0.0, 0.1, 0.3}, {60, 1500, 80}, std::vector<int>{1, 1, -1}};
    const auto v = extract_features(f, feature_spec_from_string("timeseries")).values;
    REQUIRE(v.size() == 30);
    CHECK(v.segment(3, 7).isZero());
    CHECK(v.segment(13, 7).isZero());
    CHECK(v.segment(23, 7).isZero());
    FlowRecord none;
    none.series = {{20.0}, {100}, std::nullopt};  // outside the window
    const auto z = extract_features(none, {}).values;
    CHECK(z.size() == 1024);
    CHECK(z.isZero());
  }
}
