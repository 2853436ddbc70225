#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "fpl/distributions.hpp"
#include "fpl/flowpic.hpp"
#include "fpl/stats.hpp"
#include "helpers.hpp"

using namespace fpl;
using namespace fpl::stats;

// Reference values below were computed once with scipy 1.15 and frozen.

TEST_CASE("student t") {
  CHECK(dist::student_t_quantile(0.975, 2) == doctest::Approx(4.302652729696142).epsilon(1e-10));
  CHECK(dist::student_t_quantile(0.975, 9) == doctest::Approx(2.2621571628540993).epsilon(1e-10));
  CHECK(dist::student_t_quantile(0.95, 14) == doctest::Approx(1.7613101357748562).epsilon(1e-10));
  CHECK(dist::student_t_quantile(0.975, 4) == doctest::Approx(2.7764451051977987).epsilon(1e-10));
  CHECK(dist::student_t_cdf(1.3, 7) == doctest::Approx(0.8826160823038114).epsilon(1e-10));
  CHECK(dist::student_t_cdf(-2.1, 3.5) == doctest::Approx(0.056762912610399056).epsilon(1e-9));
  // closed form for two degrees of freedom
  for (double t : {-3.0, -0.4, 0.0, 0.9, 7.5}) {
    CHECK(dist::student_t_cdf(t, 2) == doctest::Approx(0.5 + t / (2 * std::sqrt(2 + t * t))).epsilon(1e-12));
  }
  CHECK(dist::student_t_quantile(0.5, 5) == doctest::Approx(0.0));
}

TEST_CASE("studentized range") {
  CHECK(dist::studentized_range_sf(3, 3, 10) == doctest::Approx(0.13498341518956258).epsilon(1e-6));
  CHECK(dist::studentized_range_sf(4, 5, 20) == doctest::Approx(0.06958714392304588).epsilon(1e-6));
  CHECK(dist::studentized_range_sf(2.5, 2, 5) == doctest::Approx(0.1373421264340342).epsilon(1e-6));
  CHECK(dist::studentized_range_sf(5, 7, 30) == doctest::Approx(0.02035720340662761).epsilon(1e-5));
  CHECK(dist::studentized_range_sf(6, 4, 12) == doctest::Approx(0.005431890764692415).epsilon(1e-5));
  // infinite df: range of normals
  CHECK(dist::studentized_range_quantile(0.95, 5, INFINITY) / std::numbers::sqrt2 ==
        doctest::Approx(2.7277743708703763).epsilon(1e-6));
  // two groups: Q / sqrt 2 is |t|
  const double t = dist::student_t_quantile(0.975, 8);
  CHECK(dist::studentized_range_sf(t * std::numbers::sqrt2, 2, 8) == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("classification metrics") {
  const std::vector<int> t{0, 0, 1, 1, 2, 2, 2, 3}, p{0, 1, 1, 1, 2, 0, 2, 2};
  const auto m = compute_metrics(t, p, 4);
  CHECK(m.accuracy == doctest::Approx(5.0 / 8.0));
  CHECK(m.weighted_f1 == doctest::Approx(0.575));
  CHECK(m.macro_f1 == doctest::Approx(0.4916666666666667));
  CHECK(m.confusion(0, 1) == 1);
  CHECK(m.confusion(2, 0) == 1);
  CHECK(m.confusion.sum() == 8);
  CHECK(m.per_class[1].precision == doctest::Approx(2.0 / 3.0));
  CHECK(m.per_class[1].recall == 1.0);
  CHECK(m.per_class[3].support == 1);
  const auto nc = m.normalized_confusion();
  for (int r = 0; r < 4; ++r) CHECK(nc.row(r).sum() == doctest::Approx(1.0));

  SUBCASE("absent classes do not count towards the macro mean") {
    const auto m5 = compute_metrics(t, p, 5);
    CHECK(m5.macro_f1 == doctest::Approx(m.macro_f1));
    CHECK(m5.normalized_confusion().row(4).isZero());
  }
  SUBCASE("perfect and invalid") {
    CHECK(compute_metrics(t, t, 4).weighted_f1 == 1.0);
    const std::vector<int> bad{0, 4};
    CHECK_THROWS_AS(compute_metrics(bad, bad, 4), std::invalid_argument);
    const std::vector<int> one{0};
    CHECK_THROWS_AS(compute_metrics(one, bad, 4), std::invalid_argument);
  }
}

TEST_CASE("t confidence interval") {
  const std::vector<double> x{0.81, 0.83, 0.79, 0.85, 0.80};
  const auto ci = t_confidence_interval(x);
  CHECK(ci.n == 5);
  CHECK(ci.mean == doctest::Approx(0.816));
  CHECK(ci.half_width == doctest::Approx(0.029903228938904042).epsilon(1e-9));
  const std::vector<double> same{0.5, 0.5, 0.5};
  CHECK(t_confidence_interval(same).half_width == 0.0);
  const std::vector<double> one{0.5};
  CHECK_THROWS_AS(t_confidence_interval(one), std::invalid_argument);
}

TEST_CASE("ranking") {
  Eigen::MatrixXd obs(3, 5);
  obs << 0.9, 0.8, 0.85, 0.7, 0.95,
         0.85, 0.82, 0.8, 0.72, 0.9,
         0.8, 0.7, 0.78, 0.6, 0.91;
  const auto t = rank_methods({"a", "b", "c"}, obs);
  CHECK(t.ranks.col(0) == Eigen::Vector3d(1, 2, 3));
  CHECK(t.ranks.col(1) == Eigen::Vector3d(2, 1, 3));
  CHECK(t.average_ranks.isApprox(Eigen::Vector3d(1.4, 1.8, 2.8)));
  CHECK(t.average_ranks.sum() == doctest::Approx(6.0));
  CHECK(friedman_statistic(t) == doctest::Approx(5.200000000000003));

  SUBCASE("ties after rounding share the average rank") {
    Eigen::MatrixXd tied(3, 1);
    tied << 0.5, 0.5 + 1e-9, 0.2;
    const auto r = rank_methods({"a", "b", "c"}, tied);
    CHECK(r.ranks.col(0) == Eigen::Vector3d(1.5, 1.5, 3));
  }
  SUBCASE("invalid") {
    Eigen::MatrixXd one(1, 2);
    one << 1, 2;
    CHECK_THROWS_AS(rank_methods({"a"}, one), std::invalid_argument);
    Eigen::MatrixXd nan(2, 1);
    nan << 1, std::nan("");
    CHECK_THROWS_AS(rank_methods({"a", "b"}, nan), std::invalid_argument);
  }
}

TEST_CASE("nemenyi critical distance") {
  CHECK(nemenyi_q(2, 0.05) == doctest::Approx(1.960));
  CHECK(nemenyi_q(10, 0.05) == doctest::Approx(3.164));
  CHECK(nemenyi_q(5, 0.10) == doctest::Approx(2.459));
  CHECK(nemenyi_q(7, 0.10) == doctest::Approx(2.6927321009677594).epsilon(1e-3));
  // table values for larger k agree with the studentized range at df = inf
  for (int k = 11; k <= 20; ++k) {
    CHECK(nemenyi_q(k, 0.05) ==
          doctest::Approx(dist::studentized_range_quantile(0.95, k, INFINITY) / std::numbers::sqrt2).epsilon(2e-4));
  }
  CHECK(nemenyi_cd(7, 30, 0.05) == doctest::Approx(2.949 * std::sqrt(56.0 / 180.0)));
  CHECK(nemenyi_cd(7, 30, 0.05) == doctest::Approx(1.6449).epsilon(1e-4));
  CHECK_THROWS_AS(nemenyi_q(21, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(nemenyi_q(1, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(nemenyi_q(5, 0.01), std::invalid_argument);
}

TEST_CASE("critical distance groups") {
  RankTable t;
  t.methods = {"w", "x", "y", "z"};
  t.average_ranks = Eigen::Vector4d(2.8, 1.2, 4.1, 1.9);
  const auto g = cd_groups(t, 1.0);
  REQUIRE(g.size() == 3);
  CHECK(g[0] == std::vector<std::size_t>{1, 3});
  CHECK(g[1] == std::vector<std::size_t>{3, 0});
  CHECK(g[2] == std::vector<std::size_t>{2});
  CHECK(cd_groups(t, 10.0) == std::vector<std::vector<std::size_t>>{{1, 3, 0, 2}});
}

TEST_CASE("tukey hsd") {
  const std::vector<std::vector<double>> g{{24.5, 23.5, 26.4, 27.1, 29.9},
                                           {28.4, 34.2, 29.5, 32.2, 30.1},
                                           {26.1, 28.3, 24.3, 26.2, 27.8}};
  const auto r = tukey_hsd(g);
  REQUIRE(r.size() == 3);
  CHECK(r[0].a == 0);
  CHECK(r[0].b == 1);
  CHECK(r[0].p_value == doctest::Approx(0.01444833).epsilon(1e-5));
  CHECK(r[1].p_value == doctest::Approx(0.98031072).epsilon(1e-5));
  CHECK(r[2].p_value == doctest::Approx(0.02033114).epsilon(1e-5));
  CHECK(r[0].different);
  CHECK_FALSE(r[1].different);
  CHECK(r[2].different);

  SUBCASE("unequal group sizes") {
    const auto u = tukey_hsd({{1.0, 2.0, 3.0, 2.5}, {2.0, 3.5, 4.0}, {5.0, 4.5, 6.0, 5.5, 5.2}});
    CHECK(u[0].p_value == doctest::Approx(0.247467247).epsilon(1e-5));
    CHECK(u[1].p_value == doctest::Approx(6.12096336e-04).epsilon(1e-4));
    CHECK(u[2].p_value == doctest::Approx(1.43861191e-02).epsilon(1e-5));
  }
  SUBCASE("degenerate") {
    const auto z = tukey_hsd({{1, 1}, {1, 1}, {2, 2}});
    CHECK(z[0].p_value == 1.0);
    CHECK(z[1].p_value == 0.0);
    CHECK_THROWS_AS(tukey_hsd({{1, 2}}), std::invalid_argument);
    CHECK_THROWS_AS(tukey_hsd({{1, 2}, {3}}), std::invalid_argument);
  }
}

TEST_CASE("packet size kde") {
  const auto grid = kde_grid();
  REQUIRE(grid.size() == static_cast<std::size_t>(kKdeGridPoints));
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == 1500.0);
  for (const std::vector<int>& sizes :
       {std::vector<int>{40, 40, 52, 1500, 1500, 1500, 700}, std::vector<int>{1}, std::vector<int>{750, 760, 770}}) {
    double h = 0.0;
    const auto d = packet_size_kde(sizes, &h);
    CHECK(h >= 1500.0 / 255.0 - 1e-12);
    CHECK(integrate_on_grid(d) == doctest::Approx(1.0).epsilon(2e-3));
    for (double v : d) CHECK(v >= 0.0);
  }
  SUBCASE("silverman bandwidth") {
    Rng rng(3);
    std::vector<int> sizes;
    for (int i = 0; i < 400; ++i) sizes.push_back(600 + static_cast<int>(rng.below(300)));
    double h = 0.0;
    packet_size_kde(sizes, &h);
    Eigen::ArrayXd x(400);
    for (int i = 0; i < 400; ++i) x[i] = sizes[static_cast<std::size_t>(i)];
    const double sd = std::sqrt((x - x.mean()).square().sum() / 399.0);
    std::vector<double> s(x.data(), x.data() + 400);
    std::sort(s.begin(), s.end());
    auto q = [&](double p) {
      const double at = p * 399.0;
      const auto lo = static_cast<std::size_t>(at);
      return s[lo] + (at - static_cast<double>(lo)) * (s[std::min<std::size_t>(lo + 1, 399)] - s[lo]);
    };
    const double expect = 0.9 * std::min(sd, (q(0.75) - q(0.25)) / 1.34) * std::pow(400.0, -0.2);
    CHECK(h == doctest::Approx(expect).epsilon(1e-9));
  }
  CHECK_THROWS_AS(packet_size_kde(std::vector<int>{}), std::invalid_argument);
}

TEST_CASE("drift diagnostics") {
  testing::TempDir dir("drift");
  std::vector<FlowRecord> recs;
  for (int i = 0; i < 4; ++i) {
    auto f = testing::flow("p" + std::to_string(i), i % 2 ? "b" : "a", 10, i % 2 ? 1400 : 100);
    f.partition = "human";
    recs.push_back(f);
  }
  auto g = testing::flow("q0", "a", 10, 900);
  g.partition = "script";
  recs.push_back(g);
  const Dataset d(recs);

  const auto r = drift_diagnostics(d, {"human", "script"}, 8);
  REQUIRE(r.partitions.size() == 2);
  const auto& ha = r.partitions.at("human").at("a");
  CHECK(ha.flows == 2);
  CHECK(ha.mean_flowpic.sum() == doctest::Approx(10.0));
  CHECK(ha.mean_flowpic(0, 0) == doctest::Approx(10.0));  // 10 packets at t < 1.875 s, size 100
  CHECK_FALSE(r.partitions.at("script").contains("b"));
  CHECK_FALSE(r.warnings.empty());

  const auto all = drift_diagnostics(d, {}, 8);
  CHECK(all.partitions.contains("all"));
  CHECK(all.partitions.at("all").at("a").flows == 3);

  write_drift_report(r, dir.path());
  CHECK(std::filesystem::exists(dir / "kde_human.csv"));
  CHECK(std::filesystem::exists(dir / "mean_flowpic_human_a.csv"));
  CHECK(std::filesystem::exists(dir / "warnings.txt"));
}

TEST_CASE("report files") {
  testing::TempDir dir("statsout");
  Eigen::MatrixXd obs(2, 2);
  obs << 0.9, 0.8, 0.7, 0.85;
  const auto t = rank_methods({"a", "b"}, obs);
  write_rank_csv(t, dir / "r.csv");
  std::ifstream in(dir / "r.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "method,avg_rank");
  const auto rows = tukey_hsd({{1, 2, 3}, {5, 6, 7}});
  write_tukey_csv(rows, {"32", "64"}, dir / "t.csv");
  std::ifstream tin(dir / "t.csv");
  std::getline(tin, header);
  CHECK(header == "group_a,group_b,p_value,different");
  const auto svg = render_cd_svg(t, 1.39, cd_groups(t, 1.39));
  CHECK(svg.starts_with("<svg"));
  CHECK(svg.find(">a (") != std::string::npos);
}

TEST_CASE("worked examples") {
  SUBCASE("binary confusion") {
    const std::vector<int> t{1, 1, 1, 0, 0, 0}, p{1, 1, 0, 1, 0, 0};
    const auto m = compute_metrics(t, p, 2);
    CHECK(m.accuracy == doctest::Approx(4.0 / 6.0));
    CHECK(m.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
    CHECK(m.per_class[1].f1 == doctest::Approx(2.0 / 3.0));
    CHECK(m.weighted_f1 == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("single-class predictions") {
    std::vector<int> t, p;
    for (int c = 0; c < 5; ++c) {
      for (int i = 0; i < 4; ++i) {
        t.push_back(c);
        p.push_back(2);
      }
    }
    CHECK(compute_metrics(t, p, 5).accuracy == doctest::Approx(0.2));
  }
  SUBCASE("all correct") {
    const std::vector<int> t{0, 1, 2, 2};
    const auto m = compute_metrics(t, t, 3);
    CHECK(m.accuracy == 1.0);
    CHECK(m.weighted_f1 == 1.0);
    CHECK(m.confusion == Eigen::Matrix3i(Eigen::Vector3i(1, 1, 2).asDiagonal()));
  }
  SUBCASE("ranks") {
    Eigen::MatrixXd a(3, 1), b(3, 1), c(4, 1);
    a << 0.9, 0.7, 0.8;
    b << 0.9, 0.9, 0.8;
    c << 0.5, 0.5, 0.5, 0.5;
    CHECK(rank_methods({"x", "y", "z"}, a).ranks.col(0) == Eigen::Vector3d(1, 3, 2));
    CHECK(rank_methods({"x", "y", "z"}, b).ranks.col(0) == Eigen::Vector3d(1.5, 1.5, 3));
    CHECK(rank_methods({"w", "x", "y", "z"}, c).ranks.col(0) == Eigen::Vector4d::Constant(2.5));
  }
  SUBCASE("t interval of 1, 2, 3") {
    const std::vector<double> x{1, 2, 3};
    const auto ci = t_confidence_interval(x);
    CHECK(ci.mean == 2.0);
    CHECK(ci.half_width == doctest::Approx(4.302652729696142 / std::sqrt(3.0)).epsilon(1e-10));
  }
  SUBCASE("critical distance limits") {
    CHECK(nemenyi_cd(2, 9, 0.05) == doctest::Approx(1.960 / 3.0));
    CHECK(nemenyi_cd(5, 1000000, 0.05) < 0.01);
  }
  SUBCASE("groups against cd 1.644") {
    RankTable t;
    t.methods = {"a", "b"};
    t.average_ranks = Eigen::Vector2d(1.0, 1.5);
    CHECK(cd_groups(t, 1.644).size() == 1);
    t.average_ranks = Eigen::Vector2d(1.0, 3.0);
    CHECK(cd_groups(t, 1.644) == std::vector<std::vector<std::size_t>>{{0}, {1}});
    t.methods = {"a", "b", "c"};
    t.average_ranks = Eigen::Vector3d(1.0, 2.0, 3.0);
    CHECK(cd_groups(t, 1.644) == std::vector<std::vector<std::size_t>>{{0, 1}, {1, 2}});
  }
  SUBCASE("tukey extremes") {
    const std::vector<double> g{1, 2, 3, 4};
    const auto same = tukey_hsd({g, g});
    CHECK(same[0].p_value == doctest::Approx(1.0));
    CHECK_FALSE(same[0].different);
    // means 0 and 100, unit within-group variance
    std::vector<double> a, b;
    for (int i = 0; i < 10; ++i) {
      const double z = (i % 2 ? 1.0 : -1.0) * std::sqrt(0.9);
      a.push_back(z);
      b.push_back(100.0 + z);
    }
    const auto far = tukey_hsd({a, b});
    CHECK(far[0].p_value < 1e-6);
    CHECK(far[0].different);
  }
  SUBCASE("drift of identical partitions") {
    std::vector<FlowRecord> recs;
    for (const char* part : {"p", "q"}) {
      auto f = testing::flow(std::string(part) + "1", "a", 7, 300, 0.4);
      f.partition = part;
      recs.push_back(f);
    }
    const auto r = drift_diagnostics(Dataset(recs), {"p", "q"}, 32);
    const auto& p = r.partitions.at("p").at("a");
    const auto& q = r.partitions.at("q").at("a");
    CHECK(p.kde == q.kde);
    CHECK(p.mean_flowpic == build_flowpic(recs[0].series, 32).counts.cast<double>());
  }
}
