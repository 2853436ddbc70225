#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "fpl/campaign.hpp"
#include "fpl/synth.hpp"
#include "helpers.hpp"

using namespace fpl;
using namespace fpl::campaign;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Small five-class dataset written to `dir`/data.jsonl.
std::filesystem::path small_dataset(const testing::TempDir& dir, int per_class = 24) {
  SyntheticOptions so;
  so.flows_per_class = per_class;
  so.seed = 5;
  const auto path = dir / "data.jsonl";
  save_dataset(make_synthetic_dataset(so), path);
  return path;
}

/// Fast settings: few epochs, no expansion beyond 2.
json quick_overrides() {
  return {{"train", {{"max_epochs", 3}}},
          {"pretrain", {{"max_epochs", 2}}},
          {"finetune", {{"max_epochs", 5}}},
          {"expansion", 2},
          {"finetune_shots", 3},
          {"boost", {{"n_rounds", 5}}}};
}

json small_grid(const std::filesystem::path& data) {
  return {{"name", "t"},
          {"seed", 11},
          {"dataset", data.string()},
          {"split", {{"k", 2}, {"per_class", 6}, {"s", 1}}},
          {"experiment", quick_overrides()}};
}

RunRecord fake(const std::string& method, const std::string& aug, int res, std::size_t fold, double acc) {
  RunRecord r;
  r.status = RunStatus::Completed;
  r.config.method = method_from_string(method);
  r.config.augmentation.label = aug;
  r.config.resolution = res;
  r.config.fold = fold;
  stats::MetricSet m;
  m.accuracy = acc;
  r.metrics["test"] = {10, m};
  return r;
}

}  // namespace

TEST_CASE("plan expansion") {
  json g = {{"dataset", "/data/x.jsonl"}, {"seed", 3}, {"resolutions", {32, 64}}};
  const auto grid = grid_from_json(g);
  CHECK(grid.augmentations.size() == 7);
  const auto plan = plan_campaign(grid);
  CHECK(plan.size() == 7 * 2 * 5 * 3);
  std::set<std::string> ids, hashes;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    CHECK(plan[i].index == i);
    ids.insert(plan[i].id);
    hashes.insert(config_hash(plan[i]));
    CHECK(plan[i].seeds.split == plan[0].seeds.split);
  }
  CHECK(ids.size() == plan.size());
  CHECK(hashes.size() == plan.size());
  CHECK(plan.front().id == "e0000");
  CHECK(plan[1].val_split == 1);
  CHECK(plan[3].fold == 1);
  CHECK(plan[15].resolution == 64);
  CHECK(plan[30].augmentation.label != plan[0].augmentation.label);
  CHECK(plan_campaign(grid).back().seeds.init == plan.back().seeds.init);

  SUBCASE("methods and pairs") {
    g["methods"] = {"supervised", "simclr_finetune", "boost_baseline"};
    g["augmentations"] = {"no_aug", {{"kind", "rotate"}, {"max_degrees", 5.0}, {"label", "rot5"}}};
    g["augmentation_pairs"] = {{"change_rtt", "time_shift"}, {{"label", "pl+cj"}, {"specs", {"packet_loss", "color_jitter"}}}};
    g["resolutions"] = {32};
    g["split"] = {{"k", 2}, {"s", 1}};
    const auto p = plan_campaign(grid_from_json(g));
    REQUIRE(p.size() == (2 + 2 + 1) * 2);
    CHECK(p[2].augmentation.label == "rot5");
    CHECK(p[4].augmentation.label == "change_rtt+time_shift");
    CHECK(p[6].augmentation.label == "pl+cj");
    CHECK(p[8].method == Method::BoostBaseline);
    CHECK(p[8].augmentation.label == "none");
  }
  SUBCASE("stratified split has one fold") {
    g["split"] = {{"scheme", "stratified_801010"}, {"s", 1}};
    CHECK(plan_campaign(grid_from_json(g)).size() == 7 * 2);
  }
}

TEST_CASE("degenerate plans") {
  json g = {{"dataset", "d.jsonl"},
            {"augmentations", {"no_aug"}},
            {"split", {{"scheme", "stratified_801010"}, {"s", 1}}}};
  CHECK(plan_campaign(grid_from_json(g)).size() == 1);
  testing::TempDir dir("empty");
  CHECK(run_campaign({}, 4, dir.path()).empty());
  CHECK(load_records(dir.path()).empty());
}

TEST_CASE("grid validation") {
  const json base = {{"dataset", "d.jsonl"}};
  auto fails = [&](json patch, const std::string& needle) {
    json g = base;
    g.merge_patch(patch);
    try {
      grid_from_json(g);
    } catch (const std::invalid_argument& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
      return;
    }
    FAIL("accepted " << patch.dump());
  };
  fails({{"methods", {"forest"}}}, "methods");
  fails({{"augmentations", {"no_aug", "zoom"}}}, "augmentations[1]");
  fails({{"augmentation_pairs", json::array({json::array({"change_rtt"})})}}, "augmentation_pairs[0]");
  fails({{"resolutions", {1}}}, "resolutions");
  fails({{"experiment", {{"fold", 2}}}}, "experiment.fold");
  fails({{"experiment", {{"normalization", "log"}}}}, "experiment");
  CHECK_THROWS_AS(grid_from_json(json::object()), std::invalid_argument);
  CHECK(grid_from_json(base, "/root/x").dataset == "/root/x/d.jsonl");
}

TEST_CASE("config json round trip") {
  const auto plan = plan_campaign(grid_from_json({{"dataset", "d.jsonl"}, {"experiment", quick_overrides()}}));
  const auto& c = plan[7];
  const auto back = experiment_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 16);
  CHECK(back.train.max_epochs == 3);
  CHECK(back.expansion == 2);
}

TEST_CASE("single experiments") {
  testing::TempDir dir("camp");
  const auto data = small_dataset(dir);
  auto grid = grid_from_json(small_grid(data));
  grid.methods = {Method::Supervised, Method::SimclrFinetune, Method::BoostBaseline};
  grid.augmentations.resize(1);
  const auto plan = plan_campaign(grid);
  REQUIRE(plan.size() == 6);
  for (std::size_t i : {0u, 2u, 4u}) {
    const auto r = run_experiment(plan[i], dir.path() / "runs");
    CAPTURE(r.error);
    REQUIRE(r.status == RunStatus::Completed);
    REQUIRE(r.metrics.contains("leftover"));
    // 24 per class minus this fold's 6 training flows
    CHECK(r.metrics.at("leftover").n == 90);
    CHECK(r.metrics.at("leftover").metrics.accuracy >= 0.0);
    const auto d = dir.path() / "runs" / plan[i].id;
    CHECK(std::filesystem::exists(d / "config.json"));
    CHECK(std::filesystem::exists(d / "metrics.json"));
    CHECK(std::filesystem::exists(d / "log.txt"));
    CHECK(std::filesystem::exists(r.checkpoint));
    CHECK(experiment_from_json(json::parse(slurp(d / "config.json"))).id == plan[i].id);
  }
  CHECK(std::filesystem::exists(dir.path() / "runs" / plan[2].id / "pretrained.ckpt"));

  const auto before = slurp(dir.path() / "runs" / plan[0].id / "metrics.json");
  run_experiment(plan[0], dir.path() / "runs");
  CHECK(slurp(dir.path() / "runs" / plan[0].id / "metrics.json") == before);
}

TEST_CASE("failures are recorded with their stage") {
  testing::TempDir dir("fail");
  const auto data = small_dataset(dir);
  auto plan = plan_campaign(grid_from_json(small_grid(data)));
  auto missing = plan[0];
  missing.dataset = dir / "nope.jsonl";
  auto r = run_experiment(missing, dir.path());
  CHECK(r.status == RunStatus::Failed);
  CHECK(r.failed_stage == "load");
  const auto m = json::parse(slurp(dir.path() / missing.id / "metrics.json"));
  CHECK(m.at("status") == "failed");
  CHECK(m.at("stage") == "load");

  auto empty = plan[1];
  empty.test_partitions = {"nowhere"};
  r = run_experiment(empty, dir.path());
  CHECK(r.failed_stage == "split");
  CHECK(r.error.find("nowhere") != std::string::npos);

  auto diverge = plan[2];
  diverge.train.learning_rate = 1e30;
  diverge.train.max_epochs = 20;
  r = run_experiment(diverge, dir.path());
  if (r.status == RunStatus::Failed) CHECK(r.failed_stage == "train");
}

TEST_CASE("campaign results do not depend on the worker count") {
  testing::TempDir dir("workers");
  const auto data = small_dataset(dir);
  auto grid = grid_from_json(small_grid(data));
  grid.augmentations.resize(3);
  grid.methods = {Method::Supervised, Method::BoostBaseline};
  const auto plan = plan_campaign(grid);
  REQUIRE(plan.size() == 8);
  const auto a = run_campaign(plan, 1, dir.path() / "one");
  const auto b = run_campaign(plan, 3, dir.path() / "three");
  for (const auto& c : plan) {
    CHECK(slurp(dir.path() / "one" / c.id / "metrics.json") == slurp(dir.path() / "three" / c.id / "metrics.json"));
  }
  CHECK(std::filesystem::exists(dir.path() / "one" / "manifest.json"));

  const auto loaded = load_records(dir.path() / "one");
  REQUIRE(loaded.size() == plan.size());
  for (std::size_t i = 0; i < plan.size(); ++i) {
    CHECK(loaded[i].id == a[i].id);
    CHECK(loaded[i].status == a[i].status);
    CHECK(metrics_json(loaded[i]) == metrics_json(a[i]));
    CHECK(loaded[i].wall_seconds > 0.0);
  }

  const auto report = summarize(loaded);
  CHECK(report.planned == 8);
  CHECK(report.completed == 8);
  testing::TempDir out("report");
  write_report(report, out.path());
  CHECK(std::filesystem::exists(out / "summary.md"));
  CHECK(std::filesystem::exists(out / "cells.csv"));
}

TEST_CASE("missing dataset fails the whole group at load") {
  testing::TempDir dir("group");
  auto plan = plan_campaign(grid_from_json({{"dataset", (dir / "absent.jsonl").string()}, {"split", {{"s", 1}}}}));
  plan.resize(2);
  const auto recs = run_campaign(plan, 2, dir.path());
  for (const auto& r : recs) {
    CHECK(r.status == RunStatus::Failed);
    CHECK(r.failed_stage == "load");
  }
  CHECK(summarize(recs).failed == 2);
}

TEST_CASE("summary statistics") {
  std::vector<RunRecord> recs;
  const double base[3] = {0.9, 0.8, 0.7};
  const char* augs[3] = {"a", "b", "c"};
  for (int res : {32, 64}) {
    for (std::size_t fold = 0; fold < 5; ++fold) {
      for (int k = 0; k < 3; ++k) {
        recs.push_back(fake("supervised", augs[k], res, fold, base[k] + 0.01 * static_cast<double>(fold) + (res == 64 ? 0.05 : 0)));
      }
    }
  }
  auto failed = fake("supervised", "c", 32, 5, 0.0);
  failed.status = RunStatus::Failed;
  recs.push_back(failed);
  const auto rep = summarize(recs);
  CHECK(rep.completed == 30);
  CHECK(rep.failed == 1);
  REQUIRE(rep.cells.size() == 6);
  const auto& first = rep.cells.front();
  CHECK(first.augmentation == "a");
  CHECK(first.resolution == 32);
  REQUIRE(first.ci);
  CHECK(first.ci->n == 5);
  CHECK(first.ci->mean == doctest::Approx(0.92));

  REQUIRE(rep.ranks.size() == 3);  // pooled, res32, res64
  CHECK(rep.ranks[0].scope == "pooled");
  CHECK(rep.ranks[0].table.trials() == 10);
  CHECK(rep.ranks[0].table.average_ranks.isApprox(Eigen::Vector3d(1, 2, 3)));
  REQUIRE(rep.ranks[0].cd);
  CHECK(*rep.ranks[0].cd == doctest::Approx(stats::nemenyi_cd(3, 10, 0.05)));
  CHECK(rep.ranks[1].scope == "res32");

  REQUIRE(rep.resolution_tests.size() == 1);
  CHECK(rep.resolution_tests[0].resolutions == std::vector<std::string>{"32", "64"});
  CHECK(rep.resolution_tests[0].comparisons.size() == 1);

  const auto md = render_markdown(rep);
  CHECK(md.find("92.00 +- ") != std::string::npos);
  CHECK(md.find("Critical distance") != std::string::npos);

  SUBCASE("single values have no interval") {
    const auto one = summarize({fake("boost_baseline", "none", 32, 0, 0.5)});
    REQUIRE(one.cells.size() == 1);
    CHECK_FALSE(one.cells[0].ci);
    CHECK(render_markdown(one).find("50.00 +- n/a (n=1)") != std::string::npos);
  }
}
