#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <tuple>

#include "fpl/campaign.hpp"

namespace fpl::campaign {

namespace {

namespace fs = std::filesystem;

double metric_value(const stats::MetricSet& m, const std::string& metric) {
  if (metric == "accuracy") return m.accuracy;
  if (metric == "weighted_f1") return m.weighted_f1;
  if (metric == "macro_f1") return m.macro_f1;
  throw std::invalid_argument("unknown metric '" + metric + "'");
}

void remember(std::vector<std::string>& order, const std::string& name) {
  if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
}

std::string slug(std::string s) {
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  }
  return s;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

// Trial key: (resolution, fold, val split).
using TrialKey = std::tuple<int, std::size_t, std::size_t>;

std::optional<RankAnalysis> rank_scope(const std::string& scope, const std::string& method, const std::string& partition,
                                       const std::vector<std::string>& labels,
                                       const std::map<TrialKey, std::map<std::string, double>>& trials,
                                       double alpha) {
  if (labels.size() < 2) return std::nullopt;
  std::vector<const std::map<std::string, double>*> complete;
  for (const auto& [key, values] : trials) {
    if (values.size() == labels.size()) complete.push_back(&values);
  }
  if (complete.empty()) return std::nullopt;
  Eigen::MatrixXd obs(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(complete.size()));
  for (std::size_t t = 0; t < complete.size(); ++t) {
    for (std::size_t m = 0; m < labels.size(); ++m) {
      obs(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(t)) = complete[t]->at(labels[m]);
    }
  }
  RankAnalysis a{scope, method, partition, stats::rank_methods(labels, obs), std::nullopt, {}};
  const int k = static_cast<int>(labels.size());
  if (k <= 20 && (std::abs(alpha - 0.05) < 1e-12 || std::abs(alpha - 0.10) < 1e-12)) {
    a.cd = stats::nemenyi_cd(k, static_cast<int>(complete.size()), alpha);
    a.groups = stats::cd_groups(a.table, *a.cd);
  }
  return a;
}

}  // namespace

CampaignReport summarize(const std::vector<RunRecord>& records, const SummaryOptions& options) {
  CampaignReport report;
  report.metric = options.metric;
  report.planned = records.size();

  std::vector<std::string> methods, partitions;
  std::map<std::string, std::vector<std::string>> labels_of;  // method -> augmentation labels
  std::vector<int> resolutions;
  // (method, augmentation, resolution, partition) -> values
  std::map<std::tuple<std::string, std::string, int, std::string>, std::vector<double>> values;
  // (method, partition) -> trial -> augmentation -> value
  std::map<std::pair<std::string, std::string>, std::map<TrialKey, std::map<std::string, double>>> trials;

  for (const auto& r : records) {
    const auto method = to_string(r.config.method);
    remember(methods, method);
    remember(labels_of[method], r.config.augmentation.label);
    if (std::find(resolutions.begin(), resolutions.end(), r.config.resolution) == resolutions.end()) {
      resolutions.push_back(r.config.resolution);
    }
    if (r.status != RunStatus::Completed) {
      ++report.failed;
      continue;
    }
    ++report.completed;
    for (const auto& [partition, pm] : r.metrics) {
      remember(partitions, partition);
      const double v = metric_value(pm.metrics, options.metric);
      values[{method, r.config.augmentation.label, r.config.resolution, partition}].push_back(v);
      trials[{method, partition}][{r.config.resolution, r.config.fold, r.config.val_split}]
            [r.config.augmentation.label] = v;
    }
  }
  std::sort(resolutions.begin(), resolutions.end());
  std::sort(partitions.begin(), partitions.end());

  for (const auto& method : methods) {
    for (const auto& label : labels_of[method]) {
      for (int res : resolutions) {
        for (const auto& partition : partitions) {
          Cell cell{method, label, res, partition, {}, std::nullopt};
          if (auto it = values.find({method, label, res, partition}); it != values.end()) cell.values = it->second;
          if (cell.values.size() >= 2) cell.ci = stats::t_confidence_interval(cell.values);
          report.cells.push_back(std::move(cell));
        }
      }
    }
  }

  for (const auto& method : methods) {
    const auto& labels = labels_of[method];
    for (const auto& partition : partitions) {
      auto it = trials.find({method, partition});
      if (it == trials.end()) continue;
      if (auto a = rank_scope("pooled", method, partition, labels, it->second, options.alpha)) {
        report.ranks.push_back(std::move(*a));
      }
      if (resolutions.size() > 1) {
        for (int res : resolutions) {
          std::map<TrialKey, std::map<std::string, double>> subset;
          for (const auto& [key, v] : it->second) {
            if (std::get<0>(key) == res) subset.emplace(key, v);
          }
          if (auto a = rank_scope("res" + std::to_string(res), method, partition, labels, subset, options.alpha)) {
            report.ranks.push_back(std::move(*a));
          }
        }
      }

      std::vector<std::string> names;
      std::vector<std::vector<double>> groups;
      for (int res : resolutions) {
        std::vector<double> pooled;
        for (const auto& label : labels) {
          if (auto v = values.find({method, label, res, partition}); v != values.end()) {
            pooled.insert(pooled.end(), v->second.begin(), v->second.end());
          }
        }
        if (pooled.size() >= 2) {
          names.push_back(std::to_string(res));
          groups.push_back(std::move(pooled));
        }
      }
      if (groups.size() >= 2) {
        report.resolution_tests.push_back({method, partition, names, stats::tukey_hsd(groups, options.alpha)});
      }
    }
  }
  return report;
}

std::string render_markdown(const CampaignReport& report) {
  std::ostringstream md;
  md << "# Campaign report\n\n";
  md << "Experiments: " << report.planned << " planned, " << report.completed << " completed, " << report.failed
     << " failed.\n\n";
  md << "## " << report.metric << " (mean +- 95% CI, n)\n\n";
  // One table per (method, partition): rows augmentations, columns resolutions.
  std::map<std::pair<std::string, std::string>, std::vector<const Cell*>> tables;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& c : report.cells) {
    auto key = std::make_pair(c.method, c.partition);
    if (!tables.contains(key)) order.push_back(key);
    tables[key].push_back(&c);
  }
  for (const auto& key : order) {
    const auto& cells = tables[key];
    std::vector<int> res;
    std::vector<std::string> rows;
    for (const auto* c : cells) {
      if (std::find(res.begin(), res.end(), c->resolution) == res.end()) res.push_back(c->resolution);
      remember(rows, c->augmentation);
    }
    md << "### " << key.first << " / " << key.second << "\n\n| augmentation |";
    for (int r : res) md << ' ' << r << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < res.size(); ++i) md << "---|";
    md << '\n';
    for (const auto& row : rows) {
      md << "| " << row << " |";
      for (int r : res) {
        const Cell* cell = nullptr;
        for (const auto* c : cells) {
          if (c->augmentation == row && c->resolution == r) cell = c;
        }
        if (!cell || cell->values.empty()) {
          md << " n/a |";
        } else if (!cell->ci) {
          md << ' ' << fixed(100.0 * cell->values.front(), 2) << " +- n/a (n=1) |";
        } else {
          md << ' ' << fixed(100.0 * cell->ci->mean, 2) << " +- " << fixed(100.0 * cell->ci->half_width, 2)
             << " (n=" << cell->ci->n << ") |";
        }
      }
      md << '\n';
    }
    md << '\n';
  }
  if (!report.ranks.empty()) {
    md << "## Average ranks\n\n";
    for (const auto& a : report.ranks) {
      md << "### " << a.method << " / " << a.partition << " / " << a.scope << " (N=" << a.table.trials() << ")\n\n";
      if (a.cd) md << "Critical distance: " << fixed(*a.cd, 3) << "\n\n";
      md << "| augmentation | avg rank |\n|---|---|\n";
      for (std::size_t i = 0; i < a.table.methods.size(); ++i) {
        md << "| " << a.table.methods[i] << " | " << fixed(a.table.average_ranks[static_cast<Eigen::Index>(i)], 3)
           << " |\n";
      }
      if (!a.groups.empty()) {
        md << "\nNot significantly different:";
        for (const auto& g : a.groups) {
          md << " {";
          for (std::size_t i = 0; i < g.size(); ++i) md << (i ? ", " : "") << a.table.methods[g[i]];
          md << '}';
        }
        md << '\n';
      }
      md << '\n';
    }
  }
  if (!report.resolution_tests.empty()) {
    md << "## Resolution comparison (Tukey HSD)\n\n";
    for (const auto& t : report.resolution_tests) {
      md << "### " << t.method << " / " << t.partition << "\n\n| a | b | p-value | different |\n|---|---|---|---|\n";
      for (const auto& c : t.comparisons) {
        std::ostringstream p;
        p << std::setprecision(3) << c.p_value;
        md << "| " << t.resolutions[c.a] << " | " << t.resolutions[c.b] << " | " << p.str() << " | "
           << (c.different ? "yes" : "no") << " |\n";
      }
      md << '\n';
    }
  }
  return md.str();
}

void write_report(const CampaignReport& report, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream md(dir / "summary.md");
    md << render_markdown(report);
  }
  {
    std::ofstream csv(dir / "cells.csv");
    csv.precision(10);
    csv << "method,augmentation,resolution,partition,n,mean,ci_half_width\n";
    for (const auto& c : report.cells) {
      csv << c.method << ',' << c.augmentation << ',' << c.resolution << ',' << c.partition << ',' << c.values.size()
          << ',';
      if (c.values.empty()) csv << "n/a,n/a\n";
      else if (!c.ci) csv << c.values.front() << ",n/a\n";
      else csv << c.ci->mean << ',' << c.ci->half_width << '\n';
    }
  }
  for (const auto& a : report.ranks) {
    const auto stem = slug(a.method + "_" + a.partition + "_" + a.scope);
    stats::write_rank_csv(a.table, dir / ("ranks_" + stem + ".csv"));
    if (a.cd) {
      std::ofstream svg(dir / ("cd_" + stem + ".svg"));
      svg << stats::render_cd_svg(a.table, *a.cd, a.groups);
    }
  }
  for (const auto& t : report.resolution_tests) {
    stats::write_tukey_csv(t.comparisons, t.resolutions, dir / ("tukey_" + slug(t.method + "_" + t.partition) + ".csv"));
  }
}

}  // namespace fpl::campaign
