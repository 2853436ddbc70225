#include "fpl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "fpl/distributions.hpp"
#include "fpl/flowpic.hpp"

namespace fpl::stats {

Eigen::MatrixXd MetricSet::normalized_confusion() const {
  Eigen::MatrixXd out = confusion.cast<double>();
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double s = out.row(r).sum();
    if (s > 0.0) out.row(r) /= s;
  }
  return out;
}

MetricSet compute_metrics(std::span<const int> truth, std::span<const int> predicted, int num_classes) {
  if (truth.size() != predicted.size() || truth.empty()) {
    throw std::invalid_argument("truth and predictions must be nonempty and of equal length");
  }
  if (num_classes < 1) throw std::invalid_argument("num_classes must be positive");
  MetricSet m;
  m.confusion = Eigen::MatrixXi::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes) {
      throw std::invalid_argument("label outside the known class set");
    }
    ++m.confusion(truth[i], predicted[i]);
  }
  const double total = static_cast<double>(truth.size());
  m.accuracy = m.confusion.trace() / total;
  m.per_class.resize(static_cast<std::size_t>(num_classes));
  int present = 0;
  for (int c = 0; c < num_classes; ++c) {
    auto& s = m.per_class[static_cast<std::size_t>(c)];
    const double tp = m.confusion(c, c);
    const double actual = m.confusion.row(c).sum();
    const double called = m.confusion.col(c).sum();
    s.support = static_cast<std::size_t>(actual);
    s.precision = called > 0 ? tp / called : 0.0;
    s.recall = actual > 0 ? tp / actual : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    m.weighted_f1 += s.f1 * actual / total;
    if (actual > 0) {
      m.macro_f1 += s.f1;
      ++present;
    }
  }
  if (present) m.macro_f1 /= present;
  return m;
}

ConfidenceInterval t_confidence_interval(std::span<const double> samples, double level) {
  if (samples.size() < 2) throw std::invalid_argument("confidence interval needs at least 2 samples");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must be in (0, 1)");
  const double n = static_cast<double>(samples.size());
  const double mean = std::accumulate(samples.begin(), samples.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : samples) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  const double t = dist::student_t_quantile(0.5 * (1.0 + level), n - 1.0);
  return {mean, t * sd / std::sqrt(n), samples.size()};
}

RankTable rank_methods(std::vector<std::string> methods, const Eigen::MatrixXd& observations) {
  const auto k = observations.rows();
  if (k < 2) throw std::invalid_argument("ranking needs at least 2 methods");
  if (observations.cols() < 1) throw std::invalid_argument("ranking needs at least 1 trial");
  if (static_cast<Eigen::Index>(methods.size()) != k) throw std::invalid_argument("method names do not match rows");
  if (!observations.allFinite()) throw std::invalid_argument("observations must be finite");
  RankTable t{std::move(methods), observations, Eigen::MatrixXd(k, observations.cols()), {}};
  std::vector<Eigen::Index> order(static_cast<std::size_t>(k));
  for (Eigen::Index j = 0; j < observations.cols(); ++j) {
    Eigen::VectorXd rounded(k);
    for (Eigen::Index i = 0; i < k; ++i) rounded[i] = std::round(observations(i, j) * 1e6) / 1e6;
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rounded[a] > rounded[b]; });
    for (std::size_t start = 0; start < order.size();) {
      std::size_t end = start + 1;
      while (end < order.size() && rounded[order[end]] == rounded[order[start]]) ++end;
      // positions start..end-1 hold ranks start+1..end
      const double shared = 0.5 * static_cast<double>(start + 1 + end);
      for (std::size_t p = start; p < end; ++p) t.ranks(order[p], j) = shared;
      start = end;
    }
  }
  t.average_ranks = t.ranks.rowwise().mean();
  return t;
}

double friedman_statistic(const RankTable& table) {
  const double k = static_cast<double>(table.methods.size());
  const double n = static_cast<double>(table.trials());
  const double sum_sq = table.average_ranks.squaredNorm();
  return 12.0 * n / (k * (k + 1.0)) * (sum_sq - k * (k + 1.0) * (k + 1.0) / 4.0);
}

namespace {

// k = 2..20. Values for k <= 10 are the published two-tailed Nemenyi table;
// larger k come from the studentized range at infinite df, divided by sqrt 2.
constexpr double kQ05[19] = {1.960, 2.343, 2.569, 2.728, 2.850, 2.949, 3.031, 3.102, 3.164, 3.219,
                             3.268, 3.313, 3.354, 3.391, 3.426, 3.458, 3.489, 3.517, 3.544};
constexpr double kQ10[19] = {1.645, 2.052, 2.291, 2.459, 2.589, 2.693, 2.780, 2.855, 2.920, 2.978,
                             3.030, 3.077, 3.120, 3.159, 3.196, 3.230, 3.261, 3.291, 3.319};

}  // namespace

double nemenyi_q(int k, double alpha) {
  if (k < 2 || k > 20) throw std::invalid_argument("Nemenyi table covers 2 <= k <= 20");
  if (std::abs(alpha - 0.05) < 1e-12) return kQ05[k - 2];
  if (std::abs(alpha - 0.10) < 1e-12) return kQ10[k - 2];
  throw std::invalid_argument("Nemenyi table covers alpha in {0.05, 0.10}");
}

double nemenyi_cd(int k, int n, double alpha) {
  if (n < 1) throw std::invalid_argument("Nemenyi CD needs at least one trial");
  return nemenyi_q(k, alpha) * std::sqrt(k * (k + 1.0) / (6.0 * n));
}

std::vector<std::vector<std::size_t>> cd_groups(const RankTable& table, double cd) {
  std::vector<std::size_t> order(table.methods.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto& r = table.average_ranks;
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return r[static_cast<Eigen::Index>(a)] < r[static_cast<Eigen::Index>(b)];
  });
  std::vector<std::vector<std::size_t>> groups;
  std::size_t last_end = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    std::size_t end = i + 1;
    while (end < order.size() &&
           r[static_cast<Eigen::Index>(order[end])] - r[static_cast<Eigen::Index>(order[i])] < cd) {
      ++end;
    }
    if (end > last_end) {
      groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                          order.begin() + static_cast<std::ptrdiff_t>(end));
      last_end = end;
    }
  }
  return groups;
}

std::vector<TukeyComparison> tukey_hsd(const std::vector<std::vector<double>>& groups, double alpha) {
  const auto k = groups.size();
  if (k < 2) throw std::invalid_argument("Tukey HSD needs at least 2 groups");
  std::vector<double> means(k);
  double ss_within = 0.0;
  std::size_t total = 0;
  for (std::size_t g = 0; g < k; ++g) {
    if (groups[g].size() < 2) throw std::invalid_argument("each Tukey group needs at least 2 observations");
    means[g] = std::accumulate(groups[g].begin(), groups[g].end(), 0.0) / static_cast<double>(groups[g].size());
    for (double x : groups[g]) ss_within += (x - means[g]) * (x - means[g]);
    total += groups[g].size();
  }
  const double df = static_cast<double>(total - k);
  const double mse = ss_within / df;
  std::vector<TukeyComparison> out;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      TukeyComparison c{a, b, means[a] - means[b], 0.0, 1.0, false};
      const double se = std::sqrt(0.5 * mse * (1.0 / static_cast<double>(groups[a].size()) +
                                               1.0 / static_cast<double>(groups[b].size())));
      const double gap = std::abs(c.mean_difference);
      if (se == 0.0) {
        c.q = gap == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        c.p_value = gap == 0.0 ? 1.0 : 0.0;
      } else {
        c.q = gap / se;
        c.p_value = dist::studentized_range_sf(c.q, static_cast<int>(k), df);
      }
      c.different = c.p_value < alpha;
      out.push_back(c);
    }
  }
  return out;
}

std::vector<double> kde_grid() {
  std::vector<double> g(kKdeGridPoints);
  for (int i = 0; i < kKdeGridPoints; ++i) g[static_cast<std::size_t>(i)] = kMaxPacketSize * i / double(kKdeGridPoints - 1);
  return g;
}

double integrate_on_grid(std::span<const double> values) {
  const double step = static_cast<double>(kMaxPacketSize) / (kKdeGridPoints - 1);
  double total = 0.0;
  for (std::size_t i = 1; i < values.size(); ++i) total += 0.5 * (values[i - 1] + values[i]) * step;
  return total;
}

std::vector<double> packet_size_kde(std::span<const int> sizes, double* bandwidth) {
  if (sizes.empty()) throw std::invalid_argument("KDE needs at least one packet");
  const double n = static_cast<double>(sizes.size());
  std::vector<double> x(sizes.begin(), sizes.end());
  std::sort(x.begin(), x.end());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = x.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  auto quantile = [&](double p) {
    const double pos = p * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  double h = 0.9 * spread * std::pow(n, -0.2);
  const double step = static_cast<double>(kMaxPacketSize) / (kKdeGridPoints - 1);
  h = std::max(h, step);
  if (bandwidth) *bandwidth = h;

  const auto grid = kde_grid();
  std::vector<double> density(grid.size(), 0.0);
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double s : x) {
      for (double centre : {s, -s, 2.0 * kMaxPacketSize - s}) {
        const double z = (grid[g] - centre) / h;
        acc += std::exp(-0.5 * z * z);
      }
    }
    density[g] = acc * norm;
  }
  return density;
}

DriftReport drift_diagnostics(const Dataset& dataset, const std::vector<std::string>& partitions, int resolution,
                              double window) {
  DriftReport report;
  report.resolution = resolution;
  std::vector<std::pair<std::string, Dataset>> parts;
  if (partitions.empty()) {
    parts.emplace_back("all", dataset);
  } else {
    for (const auto& p : partitions) parts.emplace_back(p, dataset.partition(p));
  }
  const auto labels = dataset.labels();
  for (const auto& [name, part] : parts) {
    auto& out = report.partitions[name];
    for (const auto& label : labels) {
      auto it = part.class_index().find(label);
      if (it == part.class_index().end() || it->second.empty()) {
        report.warnings.push_back("partition '" + name + "' has no flows of class '" + label + "'; skipped");
        continue;
      }
      ClassDrift d;
      d.flows = it->second.size();
      d.mean_flowpic = Eigen::MatrixXd::Zero(resolution, resolution);
      std::vector<int> sizes;
      for (auto idx : it->second) {
        const auto& s = part.at(idx).series;
        d.mean_flowpic += build_flowpic(s, resolution, window).counts.cast<double>();
        sizes.insert(sizes.end(), s.sizes.begin(), s.sizes.end());
      }
      d.mean_flowpic /= static_cast<double>(d.flows);
      d.kde = packet_size_kde(sizes, &d.bandwidth);
      out.emplace(label, std::move(d));
    }
  }
  return report;
}

void write_drift_report(const DriftReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto grid = kde_grid();
  for (const auto& [partition, classes] : report.partitions) {
    std::ofstream kde(dir / ("kde_" + partition + ".csv"));
    kde << "packet_size";
    for (const auto& [label, _] : classes) kde << ',' << label;
    kde << '\n';
    for (std::size_t g = 0; g < grid.size(); ++g) {
      kde << grid[g];
      for (const auto& [_, d] : classes) kde << ',' << d.kde[g];
      kde << '\n';
    }
    for (const auto& [label, d] : classes) {
      std::ofstream csv(dir / ("mean_flowpic_" + partition + "_" + label + ".csv"));
      csv.precision(10);
      for (Eigen::Index r = 0; r < d.mean_flowpic.rows(); ++r) {
        for (Eigen::Index c = 0; c < d.mean_flowpic.cols(); ++c) csv << (c ? "," : "") << d.mean_flowpic(r, c);
        csv << '\n';
      }
    }
  }
  if (!report.warnings.empty()) {
    std::ofstream w(dir / "warnings.txt");
    for (const auto& msg : report.warnings) w << msg << '\n';
  }
}

void write_rank_csv(const RankTable& table, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.precision(10);
  out << "method,avg_rank\n";
  for (std::size_t i = 0; i < table.methods.size(); ++i) {
    out << table.methods[i] << ',' << table.average_ranks[static_cast<Eigen::Index>(i)] << '\n';
  }
}

void write_tukey_csv(const std::vector<TukeyComparison>& rows, const std::vector<std::string>& names,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out.precision(10);
  out << "group_a,group_b,p_value,different\n";
  for (const auto& r : rows) {
    out << names.at(r.a) << ',' << names.at(r.b) << ',' << r.p_value << ',' << (r.different ? "yes" : "no") << '\n';
  }
}

std::string render_cd_svg(const RankTable& table, double cd, const std::vector<std::vector<std::size_t>>& groups) {
  const int k = static_cast<int>(table.methods.size());
  const double width = 640.0, left = 60.0, right = 580.0, axis_y = 60.0;
  auto x_of = [&](double rank) { return left + (rank - 1.0) / std::max(1, k - 1) * (right - left); };
  std::ostringstream svg;
  svg.precision(6);
  const double height = 120.0 + 22.0 * (k + static_cast<int>(groups.size()));
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<line x1=\"" << left << "\" y1=\"" << axis_y << "\" x2=\"" << right << "\" y2=\"" << axis_y
      << "\" stroke=\"black\"/>\n";
  for (int r = 1; r <= k; ++r) {
    svg << "<line x1=\"" << x_of(r) << "\" y1=\"" << axis_y - 5 << "\" x2=\"" << x_of(r) << "\" y2=\"" << axis_y
        << "\" stroke=\"black\"/><text x=\"" << x_of(r) << "\" y=\"" << axis_y - 10
        << "\" text-anchor=\"middle\">" << r << "</text>\n";
  }
  svg << "<line x1=\"" << x_of(1) << "\" y1=\"20\" x2=\"" << x_of(1 + cd) << "\" y2=\"20\" stroke=\"black\" "
      << "stroke-width=\"2\"/><text x=\"" << x_of(1 + cd) + 6 << "\" y=\"24\">CD = " << cd << "</text>\n";
  std::vector<std::size_t> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) {
    return table.average_ranks[static_cast<Eigen::Index>(a)] < table.average_ranks[static_cast<Eigen::Index>(b)];
  });
  double y = axis_y + 30.0;
  for (auto m : order) {
    const double rank = table.average_ranks[static_cast<Eigen::Index>(m)];
    svg << "<circle cx=\"" << x_of(rank) << "\" cy=\"" << axis_y << "\" r=\"3\"/>"
        << "<line x1=\"" << x_of(rank) << "\" y1=\"" << axis_y << "\" x2=\"" << x_of(rank) << "\" y2=\"" << y
        << "\" stroke=\"gray\"/><text x=\"" << x_of(rank) + 4 << "\" y=\"" << y + 4 << "\">"
        << table.methods[m] << " (" << rank << ")</text>\n";
    y += 22.0;
  }
  for (const auto& g : groups) {
    if (g.size() < 2) continue;
    const double a = table.average_ranks[static_cast<Eigen::Index>(g.front())];
    const double b = table.average_ranks[static_cast<Eigen::Index>(g.back())];
    svg << "<line x1=\"" << x_of(a) - 3 << "\" y1=\"" << y << "\" x2=\"" << x_of(b) + 3 << "\" y2=\"" << y
        << "\" stroke=\"black\" stroke-width=\"4\"/>\n";
    y += 22.0;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace fpl::stats
