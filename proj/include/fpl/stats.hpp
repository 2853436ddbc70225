#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fpl/dataio.hpp"

namespace fpl::stats {

struct ClassScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct MetricSet {
  double accuracy = 0.0;
  double weighted_f1 = 0.0;
  double macro_f1 = 0.0;
  std::vector<ClassScores> per_class;
  /// confusion(true, predicted)
  Eigen::MatrixXi confusion;

  /// Rows divided by their sums; empty rows stay zero.
  Eigen::MatrixXd normalized_confusion() const;
};

/// Labels are class indices in [0, num_classes).
MetricSet compute_metrics(std::span<const int> truth, std::span<const int> predicted, int num_classes);

struct ConfidenceInterval {
  double mean = 0.0;
  double half_width = 0.0;
  std::size_t n = 0;
};

/// mean +- t_{(1+level)/2, n-1} s / sqrt(n)
ConfidenceInterval t_confidence_interval(std::span<const double> samples, double level = 0.95);

/// Methods ranked per trial (rank 1 = highest observation, ties share the
/// average rank after rounding observations to 6 decimals).
struct RankTable {
  std::vector<std::string> methods;
  Eigen::MatrixXd observations;  // method x trial
  Eigen::MatrixXd ranks;         // method x trial
  Eigen::VectorXd average_ranks;

  std::size_t trials() const { return static_cast<std::size_t>(observations.cols()); }
};

RankTable rank_methods(std::vector<std::string> methods, const Eigen::MatrixXd& observations);

/// Friedman chi-square statistic over the rank table.
double friedman_statistic(const RankTable& table);

/// Studentized range critical value divided by sqrt(2), for k in 2..20 and
/// alpha in {0.05, 0.10}.
double nemenyi_q(int k, double alpha);
/// CD = q_alpha sqrt(k (k + 1) / (6 N)).
double nemenyi_cd(int k, int n, double alpha);

/// Maximal sets of methods whose pairwise average-rank gaps are all below
/// `cd`. Members are method indices sorted by average rank; groups are
/// ordered by their best member.
std::vector<std::vector<std::size_t>> cd_groups(const RankTable& table, double cd);

struct TukeyComparison {
  std::size_t a = 0;
  std::size_t b = 0;
  double mean_difference = 0.0;
  double q = 0.0;
  double p_value = 1.0;
  bool different = false;
};

/// Tukey-Kramer HSD with pooled within-group variance.
std::vector<TukeyComparison> tukey_hsd(const std::vector<std::vector<double>>& groups, double alpha = 0.05);

inline constexpr int kKdeGridPoints = 256;

struct ClassDrift {
  std::size_t flows = 0;
  Eigen::MatrixXd mean_flowpic;
  std::vector<double> kde;  // density on kde_grid()
  double bandwidth = 0.0;
};

struct DriftReport {
  int resolution = 32;
  /// partition -> label -> diagnostics
  std::map<std::string, std::map<std::string, ClassDrift>> partitions;
  std::vector<std::string> warnings;
};

std::vector<double> kde_grid();
/// Gaussian KDE of packet sizes on kde_grid(), Silverman bandwidth (at least
/// one grid step), reflected at 0 and 1500 so the density integrates to 1
/// over the grid range.
std::vector<double> packet_size_kde(std::span<const int> sizes, double* bandwidth = nullptr);
/// Trapezoid integral of `values` over kde_grid().
double integrate_on_grid(std::span<const double> values);

/// Per-class mean flowpic and packet-size KDE for every requested partition.
/// An empty `partitions` list treats the whole dataset as one partition "all".
DriftReport drift_diagnostics(const Dataset& dataset, const std::vector<std::string>& partitions, int resolution,
                              double window = 15.0);
void write_drift_report(const DriftReport& report, const std::filesystem::path& dir);

void write_rank_csv(const RankTable& table, const std::filesystem::path& path);
void write_tukey_csv(const std::vector<TukeyComparison>& rows, const std::vector<std::string>& names,
                     const std::filesystem::path& path);
/// Critical-distance diagram: methods on an average-rank axis, groups as bars.
std::string render_cd_svg(const RankTable& table, double cd, const std::vector<std::vector<std::size_t>>& groups);

}  // namespace fpl::stats
