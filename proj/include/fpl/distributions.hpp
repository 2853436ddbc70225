#pragma once

namespace fpl::dist {

double normal_cdf(double x);
double normal_pdf(double x);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

double student_t_cdf(double t, double df);
/// Inverse of student_t_cdf for p in (0, 1).
double student_t_quantile(double p, double df);

/// P(R <= w) for the range R of k independent standard normals.
double normal_range_cdf(double w, int k);

/// Upper tail P(Q > q) of the studentized range with k groups and df degrees
/// of freedom (df = +inf allowed).
double studentized_range_sf(double q, int k, double df);
double studentized_range_cdf(double q, int k, double df);
/// Quantile of the studentized range for probability p.
double studentized_range_quantile(double p, int k, double df);

}  // namespace fpl::dist
