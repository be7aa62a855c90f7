#pragma once

#include <span>
#include <vector>

namespace fdcal {

// Linear interpolation between order statistics (R "type 7"): position
// h = (n-1)p, value x_(floor h) + (h - floor h)(x_(floor h + 1) - x_(floor h)).
double quantile(std::vector<double> values, double p);
double quantile_sorted(std::span<const double> sorted, double p);

double mean(std::span<const double> x);
double variance(std::span<const double> x);  // population (divide by n)
double sample_variance(std::span<const double> x);  // divide by n-1

// Effective sample size from the initial-positive-sequence autocorrelation sum.
double effective_sample_size(std::span<const double> x);

// Split-chain potential scale reduction over several chains of equal length.
double split_rhat(const std::vector<std::vector<double>>& chains);

// z-score comparing the mean of the first 10% with the last 50% of a trace,
// each standard error from batch means.
double geweke_z(std::span<const double> x, double first = 0.1, double last = 0.5);

}  // namespace fdcal
