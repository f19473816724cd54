#pragma once

#include <vector>

namespace cvt {

double sample_mean(const std::vector<double>& xs);
double sample_std(const std::vector<double>& xs);  // n-1 denominator

// Two-sided 97.5% Student-t critical value (tabulated for df <= 30,
// 1.96 beyond).
double t_critical_975(int df);

// Half-width of the 95% confidence interval: t(0.975, n-1) * s / sqrt(n).
double margin_of_error_95(const std::vector<double>& runs);

}  // namespace cvt
