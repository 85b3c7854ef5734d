#pragma once

#include <vector>

namespace dsl {

/// Two-sample Kolmogorov-Smirnov statistic sup |F_a - F_b|.
double ks_statistic(std::vector<double> a, std::vector<double> b);

/// Large-sample critical value c(alpha) sqrt((n + m) / (n m)),
/// c(alpha) = sqrt(-ln(alpha / 2) / 2).
double ks_critical_value(double alpha, std::size_t n, std::size_t m);

struct KsResult {
    double statistic = 0.0;
    double critical = 0.0;
    bool reject = false;
};

KsResult ks_test(const std::vector<double>& a, const std::vector<double>& b, double alpha = 0.01);

double median(std::vector<double> values);

} // namespace dsl
