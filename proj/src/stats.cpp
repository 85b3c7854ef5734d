#include "dsl/stats.hpp"

#include "dsl/error.hpp"

#include <algorithm>
#include <cmath>

namespace dsl {

double ks_statistic(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw Error(Errc::empty_support, "KS test needs two non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double n = static_cast<double>(a.size());
    const double m = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
    }
    return d;
}

double ks_critical_value(double alpha, std::size_t n, std::size_t m) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(Errc::invalid_config, "alpha must lie in (0, 1)");
    const double c = std::sqrt(-std::log(alpha / 2.0) / 2.0);
    const double nn = static_cast<double>(n), mm = static_cast<double>(m);
    return c * std::sqrt((nn + mm) / (nn * mm));
}

KsResult ks_test(const std::vector<double>& a, const std::vector<double>& b, double alpha) {
    KsResult r;
    r.statistic = ks_statistic(a, b);
    r.critical = ks_critical_value(alpha, a.size(), b.size());
    r.reject = r.statistic > r.critical;
    return r;
}

double median(std::vector<double> values) {
    if (values.empty()) throw Error(Errc::empty_support, "median of an empty sample");
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    if (values.size() % 2 == 1) return *mid;
    const double hi = *mid;
    const double lo = *std::max_element(values.begin(), mid);
    return 0.5 * (lo + hi);
}

} // namespace dsl
