#include "dac/kstest.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dac::ks {

Edf::Edf(std::span<const double> samples) : Edf(std::vector<double>(samples.begin(), samples.end())) {}

Edf::Edf(std::vector<double> samples) : sorted_(std::move(samples)) {
    if (sorted_.empty()) throw std::invalid_argument("Edf: empty sample");
    for (double v : sorted_)
        if (!std::isfinite(v)) throw std::invalid_argument("Edf: non-finite sample");
    std::sort(sorted_.begin(), sorted_.end());
}

double edf_eval(const Edf& e, double x) {
    const auto s = e.sorted();
    const auto count = std::upper_bound(s.begin(), s.end(), x) - s.begin();
    return static_cast<double>(count) / static_cast<double>(s.size());
}

double kolmogorov_q(double lambda) {
    if (!(lambda > 0.0)) return 1.0;
    constexpr double kTermTol = 1e-12;
    double q;
    if (lambda < 1.18) {
        // Alternating series converges slowly here; use the theta-function dual form
        // 1 - Q = sqrt(2 pi)/lambda * sum_k exp(-(2k-1)^2 pi^2 / (8 lambda^2)).
        const double pi2 = std::numbers::pi * std::numbers::pi;
        double sum = 0.0;
        for (int k = 1; k < 100; ++k) {
            const double odd = 2.0 * k - 1.0;
            const double term = std::exp(-odd * odd * pi2 / (8.0 * lambda * lambda));
            sum += term;
            if (term < kTermTol) break;
        }
        q = 1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * sum;
    } else {
        double sum = 0.0;
        double sign = 1.0;
        for (int k = 1; k < 100; ++k) {
            const double term = std::exp(-2.0 * k * k * lambda * lambda);
            sum += sign * term;
            if (term < kTermTol) break;
            sign = -sign;
        }
        q = 2.0 * sum;
    }
    return std::clamp(q, 0.0, 1.0);
}

KsResult ks_two_sample(const Edf& a, const Edf& b) {
    const auto x = a.sorted();
    const auto y = b.sorted();
    const std::size_t n = x.size();
    const std::size_t m = y.size();
    const double dn = static_cast<double>(n);
    const double dm = static_cast<double>(m);

    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < n && j < m) {
        const double v = std::min(x[i], y[j]);
        while (i < n && x[i] == v) ++i;
        while (j < m && y[j] == v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / dn - static_cast<double>(j) / dm));
    }
    // Once either side is exhausted the gap only shrinks toward zero.

    KsResult r{d, 1.0, n, m};
    if (d > 0.0) r.p_value = kolmogorov_q(d * std::sqrt(dn * dm / (dn + dm)));
    return r;
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
    return ks_two_sample(Edf(a), Edf(b));
}

KsResult ks_one_sample(const Edf& e, const std::function<double(double)>& cdf) {
    const auto x = e.sorted();
    const std::size_t n = x.size();
    const double dn = static_cast<double>(n);

    double d = 0.0;
    double prev_f = 0.0;
    std::size_t i = 0;
    while (i < n) {
        const double v = x[i];
        const std::size_t below = i;
        while (i < n && x[i] == v) ++i;
        const double f = cdf(v);
        if (!(f >= 0.0 && f <= 1.0)) throw std::invalid_argument("ks_one_sample: cdf outside [0, 1]");
        if (f < prev_f) throw std::invalid_argument("ks_one_sample: cdf is not monotone");
        prev_f = f;
        d = std::max(d, std::abs(static_cast<double>(i) / dn - f));
        d = std::max(d, std::abs(static_cast<double>(below) / dn - f));
    }

    KsResult r{d, 1.0, n, 0};
    if (d > 0.0) r.p_value = kolmogorov_q(std::sqrt(dn) * d);
    return r;
}

double critical_value(double alpha, std::size_t n, std::size_t m) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("critical_value: alpha must lie in (0, 1)");
    if (n == 0 || m == 0) throw std::invalid_argument("critical_value: sample sizes must be positive");
    const double c = std::sqrt(-0.5 * std::log(alpha));
    const double dn = static_cast<double>(n);
    const double dm = static_cast<double>(m);
    return c * std::sqrt((dn + dm) / (dn * dm));
}

bool reject(double statistic, double alpha, std::size_t n, std::size_t m) {
    return statistic > critical_value(alpha, n, m);
}

}  // namespace dac::ks
