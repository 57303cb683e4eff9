#pragma once

// Empirical distribution functions and Kolmogorov-Smirnov tests.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace dac::ks {

/// Empirical distribution function over a finite, nonempty sample.
class Edf {
public:
    /// Sorts a copy of `samples`. Throws std::invalid_argument on empty or non-finite input.
    explicit Edf(std::span<const double> samples);
    explicit Edf(std::vector<double> samples);

    std::span<const double> sorted() const { return sorted_; }
    std::size_t size() const { return sorted_.size(); }

private:
    std::vector<double> sorted_;
};

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
    std::size_t m = 0;  // 0 for one-sample tests

    bool operator==(const KsResult&) const = default;
};

/// Fraction of samples <= x (right-continuous).
double edf_eval(const Edf& e, double x);

/// Kolmogorov survival function Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2).
double kolmogorov_q(double lambda);

/// Two-sample statistic sup_x |F_a(x) - F_b(x)| by a merge walk; asymptotic p-value.
/// D == 0 yields p == 1.
KsResult ks_two_sample(const Edf& a, const Edf& b);
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

/// One-sample test against a continuous reference cdf. Throws std::invalid_argument if the
/// cdf is observed to decrease or leave [0, 1] at the evaluated points.
KsResult ks_one_sample(const Edf& e, const std::function<double(double)>& cdf);

/// c(alpha) * sqrt((n + m) / (n m)) with c(alpha) = sqrt(-ln(alpha) / 2).
double critical_value(double alpha, std::size_t n, std::size_t m);

/// True when the null hypothesis is rejected: D > critical_value(alpha, n, m).
bool reject(double statistic, double alpha, std::size_t n, std::size_t m);

}  // namespace dac::ks
