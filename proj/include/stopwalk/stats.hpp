#pragma once

// Small statistical toolkit shared by the estimators: binomial intervals,
// two-sample chi-square on histograms, plug-in entropy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

namespace stopwalk {

/// A Monte Carlo proportion k/n with its standard error.
struct Proportion {
    std::uint64_t hits = 0;
    std::uint64_t total = 0;

    [[nodiscard]] double value() const { return total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0; }
    [[nodiscard]] double stderr_() const {
        if (!total) return 0.0;
        double p = value();
        return std::sqrt(p * (1.0 - p) / static_cast<double>(total));
    }
    /// Wilson score interval at z standard deviations.
    [[nodiscard]] std::pair<double, double> wilson(double z = 3.0) const {
        if (!total) return {0.0, 1.0};
        double n = static_cast<double>(total), p = value();
        double denom = 1.0 + z * z / n;
        double centre = (p + z * z / (2 * n)) / denom;
        double half = z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom;
        return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
    }
};

/// Mean and standard error of a sample of doubles (Welford).
class RunningMean {
public:
    void add(double x) {
        ++n_;
        double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    [[nodiscard]] std::uint64_t count() const { return n_; }
    [[nodiscard]] double mean() const { return mean_; }
    [[nodiscard]] double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    [[nodiscard]] double stderr_() const { return n_ ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0, m2_ = 0.0;
};

using Histogram = std::map<std::string, std::uint64_t>;

inline std::uint64_t histogram_total(const Histogram& h) {
    std::uint64_t t = 0;
    for (const auto& [k, v] : h) t += v;
    return t;
}

struct ChiSquareResult {
    double statistic = 0.0;
    double dof = 0.0;
    double p_value = 1.0;
    std::size_t pooled_cells = 0;
};

/// Two-sample chi-square test for equality of the distributions behind two
/// histograms with (possibly) different totals. Cells whose combined count
/// is below `min_cell` are merged into one pooled cell.
inline ChiSquareResult chi_square_two_sample(const Histogram& h1, const Histogram& h2, std::uint64_t min_cell = 10) {
    const double n1 = static_cast<double>(histogram_total(h1));
    const double n2 = static_cast<double>(histogram_total(h2));
    if (n1 == 0 || n2 == 0) throw std::invalid_argument("chi_square_two_sample: empty histogram");
    std::map<std::string, std::pair<double, double>> cells;
    for (const auto& [k, v] : h1) cells[k].first += static_cast<double>(v);
    for (const auto& [k, v] : h2) cells[k].second += static_cast<double>(v);

    std::vector<std::pair<double, double>> used;
    std::pair<double, double> pool{0, 0};
    ChiSquareResult res;
    for (const auto& [k, c] : cells) {
        if (c.first + c.second < static_cast<double>(min_cell)) {
            pool.first += c.first;
            pool.second += c.second;
            ++res.pooled_cells;
        } else {
            used.push_back(c);
        }
    }
    if (pool.first + pool.second > 0) used.push_back(pool);
    const double k1 = std::sqrt(n2 / n1), k2 = std::sqrt(n1 / n2);
    for (const auto& [a, b] : used) {
        double d = k1 * a - k2 * b;
        res.statistic += d * d / (a + b);
    }
    res.dof = static_cast<double>(used.size()) - 1.0;
    if (res.dof < 1) {
        res.p_value = 1.0;
        return res;
    }
    boost::math::chi_squared dist(res.dof);
    res.p_value = boost::math::cdf(boost::math::complement(dist, res.statistic));
    return res;
}

/// Total-variation distance between the normalised histograms.
inline double tv_distance(const Histogram& h1, const Histogram& h2) {
    const double n1 = static_cast<double>(histogram_total(h1));
    const double n2 = static_cast<double>(histogram_total(h2));
    if (n1 == 0 || n2 == 0) throw std::invalid_argument("tv_distance: empty histogram");
    std::map<std::string, std::pair<double, double>> cells;
    for (const auto& [k, v] : h1) cells[k].first = static_cast<double>(v) / n1;
    for (const auto& [k, v] : h2) cells[k].second = static_cast<double>(v) / n2;
    double s = 0;
    for (const auto& [k, c] : cells) s += std::abs(c.first - c.second);
    return 0.5 * s;
}

struct EntropyEstimate {
    double plug_in = 0.0;       // nats
    double miller_madow = 0.0;  // plug-in + (K - 1) / (2N)
    std::size_t distinct = 0;
    std::uint64_t samples = 0;
};

inline EntropyEstimate plug_in_entropy(const Histogram& h) {
    EntropyEstimate e;
    e.samples = histogram_total(h);
    e.distinct = h.size();
    if (!e.samples) return e;
    const double n = static_cast<double>(e.samples);
    for (const auto& [k, v] : h) {
        double q = static_cast<double>(v) / n;
        e.plug_in -= q * std::log(q);
    }
    e.miller_madow = e.plug_in + (static_cast<double>(e.distinct) - 1.0) / (2.0 * n);
    return e;
}

}  // namespace stopwalk
