#pragma once

// Histogram surrogate for the optional-stopping gap
// sum_g mu_{tau_n}(g) h_n(g) - h_n(e), with h_n(e) = p(n).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "stopwalk/parallel.hpp"
#include "stopwalk/random.hpp"
#include "stopwalk/stats.hpp"
#include "stopwalk/stopping.hpp"
#include "stopwalk/walks.hpp"

namespace stopwalk {

struct GapOptions {
    std::uint64_t n = 1;
    std::size_t depth = 3;
    std::uint64_t paths = 100'000;  // per sample
    std::uint64_t steps = 200;      // mu_tau steps per path
    std::uint64_t margin = 50;
    std::uint64_t min_count = 5;    // nu cells below this are pooled
    std::uint64_t bootstrap = 400;
    double level = 0.95;
    bool coupled = false;  // nu_n paths reuse the nu streams
    std::uint64_t seed = 1;
    unsigned workers = 1;
};

struct GapCell {
    std::string cylinder;
    std::uint64_t nu = 0;    // counts from mu_tau paths started at e
    std::uint64_t nu_n = 0;  // counts after one mu_{tau_n} step
    std::uint64_t nu_n_half[2] = {0, 0};
};

struct GapReport {
    std::uint64_t n = 0;
    double p_n = 0;
    double lhs = 0;  // p(n) * sum nu_n(c)^2 / nu(c), pooled cells
    double rhs = 0;  // p(n)
    double gap = 0;  // lhs - rhs, never negative
    double debiased = 0;
    double ci_lo = 0, ci_hi = 0;
    std::vector<GapCell> cells;
    std::uint64_t nu_total = 0, nu_n_total = 0;
    std::uint64_t unresolved = 0;
    std::uint64_t truncated_increments = 0;
    std::uint64_t pooled_cells = 0;

    [[nodiscard]] bool cauchy_schwarz_holds() const { return lhs >= rhs; }
    [[nodiscard]] bool excludes_zero() const { return ci_lo > 0 || ci_hi < 0; }
};

namespace detail {

/// p * sum_c A_c (B_c/A_c - Nb/Na)^2 * Na/Nb^2: equals p * (sum B^2/A * Na/Nb^2 - 1)
/// and is a sum of non-negative terms.
inline double gap_excess(const std::vector<double>& A, const std::vector<double>& B, double p) {
    double na = 0, nb = 0;
    for (auto a : A) na += a;
    for (auto b : B) nb += b;
    if (na <= 0 || nb <= 0) return 0;
    const double ratio = nb / na;
    double s = 0;
    for (std::size_t c = 0; c < A.size(); ++c) {
        if (A[c] <= 0) continue;
        const double d = B[c] / A[c] - ratio;
        s += A[c] * d * d;
    }
    return p * s * na / (nb * nb);
}

/// Split-sample estimate of p * (sum nu_n^2 / nu - 1): the two halves of the
/// nu_n sample give an unbiased product, and 1/nu is corrected to second order.
inline double gap_debiased(const std::vector<double>& A, const std::vector<double>& B1, const std::vector<double>& B2,
                           double p) {
    double na = 0, n1 = 0, n2 = 0;
    for (auto a : A) na += a;
    for (auto b : B1) n1 += b;
    for (auto b : B2) n2 += b;
    if (na <= 0 || n1 <= 0 || n2 <= 0) return 0;
    double s = 0;
    for (std::size_t c = 0; c < A.size(); ++c) {
        if (A[c] <= 0) continue;
        const double a = A[c] / na;
        const double inv = (1.0 / a) * (1.0 - (1.0 - a) / (na * a));
        s += (B1[c] / n1) * (B2[c] / n2) * inv;
    }
    return p * (s - 1.0);
}

}  // namespace detail

/// nu: cylinder of the mu_tau path from e. nu_n: cylinder of the mu_tau path
/// started at one mu_{tau_n} endpoint.
inline GapReport optional_stopping_gap(const CompiledStep& base, const std::shared_ptr<const MixtureSpec>& mix,
                                       const GapOptions& opt) {
    if (!mix) throw std::invalid_argument("optional_stopping_gap: no mixture");
    if (opt.n > mix->kmax()) throw std::out_of_range("optional_stopping_gap: component n not in mixture");
    if (opt.depth == 0 || opt.depth > 4) throw std::invalid_argument("optional_stopping_gap: depth must be 1..4");
    const StoppingSpec spec{mix};
    const StoppingSpec comp = mix->components[opt.n];
    constexpr std::uint64_t kStreamNu = 0x0a61, kStreamNuN = 0x0b62;

    struct Out {
        std::optional<FreeWord> cyl;
        std::uint64_t truncated = 0;
    };
    auto path_nu = [&](std::size_t i) {
        PathRng rng = PathRng::make(opt.seed, kStreamNu, i);
        WalkState st;
        CylinderTracker tr(opt.depth, opt.margin);
        Out o;
        for (std::uint64_t t = 0; t < opt.steps; ++t) {
            o.truncated += advance(st, base, spec, rng.index, rng.walk).truncated;
            tr.observe(st.word);
        }
        o.cyl = tr.resolve();
        return o;
    };
    auto path_nu_n = [&](std::size_t i) {
        PathRng rng = PathRng::make(opt.seed, opt.coupled ? kStreamNu : kStreamNuN, i);
        WalkState st;
        CylinderTracker tr(opt.depth, opt.margin);
        Out o;
        if (opt.coupled) mix->p.sample_at_most(rng.index, mix->kmax());
        o.truncated += advance(st, base, comp, rng.index, rng.walk).truncated;
        tr.observe(st.word);
        for (std::uint64_t t = 1; t < opt.steps; ++t) {
            o.truncated += advance(st, base, spec, rng.index, rng.walk).truncated;
            tr.observe(st.word);
        }
        o.cyl = tr.resolve();
        return o;
    };
    auto a = parallel_map(opt.paths, opt.workers, path_nu);
    auto b = parallel_map(opt.paths, opt.workers, path_nu_n);

    GapReport r;
    r.n = opt.n;
    r.p_n = mix->p.pmf(opt.n);
    r.rhs = r.p_n;
    std::map<std::string, GapCell> cells;
    for (std::size_t i = 0; i < a.size(); ++i) {
        r.truncated_increments += a[i].truncated + b[i].truncated;
        if (a[i].cyl) {
            auto& c = cells[a[i].cyl->str()];
            ++c.nu;
            ++r.nu_total;
        } else {
            ++r.unresolved;
        }
        if (b[i].cyl) {
            auto& c = cells[b[i].cyl->str()];
            ++c.nu_n;
            ++c.nu_n_half[i % 2];
            ++r.nu_n_total;
        } else {
            ++r.unresolved;
        }
    }
    // Pool thin nu cells into "other"; an "other" cell with no nu mass is
    // merged into the smallest remaining cell.
    GapCell other{"other"};
    for (auto& [name, c] : cells) {
        c.cylinder = name;
        if (c.nu < opt.min_count) {
            other.nu += c.nu;
            other.nu_n += c.nu_n;
            other.nu_n_half[0] += c.nu_n_half[0];
            other.nu_n_half[1] += c.nu_n_half[1];
            ++r.pooled_cells;
        } else {
            r.cells.push_back(c);
        }
    }
    if (other.nu > 0) {
        r.cells.push_back(other);
    } else if (other.nu_n > 0 && !r.cells.empty()) {
        auto it = std::min_element(r.cells.begin(), r.cells.end(),
                                   [](const GapCell& x, const GapCell& y) { return x.nu < y.nu; });
        it->nu_n += other.nu_n;
        it->nu_n_half[0] += other.nu_n_half[0];
        it->nu_n_half[1] += other.nu_n_half[1];
    }

    std::vector<double> A, B, B1, B2;
    for (const auto& c : r.cells) {
        A.push_back(static_cast<double>(c.nu));
        B.push_back(static_cast<double>(c.nu_n));
        B1.push_back(static_cast<double>(c.nu_n_half[0]));
        B2.push_back(static_cast<double>(c.nu_n_half[1]));
    }
    const double excess = detail::gap_excess(A, B, r.p_n);
    r.lhs = r.p_n + excess;
    r.gap = excess;
    r.debiased = detail::gap_debiased(A, B1, B2, r.p_n);

    // Multinomial bootstrap of the debiased statistic.
    auto resample = [](const std::vector<double>& v, Rng& rng) {
        double total = 0;
        for (auto x : v) total += x;
        std::vector<double> out(v.size(), 0.0);
        double left = total, mass = 1.0;
        for (std::size_t c = 0; c + 1 < v.size() && left > 0; ++c) {
            const double q = mass > 0 ? std::clamp(v[c] / total / mass, 0.0, 1.0) : 0.0;
            std::binomial_distribution<std::uint64_t> bin(static_cast<std::uint64_t>(left), q);
            out[c] = static_cast<double>(bin(rng));
            left -= out[c];
            mass -= v[c] / total;
        }
        if (!v.empty()) out.back() += left;
        return out;
    };
    std::vector<double> reps = parallel_map(opt.bootstrap, opt.workers, [&](std::size_t i) {
        Rng rng = make_rng(opt.seed, 0xb007, i);
        auto a2 = resample(A, rng);
        auto b1 = resample(B1, rng);
        auto b2 = resample(B2, rng);
        return detail::gap_debiased(a2, b1, b2, r.p_n);
    });
    if (!reps.empty()) {
        std::sort(reps.begin(), reps.end());
        const double tail = (1.0 - opt.level) / 2.0;
        auto at = [&](double q) {
            auto k = static_cast<std::size_t>(std::floor(q * static_cast<double>(reps.size() - 1) + 0.5));
            return reps[std::min(k, reps.size() - 1)];
        };
        r.ci_lo = at(tail);
        r.ci_hi = at(1.0 - tail);
    }
    return r;
}

}  // namespace stopwalk
