#pragma once

// Step measures on groups, the heavy-tailed record measure p on N, and
// record-time statistics: record traces, the gauge Phi, record hitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/math/special_functions/trigamma.hpp>

#include "stopwalk/group.hpp"
#include "stopwalk/parallel.hpp"
#include "stopwalk/random.hpp"
#include "stopwalk/stats.hpp"

namespace stopwalk {

enum class GroupKind { FreeGroup, FreeSemigroup, Lamplighter };

/// A finitely supported probability measure on a group.
///
/// Sampling is exact: when every probability is a multiple of 2^-10 the
/// sampler is a lookup table indexed by random bits, otherwise it is a
/// Walker alias table.
template <class Elem>
class StepMeasure {
public:
    StepMeasure() = default;

    StepMeasure(std::vector<std::pair<Elem, double>> support, GroupKind group)
        : support_(std::move(support)), group_(group) {
        if (support_.empty()) throw std::invalid_argument("StepMeasure: empty support");
        double total = 0;
        for (const auto& [g, q] : support_) {
            if (!(q > 0)) throw std::invalid_argument("StepMeasure: probabilities must be positive");
            total += q;
        }
        if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("StepMeasure: probabilities must sum to 1");
        build_sampler();
    }

    static StepMeasure point_mass(Elem g, GroupKind group) { return StepMeasure({{std::move(g), 1.0}}, group); }

    [[nodiscard]] const std::vector<std::pair<Elem, double>>& support() const noexcept { return support_; }
    [[nodiscard]] GroupKind group() const noexcept { return group_; }
    [[nodiscard]] std::size_t size() const noexcept { return support_.size(); }

    /// Index into support() of a draw.
    std::size_t sample_index(BitSource& bits) const {
        if (!table_.empty()) return table_[bits.take(table_bits_)];
        double u = uniform01(bits.engine()) * static_cast<double>(support_.size());
        auto i = static_cast<std::size_t>(u);
        if (i >= support_.size()) i = support_.size() - 1;
        return (u - static_cast<double>(i) < alias_prob_[i]) ? i : alias_[i];
    }

    const Elem& sample(BitSource& bits) const { return support_[sample_index(bits)].first; }

    const Elem& sample(Rng& rng) const {
        BitSource bits(rng);
        return sample(bits);
    }

private:
    void build_sampler() {
        constexpr unsigned kMaxBits = 10;
        for (unsigned b = 0; b <= kMaxBits; ++b) {
            const double scale = std::ldexp(1.0, static_cast<int>(b));
            bool exact = true;
            for (const auto& [g, q] : support_) {
                double m = q * scale;
                if (std::abs(m - std::round(m)) > 1e-9) {
                    exact = false;
                    break;
                }
            }
            if (!exact) continue;
            table_bits_ = b;
            table_.clear();
            for (std::size_t i = 0; i < support_.size(); ++i) {
                auto m = static_cast<std::size_t>(std::llround(support_[i].second * scale));
                table_.insert(table_.end(), m, i);
            }
            table_.resize(std::size_t{1} << b, support_.size() - 1);
            return;
        }
        // Walker alias table.
        const std::size_t n = support_.size();
        alias_prob_.assign(n, 0.0);
        alias_.assign(n, 0);
        std::vector<double> scaled(n);
        std::vector<std::size_t> small, large;
        for (std::size_t i = 0; i < n; ++i) {
            scaled[i] = support_[i].second * static_cast<double>(n);
            (scaled[i] < 1.0 ? small : large).push_back(i);
        }
        while (!small.empty() && !large.empty()) {
            auto s = small.back(), l = large.back();
            small.pop_back();
            alias_prob_[s] = scaled[s];
            alias_[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if (scaled[l] < 1.0) {
                large.pop_back();
                small.push_back(l);
            }
        }
        for (auto i : large) alias_prob_[i] = 1.0;
        for (auto i : small) alias_prob_[i] = 1.0;
    }

    std::vector<std::pair<Elem, double>> support_;
    GroupKind group_ = GroupKind::FreeGroup;
    std::vector<std::size_t> table_;
    unsigned table_bits_ = 0;
    std::vector<double> alias_prob_;
    std::vector<std::size_t> alias_;
};

using FreeMeasure = StepMeasure<FreeWord>;
using LampMeasure = StepMeasure<LampElem>;

/// mu = 1/2 delta_e + 1/8 (delta_a + delta_A + delta_b + delta_B).
inline FreeMeasure lazy_srw() {
    return FreeMeasure({{FreeWord(), 0.5},
                        {FreeWord::letter('a'), 0.125},
                        {FreeWord::letter('A'), 0.125},
                        {FreeWord::letter('b'), 0.125},
                        {FreeWord::letter('B'), 0.125}},
                       GroupKind::FreeGroup);
}

/// Lazy simple random walk on the free semigroup: 1/2 e, 1/4 a, 1/4 b.
inline FreeMeasure lazy_semigroup_walk() {
    return FreeMeasure({{FreeWord(), 0.5}, {FreeWord::letter('a'), 0.25}, {FreeWord::letter('b'), 0.25}},
                       GroupKind::FreeSemigroup);
}

/// Push-forward of a word measure to the lamplighter.
inline LampMeasure push_forward(const FreeMeasure& m, Projection proj) {
    std::map<LampElem, double> acc;
    for (const auto& [g, q] : m.support()) acc[project(g, proj)] += q;
    std::vector<std::pair<LampElem, double>> support(acc.begin(), acc.end());
    return LampMeasure(std::move(support), GroupKind::Lamplighter);
}

struct EmptyTail : std::domain_error {
    using std::domain_error::domain_error;
};

/// Probability measure p on N = {0, 1, 2, ...} used to pick mixture
/// components. Either the default family p(n) = (6/pi^2) (n+1)^-2, or an
/// explicit finite pmf.
class RecordMeasure {
public:
    /// p(n) = c (n+1)^-2 with c = 6/pi^2. Inverse-CDF sampling uses cached
    /// tails up to n_max and exact trigamma tail inversion beyond.
    static RecordMeasure zeta2(std::uint64_t n_max = 1'000'000) {
        RecordMeasure p;
        p.kind_ = Kind::Zeta2;
        p.n_max_ = n_max;
        auto tails = std::make_shared<std::vector<double>>(n_max + 2);
        (*tails)[n_max + 1] = zeta_tail(n_max + 1);
        for (std::uint64_t n = n_max + 1; n-- > 0;) (*tails)[n] = (*tails)[n + 1] + zeta_pmf(n);
        p.tails_ = std::move(tails);
        return p;
    }

    /// Explicit pmf on {0, ..., size-1}; renormalised.
    static RecordMeasure finite(std::vector<double> pmf) {
        double total = 0;
        for (double q : pmf) {
            if (q < 0) throw std::invalid_argument("RecordMeasure: negative mass");
            total += q;
        }
        if (!(total > 0)) throw std::invalid_argument("RecordMeasure: zero total mass");
        RecordMeasure p;
        p.kind_ = Kind::Finite;
        p.n_max_ = pmf.size() ? pmf.size() - 1 : 0;
        auto tails = std::make_shared<std::vector<double>>(pmf.size() + 1, 0.0);
        for (std::size_t n = pmf.size(); n-- > 0;) (*tails)[n] = (*tails)[n + 1] + pmf[n] / total;
        p.tails_ = std::move(tails);
        return p;
    }

    static RecordMeasure point_mass(std::uint64_t n) {
        std::vector<double> pmf(n + 1, 0.0);
        pmf[n] = 1.0;
        return finite(std::move(pmf));
    }

    [[nodiscard]] bool is_default_family() const noexcept { return kind_ == Kind::Zeta2; }
    [[nodiscard]] std::uint64_t n_max() const noexcept { return n_max_; }

    [[nodiscard]] double pmf(std::uint64_t n) const {
        if (kind_ == Kind::Zeta2) return zeta_pmf(n);
        if (n >= tails_->size() - 1) return 0.0;
        return (*tails_)[n] - (*tails_)[n + 1];
    }

    /// Sum_{l >= i} p(l).
    [[nodiscard]] double tail(std::uint64_t i) const {
        if (i < tails_->size()) return (*tails_)[i];
        return kind_ == Kind::Zeta2 ? zeta_tail(i) : 0.0;
    }

    /// p(i <= kmax) mass.
    [[nodiscard]] double mass_up_to(std::uint64_t kmax) const { return 1.0 - tail(kmax + 1); }

    std::uint64_t sample(Rng& rng) const {
        // v in (0, 1]; the draw is the smallest n with tail(n+1) < v.
        const double v = static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
        const auto& t = *tails_;
        if (t.back() >= v && kind_ == Kind::Zeta2) return invert_zeta_tail(v);
        // t is non-increasing; find first index j >= 1 with t[j] < v, answer j-1.
        auto it = std::upper_bound(t.begin() + 1, t.end(), v, [](double val, double x) { return x < val; });
        if (it == t.end()) return t.size() - 2;  // finite pmf: rounding at the top
        return static_cast<std::uint64_t>(it - t.begin()) - 1;
    }

    /// Draw conditioned on the value being <= kmax (rejection).
    std::uint64_t sample_at_most(Rng& rng, std::uint64_t kmax) const {
        for (;;) {
            auto i = sample(rng);
            if (i <= kmax) return i;
        }
    }

private:
    enum class Kind { Zeta2, Finite };

    static constexpr double kC = 6.0 / (std::numbers::pi * std::numbers::pi);
    static double zeta_pmf(std::uint64_t n) {
        double m = static_cast<double>(n) + 1.0;
        return kC / (m * m);
    }
    static double zeta_tail(std::uint64_t i) { return kC * boost::math::trigamma(static_cast<double>(i) + 1.0); }

    std::uint64_t invert_zeta_tail(double v) const {
        // tail(n) ~ c / (n + 1/2); start there and correct with exact tails.
        double guess = kC / v - 0.5;
        constexpr double kCap = 4.0e18;
        if (guess > kCap) return static_cast<std::uint64_t>(kCap);
        auto n = std::max<std::uint64_t>(n_max_ + 1, static_cast<std::uint64_t>(std::max(0.0, guess)));
        while (n > n_max_ + 1 && zeta_tail(n) < v) --n;
        while (zeta_tail(n + 1) >= v) ++n;
        return n;
    }

    Kind kind_ = Kind::Zeta2;
    std::uint64_t n_max_ = 0;
    std::shared_ptr<const std::vector<double>> tails_;
};

/// Diagonal transition probability p(i,i) = p(i) / sum_{l >= i} p(l) of the
/// record-value Markov chain.
inline double record_transition_diag(const RecordMeasure& p, std::uint64_t i) {
    double t = p.tail(i);
    if (!(t > 0)) throw EmptyTail("record_transition_diag: tail mass is zero at i = " + std::to_string(i));
    return p.pmf(i) / t;
}

/// Records of a sequence X_1, X_2, ...: T_0 = 1 and T_k is the first index
/// after T_{k-1} whose value is >= every earlier value (ties count).
/// Indices are 1-based.
struct RecordTrace {
    std::vector<std::uint64_t> times;
    std::vector<std::uint64_t> values;
    /// R_{k-1} < R_k < R_{k+1}; a missing neighbour does not count against.
    std::vector<bool> simple;
    /// Record has a successor in the observed sequence.
    std::vector<bool> interior;
};

inline RecordTrace trace_records(const std::vector<std::uint64_t>& samples) {
    if (samples.empty()) throw std::invalid_argument("trace_records: empty sequence");
    RecordTrace tr;
    std::uint64_t best = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (i == 0 || samples[i] >= best) {
            best = samples[i];
            tr.times.push_back(i + 1);
            tr.values.push_back(samples[i]);
        }
    }
    const std::size_t K = tr.values.size();
    tr.simple.resize(K);
    tr.interior.resize(K);
    for (std::size_t k = 0; k < K; ++k) {
        bool left = k == 0 || tr.values[k - 1] < tr.values[k];
        bool right = k + 1 == K || tr.values[k] < tr.values[k + 1];
        tr.simple[k] = left && right;
        tr.interior[k] = k + 1 < K;
    }
    return tr;
}

inline std::vector<std::uint64_t> sample_sequence(const RecordMeasure& p, std::size_t n, Rng& rng) {
    std::vector<std::uint64_t> xs(n);
    for (auto& x : xs) x = p.sample(rng);
    return xs;
}

/// Non-decreasing Phi: N -> N with a cubic analytic fallback (m+1)^3 for
/// values beyond the fitted table.
struct Gauge {
    std::vector<std::uint64_t> table;
    bool fallback = true;

    static std::uint64_t cubic(std::uint64_t m) {
        double c = std::pow(static_cast<double>(m) + 1.0, 3.0);
        return c > 1e18 ? static_cast<std::uint64_t>(1e18) : static_cast<std::uint64_t>(c);
    }

    [[nodiscard]] std::uint64_t operator()(std::uint64_t m) const {
        if (m < table.size()) return table[m];
        if (!fallback) throw std::out_of_range("Gauge: value " + std::to_string(m) + " outside fitted table");
        return std::max(table.empty() ? 0 : table.back(), cubic(m));
    }
};

struct InsufficientData : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GaugeFitOptions {
    std::uint64_t trials = 10'000;
    std::uint64_t horizon = 10'000;
    double quantile = 0.999;
    std::uint64_t seed = 1;
    unsigned workers = 1;
    /// Bins with fewer observations than this use max(observed max + 1,
    /// cubic fallback). Default 10 / (1 - quantile).
    std::uint64_t min_bin = 0;
    bool fallback = true;
};

struct GaugeFit {
    Gauge gauge;
    /// Observations per record value (records k >= 1).
    std::vector<std::uint64_t> counts;
    /// Whether the bin's value came from the empirical quantile.
    std::vector<bool> empirical;
};

namespace detail {

/// For one trace: (R_k, T_{k+1}) for records k >= 1, with T_{k+1} = horizon + 1
/// when the next record is not observed (censored).
inline std::vector<std::pair<std::uint64_t, std::uint64_t>> record_successors(const RecordMeasure& p,
                                                                              std::uint64_t horizon, Rng& rng) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
    std::uint64_t best = 0, k = 0;
    bool pending = false;
    for (std::uint64_t i = 1; i <= horizon; ++i) {
        auto x = p.sample(rng);
        if (i == 1 || x >= best) {
            if (pending) out.emplace_back(best, i);
            best = x;
            pending = k >= 1;
            ++k;
        }
    }
    const std::uint64_t pending_value = best;
    if (pending) out.emplace_back(pending_value, horizon + 1);
    return out;
}

}  // namespace detail

/// Fits Phi so that, over Monte Carlo record traces, T_{k+1} >= Phi(R_k)
/// happens with frequency at most 1 - quantile for every record value with
/// enough data. The table is made non-decreasing afterwards.
inline GaugeFit fit_gauge(const RecordMeasure& p, const GaugeFitOptions& opt) {
    if (opt.trials < 1000) throw std::invalid_argument("fit_gauge: need at least 1000 trials");
    const std::uint64_t min_bin =
        opt.min_bin ? opt.min_bin : static_cast<std::uint64_t>(std::ceil(10.0 / (1.0 - opt.quantile)));
    auto per_trial = parallel_map(opt.trials, opt.workers, [&](std::size_t t) {
        Rng rng = make_rng(opt.seed, 0x6a09, t);
        return detail::record_successors(p, opt.horizon, rng);
    });
    std::map<std::uint64_t, std::vector<std::uint64_t>> bins;
    for (const auto& v : per_trial)
        for (const auto& [r, next] : v) bins[r].push_back(next);

    GaugeFit fit;
    fit.gauge.fallback = opt.fallback;
    const std::uint64_t top = bins.empty() ? 0 : bins.rbegin()->first;
    fit.gauge.table.assign(top + 1, 0);
    fit.counts.assign(top + 1, 0);
    fit.empirical.assign(top + 1, false);
    for (std::uint64_t m = 0; m <= top; ++m) {
        auto it = bins.find(m);
        if (it == bins.end()) {
            if (!opt.fallback) throw InsufficientData("fit_gauge: no record with value " + std::to_string(m));
            fit.gauge.table[m] = Gauge::cubic(m);
            continue;
        }
        auto& xs = it->second;
        fit.counts[m] = xs.size();
        std::sort(xs.begin(), xs.end());
        if (xs.size() >= min_bin) {
            // Smallest Phi with #{x >= Phi} <= (1 - q) n.
            auto allowed = static_cast<std::size_t>(std::floor((1.0 - opt.quantile) * static_cast<double>(xs.size())));
            std::size_t idx = xs.size() - 1 - std::min(allowed, xs.size() - 1);
            fit.gauge.table[m] = xs[idx] + 1;
            fit.empirical[m] = true;
        } else {
            if (!opt.fallback) throw InsufficientData("fit_gauge: too few records with value " + std::to_string(m));
            fit.gauge.table[m] = std::max(xs.back() + 1, Gauge::cubic(m));
        }
    }
    for (std::size_t m = 1; m < fit.gauge.table.size(); ++m)
        fit.gauge.table[m] = std::max(fit.gauge.table[m], fit.gauge.table[m - 1]);
    return fit;
}

struct GaugeValidation {
    std::uint64_t violations = 0;
    std::uint64_t determined = 0;
    std::uint64_t undetermined = 0;  // censored with Phi(R_k) beyond the horizon
    [[nodiscard]] double rate() const {
        return determined ? static_cast<double>(violations) / static_cast<double>(determined) : 0.0;
    }
};

/// Frequency of T_{k+1} >= Phi(R_k) over records k >= 1 of fresh traces.
inline GaugeValidation validate_gauge(const RecordMeasure& p, const Gauge& phi, std::uint64_t trials,
                                      std::uint64_t horizon, std::uint64_t seed, unsigned workers = 1) {
    auto per_trial = parallel_map(trials, workers, [&](std::size_t t) {
        Rng rng = make_rng(seed, 0x6a09, t);
        GaugeValidation v;
        for (const auto& [r, next] : detail::record_successors(p, horizon, rng)) {
            const auto bound = phi(r);
            if (next <= horizon) {
                ++v.determined;
                if (next >= bound) ++v.violations;
            } else if (bound <= horizon + 1) {
                ++v.determined;
                ++v.violations;
            } else {
                ++v.undetermined;
            }
        }
        return v;
    });
    GaugeValidation total;
    for (const auto& v : per_trial) {
        total.violations += v.violations;
        total.determined += v.determined;
        total.undetermined += v.undetermined;
    }
    return total;
}

/// Probability that n appears among the record values (R_k)_{k >= 1} of a
/// trace of length `horizon`.
inline Proportion record_hit_probability(const RecordMeasure& p, std::uint64_t n, std::uint64_t trials,
                                         std::uint64_t horizon, std::uint64_t seed, unsigned workers = 1) {
    if (trials < 1000) throw std::invalid_argument("record_hit_probability: need at least 1000 trials");
    auto hits = parallel_map(trials, workers, [&](std::size_t t) -> std::uint8_t {
        Rng rng = make_rng(seed, 0x7b3d, t);
        std::uint64_t best = 0;
        for (std::uint64_t i = 1; i <= horizon; ++i) {
            auto x = p.sample(rng);
            if (i == 1 || x >= best) {
                if (i > 1 && x == n) return 1;
                best = x;
                if (best > n) return 0;
            }
        }
        return 0;
    });
    Proportion prop;
    prop.total = trials;
    for (auto h : hits) prop.hits += h;
    return prop;
}

/// Fraction of non-simple records among interior records with index >= k0,
/// for each k0 in the list.
inline std::vector<Proportion> nonsimple_record_profile(const RecordMeasure& p, const std::vector<std::uint64_t>& k0s,
                                                        std::uint64_t trials, std::uint64_t horizon,
                                                        std::uint64_t seed, unsigned workers = 1) {
    auto per_trial = parallel_map(trials, workers, [&](std::size_t t) {
        Rng rng = make_rng(seed, 0x2c1f, t);
        auto tr = trace_records(sample_sequence(p, horizon, rng));
        std::vector<Proportion> out(k0s.size());
        for (std::size_t k = 1; k < tr.values.size(); ++k) {
            if (!tr.interior[k]) continue;
            for (std::size_t j = 0; j < k0s.size(); ++j) {
                if (k < k0s[j]) continue;
                ++out[j].total;
                if (!tr.simple[k]) ++out[j].hits;
            }
        }
        return out;
    });
    std::vector<Proportion> total(k0s.size());
    for (const auto& v : per_trial)
        for (std::size_t j = 0; j < k0s.size(); ++j) {
            total[j].hits += v[j].hits;
            total[j].total += v[j].total;
        }
    return total;
}

}  // namespace stopwalk
