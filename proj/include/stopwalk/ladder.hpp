#pragma once

// Scales, spike decompositions and the despiking forest on F2, with a
// desk-scale inductive construction of the ladder stopping times.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "stopwalk/group.hpp"
#include "stopwalk/measures.hpp"
#include "stopwalk/parallel.hpp"
#include "stopwalk/random.hpp"
#include "stopwalk/stats.hpp"
#include "stopwalk/stopping.hpp"
#include "stopwalk/switching.hpp"
#include "stopwalk/walks.hpp"

namespace stopwalk {

struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CertificateViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Products of at most k elements of a generating set D (e in D), with one
/// witness factorisation per element.
class ProductSet {
public:
    ProductSet(FiniteSet gens, unsigned k, std::uint64_t budget) : gens_(std::move(gens)), k_(k) {
        ball_radius_ = detect_ball(gens_);
        if (ball_radius_ && *ball_radius_ * k > 6 && budget < 1'000'000'000) {
            // Ball powers are balls; elements are materialised lazily only when asked.
            lazy_ = true;
            return;
        }
        materialise(budget);
    }

    [[nodiscard]] bool contains(const FreeWord& x) const {
        if (lazy_) return x.length() <= *ball_radius_ * k_;
        return parent_.count(x.letters()) > 0;
    }

    /// Factors (elements of D) whose product is x; empty for the identity.
    [[nodiscard]] std::vector<FreeWord> witness(const FreeWord& x) const {
        std::vector<FreeWord> out;
        if (lazy_) {
            // Ball B_r: split the reduced word into chunks of length <= r.
            const auto r = *ball_radius_;
            for (std::size_t i = 0; i < x.length(); i += r)
                out.push_back(FreeWord::parse(x.letters().substr(i, std::min<std::size_t>(r, x.length() - i))));
            return out;
        }
        std::string cur = x.letters();
        while (!cur.empty()) {
            const auto& [prev, factor] = parent_.at(cur);
            out.push_back(FreeWord::parse(factor.empty() ? "e" : factor));
            cur = prev;
        }
        std::reverse(out.begin(), out.end());
        return out;
    }

    [[nodiscard]] std::vector<FreeWord> elements() const {
        if (lazy_) throw BudgetExceeded("ProductSet: elements of a large ball power requested");
        std::vector<FreeWord> v;
        v.reserve(parent_.size());
        for (const auto& [w, pf] : parent_) v.push_back(FreeWord::parse(w.empty() ? "e" : w));
        std::sort(v.begin(), v.end());
        return v;
    }

    [[nodiscard]] std::size_t size() const { return lazy_ ? 0 : parent_.size(); }
    [[nodiscard]] unsigned factors() const noexcept { return k_; }
    [[nodiscard]] const FiniteSet& generators() const noexcept { return gens_; }

private:
    static std::optional<unsigned> detect_ball(const FiniteSet& g) {
        std::size_t r = 0;
        for (const auto& w : g.elements()) r = std::max(r, w.length());
        if (r > 4) return std::nullopt;
        if (g == ball(static_cast<unsigned>(r))) return static_cast<unsigned>(r);
        return std::nullopt;
    }

    void materialise(std::uint64_t budget) {
        parent_.emplace("", std::pair<std::string, std::string>{"", ""});
        std::vector<std::string> frontier{""};
        for (unsigned step = 0; step < k_ && !frontier.empty(); ++step) {
            std::vector<std::string> next;
            for (const auto& w : frontier)
                for (const auto& d : gens_.elements()) {
                    FreeWord x = FreeWord::parse(w.empty() ? "e" : w) * d;
                    if (parent_.emplace(x.letters(), std::pair<std::string, std::string>{w, d.letters()}).second) {
                        next.push_back(x.letters());
                        if (parent_.size() > budget)
                            throw BudgetExceeded("ProductSet: more than " + std::to_string(budget) + " elements");
                    }
                }
            frontier = std::move(next);
        }
    }

    FiniteSet gens_;
    unsigned k_;
    std::optional<unsigned> ball_radius_;
    bool lazy_ = false;
    std::unordered_map<std::string, std::pair<std::string, std::string>> parent_;
};

/// (lambda, Sigma, A): Sigma_1..Sigma_K pairwise disjoint, A_0..A_K, e in A_0.
struct ScaleLadder {
    std::vector<std::uint64_t> lambda{0};  // lambda[n], n >= 1
    std::vector<FiniteSet> sigma{FiniteSet{}};  // sigma[n], n >= 1; sigma[0] unused
    std::vector<FiniteSet> A;              // A[0..K]

    [[nodiscard]] std::uint64_t K() const { return sigma.size() - 1; }

    /// Delta_n = A_0 u U_{i<n} (Sigma_i^{+-} u A_i^{+-}).
    [[nodiscard]] FiniteSet delta(std::uint64_t n) const {
        FiniteSet d = A.at(0);
        for (std::uint64_t i = 0; i < n && i < A.size(); ++i) {
            d.insert(A[i].symmetrised());
            if (i >= 1 && i < sigma.size()) d.insert(sigma[i].symmetrised());
        }
        return d;
    }

    void validate() const {
        if (A.empty() || !A[0].contains(FreeWord())) throw std::invalid_argument("ScaleLadder: e must lie in A_0");
        for (std::size_t i = 1; i < sigma.size(); ++i)
            for (std::size_t j = i + 1; j < sigma.size(); ++j)
                for (const auto& s : sigma[i].elements())
                    if (sigma[j].contains(s)) throw std::invalid_argument("ScaleLadder: Sigma sets must be disjoint");
        for (std::size_t n = 2; n < lambda.size(); ++n)
            if (lambda[n] < lambda[n - 1]) throw std::invalid_argument("ScaleLadder: lambda must be non-decreasing");
    }
};

struct SpikeDecomposition {
    FreeWord prefix, spike, postfix;
    std::uint64_t level = 0;
    std::vector<FreeWord> prefix_factors, postfix_factors;

    friend bool operator==(const SpikeDecomposition& x, const SpikeDecomposition& y) {
        return x.prefix == y.prefix && x.spike == y.spike && x.postfix == y.postfix && x.level == y.level;
    }
};

/// Finds spike decompositions against a fixed ladder; the sets
/// Delta_n^{<= lambda(n)} are built once, within the budget.
class SpikeFinder {
public:
    SpikeFinder(const ScaleLadder& L, std::uint64_t budget) : L_(&L), budget_(budget) {
        for (std::uint64_t n = 1; n <= L.K(); ++n) {
            products_.emplace_back(L.delta(n), static_cast<unsigned>(L.lambda.at(n)), budget);
            if (products_.back().size() * products_.back().size() > budget)
                throw BudgetExceeded("SpikeFinder: |Delta_" + std::to_string(n) + "^lambda|^2 exceeds budget");
            sigma_sets_.emplace_back();
            for (const auto& s : L.sigma[n].elements()) sigma_sets_.back().insert(s.letters());
        }
    }

    [[nodiscard]] const ProductSet& product(std::uint64_t n) const { return products_.at(n - 1); }
    [[nodiscard]] std::uint64_t queries() const noexcept { return queries_; }

    /// Every decomposition g = p s q with s in Sigma_n, p, q in
    /// Delta_n^{<= lambda(n)}.
    std::vector<SpikeDecomposition> all(const FreeWord& g) {
        std::vector<SpikeDecomposition> out;
        for (std::uint64_t n = 1; n <= L_->K(); ++n) {
            const auto elems = product(n).elements();
            std::vector<FreeWord> inv;
            inv.reserve(elems.size());
            for (const auto& p : elems) inv.push_back(p.inverse());
            for (std::size_t i = 0; i < elems.size(); ++i) {
                FreeWord left = inv[i] * g;
                for (std::size_t j = 0; j < elems.size(); ++j) {
                    if (++queries_ > budget_) throw BudgetExceeded("SpikeFinder: query budget exhausted");
                    FreeWord s = left * inv[j];
                    if (!sigma_sets_[n - 1].count(s.letters())) continue;
                    SpikeDecomposition d{elems[i], s, elems[j], n, product(n).witness(elems[i]),
                                         product(n).witness(elems[j])};
                    out.push_back(std::move(d));
                }
            }
        }
        return out;
    }

    /// The unique decomposition, or nothing if g is unspiked. Two or more
    /// decompositions violate the ladder property.
    std::optional<SpikeDecomposition> decompose(const FreeWord& g) {
        auto ds = all(g);
        if (ds.empty()) return std::nullopt;
        if (ds.size() > 1)
            throw CertificateViolation("spike decomposition of " + g.str() + " is not unique (" +
                                       std::to_string(ds.size()) + " found)");
        return ds.front();
    }

private:
    const ScaleLadder* L_;
    std::uint64_t budget_;
    std::vector<ProductSet> products_;
    std::vector<std::unordered_set<std::string>> sigma_sets_;
    std::uint64_t queries_ = 0;
};

inline std::optional<SpikeDecomposition> spike_decompose(const FreeWord& g, const ScaleLadder& L,
                                                         std::uint64_t budget = 10'000'000) {
    SpikeFinder f(L, budget);
    return f.decompose(g);
}

struct LadderCertificate {
    bool disjoint = true;  // Sigma_n and Delta_n^{3 lambda(n)} are disjoint for all n
    std::vector<std::size_t> product_sizes;
    std::optional<FreeWord> offending;
};

/// Checks Sigma_n n Delta_n^{3 lambda(n)} = {} by enumerating the product set.
inline LadderCertificate certify_disjointness(const ScaleLadder& L, std::uint64_t budget) {
    LadderCertificate c;
    for (std::uint64_t n = 1; n <= L.K(); ++n) {
        ProductSet P(L.delta(n), static_cast<unsigned>(3 * L.lambda.at(n)), budget);
        std::size_t sz = P.size();
        c.product_sizes.push_back(sz);
        for (const auto& s : L.sigma[n].elements()) {
            if (P.contains(s)) {
                c.disjoint = false;
                c.offending = s;
                return c;
            }
        }
    }
    return c;
}

struct DespikingForest {
    std::vector<FreeWord> vertices;
    std::vector<std::pair<FreeWord, FreeWord>> edges;  // (parent, child)
    std::vector<FreeWord> roots;
    std::size_t spiked = 0;
    std::size_t components = 0;
};

/// Despiking graph on the given vertices, closed under taking parents.
/// Throws CertificateViolation on a cycle, on two roots in one component, or
/// on a non-unique decomposition.
inline DespikingForest build_forest(const std::vector<FreeWord>& seeds, SpikeFinder& finder) {
    std::map<FreeWord, std::optional<FreeWord>> parent;
    std::vector<FreeWord> todo(seeds.begin(), seeds.end());
    while (!todo.empty()) {
        FreeWord g = std::move(todo.back());
        todo.pop_back();
        if (parent.count(g)) continue;
        auto d = finder.decompose(g);
        if (d) {
            parent[g] = d->prefix;
            todo.push_back(d->prefix);
        } else {
            parent[g] = std::nullopt;
        }
    }
    DespikingForest f;
    std::map<FreeWord, std::size_t> index;
    for (const auto& [g, p] : parent) {
        index.emplace(g, f.vertices.size());
        f.vertices.push_back(g);
    }
    std::vector<std::size_t> uf(f.vertices.size());
    for (std::size_t i = 0; i < uf.size(); ++i) uf[i] = i;
    auto find = [&](std::size_t x) {
        while (uf[x] != x) x = uf[x] = uf[uf[x]];
        return x;
    };
    for (const auto& [g, p] : parent) {
        if (!p) {
            f.roots.push_back(g);
            continue;
        }
        ++f.spiked;
        f.edges.emplace_back(*p, g);
        uf[find(index.at(g))] = find(index.at(*p));
    }
    // Acyclic: every parent chain reaches a root within |V| steps.
    for (const auto& [g, p] : parent) {
        FreeWord cur = g;
        std::size_t steps = 0;
        while (parent.at(cur)) {
            cur = *parent.at(cur);
            if (++steps > parent.size()) throw CertificateViolation("despiking graph has a cycle through " + g.str());
        }
    }
    std::map<std::size_t, std::size_t> roots_per;
    for (const auto& r : f.roots) ++roots_per[find(index.at(r))];
    std::set<std::size_t> comps;
    for (std::size_t i = 0; i < uf.size(); ++i) comps.insert(find(i));
    f.components = comps.size();
    for (auto c : comps)
        if (roots_per[c] != 1)
            throw CertificateViolation("a despiking tree has " + std::to_string(roots_per[c]) + " unspiked vertices");
    if (f.edges.size() != f.spiked) throw CertificateViolation("edge count differs from spiked vertex count");
    return f;
}

/// Root-ward chain g, parent(g), parent(parent(g)), ...
inline std::vector<FreeWord> ancestors(const FreeWord& g, SpikeFinder& finder, std::size_t max_depth = 64) {
    std::vector<FreeWord> out{g};
    while (out.size() <= max_depth) {
        auto d = finder.decompose(out.back());
        if (!d) break;
        out.push_back(d->prefix);
    }
    return out;
}

struct LadderOptions {
    std::uint64_t K = 1;
    unsigned a0_radius = 1;
    std::uint64_t lambda = 1;           // lambda(n) for every level
    unsigned switching_exponent = 2;    // tau_k switches against Delta_k^{exponent * lambda(k)}
    std::uint64_t s_samples = 400;      // draws used to pick S_{k,k}
    std::uint64_t validation_samples = 200;
    std::uint64_t budget = 2'000'000;
    std::uint64_t horizon_cap = 1'000'000;
    std::uint64_t seed = 1;
    unsigned workers = 1;
};

/// Empirical high-probability support of mu_{tau_k}.
struct SSet {
    std::uint64_t level = 0;
    double target = 0;           // required mass 1 - Phi(k)^-1 2^-k p(k)
    FiniteSet support;
    std::vector<FreeWord> draws;  // the sample, with multiplicity
    std::uint64_t truncated = 0;
    Proportion validation;       // fresh draws landing in the support
    bool certified = false;
    double mean_steps = 0;
};

struct LadderBuild {
    ScaleLadder ladder;
    std::vector<SSet> s_sets;  // index k-1 for level k
    std::vector<std::shared_ptr<ThinnedSwitchTarget>> targets;
    std::shared_ptr<const MixtureSpec> mixture;  // tau_0 = 1, tau_k = switch-hit
};

/// tau_0 = 1; for k = 1..K, tau_k is the thinned switch-hit time against
/// F_k = Delta_k^{exponent * lambda(k)}, Sigma_k = S_{k,k} and
/// A_k = U_{i<k} S_{i,k} (with S_{0,k} = {e}).
inline LadderBuild build_ladder(const CompiledStep& base, const RecordMeasure& p, const Gauge& phi,
                                const LadderOptions& opt) {
    LadderBuild b;
    b.ladder.A.push_back(ball(opt.a0_radius));
    auto mix = std::make_shared<MixtureSpec>();
    mix->p = p;
    mix->components.emplace_back(FixedOne{});
    for (std::uint64_t k = 1; k <= opt.K; ++k) {
        b.ladder.lambda.push_back(opt.lambda);
        // A_k from the S sets of lower levels.
        FiniteSet Ak{FreeWord()};
        for (const auto& s : b.s_sets) Ak.insert(s.support);
        b.ladder.A.push_back(Ak);
        const auto delta = b.ladder.delta(k);
        ProductSet Fk(delta, static_cast<unsigned>(opt.switching_exponent * opt.lambda), opt.budget);
        FiniteSet F(Fk.elements());
        // The thinning neighbourhood F^2 a F^2 must stay enumerable.
        const double f2 = static_cast<double>(F.size()) * static_cast<double>(F.size());
        if (f2 * f2 > static_cast<double>(opt.budget) * 1e3)
            throw BudgetExceeded("build_ladder: level " + std::to_string(k) + " needs |F^2|^2 ~ " +
                                 std::to_string(f2 * f2) + " products per membership query");
        auto target = std::make_shared<ThinnedSwitchTarget>(F, derive_seed(opt.seed, 0x1add, k));
        b.targets.push_back(target);
        SwitchHitSpec spec{target, opt.horizon_cap};

        SSet S;
        S.level = k;
        S.target = 1.0 - p.pmf(k) * std::ldexp(1.0, -static_cast<int>(k)) / static_cast<double>(phi(k));
        auto draws = parallel_map(opt.s_samples, opt.workers, [&](std::size_t i) {
            Rng rng = make_rng(opt.seed, 0x5500 + k, i);
            return run_to_stop(base, StoppingSpec{spec}, rng);
        });
        std::map<FreeWord, std::uint64_t> counts;
        double steps = 0;
        for (auto& d : draws) {
            steps += static_cast<double>(d.steps_used);
            if (d.truncated) {
                ++S.truncated;
                continue;
            }
            ++counts[d.endpoint];
            S.draws.push_back(d.endpoint);
        }
        S.mean_steps = draws.empty() ? 0 : steps / static_cast<double>(draws.size());
        // Smallest set of most frequent elements whose empirical mass clears
        // the target plus a 3 sigma margin.
        std::vector<std::pair<std::uint64_t, FreeWord>> byfreq;
        for (const auto& [g, c] : counts) byfreq.emplace_back(c, g);
        std::stable_sort(byfreq.begin(), byfreq.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
        const double n = static_cast<double>(opt.s_samples);
        const double need = std::min(1.0, S.target + 3.0 * std::sqrt(S.target * (1 - S.target) / n));
        std::vector<FreeWord> chosen;
        double mass = 0;
        for (const auto& [c, g] : byfreq) {
            if (mass >= need) break;
            chosen.push_back(g);
            mass += static_cast<double>(c) / n;
        }
        S.support = FiniteSet(std::move(chosen));
        auto fresh = parallel_map(opt.validation_samples, opt.workers, [&](std::size_t i) -> std::uint8_t {
            Rng rng = make_rng(opt.seed, 0x5a00 + k, i);
            auto d = run_to_stop(base, StoppingSpec{spec}, rng);
            return !d.truncated && S.support.contains(d.endpoint);
        });
        S.validation.total = opt.validation_samples;
        for (auto h : fresh) S.validation.hits += h;
        auto [lo, hi] = S.validation.wilson(3.0);
        S.certified = lo > S.target;
        b.ladder.sigma.push_back(S.support);
        b.s_sets.push_back(std::move(S));
        mix->components.emplace_back(spec);
    }
    b.ladder.validate();
    b.mixture = mix;
    return b;
}

/// One path of the ladder walk: component indices X_i, increments g_i and
/// positions w_i (w_0 = e).
struct LadderPath {
    std::vector<std::uint64_t> X;
    std::vector<FreeWord> g;
    std::vector<FreeWord> w;
};

/// Ladder walk in which a level-k increment is drawn from the empirical law
/// of mu_{tau_k} on S_{k,k}, i.e. on the event that every increment lands in
/// its certified support.
inline LadderPath ladder_path_on_support(const CompiledStep& base, const LadderBuild& b, std::uint64_t steps,
                                         PathRng& rng) {
    LadderPath path;
    path.w.push_back(FreeWord());
    BitSource bits(rng.walk);
    const auto kmax = b.mixture->kmax();
    for (std::uint64_t t = 0; t < steps; ++t) {
        auto i = b.mixture->p.sample_at_most(rng.index, kmax);
        FreeWord g;
        if (i == 0) {
            g = base.atom(base.draw(bits)).word;
        } else {
            const auto& pool = b.s_sets[i - 1].draws;
            std::vector<FreeWord> in;
            // Draws restricted to the support, with multiplicity.
            for (const auto& d : pool)
                if (b.s_sets[i - 1].support.contains(d)) in.push_back(d);
            std::uniform_int_distribution<std::size_t> pick(0, in.size() - 1);
            g = in[pick(rng.walk)];
        }
        path.X.push_back(i);
        path.w.push_back(path.w.back() * g);
        path.g.push_back(std::move(g));
    }
    return path;
}

struct ChainCheck {
    std::uint64_t links_checked = 0;
    std::uint64_t links_ok = 0;
    std::uint64_t records_seen = 0;
    bool descending = true;
    std::vector<FreeWord> chain;
};

/// For each record k (R_k >= 1) of X at which the increments satisfy the
/// ladder event (g_{T_k} in Sigma_{R_k}, prefix and postfix in
/// Delta_{R_k}^{<= lambda}), checks that w_n for T_k <= n < T_{k+1} has the
/// unique spike decomposition with prefix w_{T_k - 1}; then checks that the
/// prefixes found form a root-ward chain in the forest.
inline ChainCheck check_record_chain(const LadderPath& path, const ScaleLadder& L, SpikeFinder& finder) {
    ChainCheck c;
    auto tr = trace_records(path.X);
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        const auto R = tr.values[k];
        if (R < 1 || R > L.K()) continue;
        ++c.records_seen;
        const std::size_t T = tr.times[k];  // 1-based: increment g_T = path.g[T-1]
        const std::size_t Tnext = k + 1 < tr.times.size() ? tr.times[k + 1] : path.g.size() + 1;
        const FreeWord& a = path.w[T - 1];
        const FreeWord& spike = path.g[T - 1];
        if (!L.sigma[R].contains(spike) || !finder.product(R).contains(a)) continue;
        FreeWord post;
        bool linked = false;
        for (std::size_t n = T; n < Tnext; ++n) {
            if (n > T) post *= path.g[n - 1];
            if (!finder.product(R).contains(post)) break;
            ++c.links_checked;
            auto d = finder.decompose(path.w[n]);
            if (d && d->prefix == a && d->spike == spike && d->postfix == post) {
                ++c.links_ok;
                linked = true;
            }
        }
        if (linked && (c.chain.empty() || !(c.chain.back() == a))) c.chain.push_back(a);
    }
    // Later chain elements must descend from earlier ones.
    for (std::size_t i = 1; i < c.chain.size(); ++i) {
        auto anc = ancestors(c.chain[i], finder);
        if (std::find(anc.begin(), anc.end(), c.chain[i - 1]) == anc.end()) c.descending = false;
    }
    return c;
}

struct RetentionEstimate {
    std::uint64_t n = 0;
    Proportion retained;
    std::uint64_t horizon = 0;
    std::uint64_t truncated_increments = 0;
};

/// For g drawn from S_{n,n}: probability that g w_m stays in the subtrees
/// rooted at g w, w in Delta_n^{Phi(n)}, for every m up to the horizon,
/// with w_m the ladder walk. Membership goes through the parent chain.
inline RetentionEstimate subtree_retention(const CompiledStep& base, const LadderBuild& b, const Gauge& phi,
                                           std::uint64_t n, std::uint64_t horizon, std::uint64_t paths,
                                           std::uint64_t seed, std::uint64_t budget = 10'000'000) {
    if (n < 1 || n > b.ladder.K()) throw std::out_of_range("subtree_retention: level not built");
    const auto& S = b.s_sets[n - 1];
    std::vector<FreeWord> pool;
    for (const auto& d : S.draws)
        if (S.support.contains(d)) pool.push_back(d);
    if (pool.empty()) throw std::runtime_error("subtree_retention: empty S set");
    ProductSet reach(b.ladder.delta(n), static_cast<unsigned>(phi(n)), budget);
    RetentionEstimate est;
    est.n = n;
    est.horizon = horizon;
    est.retained.total = paths;
    SpikeFinder finder(b.ladder, budget);
    StoppingSpec spec{b.mixture};
    for (std::uint64_t i = 0; i < paths; ++i) {
        PathRng rng = PathRng{make_rng(seed, 0x7e7, 2 * i), make_rng(seed, 0x7e7, 2 * i + 1)};
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        const FreeWord g = pool[pick(rng.index)];
        const FreeWord ginv = g.inverse();
        WalkState st;
        bool ok = true;
        for (std::uint64_t m = 1; m <= horizon && ok; ++m) {
            auto inc = advance(st, base, spec, rng.index, rng.walk);
            est.truncated_increments += inc.truncated;
            bool inside = false;
            for (const auto& y : ancestors(g * st.word, finder))
                if (reach.contains(ginv * y)) {
                    inside = true;
                    break;
                }
            ok = inside;
        }
        est.retained.hits += ok;
    }
    return est;
}

}  // namespace stopwalk
