#pragma once

// Trajectories and the estimators built on them: boundary cylinders of the
// free group walk, lamp stabilisation, the limit-lamp functional, the
// mean-value test and entropy profiles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stopwalk/group.hpp"
#include "stopwalk/measures.hpp"
#include "stopwalk/parallel.hpp"
#include "stopwalk/random.hpp"
#include "stopwalk/stats.hpp"
#include "stopwalk/stopping.hpp"

namespace stopwalk {

/// Seeds for one simulated path: component indices and base steps come
/// from separate engines.
struct PathRng {
    Rng index;
    Rng walk;
    static PathRng make(std::uint64_t seed, std::uint64_t stream, std::uint64_t path) {
        return {make_rng(seed, stream, 2 * path), make_rng(seed, stream, 2 * path + 1)};
    }
};

template <class Elem>
struct Trajectory {
    Elem start{};
    std::vector<Elem> increments;
    std::vector<Elem> partial_products;  // start * g_1 * ... * g_i
    [[nodiscard]] const Elem& endpoint() const { return partial_products.empty() ? start : partial_products.back(); }
};

/// n_steps draws from `draw()` multiplied onto `start` on the right.
template <class Elem, class Draw>
Trajectory<Elem> run_walk(Draw&& draw, std::uint64_t n_steps, Elem start) {
    if (n_steps < 1) throw std::invalid_argument("run_walk: n_steps must be positive");
    Trajectory<Elem> tr;
    tr.start = start;
    tr.increments.reserve(n_steps);
    tr.partial_products.reserve(n_steps);
    Elem cur = std::move(start);
    for (std::uint64_t i = 0; i < n_steps; ++i) {
        Elem g = draw();
        cur = cur * g;
        tr.increments.push_back(std::move(g));
        tr.partial_products.push_back(cur);
    }
    return tr;
}

/// Walk driven by a stopping rule: each increment is one stopped run.
inline Trajectory<FreeWord> run_walk(const CompiledStep& base, const StoppingSpec& spec, std::uint64_t n_steps,
                                     const FreeWord& start, PathRng& rng) {
    return run_walk<FreeWord>([&] { return run_to_stop(base, spec, rng.index, rng.walk).endpoint; }, n_steps, start);
}

/// Follows the depth-d prefix of a sequence of words and reports it once it
/// has not changed for `margin` observations.
class CylinderTracker {
public:
    CylinderTracker(std::size_t depth, std::uint64_t margin) : depth_(depth), margin_(margin) {}

    void observe(const FreeWord& w) {
        ++t_;
        bool valid = w.length() >= depth_;
        bool same = valid == valid_ && (!valid || w.letters().compare(0, depth_, prefix_) == 0);
        if (!same) {
            last_change_ = t_;
            valid_ = valid;
            prefix_ = valid ? w.letters().substr(0, depth_) : std::string();
        }
    }

    [[nodiscard]] std::optional<FreeWord> resolve() const {
        if (t_ == 0 || !valid_ || t_ - last_change_ < margin_) return std::nullopt;
        return FreeWord::parse(prefix_.empty() ? "e" : prefix_);
    }

private:
    std::size_t depth_;
    std::uint64_t margin_;
    std::uint64_t t_ = 0;
    std::uint64_t last_change_ = 0;
    bool valid_ = false;
    std::string prefix_;
};

/// Depth-d prefix of the final word, if it held over the last `margin` steps.
inline std::optional<FreeWord> boundary_cylinder(const Trajectory<FreeWord>& traj, std::size_t depth,
                                                 std::uint64_t margin) {
    CylinderTracker tr(depth, margin);
    for (const auto& w : traj.partial_products) tr.observe(w);
    return tr.resolve();
}

struct CylinderHistogram {
    std::size_t depth = 0;
    Histogram counts;
    std::uint64_t total = 0;
    std::uint64_t unresolved = 0;
    std::uint64_t truncated_increments = 0;
    std::uint64_t base_steps = 0;

    void add(const FreeWord& prefix) {
        ++counts[prefix.str()];
        ++total;
    }
};

struct HittingOptions {
    std::size_t depth = 3;
    std::uint64_t steps = 2000;
    std::uint64_t margin = 500;
    std::uint64_t paths = 100'000;
    std::uint64_t seed = 1;
    std::uint64_t stream = 0x417;
    unsigned workers = 1;
};

/// Histogram of resolved depth-d cylinders after `steps` increments of
/// `spec`, over independent paths.
inline CylinderHistogram hitting_histogram(const CompiledStep& base, const StoppingSpec& spec,
                                           const HittingOptions& opt) {
    struct PathOut {
        std::optional<FreeWord> prefix;
        std::uint64_t truncated = 0, steps = 0;
    };
    auto res = parallel_map(opt.paths, opt.workers, [&](std::size_t i) {
        PathRng rng = PathRng::make(opt.seed, opt.stream, i);
        WalkState st;
        CylinderTracker tr(opt.depth, opt.margin);
        PathOut out;
        for (std::uint64_t t = 0; t < opt.steps; ++t) {
            auto inc = advance(st, base, spec, rng.index, rng.walk);
            out.truncated += inc.truncated;
            out.steps += inc.steps;
            tr.observe(st.word);
        }
        out.prefix = tr.resolve();
        return out;
    });
    CylinderHistogram h;
    h.depth = opt.depth;
    for (const auto& r : res) {
        h.truncated_increments += r.truncated;
        h.base_steps += r.steps;
        if (r.prefix) {
            h.add(*r.prefix);
        } else {
            ++h.unresolved;
        }
    }
    return h;
}

struct DepthMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct HittingComparison {
    double tv = 0;
    ChiSquareResult chi2;
    double alpha = 0.01;
    [[nodiscard]] bool pass() const { return chi2.p_value >= alpha; }
};

inline HittingComparison compare_hitting(const CylinderHistogram& a, const CylinderHistogram& b, double alpha = 0.01) {
    if (a.depth != b.depth) throw DepthMismatch("compare_hitting: depths differ");
    HittingComparison c;
    c.alpha = alpha;
    c.tv = tv_distance(a.counts, b.counts);
    c.chi2 = chi_square_two_sample(a.counts, b.counts);
    return c;
}

/// Snapshot of lamps in [-w, w].
inline std::vector<std::uint8_t> lamp_window(const LampTape& t, std::int64_t w) {
    std::vector<std::uint8_t> v(static_cast<std::size_t>(2 * w + 1));
    for (std::int64_t i = -w; i <= w; ++i) v[static_cast<std::size_t>(i + w)] = t.get(i);
    return v;
}

struct LampStabilityReport {
    std::uint64_t window = 0;
    std::uint64_t steps = 0;
    std::vector<std::uint64_t> checkpoints;
    std::vector<Proportion> stable;  // per checkpoint
    std::uint64_t truncated_increments = 0;
    double mean_base_steps = 0;  // per path
};

struct LampStabilityOptions {
    std::uint64_t steps = 256;
    std::uint64_t window = 0;
    std::uint64_t paths = 10'000;
    std::vector<std::uint64_t> checkpoints;  // default n/8, n/4, n/2, 3n/4, n
    std::uint64_t seed = 1;
    std::uint64_t stream = 0x1a3;
    unsigned workers = 1;
};

/// Fraction of paths whose lamps in [-W, W] never change after step j.
inline LampStabilityReport lamp_stability(const CompiledStep& base, const StoppingSpec& spec,
                                          const LampStabilityOptions& opt) {
    LampStabilityReport rep;
    rep.window = opt.window;
    rep.steps = opt.steps;
    rep.checkpoints = opt.checkpoints;
    if (rep.checkpoints.empty())
        rep.checkpoints = {opt.steps / 8, opt.steps / 4, opt.steps / 2, 3 * opt.steps / 4, opt.steps};
    const auto w = static_cast<std::int64_t>(opt.window);
    struct PathOut {
        std::uint64_t last_change = 0, truncated = 0, steps = 0;
    };
    auto res = parallel_map(opt.paths, opt.workers, [&](std::size_t i) {
        PathRng rng = PathRng::make(opt.seed, opt.stream, i);
        WalkState st;
        st.track_word = false;
        auto prev = lamp_window(st.lamps, w);
        PathOut out;
        for (std::uint64_t t = 1; t <= opt.steps; ++t) {
            auto inc = advance(st, base, spec, rng.index, rng.walk);
            out.truncated += inc.truncated;
            out.steps += inc.steps;
            auto cur = lamp_window(st.lamps, w);
            if (cur != prev) {
                out.last_change = t;
                prev = std::move(cur);
            }
        }
        return out;
    });
    rep.stable.assign(rep.checkpoints.size(), Proportion{0, opt.paths});
    double steps = 0;
    for (const auto& r : res) {
        rep.truncated_increments += r.truncated;
        steps += static_cast<double>(r.steps);
        for (std::size_t c = 0; c < rep.checkpoints.size(); ++c) rep.stable[c].hits += r.last_change <= rep.checkpoints[c];
    }
    rep.mean_base_steps = opt.paths ? steps / static_cast<double>(opt.paths) : 0;
    return rep;
}

struct LimitEstimate {
    double estimate = 0;
    double stderr_ = 0;
    std::uint64_t paths = 0;
    std::uint64_t censored = 0;  // lamp at the site changed within the final margin
    std::uint64_t truncated_increments = 0;
    [[nodiscard]] double censored_fraction() const {
        return paths ? static_cast<double>(censored) / static_cast<double>(paths) : 0;
    }
};

struct LimitOptions {
    std::int64_t site = 0;
    std::uint64_t steps = 64;
    std::uint64_t margin = 16;
    std::uint64_t paths = 100'000;
    std::uint64_t seed = 1;
    std::uint64_t stream = 0x11f;
    unsigned workers = 1;
};

namespace detail {

inline void load_state(WalkState& st, const LampElem& x) {
    st.track_word = false;
    st.lamps.clear();
    for (auto l : x.lamps()) st.lamps.toggle(l);
    st.pos = x.pos();
}

struct LampRun {
    bool on = false;
    std::uint64_t last_change = 0;
    std::uint64_t truncated = 0;
};

/// Lamp at `site` after `steps` increments started from `x`.
inline LampRun lamp_after(const CompiledStep& base, const StoppingSpec& spec, const LampElem& x, std::int64_t site,
                          std::uint64_t steps, PathRng& rng) {
    WalkState st;
    load_state(st, x);
    LampRun out;
    out.on = st.lamps.get(site);
    for (std::uint64_t t = 1; t <= steps; ++t) {
        auto inc = advance(st, base, spec, rng.index, rng.walk);
        out.truncated += inc.truncated;
        bool now = st.lamps.get(site);
        if (now != out.on) {
            out.on = now;
            out.last_change = t;
        }
    }
    return out;
}

}  // namespace detail

/// Monte Carlo estimate of f(x) = P_x(the limiting lamp at `site` is on),
/// read off after a fixed number of increments. Paths whose lamp changed in
/// the final `margin` increments are counted as censored (and still used).
inline LimitEstimate estimate_limit_functional(const CompiledStep& base, const StoppingSpec& spec,
                                               const LampElem& start, const LimitOptions& opt) {
    auto res = parallel_map(opt.paths, opt.workers, [&](std::size_t i) {
        PathRng rng = PathRng::make(opt.seed, opt.stream, i);
        return detail::lamp_after(base, spec, start, opt.site, opt.steps, rng);
    });
    LimitEstimate e;
    e.paths = opt.paths;
    RunningMean m;
    for (const auto& r : res) {
        m.add(r.on ? 1.0 : 0.0);
        e.censored += r.last_change + opt.margin > opt.steps && r.last_change > 0;
        e.truncated_increments += r.truncated;
    }
    e.estimate = m.mean();
    e.stderr_ = m.stderr_();
    return e;
}

/// Default mean-value test points: pos in {-2..2}, lamps a subset of
/// {-1, 0, 1} that is empty, a single lamp, or {-1, 1}.
inline std::vector<LampElem> default_test_points() {
    const std::vector<std::vector<std::int64_t>> sets = {{}, {-1}, {0}, {1}, {-1, 1}};
    std::vector<LampElem> pts;
    for (std::int64_t x = -2; x <= 2; ++x)
        for (const auto& s : sets) pts.emplace_back(s, x);
    return pts;
}

struct HarmonicityPoint {
    LampElem x;
    double delta = 0;
    double stderr_ = 0;
    [[nodiscard]] double z() const { return stderr_ > 0 ? delta / stderr_ : (delta == 0 ? 0 : INFINITY); }
};

struct HarmonicityReport {
    std::string measure;
    std::vector<HarmonicityPoint> points;
    [[nodiscard]] double max_abs_z() const {
        double z = 0;
        for (const auto& p : points) z = std::max(z, std::abs(p.z()));
        return z;
    }
};

/// Estimator of f at a lamplighter element, with standard error. Each call
/// must use an independent ensemble.
struct PointEstimate {
    double value = 0;
    double stderr_ = 0;
};

/// Delta(x) = sum_y m(y) f(x y) - f(x) for a finitely supported m, with f
/// evaluated once per distinct element (independent ensembles) and the
/// standard error propagated.
template <class F>
HarmonicityReport test_harmonicity(F&& f, const LampMeasure& m, const std::vector<LampElem>& points,
                                   std::string tag = "finite") {
    std::map<LampElem, PointEstimate> cache;
    auto get = [&](const LampElem& g) -> const PointEstimate& {
        auto it = cache.find(g);
        if (it == cache.end()) it = cache.emplace(g, f(g)).first;
        return it->second;
    };
    HarmonicityReport rep;
    rep.measure = std::move(tag);
    for (const auto& x : points) {
        std::map<LampElem, double> weight;
        for (const auto& [y, q] : m.support()) weight[x * y] += q;
        weight[x] -= 1.0;
        HarmonicityPoint hp;
        hp.x = x;
        double var = 0;
        for (const auto& [g, w] : weight) {
            if (w == 0) continue;
            const auto& e = get(g);
            hp.delta += w * e.value;
            var += w * w * e.stderr_ * e.stderr_;
        }
        hp.stderr_ = std::sqrt(var);
        rep.points.push_back(hp);
    }
    return rep;
}

struct StoppedHarmonicityOptions {
    LimitOptions limit;         // how f is estimated at each point
    std::uint64_t paths = 20'000;  // samples of f(xY), Y one stopped increment
    std::uint64_t stream = 0x5e7;
};

/// Delta(x) = E f(xY) - f(x) with Y ~ pi_* mu_tau sampled by running one
/// stopped increment. f(xY) is read off one path per sample; f(x) comes
/// from the independent estimator `fx`.
template <class F>
HarmonicityReport test_harmonicity_stopped(F&& fx, const CompiledStep& base, const StoppingSpec& spec,
                                           const std::vector<LampElem>& points,
                                           const StoppedHarmonicityOptions& opt) {
    HarmonicityReport rep;
    rep.measure = "pi*mu_tau";
    for (std::size_t k = 0; k < points.size(); ++k) {
        const auto& x = points[k];
        auto res = parallel_map(opt.paths, opt.limit.workers, [&](std::size_t i) {
            PathRng rng = PathRng::make(opt.limit.seed, opt.stream + 0x10000 * (k + 1), i);
            // One increment Y, then the limit read-off from xY.
            return detail::lamp_after(base, spec, x, opt.limit.site, opt.limit.steps + 1, rng).on ? 1.0 : 0.0;
        });
        RunningMean m;
        for (double v : res) m.add(v);
        PointEstimate base_est = fx(x);
        HarmonicityPoint hp;
        hp.x = x;
        hp.delta = m.mean() - base_est.value;
        hp.stderr_ = std::sqrt(m.stderr_() * m.stderr_() + base_est.stderr_ * base_est.stderr_);
        rep.points.push_back(hp);
    }
    return rep;
}

/// Walks a finitely supported lamplighter measure on a lamp tape.
class LampStepper {
public:
    explicit LampStepper(LampMeasure m) : m_(std::move(m)) {}
    void step(WalkState& st, BitSource& bits) const {
        const auto& g = m_.support()[m_.sample_index(bits)].first;
        for (auto l : g.lamps()) st.lamps.toggle(st.pos + l);
        st.pos += g.pos();
    }
    [[nodiscard]] const LampMeasure& measure() const noexcept { return m_; }

private:
    LampMeasure m_;
};

inline double entropy_of(const LampMeasure& m) {
    double h = 0;
    for (const auto& [g, q] : m.support()) h -= q * std::log(q);
    return h;
}

struct EntropyPoint {
    std::uint64_t n = 0;
    EntropyEstimate estimate;
    [[nodiscard]] double per_step() const { return estimate.plug_in / static_cast<double>(n); }
    [[nodiscard]] bool exact() const { return n == 1; }
};

/// Plug-in estimates of H(m^{*n}) for each n (exact for n = 1). The plug-in
/// estimate is biased low once the support outgrows the sample.
inline std::vector<EntropyPoint> avez_entropy_profile(const LampMeasure& m, const std::vector<std::uint64_t>& n_list,
                                                      std::uint64_t paths, std::uint64_t seed, unsigned workers = 1) {
    LampStepper stepper(m);
    std::vector<EntropyPoint> out;
    for (auto n : n_list) {
        EntropyPoint pt;
        pt.n = n;
        if (n == 1) {
            pt.estimate.plug_in = pt.estimate.miller_madow = entropy_of(m);
            pt.estimate.distinct = m.size();
            pt.estimate.samples = 0;
            out.push_back(pt);
            continue;
        }
        auto keys = parallel_map(paths, workers, [&](std::size_t i) {
            Rng rng = make_rng(seed, 0xe7 + n, i);
            BitSource bits(rng);
            WalkState st;
            st.track_word = false;
            for (std::uint64_t t = 0; t < n; ++t) stepper.step(st, bits);
            return st.projected().str();
        });
        Histogram h;
        for (auto& k : keys) ++h[k];
        pt.estimate = plug_in_entropy(h);
        out.push_back(pt);
    }
    return out;
}

}  // namespace stopwalk
