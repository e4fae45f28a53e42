#pragma once

// Stopping rules for the base walk: Fixed(1), LampClear(s, r), hitting a
// target set, and p-mixtures of these. Plus the inductive calibration of the
// lamp windows (s_k, r_k).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "stopwalk/group.hpp"
#include "stopwalk/measures.hpp"
#include "stopwalk/parallel.hpp"
#include "stopwalk/random.hpp"

namespace stopwalk {

/// Lamp configuration as a growable bit array indexed by any integer.
class LampTape {
public:
    [[nodiscard]] bool get(std::int64_t i) const {
        auto j = i + offset_;
        if (j < 0 || j >= static_cast<std::int64_t>(bits_.size())) return false;
        return bits_[static_cast<std::size_t>(j)] != 0;
    }

    /// Toggles lamp i and returns its new value.
    bool toggle(std::int64_t i) {
        ensure(i);
        auto& b = bits_[static_cast<std::size_t>(i + offset_)];
        b ^= 1;
        on_ += b ? 1 : -1;
        return b != 0;
    }

    [[nodiscard]] std::int64_t count() const noexcept { return on_; }

    /// Largest |i| over lamps that are on; -1 when all are off.
    [[nodiscard]] std::int64_t extent() const {
        std::int64_t e = -1;
        for (std::size_t j = 0; j < bits_.size(); ++j)
            if (bits_[j]) e = std::max<std::int64_t>(e, std::abs(static_cast<std::int64_t>(j) - offset_));
        return e;
    }

    [[nodiscard]] std::vector<std::int64_t> lamps() const {
        std::vector<std::int64_t> out;
        for (std::size_t j = 0; j < bits_.size(); ++j)
            if (bits_[j]) out.push_back(static_cast<std::int64_t>(j) - offset_);
        return out;
    }

    void clear() {
        bits_.clear();
        offset_ = 0;
        on_ = 0;
    }

private:
    void ensure(std::int64_t i) {
        auto j = i + offset_;
        if (j < 0) {
            auto grow = static_cast<std::size_t>(std::max<std::int64_t>(-j, static_cast<std::int64_t>(bits_.size()) / 2 + 16));
            bits_.insert(bits_.begin(), grow, 0);
            offset_ += static_cast<std::int64_t>(grow);
        } else if (j >= static_cast<std::int64_t>(bits_.size())) {
            auto need = static_cast<std::size_t>(j) + 1;
            bits_.resize(std::max(need, bits_.size() + bits_.size() / 2 + 16), 0);
        }
    }

    std::vector<std::uint8_t> bits_;
    std::int64_t offset_ = 0;
    std::int64_t on_ = 0;
};

/// A base step measure on words, with each atom's letters and lamplighter
/// image precomputed.
class CompiledStep {
public:
    struct Atom {
        FreeWord word;
        std::vector<std::int64_t> toggles;  // relative to the current position
        std::int64_t shift = 0;
    };

    CompiledStep(FreeMeasure m, Projection proj) : measure_(std::move(m)), proj_(proj) {
        for (const auto& [w, q] : measure_.support()) {
            auto img = project(w, proj);
            atoms_.push_back({w, img.lamps(), img.pos()});
        }
    }

    [[nodiscard]] const FreeMeasure& measure() const noexcept { return measure_; }
    [[nodiscard]] Projection projection() const noexcept { return proj_; }
    [[nodiscard]] const Atom& atom(std::size_t i) const { return atoms_[i]; }
    std::size_t draw(BitSource& bits) const { return measure_.sample_index(bits); }

private:
    FreeMeasure measure_;
    Projection proj_;
    std::vector<Atom> atoms_;
};

/// Current point of a walk: the word (optional) and its lamplighter image.
struct WalkState {
    bool track_word = true;
    FreeWord word;
    LampTape lamps;
    std::int64_t pos = 0;

    [[nodiscard]] LampElem projected() const { return LampElem(lamps.lamps(), pos); }
};

/// Follows the increment word of a running walk one letter at a time.
class HitCursor {
public:
    virtual ~HitCursor() = default;
    virtual void push(char c) = 0;
    [[nodiscard]] virtual bool hit() const = 0;
};

/// Membership oracle for the hitting stopping rule. Implementations must be
/// deterministic and thread-safe.
class HitTarget {
public:
    virtual ~HitTarget() = default;
    [[nodiscard]] virtual bool contains(const FreeWord& g) const = 0;
    [[nodiscard]] virtual std::string name() const = 0;

    /// Default cursor: keeps the word and asks contains() after each push.
    [[nodiscard]] virtual std::unique_ptr<HitCursor> cursor() const {
        struct WordCursor : HitCursor {
            explicit WordCursor(const HitTarget& t) : target(&t) {}
            void push(char c) override { word.push(c); }
            [[nodiscard]] bool hit() const override { return target->contains(word); }
            const HitTarget* target;
            FreeWord word;
        };
        return std::make_unique<WordCursor>(*this);
    }
};

struct FixedOne {};

struct LampClearSpec {
    std::uint64_t s = 0;
    std::uint64_t r = 0;
    std::uint64_t horizon_cap = 1'000'000;
};

struct SwitchHitSpec {
    std::shared_ptr<const HitTarget> target;
    std::uint64_t horizon_cap = 1'000'000;
};

struct MixtureSpec;

using StoppingSpec = std::variant<FixedOne, LampClearSpec, SwitchHitSpec, std::shared_ptr<const MixtureSpec>>;

/// mu_tau = sum_i p(i) mu_{tau_i}. Indices beyond the last component are
/// redrawn from p conditioned on i <= components.size() - 1.
struct MixtureSpec {
    RecordMeasure p;
    std::vector<StoppingSpec> components;

    [[nodiscard]] std::uint64_t kmax() const { return components.size() - 1; }
    /// p-mass of the indices that are actually available.
    [[nodiscard]] double covered_mass() const { return p.mass_up_to(kmax()); }
};

inline std::string describe(const StoppingSpec& spec) {
    struct V {
        std::string operator()(const FixedOne&) const { return "Fixed(1)"; }
        std::string operator()(const LampClearSpec& c) const {
            return "LampClear(" + std::to_string(c.s) + "," + std::to_string(c.r) + ")";
        }
        std::string operator()(const SwitchHitSpec& h) const { return "SwitchHit(" + h.target->name() + ")"; }
        std::string operator()(const std::shared_ptr<const MixtureSpec>& m) const {
            return "Mixture(" + std::to_string(m->components.size()) + ")";
        }
    };
    return std::visit(V{}, spec);
}

struct StoppedSample {
    FreeWord endpoint;
    std::uint64_t steps_used = 0;
    std::uint64_t component_index = 0;
    bool truncated = false;
};

/// Outcome of one increment run against a global walk state.
struct Increment {
    std::uint64_t steps = 0;
    std::uint64_t component = 0;
    bool truncated = false;
};

namespace detail {

inline void apply_atom(WalkState& st, const CompiledStep::Atom& at) {
    if (st.track_word) st.word *= at.word;
    for (auto t : at.toggles) st.lamps.toggle(st.pos + t);
    st.pos += at.shift;
}

}  // namespace detail

/// Runs one increment of `spec` starting from `st`, updating `st` in place.
/// `index_rng` draws mixture components, `walk_rng` drives the base steps.
inline Increment advance(WalkState& st, const CompiledStep& base, const StoppingSpec& spec, Rng& index_rng,
                         Rng& walk_rng) {
    BitSource bits(walk_rng);
    Increment inc;
    if (std::holds_alternative<FixedOne>(spec)) {
        detail::apply_atom(st, base.atom(base.draw(bits)));
        inc.steps = 1;
        return inc;
    }
    if (const auto* lc = std::get_if<LampClearSpec>(&spec)) {
        const auto s = static_cast<std::int64_t>(lc->s);
        const auto r = static_cast<std::int64_t>(lc->r);
        const std::int64_t x0 = st.pos;
        // Lamps that differ from the starting configuration inside the window.
        std::vector<std::uint8_t> start(static_cast<std::size_t>(2 * s + 1));
        for (std::int64_t i = -s; i <= s; ++i) start[static_cast<std::size_t>(i + s)] = st.lamps.get(x0 + i);
        std::int64_t dirty = 0;
        while (inc.steps < lc->horizon_cap) {
            const auto& at = base.atom(base.draw(bits));
            if (st.track_word) st.word *= at.word;
            for (auto t : at.toggles) {
                auto where = st.pos + t;
                bool now = st.lamps.toggle(where);
                auto rel = where - x0;
                if (rel >= -s && rel <= s) dirty += (now != (start[static_cast<std::size_t>(rel + s)] != 0)) ? 1 : -1;
            }
            st.pos += at.shift;
            ++inc.steps;
            if (dirty == 0 && std::abs(st.pos - x0) >= r) return inc;
        }
        inc.truncated = true;
        return inc;
    }
    if (const auto* sh = std::get_if<SwitchHitSpec>(&spec)) {
        auto cur = sh->target->cursor();
        while (inc.steps < sh->horizon_cap) {
            const auto& at = base.atom(base.draw(bits));
            detail::apply_atom(st, at);
            for (char c : at.word.letters()) cur->push(c);
            ++inc.steps;
            if (cur->hit()) return inc;
        }
        inc.truncated = true;
        return inc;
    }
    const auto& mix = *std::get<std::shared_ptr<const MixtureSpec>>(spec);
    auto i = mix.p.sample_at_most(index_rng, mix.kmax());
    auto sub = advance(st, base, mix.components[i], index_rng, walk_rng);
    sub.component = i;
    return sub;
}

inline StoppedSample run_to_stop(const CompiledStep& base, const StoppingSpec& spec, Rng& index_rng, Rng& walk_rng) {
    WalkState st;
    auto inc = advance(st, base, spec, index_rng, walk_rng);
    return {std::move(st.word), inc.steps, inc.component, inc.truncated};
}

inline StoppedSample run_to_stop(const CompiledStep& base, const StoppingSpec& spec, Rng& rng) {
    return run_to_stop(base, spec, rng, rng);
}

inline StoppedSample sample_mu_tau(const CompiledStep& base, const std::shared_ptr<const MixtureSpec>& mix, Rng& index_rng,
                                   Rng& walk_rng) {
    return run_to_stop(base, StoppingSpec{mix}, index_rng, walk_rng);
}

inline StoppedSample sample_mu_tau(const CompiledStep& base, const std::shared_ptr<const MixtureSpec>& mix, Rng& rng) {
    return sample_mu_tau(base, mix, rng, rng);
}

/// The exact stopped-state predicate: no lamps of g in [-s, s] and |pos| >= r.
inline bool lamps_clear(const LampElem& g, std::uint64_t s, std::uint64_t r) {
    const auto si = static_cast<std::int64_t>(s);
    for (auto l : g.lamps())
        if (l >= -si && l <= si) return false;
    return static_cast<std::uint64_t>(std::abs(g.pos())) >= r;
}

struct TruncationReport {
    std::uint64_t runs = 0;
    std::uint64_t truncated = 0;
    std::uint64_t predicate_failures = 0;
    double mean_steps = 0;  // over all runs, truncated runs counted at the cap
    bool stopped_early = false;
    [[nodiscard]] double fraction() const { return runs ? static_cast<double>(truncated) / static_cast<double>(runs) : 0; }
};

/// Runs LampClear(s, r) from the identity `runs` times, checks every
/// non-truncated endpoint against the exact predicate, and counts
/// truncations. With `stop_after` > 0 the ensemble is abandoned as soon as
/// more than that many truncations have been seen (processed in batches so
/// the result does not depend on the worker count).
inline TruncationReport lampclear_truncation(const CompiledStep& base, const LampClearSpec& spec, std::uint64_t runs,
                                             std::uint64_t seed, unsigned workers = 1, std::uint64_t stop_after = 0) {
    TruncationReport rep;
    double steps = 0;
    const std::uint64_t batch = 64;
    for (std::uint64_t lo = 0; lo < runs; lo += batch) {
        auto n = std::min(batch, runs - lo);
        auto res = parallel_map(n, workers, [&](std::size_t j) {
            Rng rng = make_rng(seed, 0x51a7, lo + j);
            auto smp = run_to_stop(base, StoppingSpec{spec}, rng);
            bool ok = smp.truncated || lamps_clear(project(smp.endpoint, base.projection()), spec.s, spec.r);
            return std::tuple<bool, bool, std::uint64_t>{smp.truncated, ok, smp.steps_used};
        });
        for (const auto& [tr, ok, st] : res) {
            ++rep.runs;
            rep.truncated += tr;
            rep.predicate_failures += !ok;
            steps += static_cast<double>(st);
        }
        if (stop_after && rep.truncated > stop_after) {
            rep.stopped_early = true;
            break;
        }
    }
    rep.mean_steps = rep.runs ? steps / static_cast<double>(rep.runs) : 0;
    return rep;
}

struct CalibrationDiverged : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CalibrationMismatch : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Lamp windows s_k and position thresholds r_k for k = 1..k_max.
struct Calibration {
    std::uint64_t k_max = 1;
    std::vector<std::uint64_t> s{0, 0};    // index 0 unused
    std::vector<std::uint64_t> r{0, 0};    // index 0 unused
    std::vector<std::uint64_t> phi{0, 0};  // Phi(k) used at level k
    std::vector<double> achieved{0, 1};    // containment frequency at level k
    std::uint64_t seed = 0;
    double quantile = 0.999;

    [[nodiscard]] LampClearSpec level(std::uint64_t k, std::uint64_t horizon_cap = 1'000'000) const {
        if (k < 1 || k > k_max) throw std::out_of_range("Calibration: level " + std::to_string(k) + " not calibrated");
        return {s[k], r[k], horizon_cap};
    }

    void save(std::ostream& out) const {
        out << "# stopwalk calibration v1\n";
        out << "seed " << seed << "\n";
        out << "quantile " << std::setprecision(17) << quantile << "\n";
        out << "# k s r phi achieved\n";
        for (std::uint64_t k = 1; k <= k_max; ++k)
            out << k << ' ' << s[k] << ' ' << r[k] << ' ' << phi[k] << ' ' << std::setprecision(6) << achieved[k]
                << "\n";
    }

    void save(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write calibration file " + path);
        save(f);
    }

    static Calibration load(std::istream& in) {
        Calibration c;
        c.s.assign(1, 0);
        c.r.assign(1, 0);
        c.phi.assign(1, 0);
        c.achieved.assign(1, 0);
        std::string line;
        bool header = false, have_seed = false, have_q = false;
        std::uint64_t expect = 1;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (line == "# stopwalk calibration v1") {
                header = true;
                continue;
            }
            if (line[0] == '#') continue;
            std::istringstream ls(line);
            if (line.rfind("seed ", 0) == 0) {
                std::string key;
                ls >> key >> c.seed;
                have_seed = true;
                continue;
            }
            if (line.rfind("quantile ", 0) == 0) {
                std::string key;
                ls >> key >> c.quantile;
                have_q = true;
                continue;
            }
            std::uint64_t k, s, r, phi;
            double ach;
            if (!(ls >> k >> s >> r >> phi >> ach) || k != expect)
                throw std::runtime_error("calibration file: bad row '" + line + "'");
            c.s.push_back(s);
            c.r.push_back(r);
            c.phi.push_back(phi);
            c.achieved.push_back(ach);
            ++expect;
        }
        if (!header || !have_seed || !have_q || expect < 2) throw std::runtime_error("calibration file: incomplete");
        c.k_max = expect - 1;
        return c;
    }

    static Calibration load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("cannot read calibration file " + path);
        return load(f);
    }

    /// Refuses a calibration produced under a different seed or quantile.
    void require(std::uint64_t want_seed, double want_quantile) const {
        if (seed != want_seed || std::abs(quantile - want_quantile) > 1e-12)
            throw CalibrationMismatch("calibration was produced with seed " + std::to_string(seed) + ", quantile " +
                                      std::to_string(quantile) + "; config asks for seed " +
                                      std::to_string(want_seed) + ", quantile " + std::to_string(want_quantile));
    }
};

struct CalibrateOptions {
    std::uint64_t k_max = 2;
    std::uint64_t sequences = 256;        // random index sequences besides the homogeneous one
    std::uint64_t trials_per_sequence = 64;
    std::uint64_t homogeneous_trials = 2048;
    double safety = 2.0;
    std::uint64_t s_ceiling = 1'000'000;
    std::uint64_t horizon_cap = 1'000'000;
    std::uint64_t seed = 1;
    double quantile = 0.999;  // recorded with the gauge it came from
    unsigned workers = 1;
};

namespace detail {

/// Largest lamp extent over increment boundaries of a product of
/// LampClear(s_i, r_i) increments, with the given index sequence.
inline std::int64_t product_extent(const CompiledStep& base, const Calibration& cal,
                                   const std::vector<std::uint64_t>& indices, std::uint64_t horizon_cap, Rng& rng) {
    WalkState st;
    st.track_word = false;
    std::int64_t e = -1;
    for (auto i : indices) {
        advance(st, base, StoppingSpec{cal.level(i, horizon_cap)}, rng, rng);
        e = std::max(e, st.lamps.extent());
    }
    return e;
}

/// Smallest s with frequency of {extent <= s/3} >= conf among `ext`.
inline std::uint64_t smallest_window(std::vector<std::int64_t> ext, double conf) {
    std::sort(ext.begin(), ext.end());
    auto need = static_cast<std::size_t>(std::ceil(conf * static_cast<double>(ext.size())));
    need = std::clamp<std::size_t>(need, 1, ext.size());
    auto q = std::max<std::int64_t>(ext[need - 1], 0);
    return static_cast<std::uint64_t>(3 * q);
}

inline double containment(const std::vector<std::int64_t>& ext, std::uint64_t s) {
    std::size_t ok = 0;
    for (auto e : ext) ok += 3 * std::max<std::int64_t>(e, 0) <= static_cast<std::int64_t>(s);
    return ext.empty() ? 1.0 : static_cast<double>(ok) / static_cast<double>(ext.size());
}

inline std::vector<std::vector<std::uint64_t>> calibration_sequences(std::uint64_t k, std::uint64_t len,
                                                                     std::uint64_t count, std::uint64_t seed) {
    std::vector<std::vector<std::uint64_t>> seqs;
    seqs.emplace_back(len, k - 1);
    if (k <= 2) return seqs;  // {1}^len has a single member
    Rng rng = make_rng(seed, 0xca11, k);
    std::uniform_int_distribution<std::uint64_t> pick(1, k - 1);
    for (std::uint64_t m = 0; m < count; ++m) {
        std::vector<std::uint64_t> v(len);
        for (auto& x : v) x = pick(rng);
        seqs.push_back(std::move(v));
    }
    return seqs;
}

}  // namespace detail

/// Inductive choice of (s_k, r_k): s_1 = r_1 = 0, and for k >= 2 the
/// smallest window whose third contains every prefix product of Phi(k)
/// increments with frequency >= 1 - 2^-k, over the homogeneous index
/// sequence and random ones, times a safety factor; r_k = 3 s_k.
inline Calibration calibrate(const CompiledStep& base, const Gauge& phi, const CalibrateOptions& opt) {
    if (opt.k_max < 2) throw std::invalid_argument("calibrate: k_max must be at least 2");
    Calibration cal;
    cal.seed = opt.seed;
    cal.quantile = opt.quantile;
    cal.k_max = 1;
    cal.phi[1] = phi(1);
    for (std::uint64_t k = 2; k <= opt.k_max; ++k) {
        const double conf = 1.0 - std::ldexp(1.0, -static_cast<int>(k));
        const auto len = phi(k);
        auto seqs = detail::calibration_sequences(k, len, opt.sequences, opt.seed);
        std::uint64_t found = 0;
        std::vector<std::vector<std::int64_t>> extents(seqs.size());
        for (std::size_t q = 0; q < seqs.size(); ++q) {
            const auto trials = q == 0 ? opt.homogeneous_trials : opt.trials_per_sequence;
            extents[q] = parallel_map(trials, opt.workers, [&](std::size_t t) {
                Rng rng = make_rng(opt.seed, 0xca00 + k, (q << 32) | t);
                return detail::product_extent(base, cal, seqs[q], opt.horizon_cap, rng);
            });
            found = std::max(found, detail::smallest_window(extents[q], conf));
        }
        auto s = static_cast<std::uint64_t>(std::ceil(opt.safety * static_cast<double>(found)));
        s = std::max({s, cal.s[k - 1], cal.r[k - 1] + 1});
        if (s > opt.s_ceiling)
            throw CalibrationDiverged("calibrate: s_" + std::to_string(k) + " = " + std::to_string(s) +
                                      " exceeds ceiling " + std::to_string(opt.s_ceiling));
        double achieved = 1.0;
        for (const auto& ext : extents) achieved = std::min(achieved, detail::containment(ext, s));
        cal.s.push_back(s);
        cal.r.push_back(3 * s);
        cal.phi.push_back(len);
        cal.achieved.push_back(achieved);
        cal.k_max = k;
    }
    return cal;
}

struct ContainmentCheck {
    std::uint64_t k = 0;
    Proportion contained;  // worst index sequence
    double target = 0;
};

/// Re-simulates the containment event with a fresh seed, for each level.
inline std::vector<ContainmentCheck> validate_calibration(const CompiledStep& base, const Calibration& cal,
                                                          std::uint64_t trials, std::uint64_t sequences,
                                                          std::uint64_t seed, unsigned workers = 1,
                                                          std::uint64_t horizon_cap = 1'000'000) {
    std::vector<ContainmentCheck> out;
    for (std::uint64_t k = 2; k <= cal.k_max; ++k) {
        ContainmentCheck c;
        c.k = k;
        c.target = 1.0 - std::ldexp(1.0, -static_cast<int>(k));
        auto seqs = detail::calibration_sequences(k, cal.phi[k], sequences, seed);
        bool first = true;
        for (std::size_t q = 0; q < seqs.size(); ++q) {
            auto ext = parallel_map(trials, workers, [&](std::size_t t) {
                Rng rng = make_rng(seed, 0xc0de + k, (q << 32) | t);
                return detail::product_extent(base, cal, seqs[q], horizon_cap, rng);
            });
            Proportion p{0, ext.size()};
            for (auto e : ext) p.hits += 3 * std::max<std::int64_t>(e, 0) <= static_cast<std::int64_t>(cal.s[k]);
            if (first || p.value() < c.contained.value()) c.contained = p;
            first = false;
        }
        out.push_back(c);
    }
    return out;
}

/// mu_tau with tau_0 = 1 and tau_i = LampClear(s_i, r_i) for 1 <= i <= kmax.
inline std::shared_ptr<const MixtureSpec> lampclear_mixture(const RecordMeasure& p, const Calibration& cal,
                                                            std::uint64_t kmax, std::uint64_t horizon_cap = 1'000'000) {
    auto mix = std::make_shared<MixtureSpec>();
    mix->p = p;
    mix->components.emplace_back(FixedOne{});
    for (std::uint64_t i = 1; i <= std::min(kmax, cal.k_max); ++i) mix->components.emplace_back(cal.level(i, horizon_cap));
    return mix;
}

}  // namespace stopwalk
