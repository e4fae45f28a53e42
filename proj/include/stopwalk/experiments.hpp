#pragma once

// Experiment runners behind the stopwalk command line. Each runner reads a
// Config, writes CSV artifacts into the output directory and fills a Report.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "stopwalk/config.hpp"
#include "stopwalk/gap.hpp"
#include "stopwalk/group.hpp"
#include "stopwalk/ladder.hpp"
#include "stopwalk/measures.hpp"
#include "stopwalk/stopping.hpp"
#include "stopwalk/switching.hpp"
#include "stopwalk/walks.hpp"

namespace stopwalk {

namespace exp {

struct Context {
    const Config& cfg;
    Report& report;
    std::filesystem::path out;
    CompiledStep base{lazy_srw(), Projection::FreeGroup};
    RecordMeasure p = RecordMeasure::zeta2();

    [[nodiscard]] std::uint64_t seed() const { return cfg.u64("seed"); }
    [[nodiscard]] unsigned workers() const { return static_cast<unsigned>(std::max<std::uint64_t>(1, cfg.u64("workers"))); }

    void write(const std::string& name, const Csv& csv) {
        csv.write(out / name);
        report.artifact(name);
    }

    /// Level 1 is LampClear(0, 0) by definition; deeper levels need a
    /// calibration file from `calibrate`.
    [[nodiscard]] Calibration calibration(std::uint64_t need) const {
        const auto path = cfg.calibration_path();
        if (need <= 1 && !std::filesystem::exists(path)) return Calibration{};
        if (!std::filesystem::exists(path))
            throw ConfigError("calibration file " + path.string() + " not found; run `stopwalk calibrate` first");
        auto cal = Calibration::load(path.string());
        cal.require(seed(), cfg.f64("quantile"));
        if (cal.k_max < need)
            throw ConfigError("calibration covers k <= " + std::to_string(cal.k_max) + ", mixture_kmax is " +
                              std::to_string(need));
        return cal;
    }

    [[nodiscard]] std::shared_ptr<const MixtureSpec> mixture() const {
        const auto kmax = cfg.u64("mixture_kmax");
        return lampclear_mixture(p, calibration(kmax), kmax, cfg.u64("walk_horizon"));
    }
};

/// Step measure pushed off centre; its hitting measure differs from the
/// lazy walk's.
inline FreeMeasure drifted_walk() {
    return FreeMeasure({{FreeWord(), 0.5},
                        {FreeWord::parse("a"), 0.25},
                        {FreeWord::parse("A"), 0.05},
                        {FreeWord::parse("b"), 0.1},
                        {FreeWord::parse("B"), 0.1}},
                       GroupKind::FreeGroup);
}

inline GaugeFit fit(const Context& c) {
    GaugeFitOptions o;
    o.trials = c.cfg.u64("trials");
    o.horizon = c.cfg.u64("horizon");
    o.quantile = c.cfg.f64("quantile");
    o.seed = c.seed();
    o.workers = c.workers();
    return fit_gauge(c.p, o);
}

inline void calibrate_cmd(Context& c) {
    auto g = fit(c);
    CalibrateOptions o;
    o.k_max = c.cfg.u64("k_max");
    o.sequences = c.cfg.u64("sequences");
    o.trials_per_sequence = c.cfg.u64("trials_per_sequence");
    o.homogeneous_trials = c.cfg.u64("homogeneous_trials");
    o.safety = c.cfg.f64("safety");
    o.horizon_cap = c.cfg.u64("horizon_cap");
    o.seed = c.seed();
    o.quantile = c.cfg.f64("quantile");
    o.workers = c.workers();
    auto cal = calibrate(c.base, g.gauge, o);
    cal.save(c.cfg.calibration_path().string());
    Csv csv({"k", "s", "r", "phi", "achieved"});
    for (std::uint64_t k = 1; k <= cal.k_max; ++k) csv.row(k, cal.s[k], cal.r[k], cal.phi[k], cal.achieved[k]);
    c.write("calibration.csv", csv);
    auto checks = validate_calibration(c.base, cal, o.trials_per_sequence, o.sequences, c.seed() + 1, c.workers(),
                                       o.horizon_cap);
    for (const auto& ch : checks) {
        auto [lo, hi] = ch.contained.wilson(3.0);
        c.report.metric("containment_k" + std::to_string(ch.k), ch.contained.value(), lo, hi);
        c.report.check("containment_k" + std::to_string(ch.k) + "_upper", hi, ">=", ch.target);
    }
}

inline void records_cmd(Context& c) {
    const auto trials = c.cfg.u64("trials");
    const auto horizon = c.cfg.u64("horizon");
    Csv rec({"trace", "k", "T", "R", "simple", "interior"});
    for (std::uint64_t t = 0; t < std::min<std::uint64_t>(trials, 100); ++t) {
        Rng rng = make_rng(c.seed(), 0x2ec, t);
        auto tr = trace_records(sample_sequence(c.p, horizon, rng));
        for (std::size_t k = 0; k < tr.times.size(); ++k)
            rec.row(t, k, tr.times[k], tr.values[k], static_cast<bool>(tr.simple[k]), static_cast<bool>(tr.interior[k]));
    }
    c.write("records.csv", rec);
    const std::vector<std::uint64_t> k0s{1, 2, 5, 10, 20};
    auto prof = nonsimple_record_profile(c.p, k0s, trials, horizon, c.seed(), c.workers());
    Csv decay({"min_value", "records", "nonsimple", "fraction"});
    for (std::size_t i = 0; i < k0s.size(); ++i)
        decay.row(k0s[i], prof[i].total, prof[i].hits, prof[i].value());
    c.write("decay.csv", decay);
    const auto& a = prof[0];
    const auto& b = prof[3];
    const double sd = std::sqrt(a.stderr_() * a.stderr_() + b.stderr_() * b.stderr_());
    const double z = sd > 0 ? (a.value() - b.value()) / sd : 0;
    c.report.metric("nonsimple_fraction_ge1", a.value());
    c.report.metric("nonsimple_fraction_ge10", b.value());
    c.report.check("nonsimple_decrease_sigma", z, ">", c.cfg.f64("record_sigma"));
    double s4 = 0, s5 = 0;
    for (std::uint64_t i = 1; i <= 100'000; ++i) {
        const double d = record_transition_diag(c.p, i);
        if (i <= 10'000) s4 += d * d;
        s5 += d * d;
    }
    c.report.metric("diag_sq_sum_1e4", s4);
    c.report.metric("diag_sq_sum_1e5", s5);
    c.report.check("diag_sq_growth", s5 - s4, "<", c.cfg.f64("diag_tail_max"));
}

inline void gauge_cmd(Context& c) {
    auto g = fit(c);
    Csv csv({"m", "phi", "observations", "empirical"});
    for (std::size_t m = 0; m < g.counts.size(); ++m)
        if (g.counts[m] > 0) csv.row(m, g.gauge(m), g.counts[m], static_cast<bool>(g.empirical[m]));
    c.write("gauge.csv", csv);
    auto v = validate_gauge(c.p, g.gauge, c.cfg.u64("trials"), c.cfg.u64("horizon"), c.seed() + 1, c.workers());
    c.report.metric("exceedance", v.rate());
    c.report.metric("determined", static_cast<double>(v.determined));
    c.report.censoring("undetermined", v.determined + v.undetermined
                                           ? static_cast<double>(v.undetermined) /
                                                 static_cast<double>(v.determined + v.undetermined)
                                           : 0);
    c.report.check("gauge_exceedance", v.rate(), "<=", c.cfg.f64("gauge_max_exceed"));
}

inline void walk_cmd(Context& c) {
    const bool lamp = c.cfg.str("group") == "lamp";
    if (!lamp && c.cfg.str("group") != "free") throw ConfigError("group must be free or lamp");
    const auto& m = c.cfg.str("measure");
    if (m != "mu" && m != "mutau") throw ConfigError("measure must be mu or mutau");
    StoppingSpec spec = m == "mu" ? StoppingSpec{FixedOne{}} : StoppingSpec{c.mixture()};
    Csv csv({"path", "t", "element"});
    std::uint64_t increments = 0;
    for (std::uint64_t i = 0; i < c.cfg.u64("walk_paths"); ++i) {
        PathRng rng = PathRng::make(c.seed(), 0x3a1, i);
        auto traj = run_walk(c.base, spec, c.cfg.u64(m == "mu" ? "steps" : "mutau_steps"), FreeWord(), rng);
        for (std::size_t t = 0; t < traj.partial_products.size(); ++t) {
            const auto& w = traj.partial_products[t];
            csv.row(i, t + 1, lamp ? project(w).str() : w.str());
        }
        increments += traj.increments.size();
    }
    c.write("walk.csv", csv);
    c.report.metric("increments", static_cast<double>(increments));
}

inline CylinderHistogram hist(const Context& c, const StoppingSpec& spec, bool stopped, std::uint64_t stream) {
    HittingOptions o;
    o.depth = c.cfg.u64("depth");
    o.steps = c.cfg.u64(stopped ? "mutau_steps" : "steps");
    o.margin = c.cfg.u64(stopped ? "mutau_margin" : "margin");
    o.paths = c.cfg.u64("paths");
    o.seed = c.seed();
    o.stream = stream;
    o.workers = c.workers();
    return hitting_histogram(c.base, spec, o);
}

inline void hitting_cmd(Context& c) {
    auto mu = hist(c, StoppingSpec{FixedOne{}}, false, 0x417);
    auto mt = hist(c, StoppingSpec{c.mixture()}, true, 0x418);
    CompiledStep drifted(drifted_walk(), Projection::FreeGroup);
    HittingOptions o;
    o.depth = c.cfg.u64("depth");
    o.steps = c.cfg.u64("steps");
    o.margin = c.cfg.u64("margin");
    o.paths = c.cfg.u64("paths");
    o.seed = c.seed();
    o.stream = 0x419;
    o.workers = c.workers();
    auto dr = hitting_histogram(drifted, StoppingSpec{FixedOne{}}, o);
    std::map<std::string, std::array<std::uint64_t, 3>> rows;
    for (const auto& [k, v] : mu.counts) rows[k][0] = v;
    for (const auto& [k, v] : mt.counts) rows[k][1] = v;
    for (const auto& [k, v] : dr.counts) rows[k][2] = v;
    Csv csv({"cylinder", "mu", "mutau", "drifted"});
    for (const auto& [k, v] : rows) csv.row(k, v[0], v[1], v[2]);
    c.write("hitting.csv", csv);
    const double alpha = c.cfg.f64("alpha");
    auto inv = compare_hitting(mu, mt, alpha);
    auto ctl = compare_hitting(mu, dr, alpha);
    c.report.metric("tv_mu_mutau", inv.tv);
    c.report.metric("chi2_mu_mutau", inv.chi2.statistic);
    c.report.metric("tv_mu_drifted", ctl.tv);
    c.report.censoring("unresolved_mu", static_cast<double>(mu.unresolved) / static_cast<double>(o.paths));
    c.report.censoring("unresolved_mutau", static_cast<double>(mt.unresolved) / static_cast<double>(o.paths));
    c.report.censoring("truncated_increments_mutau", static_cast<double>(mt.truncated_increments));
    c.report.check("invariance_p_value", inv.chi2.p_value, ">=", alpha);
    c.report.check("drifted_control_p_value", ctl.chi2.p_value, "<", alpha);
}

inline std::size_t checkpoint_index(const LampStabilityReport& r, double frac) {
    const auto target = static_cast<std::uint64_t>(std::llround(frac * static_cast<double>(r.steps)));
    std::size_t best = 0;
    for (std::size_t i = 0; i < r.checkpoints.size(); ++i)
        if (r.checkpoints[i] <= target) best = i;
    return best;
}

inline void lamp_stability_cmd(Context& c) {
    LampStabilityOptions o;
    o.steps = c.cfg.u64("lamp_steps");
    o.window = c.cfg.u64("window");
    o.paths = c.cfg.u64("lamp_paths");
    o.seed = c.seed();
    o.workers = c.workers();
    auto st = lamp_stability(c.base, StoppingSpec{c.mixture()}, o);
    LampStabilityOptions oc = o;
    oc.steps = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(st.mean_base_steps)));
    oc.stream = 0x1a4;
    auto ctl = lamp_stability(c.base, StoppingSpec{FixedOne{}}, oc);
    Csv csv({"measure", "checkpoint", "steps", "stable", "paths"});
    for (std::size_t i = 0; i < st.checkpoints.size(); ++i)
        csv.row("mutau", st.checkpoints[i], st.steps, st.stable[i].hits, st.stable[i].total);
    for (std::size_t i = 0; i < ctl.checkpoints.size(); ++i)
        csv.row("mu", ctl.checkpoints[i], ctl.steps, ctl.stable[i].hits, ctl.stable[i].total);
    c.write("lamp_stability.csv", csv);
    const double frac = c.cfg.f64("stability_checkpoint");
    const auto a = st.stable[checkpoint_index(st, frac)];
    const auto b = ctl.stable[checkpoint_index(ctl, frac)];
    c.report.metric("mutau_stable", a.value(), a.wilson(3).first, a.wilson(3).second);
    c.report.metric("mu_stable", b.value(), b.wilson(3).first, b.wilson(3).second);
    c.report.metric("mutau_mean_base_steps", st.mean_base_steps);
    c.report.censoring("truncated_increments", static_cast<double>(st.truncated_increments));
    c.report.check("mutau_stability", a.value(), ">=", c.cfg.f64("stable_min"));
    c.report.check("mu_stability", b.value(), "<=", c.cfg.f64("control_stable_max"));

    LimitOptions lo;
    lo.steps = c.cfg.u64("limit_steps");
    lo.margin = c.cfg.u64("limit_margin");
    lo.paths = c.cfg.u64("limit_paths");
    lo.seed = c.seed();
    lo.workers = c.workers();
    lo.stream = 0x11f;
    auto f0 = estimate_limit_functional(c.base, StoppingSpec{c.mixture()}, LampElem(), lo);
    lo.stream = 0x120;
    auto f1 = estimate_limit_functional(c.base, StoppingSpec{c.mixture()}, LampElem({0}, 0), lo);
    Csv lim({"start", "estimate", "stderr", "paths", "censored"});
    lim.row(LampElem().str(), f0.estimate, f0.stderr_, f0.paths, f0.censored);
    lim.row(LampElem({0}, 0).str(), f1.estimate, f1.stderr_, f1.paths, f1.censored);
    c.write("limit_functional.csv", lim);
    const double se = std::sqrt(f0.stderr_ * f0.stderr_ + f1.stderr_ * f1.stderr_);
    c.report.metric("limit_difference", f1.estimate - f0.estimate);
    c.report.censoring("limit_censored", f0.censored_fraction());
    c.report.check("limit_separation_sigma", se > 0 ? std::abs(f1.estimate - f0.estimate) / se : 0, ">",
                   c.cfg.f64("limit_sigma"));
}

inline void harmonicity_cmd(Context& c) {
    auto mix = c.mixture();
    const StoppingSpec spec{mix};
    LimitOptions lo;
    lo.steps = c.cfg.u64("limit_steps");
    lo.margin = c.cfg.u64("limit_margin");
    lo.paths = c.cfg.u64("harmonic_paths");
    lo.seed = c.seed();
    lo.workers = c.workers();
    // One independent ensemble per distinct element, numbered in request order.
    std::map<LampElem, std::uint64_t> streams;
    auto f = [&](const LampElem& x) {
        auto [it, fresh] = streams.emplace(x, streams.size());
        LimitOptions o = lo;
        o.stream = 0x40000 + it->second;
        auto e = estimate_limit_functional(c.base, spec, x, o);
        return PointEstimate{e.estimate, e.stderr_};
    };
    const auto pts = default_test_points();
    StoppedHarmonicityOptions so;
    so.limit = lo;
    so.paths = c.cfg.u64("harmonic_paths");
    auto stopped = test_harmonicity_stopped(f, c.base, spec, pts, so);
    auto finite = test_harmonicity(f, push_forward(lazy_srw(), Projection::FreeGroup), pts, "pi*mu");
    Csv csv({"measure", "x", "delta", "stderr", "z"});
    for (const auto* r : {&stopped, &finite})
        for (const auto& hp : r->points) csv.row(r->measure, hp.x.str(), hp.delta, hp.stderr_, hp.z());
    c.write("harmonicity.csv", csv);
    const double sigma = c.cfg.f64("harmonic_sigma");
    c.report.metric("max_abs_z_mutau", stopped.max_abs_z());
    c.report.metric("max_abs_z_mu", finite.max_abs_z());
    c.report.check("mutau_mean_value_max_z", stopped.max_abs_z(), "<", sigma);
    c.report.check("mu_mean_value_max_z", finite.max_abs_z(), ">", sigma);
}

inline void entropy_cmd(Context& c) {
    const auto m = push_forward(lazy_srw(), Projection::FreeGroup);
    auto prof = avez_entropy_profile(m, c.cfg.list("entropy_n"), c.cfg.u64("paths"), c.seed(), c.workers());
    Csv csv({"n", "plug_in", "miller_madow", "per_step", "distinct", "samples", "exact"});
    for (const auto& e : prof)
        csv.row(e.n, e.estimate.plug_in, e.estimate.miller_madow, e.per_step(), e.estimate.distinct,
                e.estimate.samples, e.exact());
    c.write("entropy.csv", csv);
    c.report.metric("step_entropy", entropy_of(m));
    if (!prof.empty()) c.report.metric("last_per_step", prof.back().per_step());
}

inline void switching_freq_cmd(Context& c) {
    const auto F = ball(static_cast<unsigned>(c.cfg.u64("radius")));
    auto res = switching_frequency(lazy_srw(), F, c.cfg.list("n_list"), c.cfg.u64("paths"), c.seed(), c.workers());
    Csv csv({"n", "switching", "paths", "fraction"});
    for (const auto& r : res) csv.row(r.n, r.freq.hits, r.freq.total, r.freq.value());
    c.write("switching_freq.csv", csv);
    const auto& last = res.back();
    c.report.metric("fraction_at_largest_n", last.freq.value(), last.freq.wilson(3).first, last.freq.wilson(3).second);
    c.report.check("switching_fraction", last.freq.value(), ">=", c.cfg.f64("switching_min"));
}

inline void coset_decay_cmd(Context& c) {
    const auto F = ball(static_cast<unsigned>(c.cfg.u64("radius")));
    const auto H = subgroup_by_name(c.cfg.str("subgroup"));
    auto res = coset_decay(lazy_srw(), H, F, c.cfg.list("n_list"), c.cfg.u64("paths"), c.seed(), c.workers());
    Csv csv({"n", "hits", "paths", "fraction"});
    for (const auto& r : res) csv.row(r.n, r.freq.hits, r.freq.total, r.freq.value());
    c.write("coset_decay.csv", csv);
    c.report.metric("fraction_at_largest_n", res.back().freq.value());
}

inline void switch_stop_cmd(Context& c) {
    const auto F = ball(static_cast<unsigned>(c.cfg.u64("radius")));
    auto spec = switch_hit_stopping(F, c.seed(), c.cfg.u64("horizon_cap"));
    auto cert = certify_switch_support(c.base, spec, F, c.cfg.u64("samples"), c.seed(), c.workers());
    Csv csv({"samples", "truncated", "distinct", "switching", "mean_steps"});
    csv.row(cert.samples, cert.truncated, cert.distinct, cert.result.switching, cert.mean_steps);
    c.write("switch_stop.csv", csv);
    const double trunc = cert.samples ? static_cast<double>(cert.truncated) / static_cast<double>(cert.samples) : 0;
    c.report.censoring("truncated", trunc);
    c.report.metric("distinct", static_cast<double>(cert.distinct));
    c.report.check("support_switching", cert.result.switching ? 1 : 0, ">=", 1);
    c.report.check("truncation", trunc, "<", c.cfg.f64("max_truncation"));
}

inline LadderBuild ladder_from(const Context& c) {
    LadderOptions o;
    o.K = c.cfg.u64("K");
    o.a0_radius = static_cast<unsigned>(c.cfg.u64("a0_radius"));
    o.lambda = c.cfg.u64("lambda");
    o.switching_exponent = static_cast<unsigned>(c.cfg.u64("switching_exponent"));
    o.s_samples = c.cfg.u64("s_samples");
    o.validation_samples = c.cfg.u64("validation_samples");
    o.budget = c.cfg.u64("budget");
    o.horizon_cap = c.cfg.u64("horizon_cap");
    o.seed = c.seed();
    o.workers = c.workers();
    Gauge phi;
    if (std::filesystem::exists(c.cfg.calibration_path())) {
        auto cal = c.calibration(1);
        phi.table.assign(cal.phi.begin(), cal.phi.end());
    } else {
        phi = fit(c).gauge;
    }
    return build_ladder(c.base, c.p, phi, o);
}

inline void save_ladder(const ScaleLadder& L, const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << "# stopwalk ladder v1\nK " << L.K() << "\n";
    for (std::uint64_t n = 1; n <= L.K(); ++n) out << "lambda " << n << ' ' << L.lambda[n] << "\n";
    for (std::size_t n = 0; n < L.A.size(); ++n) {
        out << "A " << n;
        for (const auto& g : L.A[n].elements()) out << ' ' << g.str();
        out << "\n";
    }
    for (std::uint64_t n = 1; n <= L.K(); ++n) {
        out << "sigma " << n;
        for (const auto& g : L.sigma[n].elements()) out << ' ' << g.str();
        out << "\n";
    }
}

inline void ladder_cmd(Context& c) {
    auto b = ladder_from(c);
    save_ladder(b.ladder, c.out / "ladder.txt");
    c.report.artifact("ladder.txt");
    Csv csv({"level", "target", "support", "draws", "truncated", "fresh_in_support", "fresh", "certified", "mean_steps"});
    for (const auto& s : b.s_sets)
        csv.row(s.level, s.target, s.support.size(), s.draws.size(), s.truncated, s.validation.hits,
                s.validation.total, s.certified, s.mean_steps);
    c.write("ladder.csv", csv);
    auto cert = certify_disjointness(b.ladder, c.cfg.u64("budget"));
    c.report.check("sigma_disjoint_from_delta_3lambda", cert.disjoint ? 1 : 0, ">=", 1);
    for (const auto& s : b.s_sets) {
        c.report.metric("s_set_fresh_mass_k" + std::to_string(s.level), s.validation.value(),
                        s.validation.wilson(3).first, s.validation.wilson(3).second);
        c.report.censoring("s_set_truncated_k" + std::to_string(s.level),
                           static_cast<double>(s.truncated) / static_cast<double>(std::max<std::size_t>(1, s.draws.size() + s.truncated)));
    }
}

/// Ladder walks restricted to the certified supports, then the forest on
/// every prefix they visit and the record chain along each walk.
inline void forest_cmd(Context& c) {
    auto b = ladder_from(c);
    SpikeFinder finder(b.ladder, c.cfg.u64("budget") * 100);
    std::vector<FreeWord> seeds{FreeWord()};
    std::uint64_t checked = 0, ok = 0, records = 0, descending = 0, walks = c.cfg.u64("chain_paths");
    Csv chain({"path", "records", "links_checked", "links_ok", "chain_length", "descending"});
    for (std::uint64_t i = 0; i < walks; ++i) {
        PathRng rng = PathRng::make(c.seed(), 0xf0e, i);
        auto path = ladder_path_on_support(c.base, b, c.cfg.u64("chain_steps"), rng);
        seeds.insert(seeds.end(), path.w.begin(), path.w.end());
        auto cc = check_record_chain(path, b.ladder, finder);
        chain.row(i, cc.records_seen, cc.links_checked, cc.links_ok, cc.chain.size(), cc.descending);
        checked += cc.links_checked;
        ok += cc.links_ok;
        records += cc.records_seen;
        descending += cc.descending;
    }
    c.write("chain.csv", chain);
    auto f = build_forest(seeds, finder);
    Csv edges({"parent", "child"});
    for (const auto& [p, ch] : f.edges) edges.row(p.str(), ch.str());
    c.write("forest_edges.csv", edges);
    c.report.metric("vertices", static_cast<double>(f.vertices.size()));
    c.report.metric("edges", static_cast<double>(f.edges.size()));
    c.report.metric("components", static_cast<double>(f.components));
    c.report.metric("records", static_cast<double>(records));
    c.report.metric("links_checked", static_cast<double>(checked));
    c.report.check("forest_edges_equal_spiked", static_cast<double>(f.edges.size()), "<=", static_cast<double>(f.spiked));
    c.report.check("chain_links_checked", static_cast<double>(checked), ">", 0);
    c.report.check("chain_links_failed", static_cast<double>(checked - ok), "<=", 0);
    c.report.check("chains_not_descending", static_cast<double>(walks - descending), "<=", 0);
}

inline void retention_cmd(Context& c) {
    auto b = ladder_from(c);
    Gauge phi;
    if (std::filesystem::exists(c.cfg.calibration_path())) {
        auto cal = c.calibration(1);
        phi.table.assign(cal.phi.begin(), cal.phi.end());
    } else {
        phi = fit(c).gauge;
    }
    Csv csv({"n", "horizon", "retained", "paths", "truncated_increments"});
    for (std::uint64_t n = 1; n <= b.ladder.K(); ++n) {
        auto r = subtree_retention(c.base, b, phi, n, c.cfg.u64("retention_horizon"), c.cfg.u64("retention_paths"),
                                   c.seed(), c.cfg.u64("budget") * 100);
        csv.row(n, r.horizon, r.retained.hits, r.retained.total, r.truncated_increments);
        c.report.metric("retained_n" + std::to_string(n), r.retained.value(), r.retained.wilson(3).first,
                        r.retained.wilson(3).second);
    }
    c.write("retention.csv", csv);
}

inline void os_gap_cmd(Context& c) {
    GapOptions o;
    o.n = c.cfg.u64("n");
    o.depth = c.cfg.u64("depth");
    o.paths = c.cfg.u64("paths");
    o.steps = c.cfg.u64("mutau_steps");
    o.margin = c.cfg.u64("mutau_margin");
    o.min_count = c.cfg.u64("min_count");
    o.bootstrap = c.cfg.u64("bootstrap");
    o.seed = c.seed();
    o.workers = c.workers();
    std::shared_ptr<const MixtureSpec> mix;
    const bool control = c.cfg.u64("control") != 0;
    if (control) {
        auto m = std::make_shared<MixtureSpec>();
        m->p = RecordMeasure::point_mass(0);
        m->components.emplace_back(FixedOne{});
        mix = m;
        o.n = 0;
        o.coupled = true;
        o.steps = c.cfg.u64("steps");
        o.margin = c.cfg.u64("margin");
    } else {
        mix = c.mixture();
    }
    auto r = optional_stopping_gap(c.base, mix, o);
    Csv csv({"cylinder", "nu", "nu_n", "nu_n_first_half", "nu_n_second_half"});
    for (const auto& cell : r.cells) csv.row(cell.cylinder, cell.nu, cell.nu_n, cell.nu_n_half[0], cell.nu_n_half[1]);
    c.write("os_gap.csv", csv);
    c.report.metric("p_n", r.p_n);
    c.report.metric("lhs", r.lhs);
    c.report.metric("gap", r.gap);
    c.report.metric("gap_debiased", r.debiased, r.ci_lo, r.ci_hi);
    c.report.censoring("unresolved", static_cast<double>(r.unresolved) / static_cast<double>(2 * o.paths));
    c.report.censoring("truncated_increments", static_cast<double>(r.truncated_increments));
    c.report.check("cauchy_schwarz_lhs_minus_rhs", r.lhs - r.rhs, ">=", 0);
    if (control)
        c.report.check("control_gap", r.gap, "<=", 0);
    else
        c.report.check("gap_ci_lower", r.ci_lo, ">", 0);
}

}  // namespace exp

inline const std::map<std::string, std::function<void(exp::Context&)>>& experiments() {
    static const std::map<std::string, std::function<void(exp::Context&)>> table = {
        {"calibrate", exp::calibrate_cmd},
        {"records", exp::records_cmd},
        {"gauge", exp::gauge_cmd},
        {"walk", exp::walk_cmd},
        {"hitting", exp::hitting_cmd},
        {"lamp-stability", exp::lamp_stability_cmd},
        {"harmonicity", exp::harmonicity_cmd},
        {"entropy", exp::entropy_cmd},
        {"switching-freq", exp::switching_freq_cmd},
        {"coset-decay", exp::coset_decay_cmd},
        {"switch-stop", exp::switch_stop_cmd},
        {"ladder", exp::ladder_cmd},
        {"forest", exp::forest_cmd},
        {"retention", exp::retention_cmd},
        {"os-gap", exp::os_gap_cmd},
    };
    return table;
}

/// Runs one experiment and writes its artifacts plus report.json. Returns 0
/// when every verdict passes and 2 otherwise; configuration and runtime
/// errors propagate as exceptions.
inline int run_experiment(const std::string& name, const Config& cfg, nlohmann::json* report_out = nullptr) {
    const auto& table = experiments();
    auto it = table.find(name);
    if (it == table.end()) throw ConfigError("unknown subcommand '" + name + "'");
    Report report(name, cfg);
    exp::Context ctx{cfg, report, cfg.out_dir()};
    std::filesystem::create_directories(ctx.out);
    it->second(ctx);
    auto j = report.json();
    std::ofstream(ctx.out / (name + ".report.json")) << j.dump(2) << "\n";
    if (report_out) *report_out = j;
    return report.pass() ? 0 : 2;
}

}  // namespace stopwalk
