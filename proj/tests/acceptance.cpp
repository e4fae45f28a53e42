// Acceptance run: one PASS/FAIL line per criterion, at full size.
// Exit status is non-zero when any criterion fails.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "stopwalk/experiments.hpp"

using namespace stopwalk;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 1;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// ---- oracles -------------------------------------------------------------

char inv_letter(char c) { return c == 'a' ? 'A' : c == 'A' ? 'a' : c == 'b' ? 'B' : 'b'; }

std::string reduce_oracle(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (!out.empty() && out.back() == inv_letter(c)) out.pop_back();
        else out.push_back(c);
    }
    return out;
}

struct NaiveLamp {
    std::set<std::int64_t> on;
    std::int64_t pos = 0;
    NaiveLamp times(const NaiveLamp& o) const {
        NaiveLamp r{on, pos + o.pos};
        for (auto l : o.on) {
            auto x = l + pos;
            if (!r.on.erase(x)) r.on.insert(x);
        }
        return r;
    }
    bool same(const LampElem& e) const {
        return e.pos() == pos && std::vector<std::int64_t>(on.begin(), on.end()) == e.lamps();
    }
};

NaiveLamp naive_letter(char c, bool semigroup) {
    if (!semigroup) {
        if (c == 'a' || c == 'A') return {{0}, 0};
        return {{}, c == 'b' ? 1 : -1};
    }
    if (c == 'a') return {{}, 1};
    return {{0}, -1};
}

NaiveLamp naive_project(const std::string& s, bool semigroup) {
    NaiveLamp x;
    for (char c : s) x = x.times(naive_letter(c, semigroup));
    return x;
}

std::string random_letters(std::mt19937_64& g, std::size_t max_len, const char* alphabet, std::size_t k) {
    std::string s(g() % (max_len + 1), 'a');
    for (auto& c : s) c = alphabet[g() % k];
    return s;
}

LampElem random_lamp(std::mt19937_64& g) {
    std::vector<std::int64_t> l(g() % 6);
    for (auto& x : l) x = static_cast<std::int64_t>(g() % 21) - 10;
    return LampElem(l, static_cast<std::int64_t>(g() % 31) - 15);
}

NaiveLamp naive_of(const LampElem& e) { return {{e.lamps().begin(), e.lamps().end()}, e.pos()}; }

// Records by a running-maximum scan (weak records: ties count).
std::vector<std::pair<std::uint64_t, std::uint64_t>> records_oracle(const std::vector<std::uint64_t>& x) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
    for (std::size_t i = 0; i < x.size(); ++i) {
        std::uint64_t m = 0;
        for (std::size_t j = 0; j < i; ++j) m = std::max(m, x[j]);
        if (i == 0 || x[i] >= m) out.emplace_back(i + 1, x[i]);
    }
    return out;
}

bool switching_oracle(const FiniteSet& A, const FiniteSet& F) {
    const auto& as = A.elements();
    const auto& fs = F.elements();
    for (std::size_t i1 = 0; i1 < fs.size(); ++i1)
        for (std::size_t j1 = 0; j1 < as.size(); ++j1)
            for (std::size_t k1 = 0; k1 < fs.size(); ++k1)
                for (std::size_t i2 = 0; i2 < fs.size(); ++i2)
                    for (std::size_t j2 = 0; j2 < as.size(); ++j2)
                        for (std::size_t k2 = 0; k2 < fs.size(); ++k2) {
                            if (i1 == i2 && j1 == j2 && k1 == k2) continue;
                            if (fs[i1] * as[j1] * fs[k1] == fs[i2] * as[j2] * fs[k2]) return false;
                        }
    return true;
}

FreeWord random_word(std::mt19937_64& g, std::size_t max_len) {
    auto s = reduce_oracle(random_letters(g, max_len, "aAbB", 4));
    return FreeWord::parse(s.empty() ? "e" : s);
}

FiniteSet random_set(std::mt19937_64& g, std::size_t max_size, std::size_t max_len) {
    std::vector<FreeWord> v;
    const std::size_t n = 1 + g() % max_size;
    for (std::size_t i = 0; i < n; ++i) v.push_back(random_word(g, max_len));
    return FiniteSet(std::move(v));
}

CompiledStep base_step() { return CompiledStep(lazy_srw(), Projection::FreeGroup); }

std::shared_ptr<const MixtureSpec> default_mixture() {
    return lampclear_mixture(RecordMeasure::zeta2(), Calibration{}, 1, 100'000);
}

// ---- criteria ------------------------------------------------------------

Outcome c1_algebra() {
    std::mt19937_64 g(101);
    std::uint64_t bad = 0;
    const int N = 10'000;
    for (int i = 0; i < N; ++i) {
        auto xs = random_letters(g, 12, "aAbB", 4), ys = random_letters(g, 12, "aAbB", 4),
             zs = random_letters(g, 12, "aAbB", 4);
        FreeWord x = FreeWord::parse(reduce_oracle(xs).empty() ? "e" : reduce_oracle(xs));
        FreeWord y = FreeWord::parse(reduce_oracle(ys).empty() ? "e" : reduce_oracle(ys));
        FreeWord z = FreeWord::parse(reduce_oracle(zs).empty() ? "e" : reduce_oracle(zs));
        bad += (x * y).letters() != reduce_oracle(x.letters() + y.letters());
        bad += !((x * y) * z == x * (y * z));
        bad += !((x * x.inverse()).is_identity() && (x.inverse() * x).is_identity());
        bad += !(x * FreeWord() == x && FreeWord() * x == x);
    }
    for (int i = 0; i < N; ++i) {
        auto x = random_lamp(g), y = random_lamp(g), z = random_lamp(g);
        bad += !naive_of(x).times(naive_of(y)).same(x * y);
        bad += !((x * y) * z == x * (y * z));
        bad += !((x * x.inverse()).is_identity() && (x.inverse() * x).is_identity());
        bad += !(x * LampElem() == x && LampElem() * x == x);
    }
    for (int i = 0; i < N; ++i) {
        auto xs = reduce_oracle(random_letters(g, 16, "aAbB", 4)), ys = reduce_oracle(random_letters(g, 16, "aAbB", 4));
        FreeWord x = FreeWord::parse(xs.empty() ? "e" : xs), y = FreeWord::parse(ys.empty() ? "e" : ys);
        bad += !(project(x * y) == project(x) * project(y));
        bad += !naive_project(xs, false).same(project(x));
    }
    for (int i = 0; i < N; ++i) {
        auto xs = random_letters(g, 16, "ab", 2), ys = random_letters(g, 16, "ab", 2);
        FreeWord x = FreeWord::parse(xs.empty() ? "e" : xs), y = FreeWord::parse(ys.empty() ? "e" : ys);
        const auto P = Projection::FreeSemigroup;
        bad += !(project(x * y, P) == project(x, P) * project(y, P));
        bad += !naive_project(xs, true).same(project(x, P));
    }
    return {bad == 0, fmt("%llu violations over 4 x %d instances", static_cast<unsigned long long>(bad), N)};
}

Outcome c2_records() {
    const auto p = RecordMeasure::zeta2();
    std::uint64_t mismatches = 0;
    for (std::size_t t = 0; t < 1000; ++t) {
        Rng rng = make_rng(kSeed, 0xacc2, t);
        auto x = sample_sequence(p, 1 + t % 300, rng);
        auto tr = trace_records(x);
        auto want = records_oracle(x);
        bool ok = tr.times.size() == want.size();
        for (std::size_t k = 0; ok && k < want.size(); ++k)
            ok = tr.times[k] == want[k].first && tr.values[k] == want[k].second;
        mismatches += !ok;
    }
    double s4 = 0, s5 = 0;
    for (std::uint64_t i = 1; i <= 100'000; ++i) {
        const double d = record_transition_diag(p, i);
        if (i <= 10'000) s4 += d * d;
        s5 += d * d;
    }
    auto prof = nonsimple_record_profile(p, {1, 10}, 10'000, 10'000, kSeed);
    const double sd = std::sqrt(prof[0].stderr_() * prof[0].stderr_() + prof[1].stderr_() * prof[1].stderr_());
    const double z = sd > 0 ? (prof[0].value() - prof[1].value()) / sd : 0;
    const bool ok = mismatches == 0 && s5 - s4 < 1e-4 && z > 3;
    return {ok, fmt("oracle mismatches %llu; diag growth %.3g; nonsimple >=1 %.4f vs >=10 %.4f (z = %.1f)",
                    static_cast<unsigned long long>(mismatches), s5 - s4, prof[0].value(), prof[1].value(), z)};
}

GaugeFit default_gauge() {
    GaugeFitOptions o;
    o.trials = 10'000;
    o.horizon = 10'000;
    o.quantile = 0.999;
    o.seed = kSeed;
    return fit_gauge(RecordMeasure::zeta2(), o);
}

Outcome c3_gauge() {
    auto fit = default_gauge();
    auto v = validate_gauge(RecordMeasure::zeta2(), fit.gauge, 10'000, 10'000, kSeed + 1);
    return {v.rate() <= 0.002, fmt("exceedance %.5f over %llu determined records (%llu undetermined)", v.rate(),
                                   static_cast<unsigned long long>(v.determined),
                                   static_cast<unsigned long long>(v.undetermined))};
}

Outcome c4_finiteness() {
    const auto base = base_step();
    CalibrateOptions o;
    o.k_max = 2;
    o.seed = kSeed;
    auto cal = calibrate(base, default_gauge().gauge, o);
    bool ok = true;
    std::string detail;
    for (std::uint64_t n = 1; n <= cal.k_max; ++n) {
        const auto spec = cal.level(n, 1'000'000);
        auto rep = lampclear_truncation(base, spec, 10'000, kSeed, 1, 10);
        // Independent check of the predicate on the first endpoints.
        std::uint64_t oracle_bad = 0;
        for (std::size_t j = 0; j < std::min<std::uint64_t>(rep.runs, 256); ++j) {
            Rng rng = make_rng(kSeed, 0x51a7, j);
            auto smp = run_to_stop(base, StoppingSpec{spec}, rng);
            if (smp.truncated) continue;
            auto x = naive_project(smp.endpoint.letters(), false);
            bool clear = std::abs(x.pos) >= static_cast<std::int64_t>(spec.r);
            for (auto l : x.on) clear &= std::abs(l) > static_cast<std::int64_t>(spec.s);
            oracle_bad += !clear;
        }
        const bool lvl = rep.fraction() < 1e-3 && rep.predicate_failures == 0 && oracle_bad == 0;
        ok &= lvl;
        detail += fmt("%sn=%llu LampClear(%llu,%llu): truncated %llu/%llu%s, predicate failures %llu",
                      n > 1 ? "; " : "", static_cast<unsigned long long>(n), static_cast<unsigned long long>(spec.s),
                      static_cast<unsigned long long>(spec.r), static_cast<unsigned long long>(rep.truncated),
                      static_cast<unsigned long long>(rep.runs), rep.stopped_early ? " (abandoned)" : "",
                      static_cast<unsigned long long>(rep.predicate_failures + oracle_bad));
    }
    return {ok, detail};
}

Outcome c5_hitting() {
    const auto base = base_step();
    HittingOptions o;
    o.paths = 100'000;
    o.seed = kSeed;
    o.stream = 0x417;
    auto mu = hitting_histogram(base, StoppingSpec{FixedOne{}}, o);
    HittingOptions om = o;
    om.steps = 200;
    om.margin = 50;
    om.stream = 0x418;
    auto mt = hitting_histogram(base, StoppingSpec{default_mixture()}, om);
    CompiledStep drifted(exp::drifted_walk(), Projection::FreeGroup);
    o.stream = 0x419;
    auto dr = hitting_histogram(drifted, StoppingSpec{FixedOne{}}, o);
    auto inv = compare_hitting(mu, mt, 0.01);
    auto ctl = compare_hitting(mu, dr, 0.01);
    return {inv.pass() && !ctl.pass(), fmt("mu vs mu_tau p = %.4f (tv %.4f); drifted control p = %.3g",
                                           inv.chi2.p_value, inv.tv, ctl.chi2.p_value)};
}

Outcome c6_dichotomy() {
    const auto base = base_step();
    const StoppingSpec spec{default_mixture()};
    LampStabilityOptions o;
    o.seed = kSeed;
    auto st = lamp_stability(base, spec, o);
    LampStabilityOptions oc = o;
    oc.steps = std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::llround(st.mean_base_steps)));
    oc.stream = 0x1a4;
    auto ctl = lamp_stability(base, StoppingSpec{FixedOne{}}, oc);
    // The last checkpoint j = n is stable by construction; the half-way one is read.
    const double a = st.stable[exp::checkpoint_index(st, 0.5)].value();
    const double b = ctl.stable[exp::checkpoint_index(ctl, 0.5)].value();
    LimitOptions lo;
    lo.seed = kSeed;
    lo.stream = 0x11f;
    auto f0 = estimate_limit_functional(base, spec, LampElem(), lo);
    lo.stream = 0x120;
    auto f1 = estimate_limit_functional(base, spec, LampElem({0}, 0), lo);
    const double se = std::sqrt(f0.stderr_ * f0.stderr_ + f1.stderr_ * f1.stderr_);
    const double z = std::abs(f1.estimate - f0.estimate) / se;
    return {a >= 0.95 && b <= 0.9 && z > 6,
            fmt("stable mu_tau %.4f (need >= 0.95), mu %.4f (need <= 0.9); |f(e)-f(t)| = %.4f = %.1f stderr", a, b,
                std::abs(f1.estimate - f0.estimate), z)};
}

Outcome c7_harmonicity() {
    const auto base = base_step();
    const StoppingSpec spec{default_mixture()};
    LimitOptions lo;
    lo.paths = 20'000;
    lo.seed = kSeed;
    std::map<LampElem, std::uint64_t> streams;
    auto f = [&](const LampElem& x) {
        auto [it, fresh] = streams.emplace(x, streams.size());
        LimitOptions o = lo;
        o.stream = 0x40000 + it->second;
        auto e = estimate_limit_functional(base, spec, x, o);
        return PointEstimate{e.estimate, e.stderr_};
    };
    const auto pts = default_test_points();
    StoppedHarmonicityOptions so;
    so.limit = lo;
    so.paths = 20'000;
    auto stopped = test_harmonicity_stopped(f, base, spec, pts, so);
    auto finite = test_harmonicity(f, push_forward(lazy_srw(), Projection::FreeGroup), pts);
    std::size_t over = 0;
    for (const auto& p : finite.points) over += std::abs(p.z()) > 3;
    return {pts.size() == 25 && stopped.max_abs_z() < 3 && over >= 1,
            fmt("%zu points; max |z| under mu_tau %.2f; %zu points with |z| > 3 under pi*mu (max %.1f)", pts.size(),
                stopped.max_abs_z(), over, finite.max_abs_z())};
}

Outcome c8_switching() {
    std::mt19937_64 g(808);
    std::uint64_t mismatches = 0, negatives = 0;
    for (int i = 0; i < 1000; ++i) {
        auto A = random_set(g, 4, 4), F = random_set(g, 4, 2);
        const bool want = switching_oracle(A, F);
        mismatches += is_switching(A, F).switching != want;
        negatives += !want;
    }
    const auto F = ball(1);
    auto freq = switching_frequency(lazy_srw(), F, {40}, 10'000, kSeed);
    const double f40 = freq[0].freq.value();
    // Deduplicated endpoints of the switch-hit rule.
    const auto base = base_step();
    auto spec = switch_hit_stopping(F, kSeed);
    std::set<FreeWord> support;
    std::uint64_t draws = 0, truncated = 0;
    while (support.size() < 500 && draws < 5000) {
        Rng rng = make_rng(kSeed, 0x5717, draws++);
        auto s = run_to_stop(base, StoppingSpec{spec}, rng);
        if (s.truncated) ++truncated;
        else support.insert(s.endpoint);
    }
    const bool certified = is_switching(FiniteSet(std::vector<FreeWord>(support.begin(), support.end())), F).switching;
    return {mismatches == 0 && f40 >= 0.99 && certified && support.size() == 500,
            fmt("oracle mismatches %llu (%llu non-switching instances); freq(n=40) = %.4f (need >= 0.99); "
                "%zu distinct endpoints from %llu draws, switching: %s",
                static_cast<unsigned long long>(mismatches), static_cast<unsigned long long>(negatives), f40,
                support.size(), static_cast<unsigned long long>(draws), certified ? "yes" : "no")};
}

Outcome c9_ladder() {
    const auto base = base_step();
    const auto p = RecordMeasure::zeta2();
    const auto phi = default_gauge().gauge;
    LadderOptions o;
    o.K = 1;
    o.seed = kSeed;
    auto b = build_ladder(base, p, phi, o);
    auto cert = certify_disjointness(b.ladder, o.budget);
    std::string k2 = "not attempted";
    try {
        LadderOptions o2 = o;
        o2.K = 2;
        o2.s_samples = 40;
        o2.validation_samples = 0;
        build_ladder(base, p, phi, o2);
        k2 = "built";
    } catch (const BudgetExceeded& e) {
        k2 = "out of budget";
    }
    bool unique = true, acyclic = true;
    std::uint64_t links = 0, links_ok = 0, chains = 0, descending = 0;
    std::size_t vertices = 0, roots = 0;
    try {
        SpikeFinder finder(b.ladder, o.budget * 100);
        std::vector<FreeWord> seeds{FreeWord()};
        for (std::uint64_t i = 0; i < 64; ++i) {
            PathRng rng = PathRng::make(kSeed, 0xf0e, i);
            auto path = ladder_path_on_support(base, b, 40, rng);
            seeds.insert(seeds.end(), path.w.begin(), path.w.end());
            auto cc = check_record_chain(path, b.ladder, finder);
            links += cc.links_checked;
            links_ok += cc.links_ok;
            chains += cc.records_seen > 0;
            descending += cc.records_seen > 0 && cc.descending;
        }
        auto f = build_forest(seeds, finder);
        vertices = f.vertices.size();
        roots = f.roots.size();
        acyclic = f.edges.size() == f.spiked && f.roots.size() == f.components;
    } catch (const CertificateViolation& e) {
        unique = false;
        acyclic = false;
    }
    const bool ok = cert.disjoint && unique && acyclic && links > 0 && links == links_ok && chains == descending;
    return {ok, fmt("K = 1 (K = 2 %s); Sigma_1 n Delta_1^3 empty: %s; forest %zu vertices, %zu roots, unique "
                    "decompositions: %s; chain links %llu/%llu, descending %llu/%llu",
                    k2.c_str(), cert.disjoint ? "yes" : "no", vertices, roots, unique ? "yes" : "no",
                    static_cast<unsigned long long>(links_ok), static_cast<unsigned long long>(links),
                    static_cast<unsigned long long>(descending), static_cast<unsigned long long>(chains))};
}

Outcome c10_gap() {
    const auto base = base_step();
    GapOptions o;
    o.n = 1;
    o.seed = kSeed;
    auto r = optional_stopping_gap(base, default_mixture(), o);
    auto ctl_mix = std::make_shared<MixtureSpec>();
    ctl_mix->p = RecordMeasure::point_mass(0);
    ctl_mix->components.emplace_back(FixedOne{});
    GapOptions oc = o;
    oc.n = 0;
    oc.coupled = true;
    auto c = optional_stopping_gap(base, ctl_mix, oc);
    const bool ok = r.lhs >= r.rhs && c.lhs >= c.rhs && r.excludes_zero() && c.gap == 0.0;
    return {ok, fmt("n = 1: lhs %.6f >= p(1) %.6f; debiased gap %.3g, 95%% CI [%.3g, %.3g] %s 0; control gap %.3g",
                    r.lhs, r.rhs, r.debiased, r.ci_lo, r.ci_hi, r.excludes_zero() ? "excludes" : "contains", c.gap)};
}

Config reduced_config(const fs::path& out, unsigned workers) {
    Config c;
    const std::map<std::string, std::string> kv = {
        {"out", out.string()},   {"workers", std::to_string(workers)},
        {"seed", std::to_string(kSeed)},
        {"trials", "1000"},      {"horizon", "2000"},
        {"paths", "2000"},       {"steps", "400"},
        {"margin", "100"},       {"sequences", "16"},
        {"trials_per_sequence", "16"}, {"homogeneous_trials", "128"},
        {"lamp_paths", "400"},   {"limit_paths", "1000"},
        {"harmonic_paths", "200"}, {"samples", "20"},
        {"s_samples", "16"},     {"validation_samples", "8"},
        {"chain_paths", "8"},    {"retention_paths", "4"},
        {"retention_horizon", "4"}, {"bootstrap", "50"},
        {"walk_paths", "2"},
    };
    for (const auto& [k, v] : kv) c.set(k, v);
    return c;
}

std::map<std::string, std::string> run_suite(const fs::path& dir, unsigned workers) {
    fs::remove_all(dir);
    auto cfg = reduced_config(dir, workers);
    // calibrate first: later runs read its file.
    run_experiment("calibrate", cfg);
    for (const auto& [name, fn] : experiments())
        if (name != "calibrate") run_experiment(name, cfg);
    Config ctl = cfg;
    ctl.set("control", "1");
    ctl.set("out", (dir / "control").string());
    run_experiment("os-gap", ctl);
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.path().extension() != ".csv" && e.path().filename() != "ladder.txt" &&
            e.path().filename() != "calibration.txt")
            continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        files[fs::relative(e.path(), dir).string()] = ss.str();
    }
    return files;
}

Outcome c11_reproducibility() {
    const auto root = fs::temp_directory_path() / "stopwalk-acceptance";
    auto a = run_suite(root / "run1", 1);
    auto b = run_suite(root / "run2", 3);
    std::size_t differing = 0;
    std::string first;
    for (const auto& [k, v] : a) {
        auto it = b.find(k);
        if (it == b.end() || it->second != v) {
            ++differing;
            if (first.empty()) first = k;
        }
    }
    differing += b.size() > a.size() ? b.size() - a.size() : 0;
    fs::remove_all(root);
    return {differing == 0 && a.size() >= 15,
            fmt("%zu artifacts compared (workers 1 vs 3), %zu differ%s%s", a.size(), differing,
                first.empty() ? "" : ", first: ", first.c_str())};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"algebraic exactness", c1_algebra},
        {"record machinery", c2_records},
        {"gauge contract", c3_gauge},
        {"stopping-time finiteness", c4_finiteness},
        {"hitting-measure invariance", c5_hitting},
        {"boundary dichotomy", c6_dichotomy},
        {"harmonic witness", c7_harmonicity},
        {"switching suite", c8_switching},
        {"ladder and forest certificates", c9_ladder},
        {"optional-stopping gap", c10_gap},
        {"reproducibility", c11_reproducibility},
    };
    int failed = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        failed += !o.pass;
        std::printf("criterion %2zu %-32s %s  %s [%.1f s]\n", i + 1, criteria[i].first.c_str(),
                    o.pass ? "PASS" : "FAIL", o.detail.c_str(), secs);
        std::fflush(stdout);
    }
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%zu/%zu criteria passed in %.1f s\n", criteria.size() - failed, criteria.size(), total);
    return failed ? 1 : 0;
}
