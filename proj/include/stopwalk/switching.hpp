#pragma once

// F-switching sets, switching statistics of the lazy walk, and the thinned
// hitting time whose stopped measure has F-switching support.

#include <algorithm>
#include <array>
#include <cstring>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "stopwalk/group.hpp"
#include "stopwalk/measures.hpp"
#include "stopwalk/parallel.hpp"
#include "stopwalk/random.hpp"
#include "stopwalk/stats.hpp"
#include "stopwalk/stopping.hpp"

namespace stopwalk {

/// Finite set of words, deduplicated and kept in shortlex order.
class FiniteSet {
public:
    FiniteSet() = default;
    FiniteSet(std::initializer_list<FreeWord> xs) : FiniteSet(std::vector<FreeWord>(xs)) {}
    explicit FiniteSet(std::vector<FreeWord> xs) : elems_(std::move(xs)) { normalise(); }

    static FiniteSet parse(const std::vector<std::string>& words) {
        std::vector<FreeWord> v;
        for (const auto& w : words) v.push_back(FreeWord::parse(w));
        return FiniteSet(std::move(v));
    }

    [[nodiscard]] const std::vector<FreeWord>& elements() const noexcept { return elems_; }
    [[nodiscard]] std::size_t size() const noexcept { return elems_.size(); }
    [[nodiscard]] bool contains(const FreeWord& w) const { return std::binary_search(elems_.begin(), elems_.end(), w); }
    [[nodiscard]] bool is_symmetric() const {
        return std::all_of(elems_.begin(), elems_.end(), [&](const FreeWord& w) { return contains(w.inverse()); });
    }

    [[nodiscard]] FiniteSet symmetrised() const {
        auto v = elems_;
        for (const auto& w : elems_) v.push_back(w.inverse());
        return FiniteSet(std::move(v));
    }

    /// {x y : x in this, y in other}.
    [[nodiscard]] FiniteSet times(const FiniteSet& other) const {
        std::vector<FreeWord> v;
        v.reserve(size() * other.size());
        for (const auto& x : elems_)
            for (const auto& y : other.elems_) v.push_back(x * y);
        return FiniteSet(std::move(v));
    }

    FiniteSet& insert(const FiniteSet& other) {
        elems_.insert(elems_.end(), other.elems_.begin(), other.elems_.end());
        normalise();
        return *this;
    }

    friend bool operator==(const FiniteSet&, const FiniteSet&) = default;

private:
    void normalise() {
        std::sort(elems_.begin(), elems_.end());
        elems_.erase(std::unique(elems_.begin(), elems_.end()), elems_.end());
    }
    std::vector<FreeWord> elems_;
};

/// All reduced words of length <= r.
inline FiniteSet ball(unsigned r) {
    std::vector<FreeWord> out{FreeWord()};
    std::vector<FreeWord> frontier{FreeWord()};
    for (unsigned k = 0; k < r; ++k) {
        std::vector<FreeWord> next;
        for (const auto& w : frontier)
            for (char c : kLetters) {
                if (!w.is_identity() && w[w.length() - 1] == inverse_letter(c)) continue;
                FreeWord v = w;
                v.push(c);
                next.push_back(std::move(v));
            }
        out.insert(out.end(), next.begin(), next.end());
        frontier = std::move(next);
    }
    return FiniteSet(std::move(out));
}

/// Witness that a set is not F-switching: f1 a1 f2 = f3 a2 f4 with the
/// triples different.
struct SwitchingWitness {
    FreeWord f1, a1, f2, f3, a2, f4;
};

struct SwitchingResult {
    bool switching = true;
    std::optional<SwitchingWitness> witness;
    explicit operator bool() const noexcept { return switching; }
};

/// Exhaustive check: hashes every product f1 a f2 and reports the first
/// collision between distinct triples.
inline SwitchingResult is_switching(const FiniteSet& A, const FiniteSet& F) {
    std::unordered_map<std::string, std::array<std::size_t, 3>> seen;
    seen.reserve(A.size() * F.size() * F.size());
    const auto& fs = F.elements();
    const auto& as = A.elements();
    for (std::size_t ia = 0; ia < as.size(); ++ia)
        for (std::size_t i1 = 0; i1 < fs.size(); ++i1) {
            FreeWord left = fs[i1] * as[ia];
            for (std::size_t i2 = 0; i2 < fs.size(); ++i2) {
                FreeWord g = left * fs[i2];
                auto [it, fresh] = seen.emplace(g.letters(), std::array<std::size_t, 3>{i1, ia, i2});
                if (!fresh) {
                    const auto& o = it->second;
                    SwitchingResult r;
                    r.switching = false;
                    r.witness = SwitchingWitness{fs[o[0]], as[o[1]], fs[o[2]], fs[i1], as[ia], fs[i2]};
                    return r;
                }
            }
        }
    return {};
}

inline bool is_switching_element(const FreeWord& g, const FiniteSet& F) { return is_switching(FiniteSet{g}, F).switching; }

/// {g, g^-1} is F-switching.
inline bool is_superswitching(const FreeWord& g, const FiniteSet& F) {
    return is_switching(FiniteSet{g, g.inverse()}, F).switching;
}

/// Walks `n` base steps of m from e.
inline FreeWord walk_endpoint(const FreeMeasure& m, std::uint64_t n, Rng& rng) {
    BitSource bits(rng);
    FreeWord w;
    for (std::uint64_t t = 0; t < n; ++t) w *= m.sample(bits);
    return w;
}

struct PerN {
    std::uint64_t n = 0;
    Proportion freq;
};

/// Frequency of {w_n is F-switching} for each n.
inline std::vector<PerN> switching_frequency(const FreeMeasure& m, const FiniteSet& F,
                                             const std::vector<std::uint64_t>& n_list, std::uint64_t paths,
                                             std::uint64_t seed, unsigned workers = 1) {
    std::vector<PerN> out;
    for (auto n : n_list) {
        auto hits = parallel_map(paths, workers, [&](std::size_t i) -> std::uint8_t {
            Rng rng = make_rng(seed, 0x5f00 + n, i);
            return is_switching_element(walk_endpoint(m, n, rng), F) ? 1 : 0;
        });
        PerN r{n, {0, paths}};
        for (auto h : hits) r.freq.hits += h;
        out.push_back(r);
    }
    return out;
}

/// Decidable subgroup of F2.
struct Subgroup {
    std::string name;
    std::function<bool(const FreeWord&)> contains;
};

inline Subgroup cyclic_a() {
    return {"<a>", [](const FreeWord& w) {
                const auto& s = w.letters();
                return std::all_of(s.begin(), s.end(), [](char c) { return c == 'a'; }) ||
                       std::all_of(s.begin(), s.end(), [](char c) { return c == 'A'; });
            }};
}
inline Subgroup kernel_of_projection() {
    return {"ker pi", [](const FreeWord& w) { return project(w).is_identity(); }};
}
inline Subgroup whole_group() {
    return {"G", [](const FreeWord&) { return true; }};
}
inline Subgroup trivial_subgroup() {
    return {"{e}", [](const FreeWord& w) { return w.is_identity(); }};
}

inline Subgroup subgroup_by_name(const std::string& name) {
    if (name == "cyclic-a" || name == "<a>") return cyclic_a();
    if (name == "kernel" || name == "ker pi") return kernel_of_projection();
    if (name == "G" || name == "whole") return whole_group();
    if (name == "trivial" || name == "{e}") return trivial_subgroup();
    throw std::invalid_argument("unknown subgroup '" + name + "'");
}

/// Frequency of {w_n in H F} for each n; w in HF iff w f^-1 in H for some f.
inline std::vector<PerN> coset_decay(const FreeMeasure& m, const Subgroup& H, const FiniteSet& F,
                                     const std::vector<std::uint64_t>& n_list, std::uint64_t paths,
                                     std::uint64_t seed, unsigned workers = 1) {
    std::vector<FreeWord> finv;
    for (const auto& f : F.elements()) finv.push_back(f.inverse());
    std::vector<PerN> out;
    for (auto n : n_list) {
        auto hits = parallel_map(paths, workers, [&](std::size_t i) -> std::uint8_t {
            Rng rng = make_rng(seed, 0xc05e + n, i);
            auto w = walk_endpoint(m, n, rng);
            for (const auto& fi : finv)
                if (H.contains(w * fi)) return 1;
            return 0;
        });
        PerN r{n, {0, paths}};
        for (auto h : hits) r.freq.hits += h;
        out.push_back(r);
    }
    return out;
}

/// Keyed fingerprint of a reduced word: a polynomial hash mod 2^61 - 1 with a
/// seed-derived base, then SipHash over (length, polynomial hash). Used to
/// attach a reproducible uniform U_x to every group element.
class ElementHasher {
public:
    static constexpr std::uint64_t kMod = (1ULL << 61) - 1;

    explicit ElementHasher(std::uint64_t seed) : sip_(seed) {
        base_ = (splitmix64(seed ^ 0x243f6a8885a308d3ULL) % (kMod - 1024)) + 512;
        pow_.push_back(1);
    }

    static std::uint64_t mulmod(std::uint64_t a, std::uint64_t b) {
        unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
        std::uint64_t lo = static_cast<std::uint64_t>(p & kMod), hi = static_cast<std::uint64_t>(p >> 61);
        std::uint64_t s = lo + hi;
        return s >= kMod ? s - kMod : s;
    }
    static std::uint64_t addmod(std::uint64_t a, std::uint64_t b) {
        std::uint64_t s = a + b;
        return s >= kMod ? s - kMod : s;
    }
    static std::uint64_t submod(std::uint64_t a, std::uint64_t b) { return a >= b ? a - b : a + kMod - b; }

    static std::uint64_t code(char c) {
        switch (c) {
        case 'a': return 1;
        case 'A': return 2;
        case 'b': return 3;
        default: return 4;
        }
    }

    [[nodiscard]] std::uint64_t base() const noexcept { return base_; }

    std::uint64_t power(std::size_t k) const {
        while (pow_.size() <= k) pow_.push_back(mulmod(pow_.back(), base_));
        return pow_[k];
    }

    [[nodiscard]] std::uint64_t poly(std::string_view letters) const {
        std::uint64_t h = 0;
        for (char c : letters) h = addmod(mulmod(h, base_), code(c));
        return h;
    }

    /// U in [0, 1) from a (length, polynomial hash) fingerprint.
    [[nodiscard]] std::uint64_t bits(std::size_t len, std::uint64_t poly) const {
        std::array<char, 16> buf{};
        std::uint64_t l = len;
        std::memcpy(buf.data(), &l, 8);
        std::memcpy(buf.data() + 8, &poly, 8);
        return sip_.bits(std::string_view(buf.data(), buf.size()));
    }

    [[nodiscard]] std::uint64_t bits(const FreeWord& w) const { return bits(w.length(), poly(w.letters())); }
    [[nodiscard]] double uniform(const FreeWord& w) const { return static_cast<double>(bits(w)) * 0x1.0p-64; }

private:
    ElementUniforms sip_;
    std::uint64_t base_;
    mutable std::vector<std::uint64_t> pow_;
};

/// The thinned target T = {a : a is F-switching and U_a >= U_b for all
/// b in F^2 a F^2} (F symmetrised). Ties in U are broken by shortlex order.
/// With `symmetric` the target is T u T^-1 built from superswitching
/// elements and the neighbourhoods F^2 a^{+-1} F^2.
class ThinnedSwitchTarget : public HitTarget {
public:
    ThinnedSwitchTarget(FiniteSet F, std::uint64_t seed, bool symmetric = false)
        : F_(F.symmetrised()), F2_(F_.times(F_)), seed_(seed), symmetric_(symmetric), hasher_(std::make_shared<ElementHasher>(seed)) {
        for (const auto& x : F2_.elements()) {
            Piece p;
            p.letters = x.letters();
            p.prefix_hash.push_back(0);
            for (char c : p.letters) p.prefix_hash.push_back(hasher_->addmod(hasher_->mulmod(p.prefix_hash.back(), hasher_->base()), ElementHasher::code(c)));
            pieces_.push_back(std::move(p));
        }
        max_piece_ = 0;
        for (const auto& p : pieces_) max_piece_ = std::max(max_piece_, p.letters.size());
    }

    [[nodiscard]] const FiniteSet& F() const noexcept { return F_; }
    [[nodiscard]] const FiniteSet& F2() const noexcept { return F2_; }
    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] bool symmetric() const noexcept { return symmetric_; }
    [[nodiscard]] const ElementHasher& hasher() const noexcept { return *hasher_; }

    [[nodiscard]] std::string name() const override {
        return "F=" + std::to_string(F_.size()) + (symmetric_ ? ",sym" : "") + ",seed=" + std::to_string(seed_);
    }

    [[nodiscard]] bool contains(const FreeWord& g) const override {
        if (symmetric_) return in_sym(g) || in_sym(g.inverse());
        return local_max_explicit(g) && is_switching_element(g, F_);
    }

    /// U_a >= U_b over b in F^2 a F^2, computed by forming each b explicitly.
    [[nodiscard]] bool local_max_explicit(const FreeWord& a) const {
        const auto ua = hasher_->bits(a);
        for (const auto& x : F2_.elements())
            for (const auto& y : F2_.elements()) {
                FreeWord b = x * a * y;
                if (!beats(ua, a, hasher_->bits(b), b)) return false;
            }
        return true;
    }

    /// Incremental membership test for the increment word of a running walk.
    class Cursor : public HitCursor {
    public:
        explicit Cursor(const ThinnedSwitchTarget& t) : t_(&t) { hash_.push_back(0); }

        void push(char c) override {
            if (!word_.empty() && word_.back() == inverse_letter(c)) {
                word_.pop_back();
                hash_.pop_back();
            } else {
                word_.push_back(c);
                hash_.push_back(ElementHasher::addmod(ElementHasher::mulmod(hash_.back(), t_->hasher_->base()),
                                                      ElementHasher::code(c)));
            }
        }

        [[nodiscard]] FreeWord word() const { return FreeWord::parse(word_.empty() ? "e" : word_); }

        [[nodiscard]] bool hit() const override {
            if (t_->symmetric_ || word_.size() <= 2 * t_->max_piece_) return t_->contains(word());
            const auto& H = *t_->hasher_;
            const std::size_t L = word_.size();
            const auto ua = H.bits(L, hash_[L]);
            for (const auto& x : t_->pieces_) {
                // Cancellation between x's tail and the word's head.
                std::size_t k1 = 0;
                while (k1 < x.letters.size() && x.letters[x.letters.size() - 1 - k1] == inverse_letter(word_[k1])) ++k1;
                const std::size_t xl = x.letters.size() - k1;
                for (const auto& y : t_->pieces_) {
                    std::size_t k2 = 0;
                    while (k2 < y.letters.size() && y.letters[k2] == inverse_letter(word_[L - 1 - k2])) ++k2;
                    const std::size_t mid = L - k1 - k2;
                    const std::size_t yl = y.letters.size() - k2;
                    // hash(y') from y's prefix hashes: y' = y[k2..).
                    std::uint64_t hy = ElementHasher::submod(y.prefix_hash[y.letters.size()],
                                                             ElementHasher::mulmod(y.prefix_hash[k2], H.power(yl)));
                    std::uint64_t hm = ElementHasher::submod(hash_[L - k2], ElementHasher::mulmod(hash_[k1], H.power(mid)));
                    std::uint64_t hb = ElementHasher::mulmod(x.prefix_hash[xl], H.power(mid + yl));
                    hb = ElementHasher::addmod(hb, ElementHasher::mulmod(hm, H.power(yl)));
                    hb = ElementHasher::addmod(hb, hy);
                    const std::size_t bl = xl + mid + yl;
                    if (bl == L && hb == hash_[L]) continue;  // b = a
                    const auto ub = H.bits(bl, hb);
                    if (ub > ua) return false;
                    if (ub == ua) {
                        FreeWord a = word(), b = FreeWord::parse(x.letters) * a * FreeWord::parse(y.letters.empty() ? "e" : y.letters);
                        if (b < a) return false;
                    }
                }
            }
            return is_switching_element(word(), t_->F_);
        }

    private:
        const ThinnedSwitchTarget* t_;
        std::string word_;
        std::vector<std::uint64_t> hash_;
    };

    [[nodiscard]] std::unique_ptr<HitCursor> cursor() const override { return std::make_unique<Cursor>(*this); }

private:
    struct Piece {
        std::string letters;
        std::vector<std::uint64_t> prefix_hash;
    };

    static bool beats(std::uint64_t ua, const FreeWord& a, std::uint64_t ub, const FreeWord& b) {
        if (ub != ua) return ua > ub;
        return !(b < a);
    }

    [[nodiscard]] bool in_sym(const FreeWord& a) const {
        const auto ua = hasher_->bits(a);
        const FreeWord ai = a.inverse();
        for (const auto* c : {&a, &ai})
            for (const auto& x : F2_.elements())
                for (const auto& y : F2_.elements()) {
                    FreeWord b = x * *c * y;
                    if (!beats(ua, a, hasher_->bits(b), b)) return false;
                }
        return is_superswitching(a, F_);
    }

    FiniteSet F_, F2_;
    std::uint64_t seed_;
    bool symmetric_;
    std::shared_ptr<ElementHasher> hasher_;
    std::vector<Piece> pieces_;
    std::size_t max_piece_ = 0;
};

/// Stopping rule: first t >= 1 with the increment word in the thinned target.
inline SwitchHitSpec switch_hit_stopping(const FiniteSet& F, std::uint64_t seed, std::uint64_t horizon_cap = 1'000'000,
                                         bool symmetric = false) {
    return {std::make_shared<ThinnedSwitchTarget>(F, seed, symmetric), horizon_cap};
}

struct SupportCertificate {
    std::uint64_t samples = 0;
    std::uint64_t truncated = 0;
    std::size_t distinct = 0;
    SwitchingResult result;
    double mean_steps = 0;
};

/// Draws stopped endpoints, deduplicates the non-truncated ones and checks
/// exactly that the resulting set is F-switching.
inline SupportCertificate certify_switch_support(const CompiledStep& base, const SwitchHitSpec& spec,
                                                 const FiniteSet& F, std::uint64_t samples, std::uint64_t seed,
                                                 unsigned workers = 1) {
    auto res = parallel_map(samples, workers, [&](std::size_t i) {
        Rng rng = make_rng(seed, 0x5717, i);
        return run_to_stop(base, StoppingSpec{spec}, rng);
    });
    SupportCertificate c;
    c.samples = samples;
    std::vector<FreeWord> pts;
    double steps = 0;
    for (auto& s : res) {
        steps += static_cast<double>(s.steps_used);
        if (s.truncated) {
            ++c.truncated;
            continue;
        }
        pts.push_back(std::move(s.endpoint));
    }
    FiniteSet support(std::move(pts));
    c.distinct = support.size();
    c.result = is_switching(support, F);
    c.mean_steps = samples ? steps / static_cast<double>(samples) : 0;
    return c;
}

}  // namespace stopwalk
