#pragma once

// Exact arithmetic for the free group F2 = <a, b>, the free semigroup on
// {a, b}, and the lamplighter group Z wr Z/2Z, plus the projections
// F2 -> lamplighter and F2+ -> lamplighter.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <iterator>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace stopwalk {

/// Letters of F2. Upper case is the inverse: A = a^-1, B = b^-1.
inline constexpr char kLetters[4] = {'a', 'A', 'b', 'B'};

constexpr bool is_letter(char c) noexcept {
    return c == 'a' || c == 'A' || c == 'b' || c == 'B';
}

constexpr char inverse_letter(char c) noexcept {
    switch (c) {
    case 'a': return 'A';
    case 'A': return 'a';
    case 'b': return 'B';
    default: return 'b';
    }
}

/// A reduced word in F2. The empty word is the identity.
///
/// The class never holds an unreduced word: every mutating operation
/// cancels at the seam. Words compare in shortlex order, which is also the
/// canonical order used for tie-breaking and for sorted element sets.
class FreeWord {
public:
    FreeWord() = default;

    /// Parses and reduces a string over {a, A, b, B}. "e" and "" both denote
    /// the identity.
    static FreeWord parse(std::string_view text) {
        FreeWord w;
        if (text == "e") return w;
        for (char c : text) {
            if (!is_letter(c)) {
                throw std::invalid_argument("FreeWord: bad letter '" + std::string(1, c) + "'");
            }
            w.push(c);
        }
        return w;
    }

    static FreeWord letter(char c) { return parse(std::string_view(&c, 1)); }

    [[nodiscard]] bool is_identity() const noexcept { return letters_.empty(); }
    [[nodiscard]] std::size_t length() const noexcept { return letters_.size(); }
    [[nodiscard]] const std::string& letters() const noexcept { return letters_; }
    [[nodiscard]] char operator[](std::size_t i) const noexcept { return letters_[i]; }

    /// Right multiplication by one generator, with cancellation.
    void push(char c) {
        if (!letters_.empty() && letters_.back() == inverse_letter(c)) {
            letters_.pop_back();
        } else {
            letters_.push_back(c);
        }
    }

    /// Right multiplication by a reduced word. Cancellation only happens at
    /// the seam, so the cost is O(|v|).
    FreeWord& operator*=(const FreeWord& v) {
        std::size_t k = 0;
        const std::size_t limit = std::min(letters_.size(), v.letters_.size());
        while (k < limit && letters_[letters_.size() - 1 - k] == inverse_letter(v.letters_[k])) ++k;
        letters_.resize(letters_.size() - k);
        letters_.append(v.letters_, k, std::string::npos);
        return *this;
    }

    [[nodiscard]] FreeWord inverse() const {
        FreeWord w;
        w.letters_.reserve(letters_.size());
        for (auto it = letters_.rbegin(); it != letters_.rend(); ++it) w.letters_.push_back(inverse_letter(*it));
        return w;
    }

    /// Length-d prefix (the whole word if shorter).
    [[nodiscard]] FreeWord prefix(std::size_t d) const {
        FreeWord w;
        w.letters_ = letters_.substr(0, std::min(d, letters_.size()));
        return w;
    }

    /// Canonical text form: the reduced letter string, "e" for the identity.
    [[nodiscard]] std::string str() const { return letters_.empty() ? std::string("e") : letters_; }

    friend bool operator==(const FreeWord&, const FreeWord&) = default;
    friend bool operator<(const FreeWord& x, const FreeWord& y) noexcept {
        if (x.letters_.size() != y.letters_.size()) return x.letters_.size() < y.letters_.size();
        return x.letters_ < y.letters_;
    }

private:
    std::string letters_;
};

inline FreeWord operator*(FreeWord u, const FreeWord& v) {
    u *= v;
    return u;
}

inline FreeWord fg_mul(const FreeWord& u, const FreeWord& v) { return u * v; }
inline FreeWord fg_inv(const FreeWord& u) { return u.inverse(); }

/// u^k for k >= 0.
inline FreeWord power(const FreeWord& u, unsigned k) {
    FreeWord w;
    for (unsigned i = 0; i < k; ++i) w *= u;
    return w;
}

struct FreeWordHash {
    std::size_t operator()(const FreeWord& w) const noexcept { return std::hash<std::string>{}(w.letters()); }
};

/// Lamplighter element: finitely many lamps ON (sorted, no duplicates) and
/// the lamplighter position. The group law is
///   (L1, x1) (L2, x2) = (L1 symdiff (L2 + x1), x1 + x2).
class LampElem {
public:
    LampElem() = default;
    LampElem(std::vector<std::int64_t> lamps, std::int64_t pos) : lamps_(std::move(lamps)), pos_(pos) {
        std::sort(lamps_.begin(), lamps_.end());
        // Duplicates cancel pairwise: a lamp listed twice is toggled twice.
        std::vector<std::int64_t> out;
        for (std::size_t i = 0; i < lamps_.size();) {
            std::size_t j = i;
            while (j < lamps_.size() && lamps_[j] == lamps_[i]) ++j;
            if ((j - i) % 2 == 1) out.push_back(lamps_[i]);
            i = j;
        }
        lamps_ = std::move(out);
    }

    static LampElem toggle_at_origin() { return LampElem({0}, 0); }
    static LampElem move(std::int64_t d) { return LampElem({}, d); }

    [[nodiscard]] const std::vector<std::int64_t>& lamps() const noexcept { return lamps_; }
    [[nodiscard]] std::int64_t pos() const noexcept { return pos_; }
    [[nodiscard]] bool is_identity() const noexcept { return lamps_.empty() && pos_ == 0; }
    [[nodiscard]] bool lamp(std::int64_t i) const { return std::binary_search(lamps_.begin(), lamps_.end(), i); }

    [[nodiscard]] LampElem inverse() const {
        LampElem r;
        r.pos_ = -pos_;
        r.lamps_.reserve(lamps_.size());
        for (auto l : lamps_) r.lamps_.push_back(l - pos_);
        return r;
    }

    /// Canonical text form "L{i1,i2,...}P{x}".
    [[nodiscard]] std::string str() const {
        std::string s = "L{";
        for (std::size_t i = 0; i < lamps_.size(); ++i) {
            if (i) s += ',';
            s += std::to_string(lamps_[i]);
        }
        s += "}P{" + std::to_string(pos_) + "}";
        return s;
    }

    static LampElem parse(std::string_view text) {
        auto fail = [&] { throw std::invalid_argument("LampElem: cannot parse '" + std::string(text) + "'"); };
        if (text.size() < 6 || text.substr(0, 2) != "L{") fail();
        auto close = text.find('}');
        if (close == std::string_view::npos || text.substr(close, 3) != "}P{" || text.back() != '}') fail();
        std::vector<std::int64_t> lamps;
        std::string_view body = text.substr(2, close - 2);
        while (!body.empty()) {
            auto comma = body.find(',');
            auto tok = body.substr(0, comma);
            try {
                lamps.push_back(std::stoll(std::string(tok)));
            } catch (const std::exception&) {
                fail();
            }
            if (comma == std::string_view::npos) break;
            body.remove_prefix(comma + 1);
        }
        std::int64_t pos = 0;
        try {
            pos = std::stoll(std::string(text.substr(close + 3, text.size() - close - 4)));
        } catch (const std::exception&) {
            fail();
        }
        return LampElem(std::move(lamps), pos);
    }

    friend bool operator==(const LampElem&, const LampElem&) = default;
    friend bool operator<(const LampElem& x, const LampElem& y) noexcept {
        if (x.pos_ != y.pos_) return x.pos_ < y.pos_;
        return x.lamps_ < y.lamps_;
    }

    friend LampElem ll_mul(const LampElem& x, const LampElem& y) {
        LampElem r;
        r.pos_ = x.pos_ + y.pos_;
        r.lamps_.reserve(x.lamps_.size() + y.lamps_.size());
        // Symmetric difference by merge; y's lamps are shifted by x.pos.
        auto i = x.lamps_.begin();
        auto j = y.lamps_.begin();
        while (i != x.lamps_.end() || j != y.lamps_.end()) {
            if (j == y.lamps_.end() || (i != x.lamps_.end() && *i < *j + x.pos_)) {
                r.lamps_.push_back(*i++);
            } else if (i == x.lamps_.end() || *j + x.pos_ < *i) {
                r.lamps_.push_back(*j++ + x.pos_);
            } else {
                ++i;
                ++j;
            }
        }
        return r;
    }

private:
    std::vector<std::int64_t> lamps_;
    std::int64_t pos_ = 0;
};

inline LampElem operator*(const LampElem& x, const LampElem& y) { return ll_mul(x, y); }

struct LampElemHash {
    std::size_t operator()(const LampElem& x) const noexcept {
        std::size_t h = std::hash<std::int64_t>{}(x.pos());
        for (auto l : x.lamps()) h = h * 1000003u ^ std::hash<std::int64_t>{}(l);
        return h;
    }
};

/// Which homomorphism onto the lamplighter to use.
///  - FreeGroup:     a -> ({0}, 0), b -> ({}, +1)
///  - FreeSemigroup: a -> ({}, +1), b -> ({0}, -1)   (positive words only)
enum class Projection { FreeGroup, FreeSemigroup };

inline LampElem project_letter(char c, Projection proj) {
    if (proj == Projection::FreeGroup) {
        switch (c) {
        case 'a':
        case 'A': return LampElem::toggle_at_origin();
        case 'b': return LampElem::move(1);
        case 'B': return LampElem::move(-1);
        }
    } else {
        switch (c) {
        case 'a': return LampElem::move(1);
        case 'b': return LampElem({0}, -1);
        case 'A': return LampElem::move(-1);
        case 'B': return LampElem({1}, 1);  // inverse of ({0},-1)
        }
    }
    throw std::invalid_argument("project_letter: bad letter");
}

/// Left-to-right fold of the letter images. For the semigroup variant the
/// word must be positive (letters a, b only).
inline LampElem project(std::string_view letters, Projection proj) {
    if (proj == Projection::FreeSemigroup) {
        for (char c : letters) {
            if (c != 'a' && c != 'b') throw std::invalid_argument("project: semigroup words are positive");
        }
    }
    LampElem x;
    for (char c : letters) x = x * project_letter(c, proj);
    return x;
}

inline LampElem project(const FreeWord& w, Projection proj = Projection::FreeGroup) {
    return project(std::string_view(w.letters()), proj);
}

}  // namespace stopwalk
