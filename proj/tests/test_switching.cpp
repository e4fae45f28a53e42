#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "stopwalk/switching.hpp"

using namespace stopwalk;

namespace {

FreeWord random_word(std::mt19937_64& g, int max_len) {
    static const char* letters[] = {"a", "A", "b", "B"};
    FreeWord w;
    const int len = static_cast<int>(g() % static_cast<unsigned>(max_len + 1));
    for (int i = 0; i < len; ++i) w = w * FreeWord::parse(letters[g() % 4]);
    return w;
}

FiniteSet random_set(std::mt19937_64& g, int max_size, int max_len) {
    std::vector<FreeWord> v;
    const int n = 1 + static_cast<int>(g() % static_cast<unsigned>(max_size));
    for (int i = 0; i < n; ++i) v.push_back(random_word(g, max_len));
    return FiniteSet(std::move(v));
}

// Direct comparison of every pair of triples.
bool switching_oracle(const FiniteSet& A, const FiniteSet& F) {
    const auto& as = A.elements();
    const auto& fs = F.elements();
    struct T {
        std::size_t f1, a, f2;
        FreeWord g;
    };
    std::vector<T> all;
    for (std::size_t i = 0; i < fs.size(); ++i)
        for (std::size_t j = 0; j < as.size(); ++j)
            for (std::size_t k = 0; k < fs.size(); ++k) all.push_back({i, j, k, fs[i] * as[j] * fs[k]});
    for (std::size_t x = 0; x < all.size(); ++x)
        for (std::size_t y = x + 1; y < all.size(); ++y)
            if (all[x].g == all[y].g) return false;
    return true;
}

}  // namespace

TEST(Switching, AgreesWithPairwiseOracle) {
    std::mt19937_64 g(77);
    int negatives = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        auto A = random_set(g, 4, 4);
        auto F = random_set(g, 4, 2);
        auto r = is_switching(A, F);
        ASSERT_EQ(r.switching, switching_oracle(A, F)) << trial;
        if (!r.switching) {
            ++negatives;
            const auto& w = *r.witness;
            EXPECT_EQ(w.f1 * w.a1 * w.f2, w.f3 * w.a2 * w.f4);
        }
    }
    EXPECT_GT(negatives, 100);
    EXPECT_LT(negatives, 1000);
}

TEST(Switching, KnownCases) {
    auto B1 = ball(1);
    EXPECT_FALSE(is_switching_element(FreeWord(), B1));
    EXPECT_FALSE(is_switching_element(FreeWord::parse("ab"), B1));
    EXPECT_FALSE(is_switching_element(FreeWord::parse("abab"), B1));
    EXPECT_TRUE(is_switching_element(FreeWord::parse("aab"), B1));
    EXPECT_TRUE(is_superswitching(FreeWord::parse("aabb"), B1));
    EXPECT_TRUE(is_switching_element(FreeWord::parse("ab"), FiniteSet{FreeWord()}));
}

TEST(FiniteSetOps, BallsAndProducts) {
    EXPECT_EQ(ball(0).size(), 1u);
    EXPECT_EQ(ball(1).size(), 5u);
    EXPECT_EQ(ball(2).size(), 17u);
    EXPECT_EQ(ball(3).size(), 53u);
    EXPECT_EQ(ball(1).times(ball(1)), ball(2));
    EXPECT_TRUE(ball(2).is_symmetric());
    FiniteSet s{FreeWord::parse("ab")};
    EXPECT_FALSE(s.is_symmetric());
    EXPECT_EQ(s.symmetrised().size(), 2u);
    FiniteSet t = s;
    t.insert(FiniteSet{FreeWord::parse("ab"), FreeWord()});
    EXPECT_EQ(t.size(), 2u);
    EXPECT_TRUE(t.contains(FreeWord()));
}

TEST(ThinnedTarget, CursorMatchesExplicitTest) {
    ThinnedSwitchTarget T(ball(1), 11);
    auto cur = T.cursor();
    auto* c = dynamic_cast<ThinnedSwitchTarget::Cursor*>(cur.get());
    ASSERT_NE(c, nullptr);
    Rng rng = make_rng(3, 4, 5);
    const char letters[] = {'a', 'A', 'b', 'B'};
    int hits = 0;
    for (int t = 0; t < 600; ++t) {
        c->push(letters[rng() % 4]);
        bool h = c->hit();
        ASSERT_EQ(h, T.contains(c->word())) << c->word().str();
        hits += h;
    }
    EXPECT_GT(hits, 0);
}

TEST(ThinnedTarget, MembershipIndependentOfQueryOrder) {
    std::mt19937_64 g(5);
    std::vector<FreeWord> ws;
    for (int i = 0; i < 3000; ++i) ws.push_back(random_word(g, 16));
    ThinnedSwitchTarget t1(ball(1), 9), t2(ball(1), 9), t3(ball(1), 10);
    std::vector<bool> fwd, rev(ws.size());
    for (const auto& w : ws) fwd.push_back(t1.contains(w));
    for (std::size_t i = ws.size(); i-- > 0;) rev[i] = t2.contains(ws[i]);
    EXPECT_EQ(fwd, rev);
    EXPECT_GT(std::count(fwd.begin(), fwd.end(), true), 0);
    bool differs = false;
    for (std::size_t i = 0; i < ws.size(); ++i) differs |= fwd[i] != t3.contains(ws[i]);
    EXPECT_TRUE(differs);
}

TEST(ThinnedTarget, TargetIsSparseInNeighbourhoods) {
    // Two members cannot be F^2-neighbours of each other.
    ThinnedSwitchTarget T(ball(1), 21);
    std::mt19937_64 g(8);
    int checked = 0;
    for (int i = 0; i < 3000 && checked < 20; ++i) {
        auto w = random_word(g, 10);
        if (!T.contains(w)) continue;
        ++checked;
        for (const auto& x : T.F2().elements())
            for (const auto& y : T.F2().elements()) {
                auto b = x * w * y;
                if (b != w) {
                    EXPECT_FALSE(T.contains(b)) << w.str() << " " << b.str();
                }
            }
    }
    EXPECT_GT(checked, 0);
}

TEST(SwitchHit, TrivialFStopsAtOnce) {
    CompiledStep base(lazy_srw(), Projection::FreeGroup);
    auto spec = switch_hit_stopping(FiniteSet{FreeWord()}, 1);
    Rng rng = make_rng(1, 1, 1);
    for (int i = 0; i < 50; ++i) EXPECT_EQ(run_to_stop(base, StoppingSpec{spec}, rng).steps_used, 1u);
    auto cert = certify_switch_support(base, spec, FiniteSet{FreeWord()}, 100, 2);
    EXPECT_TRUE(cert.result.switching);
    EXPECT_EQ(cert.truncated, 0u);
    EXPECT_LE(cert.distinct, 5u);
}

TEST(SwitchingFrequency, ZeroStepsNeverSwitchAndOracleAgrees) {
    auto m = lazy_srw();
    auto r = switching_frequency(m, ball(1), {0, 12}, 300, 4);
    EXPECT_EQ(r[0].freq.hits, 0u);
    std::uint64_t hits = 0;
    for (std::size_t i = 0; i < 300; ++i) {
        Rng rng = make_rng(4, 0x5f00 + 12, i);
        hits += switching_oracle(FiniteSet{walk_endpoint(m, 12, rng)}, ball(1));
    }
    EXPECT_EQ(r[1].freq.hits, hits);
}

TEST(CosetDecay, TrivialAndWholeSubgroups) {
    auto m = lazy_srw();
    auto whole = coset_decay(m, whole_group(), ball(1), {5}, 200, 1);
    EXPECT_EQ(whole[0].freq.hits, 200u);
    auto triv = coset_decay(m, trivial_subgroup(), ball(1), {5}, 2000, 1);
    // w_n in B_1 iff |w_n| <= 1.
    std::uint64_t direct = 0;
    for (std::size_t i = 0; i < 2000; ++i) {
        Rng rng = make_rng(1, 0xc05e + 5, i);
        direct += walk_endpoint(m, 5, rng).length() <= 1;
    }
    EXPECT_EQ(triv[0].freq.hits, direct);
    EXPECT_THROW(subgroup_by_name("nope"), std::invalid_argument);
}
