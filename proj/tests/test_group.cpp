#include <gtest/gtest.h>

#include <map>
#include <set>
#include <string>

#include "stopwalk/group.hpp"
#include "stopwalk/random.hpp"

using namespace stopwalk;

namespace {

std::string random_letters(Rng& rng, std::size_t n) {
    static const char L[] = "aAbB";
    std::string s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(L[rng() % 4]);
    return s;
}

// Free reduction by repeated scanning, independent of the stack-based one.
std::string reduce_by_scanning(std::string s) {
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t i = 0; i + 1 < s.size(); ++i) {
            char x = s[i], y = s[i + 1];
            if (x != y && std::tolower(x) == std::tolower(y)) {
                s.erase(i, 2);
                changed = true;
                break;
            }
        }
    }
    return s;
}

// Lamplighter product straight from the wreath-product law, using a set of
// lit positions and explicit shifting.
LampElem naive_mul(const LampElem& x, const LampElem& y) {
    std::set<std::int64_t> lit(x.lamps().begin(), x.lamps().end());
    for (auto l : y.lamps()) {
        auto q = l + x.pos();
        if (lit.count(q)) lit.erase(q);
        else lit.insert(q);
    }
    return LampElem(std::vector<std::int64_t>(lit.begin(), lit.end()), x.pos() + y.pos());
}

LampElem random_lamp(Rng& rng) {
    std::set<std::int64_t> s;
    auto k = rng() % 5;
    for (std::uint64_t i = 0; i < k; ++i) s.insert(static_cast<std::int64_t>(rng() % 11) - 5);
    return LampElem(std::vector<std::int64_t>(s.begin(), s.end()), static_cast<std::int64_t>(rng() % 9) - 4);
}

}  // namespace

TEST(FreeWord, ParseReducesAndPrintsIdentityAsE) {
    EXPECT_EQ(FreeWord::parse("aAb").str(), "b");
    EXPECT_EQ(FreeWord::parse("abBA").str(), "e");
    EXPECT_EQ(FreeWord::parse("e").str(), "e");
    EXPECT_TRUE(FreeWord::parse("e").is_identity());
    EXPECT_THROW(FreeWord::parse("abc"), std::invalid_argument);
}

TEST(FreeWord, ReductionMatchesScanningOracle) {
    Rng rng = make_rng(11, 1, 0);
    for (int i = 0; i < 2000; ++i) {
        auto s = random_letters(rng, rng() % 30);
        auto expect = reduce_by_scanning(s);
        EXPECT_EQ(FreeWord::parse(s.empty() ? "e" : s).letters(), expect) << s;
    }
}

TEST(FreeWord, GroupLaws) {
    Rng rng = make_rng(11, 2, 0);
    for (int i = 0; i < 2000; ++i) {
        auto s = random_letters(rng, rng() % 12);
        auto u = FreeWord::parse(s.empty() ? "e" : s);
        auto v = FreeWord::parse("a" + random_letters(rng, rng() % 12));
        auto w = FreeWord::parse("B" + random_letters(rng, rng() % 12));
        EXPECT_EQ((u * v) * w, u * (v * w));
        EXPECT_TRUE((u * u.inverse()).is_identity());
        EXPECT_EQ(u * FreeWord(), u);
        EXPECT_EQ((u * v).inverse(), v.inverse() * u.inverse());
    }
}

TEST(FreeWord, ProductMatchesConcatenationThenReduction) {
    Rng rng = make_rng(11, 3, 0);
    for (int i = 0; i < 2000; ++i) {
        auto s = random_letters(rng, 1 + rng() % 10), t = random_letters(rng, 1 + rng() % 10);
        EXPECT_EQ((FreeWord::parse(s) * FreeWord::parse(t)).letters(), reduce_by_scanning(s + t));
    }
}

TEST(FreeWord, PowerAndPrefix) {
    EXPECT_EQ(power(FreeWord::parse("ab"), 3).str(), "ababab");
    EXPECT_EQ(power(FreeWord::parse("ab"), 0).str(), "e");
    EXPECT_EQ(FreeWord::parse("abab").prefix(3).str(), "aba");
    EXPECT_EQ(FreeWord::parse("ab").prefix(7).str(), "ab");
}

TEST(LampElem, ProductMatchesWreathLaw) {
    Rng rng = make_rng(12, 1, 0);
    for (int i = 0; i < 3000; ++i) {
        auto x = random_lamp(rng), y = random_lamp(rng), z = random_lamp(rng);
        EXPECT_EQ(x * y, naive_mul(x, y));
        EXPECT_EQ((x * y) * z, x * (y * z));
        EXPECT_TRUE((x * x.inverse()).is_identity());
        EXPECT_TRUE((x.inverse() * x).is_identity());
    }
}

TEST(LampElem, CanonicalFormRoundTrips) {
    LampElem x({-3, 0, 2}, -1);
    EXPECT_EQ(x.str(), "L{-3,0,2}P{-1}");
    EXPECT_EQ(LampElem::parse(x.str()), x);
    EXPECT_EQ(LampElem().str(), "L{}P{0}");
    EXPECT_THROW(LampElem::parse("L{1}Q{2}"), std::invalid_argument);
    EXPECT_THROW(LampElem::parse("L{x}P{0}"), std::invalid_argument);
}

TEST(LampElem, ToggleThenMove) {
    auto t = LampElem::toggle_at_origin();
    auto m = LampElem::move(1);
    EXPECT_EQ((t * m).str(), "L{0}P{1}");
    EXPECT_EQ((m * t).str(), "L{1}P{1}");
    EXPECT_TRUE((t * t).is_identity());
}

TEST(Projection, FreeGroupHomomorphism) {
    Rng rng = make_rng(13, 1, 0);
    for (int i = 0; i < 3000; ++i) {
        auto u = FreeWord::parse("a" + random_letters(rng, rng() % 15));
        auto v = FreeWord::parse("b" + random_letters(rng, rng() % 15));
        EXPECT_EQ(project(u * v), project(u) * project(v));
        EXPECT_EQ(project(u.inverse()), project(u).inverse());
    }
    EXPECT_EQ(project(FreeWord::parse("a")).str(), "L{0}P{0}");
    EXPECT_EQ(project(FreeWord::parse("b")).str(), "L{}P{1}");
}

TEST(Projection, SemigroupHomomorphismOnPositiveWords) {
    Rng rng = make_rng(13, 2, 0);
    auto positive = [&](std::size_t n) {
        std::string s;
        for (std::size_t i = 0; i < n; ++i) s.push_back(rng() % 2 ? 'a' : 'b');
        return s;
    };
    for (int i = 0; i < 3000; ++i) {
        auto s = positive(1 + rng() % 10), t = positive(1 + rng() % 10);
        EXPECT_EQ(project(s + t, Projection::FreeSemigroup),
                  project(s, Projection::FreeSemigroup) * project(t, Projection::FreeSemigroup));
    }
    EXPECT_EQ(project("a", Projection::FreeSemigroup).str(), "L{}P{1}");
    EXPECT_EQ(project("b", Projection::FreeSemigroup).str(), "L{0}P{-1}");
    EXPECT_THROW(project("aA", Projection::FreeSemigroup), std::invalid_argument);
}

TEST(Random, StreamsAreReproducibleAndDistinct) {
    Rng a = make_rng(1, 2, 3), b = make_rng(1, 2, 3), c = make_rng(1, 2, 4);
    EXPECT_EQ(a(), b());
    EXPECT_NE(make_rng(1, 2, 3)(), c());
    double u = uniform01(a);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
}

TEST(Random, ElementUniformsDependOnSeedAndText) {
    ElementUniforms e1(5), e2(5), e3(6);
    EXPECT_EQ(e1.bits("abA"), e2.bits("abA"));
    EXPECT_NE(e1.bits("abA"), e3.bits("abA"));
    EXPECT_NE(e1.bits("abA"), e1.bits("abB"));
}
