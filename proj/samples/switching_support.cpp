// How often the lazy walk on F2 sits at a B_1-switching element, and the
// shortest words that are not.

#include <cstdio>
#include <map>

#include "stopwalk/switching.hpp"

int main() {
    using namespace stopwalk;
    const auto F = ball(1);
    for (const auto& r : switching_frequency(lazy_srw(), F, {5, 10, 20, 40, 80}, 2000, 1)) {
        auto [lo, hi] = r.freq.wilson(1.96);
        std::printf("n = %-3llu  switching %.4f  [%.4f, %.4f]\n", static_cast<unsigned long long>(r.n), r.freq.value(),
                    lo, hi);
    }
    std::map<std::size_t, std::size_t> bad;
    const auto B6 = ball(6);
    for (const auto& w : B6.elements())
        if (!is_switching_element(w, F)) ++bad[w.length()];
    for (const auto& [len, n] : bad) std::printf("non-switching words of length %zu: %zu\n", len, n);
    const auto w = FreeWord::parse("ab");
    if (auto r = is_switching(FiniteSet{w}, F); !r) {
        const auto& x = *r.witness;
        std::printf("%s %s %s = %s %s %s\n", x.f1.str().c_str(), x.a1.str().c_str(), x.f2.str().c_str(),
                    x.f3.str().c_str(), x.a2.str().c_str(), x.f4.str().c_str());
    }
    return 0;
}
