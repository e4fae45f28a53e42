// Compares boundary hitting laws of the lazy walk on F2 with and without a
// randomized stopping time (the Fixed(1) / LampClear(0,0) mixture).

#include <cstdio>
#include <cstdlib>
#include <memory>

#include "stopwalk/walks.hpp"

int main(int argc, char** argv) {
    using namespace stopwalk;
    const std::uint64_t paths = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 5000;

    CompiledStep base(lazy_srw(), Projection::FreeGroup);
    auto mix = std::make_shared<MixtureSpec>();
    mix->p = RecordMeasure::zeta2();
    mix->components = {FixedOne{}, LampClearSpec{0, 0}};

    HittingOptions opt;
    opt.paths = paths;
    opt.steps = 600;
    opt.margin = 150;
    opt.depth = 2;
    auto plain = hitting_histogram(base, StoppingSpec{FixedOne{}}, opt);
    opt.steps = 200;
    opt.margin = 50;
    opt.stream = 0x418;
    auto stopped = hitting_histogram(base, StoppingSpec{std::shared_ptr<const MixtureSpec>(mix)}, opt);

    std::printf("%-6s %10s %10s\n", "cyl", "mu", "mu_tau");
    for (const auto& [cyl, n] : plain.counts) {
        auto it = stopped.counts.find(cyl);
        const double q = it == stopped.counts.end() ? 0 : static_cast<double>(it->second);
        std::printf("%-6s %10.4f %10.4f\n", cyl.c_str(), static_cast<double>(n) / static_cast<double>(plain.total),
                    q / static_cast<double>(stopped.total));
    }
    auto cmp = compare_hitting(plain, stopped);
    std::printf("tv = %.4f  chi2 = %.2f  dof = %llu  p = %.4f\n", cmp.tv, cmp.chi2.statistic,
                static_cast<unsigned long long>(cmp.chi2.dof), cmp.chi2.p_value);
    return 0;
}
