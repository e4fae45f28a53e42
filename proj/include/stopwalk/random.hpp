#pragma once

// Seeding and random sources. Every Monte Carlo trial gets its own engine
// whose seed is a pure function of (master seed, stream, trial index), so
// ensemble results never depend on scheduling or worker count.

#include <array>
#include <cstdint>
#include <cstring>
#include <random>
#include <stdexcept>
#include <string_view>

#include <sodium.h>

namespace stopwalk {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for trial `index` of stream `stream` under `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(splitmix64(master) ^ stream) + index);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(derive_seed(master, stream, index)),
                      static_cast<std::uint32_t>(derive_seed(master, stream, index) >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index)};
    return Rng(seq);
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Hands out small groups of random bits from one 64-bit draw at a time.
class BitSource {
public:
    explicit BitSource(Rng& rng) : rng_(&rng) {}

    std::uint32_t take(unsigned bits) {
        if (avail_ < bits) {
            buf_ = (*rng_)();
            avail_ = 64;
        }
        auto v = static_cast<std::uint32_t>(buf_ & ((1ULL << bits) - 1));
        buf_ >>= bits;
        avail_ -= bits;
        return v;
    }

    Rng& engine() noexcept { return *rng_; }

private:
    Rng* rng_;
    std::uint64_t buf_ = 0;
    unsigned avail_ = 0;
};

/// Reproducible i.i.d.-like uniforms indexed by canonical strings:
/// SipHash-2-4 keyed by the seed, mapped to [0,1) with 64 bits.
class ElementUniforms {
public:
    explicit ElementUniforms(std::uint64_t seed) {
        if (sodium_init() < 0) throw std::runtime_error("libsodium failed to initialise");
        std::uint64_t k0 = splitmix64(seed), k1 = splitmix64(seed ^ 0x5bd1e995ULL);
        std::memcpy(key_.data(), &k0, 8);
        std::memcpy(key_.data() + 8, &k1, 8);
    }

    [[nodiscard]] std::uint64_t bits(std::string_view canonical) const {
        std::array<unsigned char, crypto_shorthash_BYTES> out{};
        crypto_shorthash(out.data(), reinterpret_cast<const unsigned char*>(canonical.data()), canonical.size(),
                         key_.data());
        std::uint64_t v;
        std::memcpy(&v, out.data(), 8);
        return v;
    }

    [[nodiscard]] double uniform(std::string_view canonical) const {
        return static_cast<double>(bits(canonical)) * 0x1.0p-64;
    }

private:
    std::array<unsigned char, crypto_shorthash_KEYBYTES> key_{};
};

}  // namespace stopwalk
