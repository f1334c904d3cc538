#ifndef LPSV_RNG_HPP
#define LPSV_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace lpsv {

// splitmix64 finalizer; used to derive independent stream seeds from
// (master seed, stream index) without cross-talk between streams.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream) {
    return mix64(mix64(seed) ^ mix64(stream + 0x5851f42d4c957f2dULL));
}

// Gaussian sampler over mt19937_64 with an explicit Box-Muller transform.
// std::normal_distribution is implementation-defined, so we roll the
// transform ourselves to keep seeded runs byte-reproducible.
class NormalSampler {
public:
    explicit NormalSampler(std::uint64_t seed) : gen_(seed) {}

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform01();
        } while (u1 <= 0.0);
        u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double uniform01() {
        // 53-bit uniform in [0,1)
        return (gen_() >> 11) * 0x1.0p-53;
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace lpsv

#endif
