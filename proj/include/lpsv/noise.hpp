#ifndef LPSV_NOISE_HPP
#define LPSV_NOISE_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "lpsv/errors.hpp"
#include "lpsv/rng.hpp"

namespace lpsv {

// Discretized correlated systemic Brownian pair (W0, B0) on a uniform grid.
// B0 increments are rho3 * dW0 + sqrt(1-rho3^2) * dZ with independent dZ.
struct CommonNoisePath {
    double dt = 0.0;
    std::size_t n_steps = 0;
    double rho3 = 0.0;
    std::uint64_t seed = 0;
    std::vector<double> increments_W0;
    std::vector<double> increments_B0;

    double horizon() const { return dt * static_cast<double>(n_steps); }
};

inline CommonNoisePath generate_common_noise(double dt, std::size_t n_steps,
                                             double rho3, std::uint64_t seed) {
    if (!(dt > 0.0)) throw DomainError("generate_common_noise: dt > 0 required");
    if (std::abs(rho3) > 1.0)
        throw DomainError("generate_common_noise: |rho3| <= 1 required");
    CommonNoisePath p;
    p.dt = dt;
    p.n_steps = n_steps;
    p.rho3 = rho3;
    p.seed = seed;
    p.increments_W0.resize(n_steps);
    p.increments_B0.resize(n_steps);
    NormalSampler gw(derive_stream_seed(seed, 0));
    NormalSampler gz(derive_stream_seed(seed, 1));
    const double sd = std::sqrt(dt);
    const double c = std::sqrt(1.0 - rho3 * rho3);
    for (std::size_t i = 0; i < n_steps; ++i) {
        const double dw = gw() * sd;
        const double dz = gz() * sd;
        p.increments_W0[i] = dw;
        p.increments_B0[i] = rho3 * dw + c * dz;
    }
    return p;
}

} // namespace lpsv

#endif
