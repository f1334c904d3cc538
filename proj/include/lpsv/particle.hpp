#ifndef LPSV_PARTICLE_HPP
#define LPSV_PARTICLE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

#include "lpsv/errors.hpp"
#include "lpsv/model.hpp"
#include "lpsv/noise.hpp"
#include "lpsv/rng.hpp"

namespace lpsv {

constexpr double kNoDefault = std::numeric_limits<double>::infinity();

// Counter-based Gaussian draws: two splitmix64 outputs per pair, Box-Muller.
// Keyed by (stream, counter) so particles can be stepped in any order.
inline void counter_normal_pair(std::uint64_t stream, std::uint64_t counter,
                                double& g1, double& g2) {
    const std::uint64_t a = mix64(stream ^ mix64(counter * 2));
    const std::uint64_t b = mix64(stream ^ mix64(counter * 2 + 1));
    double u1 = ((a >> 11) + 1.0) * 0x1.0p-53;  // in (0, 1]
    double u2 = (b >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    g1 = r * std::cos(2.0 * M_PI * u2);
    g2 = r * std::sin(2.0 * M_PI * u2);
}

inline double counter_uniform(std::uint64_t stream, std::uint64_t counter) {
    return (mix64(stream ^ mix64(counter)) >> 11) * 0x1.0p-53;
}

// Per-particle state arrays at a fixed time.
struct PortfolioState {
    std::vector<double> X;             // distance to default; 0 once defaulted
    std::vector<double> sigma;         // volatility state, evolves for all t
    std::vector<char> alive;           // 1 while T_i > t
    std::vector<double> default_time;  // +inf sentinel for survivors
    double t = 0.0;

    std::size_t size() const { return X.size(); }

    double loss() const {
        std::size_t d = 0;
        for (char a : alive)
            if (!a) ++d;
        return static_cast<double>(d) / static_cast<double>(X.size());
    }
};

// Loss fraction plus a 2-d survivor histogram at one time.
struct EmpiricalSnapshot {
    double t = 0.0;
    double loss = 0.0;
    double x_min = 0.0, x_max = 0.0, y_min = 0.0, y_max = 0.0;
    std::size_t nx = 0, ny = 0;
    std::vector<std::uint64_t> counts;  // row-major (x bin, y bin)
};

inline EmpiricalSnapshot make_snapshot(const PortfolioState& s, double x_min,
                                       double x_max, double y_min, double y_max,
                                       std::size_t nx, std::size_t ny) {
    EmpiricalSnapshot out;
    out.t = s.t;
    out.loss = s.loss();
    out.x_min = x_min;
    out.x_max = x_max;
    out.y_min = y_min;
    out.y_max = y_max;
    out.nx = nx;
    out.ny = ny;
    out.counts.assign(nx * ny, 0);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!s.alive[i]) continue;
        auto bin = [](double v, double lo, double hi, std::size_t n) {
            const double f = (v - lo) / (hi - lo);
            const auto b = static_cast<std::ptrdiff_t>(std::floor(f * n));
            return std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(n) - 1);
        };
        out.counts[bin(s.X[i], x_min, x_max, nx) * ny +
                   bin(s.sigma[i], y_min, y_max, ny)]++;
    }
    return out;
}

struct SimOptions {
    // Brownian-bridge crossing-probability correction for first-passage bias.
    bool bridge_correction = false;
    // Test hook: zero the idiosyncratic increments (deterministic skeleton).
    bool zero_idiosyncratic = false;
    // Record a full PortfolioState every record_stride steps (plus t=0 and
    // the final step). The loss curve is recorded at every step regardless.
    std::size_t record_stride = 1;
    // Optional per-step observer, called after every step with the new state.
    std::function<void(const PortfolioState&, std::size_t)> observer;
};

struct SimulationResult {
    std::vector<PortfolioState> states;   // recorded snapshots
    std::vector<double> loss_times;       // every grid time, starting at 0
    std::vector<double> loss;             // loss fraction at each grid time
};

// Euler-Maruyama simulation of the absorbed particle system. One coefficient
// vector shared by all particles or one per particle. The common noise is
// shared; each particle draws its idiosyncratic pair from its own stream.
inline SimulationResult simulate_portfolio(
    const std::vector<CoefficientVector>& params, const VolSpec& spec,
    const std::vector<std::pair<double, double>>& init, const CommonNoisePath& noise,
    std::uint64_t seed, const SimOptions& opt = {}) {
    const std::size_t N = init.size();
    if (N == 0) throw DomainError("simulate_portfolio: empty initial condition");
    if (params.size() != 1 && params.size() != N)
        throw ShapeError("simulate_portfolio: need 1 or N coefficient vectors");
    for (const auto& c : params) c.validate();

    PortfolioState st;
    st.X.resize(N);
    st.sigma.resize(N);
    st.alive.assign(N, 1);
    st.default_time.assign(N, kNoDefault);
    st.t = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        if (init[i].first < 0.0)
            throw DomainError("simulate_portfolio: initial x must be >= 0");
        st.X[i] = init[i].first;
        st.sigma[i] = init[i].second;
        if (st.X[i] <= 0.0) {
            st.X[i] = 0.0;
            st.alive[i] = 0;
            st.default_time[i] = 0.0;
        }
    }

    std::vector<std::uint64_t> streams(N);
    for (std::size_t i = 0; i < N; ++i) streams[i] = derive_stream_seed(seed, i + 2);

    SimulationResult res;
    res.loss_times.reserve(noise.n_steps + 1);
    res.loss.reserve(noise.n_steps + 1);
    res.loss_times.push_back(0.0);
    res.loss.push_back(st.loss());
    res.states.push_back(st);
    if (opt.observer) opt.observer(st, 0);

    const double dt = noise.dt;
    const double sqrt_dt = std::sqrt(dt);
    const bool shared = params.size() == 1;

    for (std::size_t n = 0; n < noise.n_steps; ++n) {
        const double dW0 = noise.increments_W0[n];
        const double dB0 = noise.increments_B0[n];
        const double t_next = dt * static_cast<double>(n + 1);
        for (std::size_t i = 0; i < N; ++i) {
            const CoefficientVector& c = shared ? params[0] : params[i];
            double dWi = 0.0, dBi = 0.0;
            if (!opt.zero_idiosyncratic) {
                counter_normal_pair(streams[i], n * 2, dWi, dBi);
                dWi *= sqrt_dt;
                dBi *= sqrt_dt;
            }
            const double sig = st.sigma[i];
            const double hs = spec.h(sig);
            const double qs = spec.q(sig);
            const double sig_new =
                sig + c.k * (c.theta - sig) * dt +
                c.xi * qs * (std::sqrt(1.0 - c.rho2 * c.rho2) * dBi + c.rho2 * dB0);
            if (!std::isfinite(sig_new)) {
                std::ostringstream os;
                os << "simulate_portfolio: non-finite sigma, particle " << i
                   << ", step " << n;
                throw NumericError(os.str());
            }
            if (st.alive[i]) {
                const double x = st.X[i];
                const double x_new =
                    x + (c.r - 0.5 * hs * hs) * dt +
                    hs * (std::sqrt(1.0 - c.rho1 * c.rho1) * dWi + c.rho1 * dW0);
                if (!std::isfinite(x_new)) {
                    std::ostringstream os;
                    os << "simulate_portfolio: non-finite X, particle " << i
                       << ", step " << n;
                    throw NumericError(os.str());
                }
                bool defaulted = x_new <= 0.0;
                if (!defaulted && opt.bridge_correction) {
                    // Conditional crossing probability of a Brownian bridge
                    // between two positive endpoints.
                    const double p =
                        std::exp(-2.0 * x * x_new / (hs * hs * dt));
                    if (counter_uniform(streams[i], 4 * noise.n_steps + n) < p)
                        defaulted = true;
                }
                if (defaulted) {
                    st.X[i] = 0.0;
                    st.alive[i] = 0;
                    st.default_time[i] = t_next;
                } else {
                    st.X[i] = x_new;
                }
            }
            st.sigma[i] = sig_new;
        }
        st.t = t_next;
        res.loss_times.push_back(t_next);
        res.loss.push_back(st.loss());
        if ((opt.record_stride > 0 && (n + 1) % opt.record_stride == 0) ||
            n + 1 == noise.n_steps)
            res.states.push_back(st);
        if (opt.observer) opt.observer(st, n + 1);
    }
    return res;
}

// Per-time defaulted fraction of a recorded state series.
inline std::vector<double> loss_process(const std::vector<PortfolioState>& states) {
    if (states.empty()) throw DomainError("loss_process: empty state series");
    std::vector<double> out;
    out.reserve(states.size());
    for (const auto& s : states) out.push_back(s.loss());
    return out;
}

// A kernel density estimate sampled on a uniform grid.
struct SampledDensity {
    std::vector<double> y;
    std::vector<double> values;
    double bandwidth = 0.0;

    double integral() const {
        if (y.size() < 2) return 0.0;
        double s = 0.5 * (values.front() + values.back());
        for (std::size_t i = 1; i + 1 < values.size(); ++i) s += values[i];
        return s * (y[1] - y[0]);
    }
};

// Inner Monte Carlo estimate of the conditional volatility density at time t:
// the systemic path B0 is frozen, n_inner independent idiosyncratic paths are
// drawn, and the terminal values are smoothed with a Gaussian kernel.
inline SampledDensity conditional_vol_density(const CoefficientVector& c,
                                              const VolSpec& spec, double sigma0,
                                              const CommonNoisePath& noise, double t,
                                              std::size_t n_inner, double bandwidth,
                                              std::uint64_t seed,
                                              std::size_t n_grid = 2001) {
    if (!(bandwidth > 0.0))
        throw DomainError("conditional_vol_density: bandwidth > 0 required");
    c.validate();
    const auto n_steps = static_cast<std::size_t>(std::llround(t / noise.dt));
    if (n_steps > noise.n_steps ||
        std::abs(n_steps * noise.dt - t) > 1e-9 * std::max(1.0, t))
        throw DomainError("conditional_vol_density: t not on the noise grid");

    const double dt = noise.dt;
    const double sqrt_dt = std::sqrt(dt);
    const double c2 = std::sqrt(1.0 - c.rho2 * c.rho2);
    std::vector<double> terminal(n_inner);
    for (std::size_t m = 0; m < n_inner; ++m) {
        const std::uint64_t stream = derive_stream_seed(seed, m + 7);
        double sig = sigma0;
        for (std::size_t n = 0; n < n_steps; ++n) {
            double g1, g2;
            counter_normal_pair(stream, n, g1, g2);
            sig += c.k * (c.theta - sig) * dt +
                   c.xi * spec.q(sig) * (c2 * g1 * sqrt_dt +
                                         c.rho2 * noise.increments_B0[n]);
        }
        terminal[m] = sig;
    }

    auto [lo_it, hi_it] = std::minmax_element(terminal.begin(), terminal.end());
    const double pad = 8.0 * bandwidth;
    const double lo = *lo_it - pad, hi = *hi_it + pad;
    SampledDensity d;
    d.bandwidth = bandwidth;
    d.y.resize(n_grid);
    d.values.assign(n_grid, 0.0);
    const double dy = (hi - lo) / static_cast<double>(n_grid - 1);
    for (std::size_t j = 0; j < n_grid; ++j) d.y[j] = lo + dy * j;
    const double norm =
        1.0 / (n_inner * bandwidth * std::sqrt(2.0 * M_PI));
    // kernel support is 8 bandwidths; contributions beyond are < 1e-14
    const auto reach = static_cast<std::size_t>(std::ceil(pad / dy));
    for (double s : terminal) {
        const auto j0 = static_cast<std::ptrdiff_t>((s - lo) / dy);
        const std::size_t ja = j0 > static_cast<std::ptrdiff_t>(reach)
                                   ? j0 - reach
                                   : 0;
        const std::size_t jb = std::min<std::size_t>(j0 + reach, n_grid - 1);
        for (std::size_t j = ja; j <= jb; ++j) {
            const double z = (d.y[j] - s) / bandwidth;
            d.values[j] += norm * std::exp(-0.5 * z * z);
        }
    }
    return d;
}

} // namespace lpsv

#endif
