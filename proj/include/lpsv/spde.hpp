#ifndef LPSV_SPDE_HPP
#define LPSV_SPDE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "lpsv/errors.hpp"
#include "lpsv/model.hpp"

namespace lpsv {

// Discretized density on the truncated half-plane [0, X_max] x [y_min, y_max]
// with the boundary row at x = 0 pinned to zero.
struct DensityGrid {
    std::size_t nx = 0, ny = 0;  // node counts (including boundaries)
    double dx = 0.0, dy = 0.0;
    double y_min = 0.0;
    double t = 0.0;
    std::vector<double> values;  // row-major: values[j * ny + k], j along x

    double x(std::size_t j) const { return dx * static_cast<double>(j); }
    double y(std::size_t k) const { return y_min + dy * static_cast<double>(k); }
    double& at(std::size_t j, std::size_t k) { return values[j * ny + k]; }
    double at(std::size_t j, std::size_t k) const { return values[j * ny + k]; }
};

enum class Scheme { Explicit, LieSplitting };

struct SolverConfig {
    double dx = 0.01, dy = 0.02, dt = 1e-4;
    double x_max = 8.0;
    double y_min = -2.0, y_max = 2.5;
    Scheme scheme = Scheme::LieSplitting;
    double cfl_safety = 0.8;
};

// Trapezoid-rule mass of the grid.
inline double survival_mass(const DensityGrid& g) {
    double total = 0.0;
    for (std::size_t j = 0; j < g.nx; ++j) {
        const double wx = (j == 0 || j + 1 == g.nx) ? 0.5 : 1.0;
        double row = 0.0;
        for (std::size_t k = 0; k < g.ny; ++k) {
            const double wy = (k == 0 || k + 1 == g.ny) ? 0.5 : 1.0;
            row += wy * g.at(j, k);
        }
        total += wx * row;
    }
    return total * g.dx * g.dy;
}

// Explicit finite-difference stepper for the conditional-density equation:
// a deterministic sub-step (upwind transport, centered second differences,
// centered cross term), then a stochastic transport sub-step driven by the
// common-noise increments.
class SpdeSolver {
public:
    SpdeSolver(const SolverConfig& cfg, const CoefficientVector& c, const VolSpec& spec)
        : cfg_(cfg), c_(c) {
        c_.validate();
        if (!check_correlation_condition(c_))
            throw ConfigError(
                "SpdeSolver: correlation condition |rho - xi rho3 rho1 rho2| <= "
                "xi sqrt(1-rho1^2) sqrt(1-rho2^2) violated; uniqueness is not "
                "guaranteed for this configuration");
        nx_ = static_cast<std::size_t>(std::llround(cfg.x_max / cfg.dx)) + 1;
        ny_ = static_cast<std::size_t>(std::llround((cfg.y_max - cfg.y_min) / cfg.dy)) + 1;
        if (nx_ < 4 || ny_ < 4) throw ConfigError("SpdeSolver: grid too small");
        h_.resize(ny_);
        q_.resize(ny_);
        q2_.resize(ny_);
        hq_.resize(ny_);
        ax_.resize(ny_);
        vy_.resize(ny_ + 1);
        for (std::size_t k = 0; k < ny_; ++k) {
            const double y = cfg.y_min + cfg.dy * k;
            h_[k] = spec.h(y);
            q_[k] = spec.q(y);
            q2_[k] = q_[k] * q_[k];
            hq_[k] = h_[k] * q_[k];
            ax_[k] = c_.r - 0.5 * h_[k] * h_[k];  // signed x-transport speed
        }
        // y-interface velocities of the conservation form u_t + (v u)_y = 0
        // with v(y) = -k (y - theta).
        for (std::size_t k = 0; k <= ny_; ++k) {
            const double y_half = cfg.y_min + cfg.dy * (static_cast<double>(k) - 0.5);
            vy_[k] = -c_.k * (y_half - c_.theta);
        }
        check_cfl();
    }

    const SolverConfig& config() const { return cfg_; }
    std::size_t nx() const { return nx_; }
    std::size_t ny() const { return ny_; }

    double cfl_bound() const {
        const double h_max = *std::max_element(h_.begin(), h_.end());
        const double q_max = *std::max_element(q_.begin(), q_.end());
        double a_max = 0.0;
        for (double a : ax_) a_max = std::max(a_max, std::abs(a));
        double v_max = 0.0;
        for (double v : vy_) v_max = std::max(v_max, std::abs(v));
        // Combined bound: the per-direction diffusion, transport, and cross
        // contributions to the explicit update must sum below one, not just
        // each stay below one, so the limits add harmonically.
        double denom = h_max * h_max / (cfg_.dx * cfg_.dx);
        denom += c_.xi * c_.xi * q_max * q_max / (cfg_.dy * cfg_.dy);
        denom += a_max / cfg_.dx + v_max / cfg_.dy;
        double hq_max = 0.0;
        for (double v : hq_) hq_max = std::max(hq_max, std::abs(v));
        denom += std::abs(c_.rho) * hq_max / (cfg_.dx * cfg_.dy);
        if (!(denom > 0.0)) return cfg_.cfl_safety;  // fully degenerate operator
        return cfg_.cfl_safety / denom;
    }

    // Fill the grid from a sampler and normalize to unit mass.
    DensityGrid init(const std::function<double(double, double)>& u0) const {
        DensityGrid g;
        g.nx = nx_;
        g.ny = ny_;
        g.dx = cfg_.dx;
        g.dy = cfg_.dy;
        g.y_min = cfg_.y_min;
        g.t = 0.0;
        g.values.assign(nx_ * ny_, 0.0);
        for (std::size_t j = 1; j + 1 < nx_; ++j)
            for (std::size_t k = 1; k + 1 < ny_; ++k) {
                const double v = u0(g.x(j), g.y(k));
                if (!std::isfinite(v) || v < 0.0)
                    throw DomainError("SpdeSolver::init: u0 must be finite and >= 0");
                g.at(j, k) = v;
            }
        const double mass = survival_mass(g);
        if (!(mass > 0.0))
            throw DomainError("SpdeSolver::init: initial density has zero mass");
        for (double& v : g.values) v /= mass;
        // Delta-like data (nearly all mass in a handful of cells) is legal but
        // badly resolved; record a warning instead of refusing.
        double peak_mass = 0.0;
        for (double v : g.values) peak_mass = std::max(peak_mass, v);
        peak_mass *= cfg_.dx * cfg_.dy;
        last_init_warning_ =
            peak_mass > 0.25
                ? "initial density is concentrated in very few grid cells"
                : "";
        return g;
    }

    const std::string& last_init_warning() const { return last_init_warning_; }

    // One time step of size cfg.dt with the given common-noise increments.
    void advance(DensityGrid& g, double dW0, double dB0) const {
        advance(g, dW0, dB0, cfg_.dt);
    }

    void advance(DensityGrid& g, double dW0, double dB0, double dt) const {
        if (g.nx != nx_ || g.ny != ny_)
            throw ShapeError("SpdeSolver::advance: grid does not match solver");
        if (dt > cfl_bound() * (1.0 + 1e-12)) {
            std::ostringstream os;
            os << "SpdeSolver::advance: dt=" << dt << " violates CFL bound "
               << cfl_bound();
            throw ConfigError(os.str());
        }
        scratch_.assign(nx_ * ny_, 0.0);
        deterministic_rhs(g, scratch_);
        for (std::size_t i = 0; i < g.values.size(); ++i)
            g.values[i] += dt * scratch_[i];
        pin_boundary(g);

        if (dW0 != 0.0 || dB0 != 0.0) {
            scratch_.assign(nx_ * ny_, 0.0);
            stochastic_rhs(g, dW0, dB0, scratch_);
            for (std::size_t i = 0; i < g.values.size(); ++i)
                g.values[i] += scratch_[i];
            pin_boundary(g);
        }
        g.t += dt;
        for (double v : g.values)
            if (!std::isfinite(v))
                throw NumericError("SpdeSolver::advance: non-finite grid value");
    }

private:
    void pin_boundary(DensityGrid& g) const {
        for (std::size_t k = 0; k < ny_; ++k) {
            g.at(0, k) = 0.0;
            g.at(nx_ - 1, k) = 0.0;
        }
        for (std::size_t j = 0; j < nx_; ++j) {
            g.at(j, 0) = 0.0;
            g.at(j, ny_ - 1) = 0.0;
        }
    }

    // du/dt from the deterministic terms, interior nodes only.
    void deterministic_rhs(const DensityGrid& g, std::vector<double>& out) const {
        const double inv_dx = 1.0 / cfg_.dx;
        const double inv_dy = 1.0 / cfg_.dy;
        const double inv_dx2 = inv_dx * inv_dx;
        const double inv_dy2 = inv_dy * inv_dy;
        const double xi2h = 0.5 * c_.xi * c_.xi;
        const double cross = c_.rho * 0.25 * inv_dx * inv_dy;
        for (std::size_t j = 1; j + 1 < nx_; ++j) {
            for (std::size_t k = 1; k + 1 < ny_; ++k) {
                const double u = g.at(j, k);
                double r = 0.0;
                // -a(y) u_x, upwind per row
                const double a = ax_[k];
                if (a >= 0.0)
                    r -= a * (u - g.at(j - 1, k)) * inv_dx;
                else
                    r -= a * (g.at(j + 1, k) - u) * inv_dx;
                // k((y-theta)u)_y as conservative upwind: -(v u)_y, v = -k(y-theta)
                const double fl = vy_[k] >= 0.0 ? vy_[k] * g.at(j, k - 1)
                                                : vy_[k] * u;
                const double fr = vy_[k + 1] >= 0.0 ? vy_[k + 1] * u
                                                    : vy_[k + 1] * g.at(j, k + 1);
                r -= (fr - fl) * inv_dy;
                // (1/2) h^2 u_xx
                r += 0.5 * h_[k] * h_[k] *
                     (g.at(j + 1, k) - 2.0 * u + g.at(j - 1, k)) * inv_dx2;
                // (xi^2/2) (q^2 u)_yy
                r += xi2h * (q2_[k + 1] * g.at(j, k + 1) - 2.0 * q2_[k] * u +
                             q2_[k - 1] * g.at(j, k - 1)) *
                     inv_dy2;
                // rho (h q u)_xy, centered
                r += cross * (hq_[k + 1] * g.at(j + 1, k + 1) -
                              hq_[k - 1] * g.at(j + 1, k - 1) -
                              hq_[k + 1] * g.at(j - 1, k + 1) +
                              hq_[k - 1] * g.at(j - 1, k - 1));
                out[j * ny_ + k] = r;
            }
        }
    }

    // Stochastic transport increment: -rho1 h u_x dW0 - xi rho2 (q u)_y dB0,
    // centered differences scaled by the increments.
    void stochastic_rhs(const DensityGrid& g, double dW0, double dB0,
                        std::vector<double>& out) const {
        const double inv_2dx = 0.5 / cfg_.dx;
        const double inv_2dy = 0.5 / cfg_.dy;
        const double cw = -c_.rho1 * dW0;
        const double cb = -c_.xi * c_.rho2 * dB0;
        for (std::size_t j = 1; j + 1 < nx_; ++j) {
            for (std::size_t k = 1; k + 1 < ny_; ++k) {
                double r = cw * h_[k] * (g.at(j + 1, k) - g.at(j - 1, k)) * inv_2dx;
                r += cb * (q_[k + 1] * g.at(j, k + 1) - q_[k - 1] * g.at(j, k - 1)) *
                     inv_2dy;
                out[j * ny_ + k] = r;
            }
        }
    }

    void check_cfl() const {
        if (cfg_.dt > cfl_bound() * (1.0 + 1e-12)) {
            std::ostringstream os;
            os << "SpdeSolver: dt=" << cfg_.dt << " violates CFL bound "
               << cfl_bound() << " (cfl_safety=" << cfg_.cfl_safety << ")";
            throw ConfigError(os.str());
        }
    }

    SolverConfig cfg_;
    CoefficientVector c_;
    std::size_t nx_ = 0, ny_ = 0;
    std::vector<double> h_, q_, q2_, hq_, ax_, vy_;
    mutable std::vector<double> scratch_;
    mutable std::string last_init_warning_;
};

// 1 - sum_i w_i * mass_i(t) per time point, for a family of solves.
inline std::vector<double> mixture_loss(
    const std::vector<std::vector<double>>& mass_series,
    const std::vector<double>& weights) {
    if (mass_series.size() != weights.size())
        throw ShapeError("mixture_loss: one weight per series required");
    if (mass_series.empty()) throw ShapeError("mixture_loss: empty input");
    const std::size_t n = mass_series.front().size();
    for (const auto& s : mass_series)
        if (s.size() != n) throw ShapeError("mixture_loss: mismatched time grids");
    std::vector<double> out(n, 1.0);
    for (std::size_t i = 0; i < mass_series.size(); ++i)
        for (std::size_t t = 0; t < n; ++t) out[t] -= weights[i] * mass_series[i][t];
    return out;
}

inline std::vector<double> mixture_loss(
    const std::vector<std::vector<DensityGrid>>& grid_series,
    const std::vector<double>& weights) {
    std::vector<std::vector<double>> masses;
    masses.reserve(grid_series.size());
    for (const auto& series : grid_series) {
        std::vector<double> m;
        m.reserve(series.size());
        for (const auto& g : series) m.push_back(survival_mass(g));
        masses.push_back(std::move(m));
    }
    return mixture_loss(masses, weights);
}

// Compact binary dump: magic "LPSV", version byte 1, then (uint64) nx, ny,
// then (double) dx, dy, y_min, t, then nx*ny doubles row-major.
inline void dump_grid(const DensityGrid& g, std::ostream& os) {
    os.write("LPSV", 4);
    const char version = 1;
    os.write(&version, 1);
    const std::uint64_t nx = g.nx, ny = g.ny;
    os.write(reinterpret_cast<const char*>(&nx), 8);
    os.write(reinterpret_cast<const char*>(&ny), 8);
    const double header[4] = {g.dx, g.dy, g.y_min, g.t};
    os.write(reinterpret_cast<const char*>(header), sizeof(header));
    os.write(reinterpret_cast<const char*>(g.values.data()),
             static_cast<std::streamsize>(g.values.size() * sizeof(double)));
    if (!os) throw IoError("dump_grid: write failure");
}

inline DensityGrid load_grid(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "LPSV", 4) != 0)
        throw IoError("load_grid: bad magic");
    char version = 0;
    is.read(&version, 1);
    if (version != 1) throw IoError("load_grid: unsupported version");
    std::uint64_t nx = 0, ny = 0;
    is.read(reinterpret_cast<char*>(&nx), 8);
    is.read(reinterpret_cast<char*>(&ny), 8);
    double header[4];
    is.read(reinterpret_cast<char*>(header), sizeof(header));
    DensityGrid g;
    g.nx = nx;
    g.ny = ny;
    g.dx = header[0];
    g.dy = header[1];
    g.y_min = header[2];
    g.t = header[3];
    g.values.resize(nx * ny);
    is.read(reinterpret_cast<char*>(g.values.data()),
            static_cast<std::streamsize>(g.values.size() * sizeof(double)));
    if (!is) throw IoError("load_grid: truncated stream");
    return g;
}

} // namespace lpsv

#endif
