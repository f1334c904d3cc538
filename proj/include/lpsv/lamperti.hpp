#ifndef LPSV_LAMPERTI_HPP
#define LPSV_LAMPERTI_HPP

#include <algorithm>
#include <cmath>
#include <vector>

#include "lpsv/errors.hpp"
#include "lpsv/model.hpp"
#include "lpsv/quadrature.hpp"

namespace lpsv {

// Bounds on the pathwise volatility sensitivities over a horizon T.
struct DerivativeBounds {
    double b_doubleprime = 0.0;  // lower bound of the first derivative
    double b_tilde = 0.0;        // upper bound of the first derivative
    double b_prime = 0.0;        // magnitude bound of the second derivative
    double horizon = 0.0;
};

// A path sampled on a uniform time grid: value[i] at time t0 + i*dt.
struct SampledPath {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<double> values;

    double t_end() const { return t0 + dt * (values.size() - 1); }
};

struct VTriple {
    double V = 0.0, V1 = 0.0, V2 = 0.0;
};

// The unit-diffusion change of variables Q(y) = int_0^y dz/q(z), its inverse,
// the transformed drift with derivatives, and the closed-form volatility
// sensitivities they yield.
class LampertiMap {
public:
    LampertiMap(const VolSpec& spec, const CoefficientVector& coeffs,
                double quad_tol = 1e-12)
        : spec_(spec), coeffs_(coeffs), quad_tol_(quad_tol) {}

    const VolSpec& spec() const { return spec_; }
    const CoefficientVector& coeffs() const { return coeffs_; }

    double transform(double y) const {
        if (!std::isfinite(y)) throw DomainError("LampertiMap: non-finite input");
        if (spec_.q_is_constant) return y / spec_.q(0.0);
        return adaptive_simpson([this](double z) { return 1.0 / spec_.q(z); }, 0.0, y,
                                quad_tol_);
    }

    double inverse(double v) const {
        if (!std::isfinite(v)) throw DomainError("LampertiMap: non-finite input");
        if (spec_.q_is_constant) return v * spec_.q(0.0);
        // Q' = 1/q in [1/M_q, 1/m_q], so Q^-1(v) lies within [m_q v, M_q v].
        return find_root_monotone([this, v](double y) { return transform(y) - v; },
                                  v * spec_.m_q, 1e-13);
    }

    // Drift of v_t = Q(sigma_t) and its first two derivatives, evaluated via
    // the closed forms with (Q^-1(x))' = q(Q^-1(x)).
    VTriple drift(double x) const {
        const double s = inverse(x);
        return drift_at_sigma(s);
    }

    // Same, but parameterized by sigma = Q^-1(x) directly; avoids the inverse
    // when the caller already has the untransformed state.
    VTriple drift_at_sigma(double s) const {
        const double q = spec_.q(s);
        const double q1 = spec_.q1(s);
        const double q2 = spec_.q2(s);
        const double q3 = spec_.q3(s);
        const double k = coeffs_.k, th = coeffs_.theta, xi2 = coeffs_.xi * coeffs_.xi;
        VTriple out;
        out.V = k * (th - s) / q - 0.5 * xi2 * q1;
        const double G = k * (-q - (th - s) * q1) / (q * q) - 0.5 * xi2 * q2;
        out.V1 = q * G;
        out.V2 = q * q1 * G + 2.0 * k * q1 - k * (th - s) * (q2 - 2.0 * q1 * q1 / q) -
                 0.5 * xi2 * q3 * q * q;
        return out;
    }

    // First-order sensitivity of sigma_t to a perturbation of the
    // idiosyncratic driver at time t_prime:
    //   xi sqrt(1-rho2^2) q(sigma_t) exp(int_{t'}^{t} V'(Q(sigma_s)) ds).
    // Zero for t < t_prime. The time integral uses the trapezoid rule on the
    // path grid.
    double malliavin_first(const SampledPath& sigma_path, double t_prime,
                           double t) const {
        if (t < t_prime) return 0.0;
        const double sigma_t = path_value(sigma_path, t);
        const double expo = integrate_V1(sigma_path, t_prime, t);
        return coeffs_.xi * std::sqrt(1.0 - coeffs_.rho2 * coeffs_.rho2) *
               spec_.q(sigma_t) * std::exp(expo);
    }

    // Second-order sensitivity: the q'q product term plus the V'' integral
    // term, both with trapezoid quadrature on the path grid.
    double malliavin_second(const SampledPath& sigma_path, double t_prime,
                            double t_doubleprime, double t) const {
        if (t < t_prime || t < t_doubleprime) return 0.0;
        const double sigma_t = path_value(sigma_path, t);
        const double xi2c = coeffs_.xi * coeffs_.xi *
                            (1.0 - coeffs_.rho2 * coeffs_.rho2);
        const double e_tp = std::exp(integrate_V1(sigma_path, t_prime, t));
        const double e_tpp = std::exp(integrate_V1(sigma_path, t_doubleprime, t));
        const double term1 =
            xi2c * spec_.q1(sigma_t) * spec_.q(sigma_t) * e_tp * e_tpp;

        // int_{t'}^{t} V''(Q(sigma_s)) exp(int_{t''}^{s} V') 1_{s >= t''} ds;
        // the indicator just moves the lower limit to max(t', t'').
        const double lo =
            std::max({t_prime, t_doubleprime, sigma_path.t0});
        std::vector<double> integrand;
        std::vector<double> times;
        grid_cover(sigma_path, lo, t, times);
        integrand.reserve(times.size());
        for (double s : times) {
            const double sig = path_value(sigma_path, s);
            const double v2 = drift_at_sigma(sig).V2;
            integrand.push_back(v2 * std::exp(integrate_V1(sigma_path,
                                                           t_doubleprime, s)));
        }
        double inner = 0.0;
        for (std::size_t i = 1; i < times.size(); ++i) {
            inner += 0.5 * (integrand[i - 1] + integrand[i]) * (times[i] - times[i - 1]);
        }
        const double term2 = xi2c * spec_.q(sigma_t) * e_tp * inner;
        return term1 + term2;
    }

    // Probe-based bounds: M_{|V'|} is over-approximated on a configurable
    // compact range around Q(theta) with a 1.05 safety factor.
    DerivativeBounds derivative_bounds(double T, double probe_radius = -1.0,
                                       int n_probe = 2001) const {
        if (!(T > 0.0)) throw DomainError("derivative_bounds: T > 0 required");
        const double center = transform(coeffs_.theta);
        const double R = probe_radius > 0.0
                             ? probe_radius
                             : (coeffs_.k > 0.0
                                    ? 20.0 * coeffs_.xi / std::sqrt(2.0 * coeffs_.k)
                                    : 20.0 * coeffs_.xi + 1.0);
        double max_v1 = 0.0, max_v2 = 0.0, max_q1 = 0.0;
        for (int i = 0; i < n_probe; ++i) {
            const double x = center - R + 2.0 * R * i / (n_probe - 1);
            const VTriple d = drift(x);
            max_v1 = std::max(max_v1, std::abs(d.V1));
            max_v2 = std::max(max_v2, std::abs(d.V2));
            max_q1 = std::max(max_q1, std::abs(spec_.q1(inverse(x))));
        }
        // For constant q, V' is exactly -k everywhere: no over-approximation
        // needed. Otherwise pad the probed maximum.
        const double safety = spec_.q_is_constant ? 1.0 : 1.05;
        max_v1 *= safety;
        max_v2 *= safety;
        const double c = coeffs_.xi * std::sqrt(1.0 - coeffs_.rho2 * coeffs_.rho2);
        DerivativeBounds b;
        b.horizon = T;
        b.b_doubleprime = c * spec_.m_q * std::exp(-T * max_v1);
        b.b_tilde = c * spec_.M_q * std::exp(T * max_v1);
        // |D^2 sigma| <= xi^2(1-rho2^2) M_q e^{2 T M}(M_{|q'|} + T M_{|V''|})
        b.b_prime = c * c * spec_.M_q * std::exp(2.0 * T * max_v1) *
                    (max_q1 + T * max_v2);
        return b;
    }

private:
    // Linear interpolation of the path at time t; throws if the grid does
    // not cover t.
    static double path_value(const SampledPath& p, double t) {
        const double eps = 1e-9 * std::max(1.0, std::abs(p.dt));
        if (t < p.t0 - eps || t > p.t_end() + eps)
            throw DomainError("LampertiMap: path grid does not cover requested time");
        const double s = std::clamp((t - p.t0) / p.dt, 0.0,
                                    double(p.values.size() - 1));
        const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(s),
                                                    p.values.size() - 2);
        const double w = s - double(i);
        return (1.0 - w) * p.values[i] + w * p.values[i + 1];
    }

    // Node times of the path grid covering [a, b], with a and b themselves as
    // the end nodes (partial cells handled by interpolation of the path).
    static void grid_cover(const SampledPath& p, double a, double b,
                           std::vector<double>& out) {
        out.clear();
        if (b <= a) {
            out.push_back(a);
            return;
        }
        out.push_back(a);
        const std::size_t i0 = static_cast<std::size_t>(
            std::ceil((a - p.t0) / p.dt - 1e-12));
        for (std::size_t i = i0; i < p.values.size(); ++i) {
            const double t = p.t0 + p.dt * i;
            if (t <= a + 1e-15) continue;
            if (t >= b - 1e-15) break;
            out.push_back(t);
        }
        out.push_back(b);
    }

    // Trapezoid integral of V'(Q(sigma_s)) over [t_prime, t] on the path grid.
    double integrate_V1(const SampledPath& p, double t_prime, double t) const {
        if (t <= t_prime) return 0.0;
        std::vector<double> times;
        grid_cover(p, t_prime, t, times);
        double acc = 0.0;
        double prev = drift_at_sigma(path_value(p, times[0])).V1;
        for (std::size_t i = 1; i < times.size(); ++i) {
            const double cur = drift_at_sigma(path_value(p, times[i])).V1;
            acc += 0.5 * (prev + cur) * (times[i] - times[i - 1]);
            prev = cur;
        }
        return acc;
    }

    VolSpec spec_;
    CoefficientVector coeffs_;
    double quad_tol_;
};

// Shape diagnostic for the conditional-density sup over time, of the form
// C' + C''/sqrt(t). The constant C is configuration, default 1.
inline double density_sup_bound(const DerivativeBounds& b, double t, double C = 1.0) {
    if (!(t > 0.0)) throw DomainError("density_sup_bound: t > 0 required");
    return (C + 2.0) * std::sqrt(t * t * b.b_prime) / (t * b.b_doubleprime) +
           C * std::sqrt(t * b.b_tilde) / (t * b.b_doubleprime);
}

} // namespace lpsv

#endif
