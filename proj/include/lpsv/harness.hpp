#ifndef LPSV_HARNESS_HPP
#define LPSV_HARNESS_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "lpsv/errors.hpp"
#include "lpsv/model.hpp"
#include "lpsv/noise.hpp"
#include "lpsv/particle.hpp"
#include "lpsv/quadrature.hpp"
#include "lpsv/rng.hpp"

namespace lpsv {

// ---------------------------------------------------------------------------
// Analytic oracles

// P(first passage of x0 + mu t + sigma W_t to 0 by time t), reflection formula.
inline double first_passage_oracle(double x0, double mu, double sigma_bar, double t) {
    if (!(x0 >= 0.0)) throw DomainError("first_passage_oracle: x0 >= 0 required");
    if (!(sigma_bar > 0.0))
        throw DomainError("first_passage_oracle: sigma_bar > 0 required");
    if (!(t >= 0.0)) throw DomainError("first_passage_oracle: t >= 0 required");
    if (x0 == 0.0) return 1.0;
    if (t == 0.0) return 0.0;
    const double s = sigma_bar * std::sqrt(t);
    return normal_cdf((-x0 - mu * t) / s) +
           std::exp(-2.0 * mu * x0 / (sigma_bar * sigma_bar)) *
               normal_cdf((-x0 + mu * t) / s);
}

// Conditional-on-common-noise Gaussian law of an OU volatility (q constant 1):
//   mean = theta + (sigma0-theta)e^{-kt} + xi rho2 sum e^{-k(t-s_i)} dB0_i
//   var  = xi^2 (1-rho2^2) (1-e^{-2kt}) / (2k)
struct GaussianLaw {
    double mean = 0.0;
    double variance = 0.0;

    double density(double y) const {
        return std::exp(-0.5 * (y - mean) * (y - mean) / variance) /
               std::sqrt(2.0 * M_PI * variance);
    }
};

inline GaussianLaw ou_conditional_density_oracle(const CoefficientVector& c,
                                                 double sigma0,
                                                 const CommonNoisePath& noise,
                                                 double t) {
    // q is taken to be the constant 1 here; use the VolSpec overload to have
    // that assumption checked (and a general constant rescaled).
    const std::size_t n = static_cast<std::size_t>(std::llround(t / noise.dt));
    if (std::abs(n * noise.dt - t) > 1e-9 || n > noise.n_steps)
        throw DomainError("ou_conditional_density_oracle: t not on the noise grid");
    GaussianLaw law;
    law.mean = c.theta + (sigma0 - c.theta) * std::exp(-c.k * t);
    for (std::size_t i = 0; i < n; ++i) {
        const double s = i * noise.dt;  // left-point stochastic integral
        law.mean += c.xi * c.rho2 * std::exp(-c.k * (t - s)) * noise.increments_B0[i];
    }
    law.variance = c.k > 0.0
                       ? c.xi * c.xi * (1.0 - c.rho2 * c.rho2) *
                             (1.0 - std::exp(-2.0 * c.k * t)) / (2.0 * c.k)
                       : c.xi * c.xi * (1.0 - c.rho2 * c.rho2) * t;
    return law;
}

// Guarded variant: refuses non-constant q, and rescales xi by the constant so
// a general constant-q spec is still exact.
inline GaussianLaw ou_conditional_density_oracle(const CoefficientVector& c,
                                                 const VolSpec& spec, double sigma0,
                                                 const CommonNoisePath& noise,
                                                 double t) {
    if (!spec.q_is_constant)
        throw ConfigError(
            "ou_conditional_density_oracle: requires a constant-q volatility spec");
    CoefficientVector scaled = c;
    scaled.xi = c.xi * spec.q(0.0);
    return ou_conditional_density_oracle(scaled, sigma0, noise, t);
}

// ---------------------------------------------------------------------------
// Loss-curve comparison

struct ComparisonReport {
    std::string label;
    std::string metric = "sup |loss_a - loss_b|";
    double observed = 0.0;   // sup-norm distance over the grid
    double reference = 0.0;  // the curves should coincide
    double tolerance = std::numeric_limits<double>::infinity();
    bool passed = true;      // |observed - reference| <= tolerance
    double t_at_sup = 0.0;
    double mean_abs_diff = 0.0;
    std::size_t n_compared = 0;
};

// Compares curve A against curve B on A's time grid, interpolating B linearly;
// only times inside B's range are compared.
inline ComparisonReport compare_loss_curves(const std::vector<double>& times_a,
                                            const std::vector<double>& loss_a,
                                            const std::vector<double>& times_b,
                                            const std::vector<double>& loss_b) {
    if (times_a.size() != loss_a.size() || times_b.size() != loss_b.size())
        throw ShapeError("compare_loss_curves: times/values size mismatch");
    if (times_b.size() < 2) throw ShapeError("compare_loss_curves: curve B too short");
    ComparisonReport rep;
    double sum = 0.0;
    for (std::size_t i = 0; i < times_a.size(); ++i) {
        const double t = times_a[i];
        if (t < times_b.front() - 1e-12 || t > times_b.back() + 1e-12) continue;
        auto it = std::upper_bound(times_b.begin(), times_b.end(), t);
        std::size_t j = it == times_b.begin()
                            ? 0
                            : static_cast<std::size_t>(it - times_b.begin()) - 1;
        j = std::min(j, times_b.size() - 2);
        const double w = std::clamp(
            (t - times_b[j]) / (times_b[j + 1] - times_b[j]), 0.0, 1.0);
        const double b = (1.0 - w) * loss_b[j] + w * loss_b[j + 1];
        const double d = std::abs(loss_a[i] - b);
        sum += d;
        ++rep.n_compared;
        if (d > rep.observed) {
            rep.observed = d;
            rep.t_at_sup = t;
        }
    }
    if (rep.n_compared == 0)
        throw DomainError("compare_loss_curves: curves do not overlap in time");
    rep.mean_abs_diff = sum / static_cast<double>(rep.n_compared);
    return rep;
}

inline ComparisonReport compare_loss_curves(const std::vector<double>& times_a,
                                            const std::vector<double>& loss_a,
                                            const std::vector<double>& times_b,
                                            const std::vector<double>& loss_b,
                                            double tolerance) {
    ComparisonReport rep = compare_loss_curves(times_a, loss_a, times_b, loss_b);
    rep.tolerance = tolerance;
    rep.passed = std::abs(rep.observed - rep.reference) <= tolerance;
    return rep;
}

// ---------------------------------------------------------------------------
// Weak-form residual

// Smooth test function with the derivatives the generator needs. Must vanish
// on the default boundary x = 0.
struct TestFunction {
    std::function<double(double, double)> f, fx, fy, fxx, fyy, fxy;
    // Optional fused evaluator filling {f, fx, fy, fxx, fyy, fxy} in one call;
    // used by the accumulator's hot loop when present.
    std::function<void(double, double, double*)> all;
};

inline TestFunction make_default_test_function() {
    TestFunction tf;
    tf.f = [](double x, double y) { return (1.0 - std::exp(-x)) * std::exp(-y * y); };
    tf.fx = [](double x, double y) { return std::exp(-x) * std::exp(-y * y); };
    tf.fy = [](double x, double y) {
        return -2.0 * y * (1.0 - std::exp(-x)) * std::exp(-y * y);
    };
    tf.fxx = [](double x, double y) { return -std::exp(-x) * std::exp(-y * y); };
    tf.fyy = [](double x, double y) {
        return (4.0 * y * y - 2.0) * (1.0 - std::exp(-x)) * std::exp(-y * y);
    };
    tf.fxy = [](double x, double y) {
        return -2.0 * y * std::exp(-x) * std::exp(-y * y);
    };
    tf.all = [](double x, double y, double* out) {
        const double ex = std::exp(-x);
        const double ey = std::exp(-y * y);
        out[0] = (1.0 - ex) * ey;
        out[1] = ex * ey;
        out[2] = -2.0 * y * (1.0 - ex) * ey;
        out[3] = -ex * ey;
        out[4] = (4.0 * y * y - 2.0) * (1.0 - ex) * ey;
        out[5] = -2.0 * y * ex * ey;
    };
    return tf;
}

// Streaming accumulator for the signed weak-form defect
//   <v_T,f> - <v_0,f> - int <v_s, Af> ds - rho1 int <v_s, h fx> dW0
//                     - xi rho2 int <v_s, q fy> dB0
// with <v,g> the survivor empirical average (divided by the full population)
// and left-point sums for all three integrals. Feed it as the simulation
// observer, or via the stored-state convenience wrapper below.
class WeakFormAccumulator {
  public:
    WeakFormAccumulator(const CoefficientVector& c, const VolSpec& spec,
                        TestFunction tf, const CommonNoisePath& noise)
        : c_(c), spec_(spec), tf_(std::move(tf)), noise_(&noise) {
        for (double y : {-2.0, -0.3, 0.0, 0.7, 3.0})
            if (std::abs(tf_.f(0.0, y)) > 1e-12)
                throw DomainError(
                    "WeakFormAccumulator: test function must vanish at x = 0");
    }

    void observe(const PortfolioState& st, std::size_t step) {
        if (step != expected_step_)
            throw ShapeError("WeakFormAccumulator: steps observed out of order");
        // single pass over survivors: <f>, <Af>, <h fx>, <q fy>
        double sf = 0.0, sAf = 0.0, shfx = 0.0, sqfy = 0.0;
        const double xi2 = 0.5 * c_.xi * c_.xi;
        const double cross = c_.xi * c_.rho3 * c_.rho1 * c_.rho2;
        double v[6];
        for (std::size_t i = 0; i < st.size(); ++i) {
            if (!st.alive[i]) continue;
            const double x = st.X[i], y = st.sigma[i];
            if (tf_.all) {
                tf_.all(x, y, v);
            } else {
                v[0] = tf_.f(x, y);
                v[1] = tf_.fx(x, y);
                v[2] = tf_.fy(x, y);
                v[3] = tf_.fxx(x, y);
                v[4] = tf_.fyy(x, y);
                v[5] = tf_.fxy(x, y);
            }
            const double h = spec_.h(y);
            const double q = spec_.q(y);
            sf += v[0];
            sAf += (c_.r - 0.5 * h * h) * v[1] + c_.k * (c_.theta - y) * v[2] +
                   0.5 * h * h * v[3] + xi2 * q * q * v[4] + cross * h * q * v[5];
            shfx += h * v[1];
            sqfy += q * v[2];
        }
        const double inv_n = 1.0 / static_cast<double>(st.size());
        const double pair_f = sf * inv_n;
        if (step == 0) {
            initial_f_ = pair_f;
        } else {
            // consume the increments of the step that just completed
            const std::size_t n = step - 1;
            integral_ += left_Af_ * noise_->dt +
                         c_.rho1 * left_hfx_ * noise_->increments_W0[n] +
                         c_.xi * c_.rho2 * left_qfy_ * noise_->increments_B0[n];
        }
        final_f_ = pair_f;
        left_Af_ = sAf * inv_n;
        left_hfx_ = shfx * inv_n;
        left_qfy_ = sqfy * inv_n;
        expected_step_ = step + 1;
    }

    // Signed, un-normalized defect after the final step has been observed.
    double residual() const {
        if (expected_step_ == 0)
            throw ShapeError("WeakFormAccumulator: no states observed");
        return final_f_ - initial_f_ - integral_;
    }

  private:
    double generator(double x, double y) const {
        const double h = spec_.h(y);
        const double q = spec_.q(y);
        return (c_.r - 0.5 * h * h) * tf_.fx(x, y) + c_.k * (c_.theta - y) * tf_.fy(x, y) +
               0.5 * h * h * tf_.fxx(x, y) + 0.5 * c_.xi * c_.xi * q * q * tf_.fyy(x, y) +
               c_.xi * c_.rho3 * c_.rho1 * c_.rho2 * h * q * tf_.fxy(x, y);
    }

    template <typename G>
    double pair(const PortfolioState& st, G&& g) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < st.size(); ++i)
            if (st.alive[i]) acc += g(st.X[i], st.sigma[i]);
        return acc / static_cast<double>(st.size());
    }

    CoefficientVector c_;
    VolSpec spec_;
    TestFunction tf_;
    const CommonNoisePath* noise_;
    std::size_t expected_step_ = 0;
    double initial_f_ = 0.0, final_f_ = 0.0, integral_ = 0.0;
    double left_Af_ = 0.0, left_hfx_ = 0.0, left_qfy_ = 0.0;
};

// Convenience wrapper over a fully recorded state series (record_stride = 1).
inline double weak_form_residual(const std::vector<PortfolioState>& states,
                                 const CommonNoisePath& noise,
                                 const CoefficientVector& c, const VolSpec& spec,
                                 const TestFunction& tf) {
    if (states.size() != noise.n_steps + 1)
        throw ShapeError("weak_form_residual: need one state per grid time");
    WeakFormAccumulator acc(c, spec, tf, noise);
    for (std::size_t n = 0; n < states.size(); ++n) acc.observe(states[n], n);
    return acc.residual();
}

// ---------------------------------------------------------------------------
// Moment-bound diagnostic

// Monte Carlo estimate of E[sup_{t<=T} sigma_t^power] for the stand-alone
// volatility dynamics; used to check that the moments the well-posedness
// theory relies on stay bounded for a given preset.
struct MomentDiagnostic {
    double value = 0.0;
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
};

inline MomentDiagnostic alpha_moment_diagnostic(const CoefficientVector& c,
                                                const VolSpec& spec, double sigma0,
                                                double horizon, std::size_t n_steps,
                                                std::size_t n_paths,
                                                std::uint64_t seed, int power = 8) {
    if (n_steps == 0 || n_paths == 0)
        throw DomainError("alpha_moment_diagnostic: need n_steps, n_paths > 0");
    const double dt = horizon / static_cast<double>(n_steps);
    const double sqrt_dt = std::sqrt(dt);
    double acc = 0.0;
    for (std::size_t p = 0; p < n_paths; ++p) {
        NormalSampler rng(derive_stream_seed(seed, p));
        double sig = sigma0;
        double sup = std::pow(std::abs(sig), power);
        for (std::size_t n = 0; n < n_steps; ++n) {
            sig += c.k * (c.theta - sig) * dt + c.xi * spec.q(sig) * sqrt_dt * rng();
            if (!std::isfinite(sig))
                throw NumericError("alpha_moment_diagnostic: path diverged");
            sup = std::max(sup, std::pow(std::abs(sig), power));
        }
        acc += sup;
    }
    MomentDiagnostic out;
    out.value = acc / static_cast<double>(n_paths);
    out.n_paths = n_paths;
    out.n_steps = n_steps;
    return out;
}

} // namespace lpsv

#endif
