#ifndef LPSV_MODEL_HPP
#define LPSV_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "lpsv/errors.hpp"

namespace lpsv {

// Per-asset parameter tuple plus the systemic correlation rho3 and the
// cross-derivative coefficient rho of the density equation.
struct CoefficientVector {
    double k = 1.0;      // mean-reversion speed, > 0
    double theta = 0.2;  // mean level
    double xi = 0.4;     // vol-of-vol scale, > 0
    double r = 0.05;     // drift rate
    double rho1 = 0.0;   // asset-systemic correlation, in (-1, 1)
    double rho2 = 0.0;   // vol-systemic correlation, in (-1, 1)
    double rho3 = 0.0;   // correlation between the two systemic drivers, in [-1, 1]
    double rho = 0.0;    // cross-term coefficient; xi*rho3*rho1*rho2 in the standard model

    void validate() const {
        // k = 0 and xi = 0 are accepted: the deterministic and constant-vol
        // reductions are the backbone of the oracle scenarios.
        if (!(k >= 0.0)) throw DomainError("CoefficientVector: k >= 0 required");
        if (!(xi >= 0.0)) throw DomainError("CoefficientVector: xi >= 0 required");
        if (!(rho1 > -1.0 && rho1 < 1.0))
            throw DomainError("CoefficientVector: rho1 in (-1,1) required");
        if (!(rho2 > -1.0 && rho2 < 1.0))
            throw DomainError("CoefficientVector: rho2 in (-1,1) required");
        if (!(rho3 >= -1.0 && rho3 <= 1.0))
            throw DomainError("CoefficientVector: rho3 in [-1,1] required");
    }

    // Standard (uncorrelated-idiosyncratic) model: rho is determined by the
    // remaining correlations.
    static CoefficientVector standard(double k, double theta, double xi, double r,
                                      double rho1, double rho2, double rho3) {
        CoefficientVector c{k, theta, xi, r, rho1, rho2, rho3,
                            xi * rho3 * rho1 * rho2};
        c.validate();
        return c;
    }
};

// Scalar function bundle: the vol-of-vol q with derivatives up to third
// order, the vol mapping h, and the declared bounds the analysis relies on.
struct VolSpec {
    std::string name;
    std::function<double(double)> q, q1, q2, q3;
    std::function<double(double)> h;
    double m_q = 0.0, M_q = 0.0;      // declared 0 < m_q <= q <= M_q
    double h_min = 0.0, h_max = 0.0;  // declared 0 < h_min <= h <= h_max
    double derivative_decay_constant = 0.0;  // c_d with |q^(n)(x)|(1+|x|) <= c_d

    bool q_is_constant = false;  // set by presets; enables exact shortcuts in tests
};

struct Assumption1Violation {
    double probe = 0.0;
    std::string quantity;
    double observed = 0.0;
    double declared = 0.0;
};

struct Assumption1Report {
    bool passed = true;
    std::vector<Assumption1Violation> violations;
};

// Spot-check the declared bounds of a VolSpec on a probe grid: the value
// bounds of q and h, and the 1/(1+|x|) decay of the first three derivatives.
inline Assumption1Report validate_assumption1(const VolSpec& spec,
                                              const std::vector<double>& probe_grid) {
    if (probe_grid.empty())
        throw DomainError("validate_assumption1: probe grid empty");
    Assumption1Report rep;
    auto record = [&](double x, const char* what, double obs, double decl) {
        rep.violations.push_back({x, what, obs, decl});
    };
    auto eval = [&](const std::function<double(double)>& f, double x,
                    const char* what) {
        const double v = f(x);
        if (!std::isfinite(v)) {
            std::ostringstream os;
            os << "validate_assumption1: non-finite " << what << " at x=" << x;
            throw NumericError(os.str());
        }
        return v;
    };
    for (double x : probe_grid) {
        if (!std::isfinite(x))
            throw DomainError("validate_assumption1: non-finite probe point");
        const double qx = eval(spec.q, x, "q");
        if (qx < spec.m_q) record(x, "q lower bound", qx, spec.m_q);
        if (qx > spec.M_q) record(x, "q upper bound", qx, spec.M_q);
        const double hx = eval(spec.h, x, "h");
        if (hx < spec.h_min) record(x, "h lower bound", hx, spec.h_min);
        if (hx > spec.h_max) record(x, "h upper bound", hx, spec.h_max);
        const double w = 1.0 + std::abs(x);
        const double d1 = std::abs(eval(spec.q1, x, "q'")) * w;
        const double d2 = std::abs(eval(spec.q2, x, "q''")) * w;
        const double d3 = std::abs(eval(spec.q3, x, "q'''")) * w;
        if (d1 > spec.derivative_decay_constant)
            record(x, "q' decay", d1, spec.derivative_decay_constant);
        if (d2 > spec.derivative_decay_constant)
            record(x, "q'' decay", d2, spec.derivative_decay_constant);
        if (d3 > spec.derivative_decay_constant)
            record(x, "q''' decay", d3, spec.derivative_decay_constant);
    }
    rep.passed = rep.violations.empty();
    return rep;
}

// Coefficient condition under which the density equation has a unique
// solution: |rho - xi rho3 rho1 rho2| <= xi sqrt(1-rho1^2) sqrt(1-rho2^2).
inline bool check_correlation_condition(const CoefficientVector& c) {
    c.validate();
    const double lhs = std::abs(c.rho - c.xi * c.rho3 * c.rho1 * c.rho2);
    const double rhs = c.xi * std::sqrt(1.0 - c.rho1 * c.rho1) *
                       std::sqrt(1.0 - c.rho2 * c.rho2);
    return lhs <= rhs;  // exact comparison, documented as <=
}

// Cross-term coefficient arising when the idiosyncratic noises of the two
// components are themselves correlated with weights w1, b1.
inline double effective_rho(const CoefficientVector& c, double w1, double b1) {
    if (w1 == 0.0 || b1 == 0.0)
        throw DomainError("effective_rho: w1 and b1 must be nonzero");
    if (std::abs(w1) > 1.0 || std::abs(b1) > 1.0)
        throw DomainError("effective_rho: w1, b1 must lie in [-1,1]");
    return c.xi * c.rho3 * c.rho1 * c.rho2 +
           c.xi * std::sqrt(1.0 - c.rho1 * c.rho1) * std::sqrt(1.0 - c.rho2 * c.rho2) *
               std::sqrt(1.0 - w1 * w1) * std::sqrt(1.0 - b1 * b1);
}

// ---------------------------------------------------------------------------
// Presets

// q identically constant: the Ornstein-Uhlenbeck volatility setting.
inline VolSpec make_ou_volspec(double q_const = 1.0, double h_min = 0.1,
                               double h_max = 0.6) {
    VolSpec s;
    s.name = "ou";
    s.q = [q_const](double) { return q_const; };
    s.q1 = [](double) { return 0.0; };
    s.q2 = [](double) { return 0.0; };
    s.q3 = [](double) { return 0.0; };
    s.m_q = q_const;
    s.M_q = q_const;
    s.derivative_decay_constant = 1e-12;
    s.h_min = h_min;
    s.h_max = h_max;
    s.h = [h_min, h_max](double y) { return std::clamp(std::abs(y), h_min, h_max); };
    s.q_is_constant = true;
    return s;
}

// Same as make_ou_volspec but with h identically constant.
inline VolSpec make_const_h_volspec(double q_const, double h_const) {
    VolSpec s = make_ou_volspec(q_const, h_const, h_const);
    s.name = "ou-const-h";
    s.h = [h_const](double) { return h_const; };
    return s;
}

// Genuinely non-constant preset: q(z) = 2 + 1/(1+z^2).
inline VolSpec make_rational_volspec(double h_min = 0.1, double h_max = 0.6) {
    VolSpec s;
    s.name = "rational";
    s.q = [](double z) { return 2.0 + 1.0 / (1.0 + z * z); };
    s.q1 = [](double z) {
        const double d = 1.0 + z * z;
        return -2.0 * z / (d * d);
    };
    s.q2 = [](double z) {
        const double d = 1.0 + z * z;
        return (6.0 * z * z - 2.0) / (d * d * d);
    };
    s.q3 = [](double z) {
        const double d = 1.0 + z * z;
        return 24.0 * z * (1.0 - z * z) / (d * d * d * d);
    };
    s.m_q = 2.0;
    s.M_q = 3.0;
    // max over n <= 3 of sup |q^(n)(z)|(1+|z|) is ~6.2852 (attained by q''')
    s.derivative_decay_constant = 6.3;
    s.h_min = h_min;
    s.h_max = h_max;
    s.h = [h_min, h_max](double y) { return std::clamp(std::abs(y), h_min, h_max); };
    return s;
}

inline VolSpec make_volspec_preset(const std::string& name) {
    if (name == "ou") return make_ou_volspec();
    if (name == "rational") return make_rational_volspec();
    throw ConfigError("unknown VolSpec preset: " + name);
}

} // namespace lpsv

#endif
