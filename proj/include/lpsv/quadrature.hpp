#ifndef LPSV_QUADRATURE_HPP
#define LPSV_QUADRATURE_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "lpsv/errors.hpp"

namespace lpsv {

namespace detail {

template <typename F>
double adaptive_simpson_rec(const F& f, double a, double b, double fa, double fm,
                            double fb, double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return adaptive_simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

} // namespace detail

// Adaptive Simpson quadrature of f over [a, b].
template <typename F>
double adaptive_simpson(const F& f, double a, double b, double tol = 1e-12,
                        int max_depth = 48) {
    if (a == b) return 0.0;
    const double fa = f(a);
    const double fb = f(b);
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if (!std::isfinite(fa) || !std::isfinite(fm) || !std::isfinite(fb)) {
        throw NumericError("adaptive_simpson: non-finite integrand sample");
    }
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return detail::adaptive_simpson_rec(f, a, b, fa, fm, fb, whole, tol, max_depth);
}

// Trapezoid rule over uniformly spaced samples.
inline double trapezoid_uniform(const std::vector<double>& values, double dx) {
    if (values.size() < 2) return 0.0;
    double s = 0.5 * (values.front() + values.back());
    for (std::size_t i = 1; i + 1 < values.size(); ++i) s += values[i];
    return s * dx;
}

// Bracketed root finding for monotone functions: expands the bracket around
// x0 until a sign change is found, then bisects to tolerance.
template <typename F>
double find_root_monotone(const F& f, double x0, double tol = 1e-12,
                          int max_expand = 200) {
    double lo = x0 - 1.0, hi = x0 + 1.0;
    double flo = f(lo), fhi = f(hi);
    double step = 1.0;
    int n = 0;
    while (flo * fhi > 0.0) {
        if (++n > max_expand) {
            throw NumericError("find_root_monotone: bracket not found within expanding search");
        }
        step *= 2.0;
        if (std::abs(flo) < std::abs(fhi)) {
            lo -= step;
            flo = f(lo);
        } else {
            hi += step;
            fhi = f(hi);
        }
    }
    if (flo == 0.0) return lo;
    if (fhi == 0.0) return hi;
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if (flo * fm < 0.0) {
            hi = mid;
            fhi = fm;
        } else {
            lo = mid;
            flo = fm;
        }
    }
    return 0.5 * (lo + hi);
}

// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace lpsv

#endif
