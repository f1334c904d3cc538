#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lpsv/harness.hpp"
#include "lpsv/noise.hpp"
#include "lpsv/particle.hpp"

using namespace lpsv;
using Catch::Matchers::WithinAbs;

namespace {

CoefficientVector ou_coeffs(double rho1 = 0.3, double rho2 = 0.2,
                            double rho3 = 0.5) {
    return CoefficientVector::standard(1.0, 0.2, 0.4, 0.05, rho1, rho2, rho3);
}

double std_phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace

TEST_CASE("first-passage oracle pinned values") {
    // reflection formula, mu = 0: P = 2 Phi(-x0 / (sigma sqrt(t)))
    REQUIRE_THAT(first_passage_oracle(0.5, 0.0, 0.3, 1.0),
                 WithinAbs(2.0 * std_phi(-5.0 / 3.0), 1e-12));
    // drifted case against an independent evaluation of the two-term formula
    const double x0 = 0.5, mu = 0.005, s = 0.3;
    const double direct = std_phi((-x0 - mu) / s) +
                          std::exp(-2.0 * mu * x0 / (s * s)) *
                              std_phi((-x0 + mu) / s);
    REQUIRE_THAT(first_passage_oracle(x0, mu, s, 1.0), WithinAbs(direct, 1e-12));
    REQUIRE_THAT(first_passage_oracle(x0, mu, s, 1.0), WithinAbs(0.0929, 5e-4));

    REQUIRE(first_passage_oracle(0.0, 0.1, 0.3, 1.0) == 1.0);
    REQUIRE(first_passage_oracle(0.5, 0.1, 0.3, 0.0) == 0.0);
    REQUIRE(first_passage_oracle(0.5, 0.0, 0.3, 1e-10) < 1e-12);
    // monotone in t
    double prev = 0.0;
    for (double t = 0.1; t <= 2.0; t += 0.1) {
        const double v = first_passage_oracle(0.5, 0.01, 0.3, t);
        REQUIRE(v >= prev);
        prev = v;
    }
    REQUIRE_THROWS_AS(first_passage_oracle(-0.1, 0.0, 0.3, 1.0), DomainError);
    REQUIRE_THROWS_AS(first_passage_oracle(0.5, 0.0, 0.0, 1.0), DomainError);
    REQUIRE_THROWS_AS(first_passage_oracle(0.5, 0.0, 0.3, -1.0), DomainError);
}

TEST_CASE("conditional volatility law for a linear diffusion") {
    const auto noise = generate_common_noise(1e-3, 1000, 0.5, 11);

    SECTION("rho2 = 0: unconditional Ornstein-Uhlenbeck law") {
        const auto c = ou_coeffs(0.3, 0.0, 0.5);
        const auto law = ou_conditional_density_oracle(c, 0.5, noise, 1.0);
        REQUIRE_THAT(law.mean, WithinAbs(0.2 + 0.3 * std::exp(-1.0), 1e-12));
        REQUIRE_THAT(law.variance,
                     WithinAbs(0.08 * (1.0 - std::exp(-2.0)), 1e-12));
        REQUIRE_THAT(law.variance, WithinAbs(0.0691732, 1e-6));
        // density normalization and mode
        REQUIRE_THAT(law.density(law.mean),
                     WithinAbs(1.0 / std::sqrt(2.0 * M_PI * law.variance), 1e-12));
        REQUIRE(law.density(law.mean + 1.0) < law.density(law.mean));
    }
    SECTION("rho2 != 0 shifts the mean by the systemic convolution") {
        const auto c0 = ou_coeffs(0.3, 0.0, 0.5);
        const auto c = ou_coeffs(0.3, 0.4, 0.5);
        const auto base = ou_conditional_density_oracle(c0, 0.5, noise, 1.0);
        const auto law = ou_conditional_density_oracle(c, 0.5, noise, 1.0);
        double conv = 0.0;  // left-point systemic contribution
        for (std::size_t n = 0; n < 1000; ++n)
            conv += std::exp(-c.k * (1.0 - 1e-3 * static_cast<double>(n))) *
                    noise.increments_B0[n];
        REQUIRE_THAT(law.mean - base.mean, WithinAbs(c.xi * c.rho2 * conv, 1e-9));
        // conditional variance shrinks by the factor 1 - rho2^2
        REQUIRE_THAT(law.variance, WithinAbs(base.variance * (1.0 - 0.16), 1e-12));
    }
    SECTION("k = 0 limit: Brownian variance growth") {
        auto c = ou_coeffs(0.3, 0.0, 0.5);
        c.k = 0.0;
        const auto law = ou_conditional_density_oracle(c, 0.5, noise, 1.0);
        REQUIRE_THAT(law.mean, WithinAbs(0.5, 1e-12));
        REQUIRE_THAT(law.variance, WithinAbs(c.xi * c.xi, 1e-12));
    }
    SECTION("VolSpec overload rescales by the constant q") {
        const auto c = ou_coeffs(0.3, 0.0, 0.5);
        const auto base = ou_conditional_density_oracle(c, 0.5, noise, 1.0);
        const auto law =
            ou_conditional_density_oracle(c, make_ou_volspec(2.0), 0.5, noise, 1.0);
        REQUIRE_THAT(law.variance, WithinAbs(4.0 * base.variance, 1e-12));
        REQUIRE_THROWS_AS(
            ou_conditional_density_oracle(c, make_rational_volspec(), 0.5, noise, 1.0),
            ConfigError);
    }
    SECTION("times off or beyond the noise grid are refused") {
        const auto c = ou_coeffs();
        REQUIRE_THROWS_AS(ou_conditional_density_oracle(c, 0.5, noise, 2.0),
                          DomainError);
        REQUIRE_THROWS_AS(ou_conditional_density_oracle(c, 0.5, noise, 0.50049),
                          DomainError);
    }
}

TEST_CASE("loss-curve comparison") {
    const std::vector<double> t{0.0, 0.25, 0.5, 0.75, 1.0};
    const std::vector<double> l{0.0, 0.01, 0.03, 0.06, 0.1};

    SECTION("identical curves") {
        const auto rep = compare_loss_curves(t, l, t, l, 0.01);
        REQUIRE(rep.observed == 0.0);
        REQUIRE(rep.mean_abs_diff == 0.0);
        REQUIRE(rep.n_compared == t.size());
        REQUIRE(rep.passed);
    }
    SECTION("piecewise-linear interpolation is exact on the knots") {
        // B sampled finer on the same piecewise-linear curve
        std::vector<double> tb, lb;
        for (std::size_t i = 0; i + 1 < t.size(); ++i)
            for (int j = 0; j < 5; ++j) {
                const double w = j / 5.0;
                tb.push_back((1.0 - w) * t[i] + w * t[i + 1]);
                lb.push_back((1.0 - w) * l[i] + w * l[i + 1]);
            }
        tb.push_back(t.back());
        lb.push_back(l.back());
        const auto rep = compare_loss_curves(t, l, tb, lb);
        REQUIRE(rep.observed < 1e-14);
    }
    SECTION("a uniform offset is measured exactly") {
        std::vector<double> shifted = l;
        for (double& v : shifted) v += 0.015;
        const auto fail = compare_loss_curves(t, l, t, shifted, 0.01);
        REQUIRE_THAT(fail.observed, WithinAbs(0.015, 1e-15));
        REQUIRE_FALSE(fail.passed);
        const auto pass = compare_loss_curves(t, l, t, shifted, 0.02);
        REQUIRE(pass.passed);
        REQUIRE(pass.reference == 0.0);
    }
    SECTION("partial overlap restricts the comparison") {
        const std::vector<double> tb{0.4, 0.6, 0.8};
        const std::vector<double> lb{0.0, 0.0, 0.0};
        const auto rep = compare_loss_curves(t, l, tb, lb);
        REQUIRE(rep.n_compared == 2);  // t = 0.5 and 0.75 only
        REQUIRE_THAT(rep.observed, WithinAbs(0.06, 1e-15));
        REQUIRE_THAT(rep.t_at_sup, WithinAbs(0.75, 1e-15));
    }
    SECTION("argument errors") {
        REQUIRE_THROWS_AS(compare_loss_curves(t, {0.0}, t, l), ShapeError);
        REQUIRE_THROWS_AS(compare_loss_curves(t, l, {0.5}, {0.0}), ShapeError);
        REQUIRE_THROWS_AS(
            compare_loss_curves(t, l, {5.0, 6.0}, {0.0, 0.0}), DomainError);
    }
}

TEST_CASE("default test function derivatives are consistent") {
    const TestFunction tf = make_default_test_function();
    const double eps = 1e-6;
    for (double x : {0.1, 0.7, 2.0})
        for (double y : {-0.8, 0.2, 1.1}) {
            const double fx_fd =
                (tf.f(x + eps, y) - tf.f(x - eps, y)) / (2.0 * eps);
            const double fy_fd =
                (tf.f(x, y + eps) - tf.f(x, y - eps)) / (2.0 * eps);
            const double e2 = 1e-4;  // larger step: second differences lose
                                     // ~8 digits to cancellation otherwise
            const double fxx_fd =
                (tf.f(x + e2, y) - 2.0 * tf.f(x, y) + tf.f(x - e2, y)) / (e2 * e2);
            const double fyy_fd =
                (tf.f(x, y + e2) - 2.0 * tf.f(x, y) + tf.f(x, y - e2)) / (e2 * e2);
            const double fxy_fd = (tf.fx(x, y + eps) - tf.fx(x, y - eps)) / (2.0 * eps);
            REQUIRE_THAT(tf.fx(x, y), WithinAbs(fx_fd, 1e-8));
            REQUIRE_THAT(tf.fy(x, y), WithinAbs(fy_fd, 1e-8));
            REQUIRE_THAT(tf.fxx(x, y), WithinAbs(fxx_fd, 1e-6));
            REQUIRE_THAT(tf.fyy(x, y), WithinAbs(fyy_fd, 1e-6));
            REQUIRE_THAT(tf.fxy(x, y), WithinAbs(fxy_fd, 1e-8));
            // the fused evaluator agrees with the individual callables
            double v[6];
            tf.all(x, y, v);
            REQUIRE(v[0] == tf.f(x, y));
            REQUIRE(v[1] == tf.fx(x, y));
            REQUIRE(v[2] == tf.fy(x, y));
            REQUIRE(v[3] == tf.fxx(x, y));
            REQUIRE(v[4] == tf.fyy(x, y));
            REQUIRE(v[5] == tf.fxy(x, y));
        }
    // vanishes on the default boundary
    for (double y : {-1.0, 0.0, 2.0}) REQUIRE(tf.f(0.0, y) == 0.0);
}

TEST_CASE("weak-form accumulator contracts") {
    const auto noise = generate_common_noise(1e-3, 10, 0.5, 3);
    const auto c = ou_coeffs();
    const VolSpec spec = make_ou_volspec();

    SECTION("test functions not vanishing at x = 0 are refused") {
        TestFunction bad = make_default_test_function();
        bad.f = [](double x, double y) { return std::exp(-x) * std::exp(-y * y); };
        REQUIRE_THROWS_AS(WeakFormAccumulator(c, spec, bad, noise), DomainError);
    }
    SECTION("steps must arrive in order and residual needs data") {
        WeakFormAccumulator acc(c, spec, make_default_test_function(), noise);
        REQUIRE_THROWS_AS(acc.residual(), ShapeError);
        PortfolioState st;
        st.X = {1.0};
        st.sigma = {0.2};
        st.alive = {1};
        st.default_time = {std::numeric_limits<double>::infinity()};
        acc.observe(st, 0);
        REQUIRE_THROWS_AS(acc.observe(st, 2), ShapeError);
    }
    SECTION("stored-state wrapper checks the series length") {
        std::vector<PortfolioState> states(noise.n_steps);  // one short
        REQUIRE_THROWS_AS(weak_form_residual(states, noise, c, spec,
                                             make_default_test_function()),
                          ShapeError);
    }
}

TEST_CASE("weak-form residual is small on a simulated portfolio") {
    const auto c = ou_coeffs();
    const VolSpec spec = make_ou_volspec();
    const auto noise = generate_common_noise(1e-3, 200, c.rho3, 21);
    const std::size_t N = 4000;
    std::vector<std::pair<double, double>> init(N, {1.0, 0.25});

    const TestFunction tf = make_default_test_function();
    WeakFormAccumulator acc(c, spec, tf, noise);
    SimOptions opt;
    opt.record_stride = 1;
    opt.observer = [&acc](const PortfolioState& st, std::size_t step) {
        acc.observe(st, step);
    };
    const auto sim = simulate_portfolio({c}, spec, init, noise, 77, opt);
    const double via_observer = acc.residual();
    const double via_states = weak_form_residual(sim.states, noise, c, spec, tf);
    REQUIRE(via_observer == via_states);
    REQUIRE(std::isfinite(via_observer));
    // defect is a discrete martingale plus O(dt); with N = 4000 particles over
    // a short horizon its size is well below 0.01
    REQUIRE(std::abs(via_observer) < 0.01);

    // deterministic given the seeds
    WeakFormAccumulator acc2(c, spec, tf, noise);
    SimOptions opt2;
    opt2.observer = [&acc2](const PortfolioState& st, std::size_t step) {
        acc2.observe(st, step);
    };
    simulate_portfolio({c}, spec, init, noise, 77, opt2);
    REQUIRE(acc2.residual() == via_observer);
}

TEST_CASE("volatility moment diagnostic") {
    const auto c = ou_coeffs();
    const auto d1 =
        alpha_moment_diagnostic(c, make_ou_volspec(), 0.5, 1.0, 400, 2000, 5);
    REQUIRE(std::isfinite(d1.value));
    REQUIRE(d1.value >= std::pow(0.5, 8));  // sup includes the start
    REQUIRE(d1.n_paths == 2000);

    const auto d2 =
        alpha_moment_diagnostic(c, make_ou_volspec(), 0.5, 1.0, 400, 4000, 6);
    REQUIRE(std::abs(d2.value - d1.value) <= 0.25 * std::max(d1.value, d2.value));

    const auto dr =
        alpha_moment_diagnostic(c, make_rational_volspec(), 0.5, 1.0, 400, 1000, 7);
    REQUIRE(std::isfinite(dr.value));

    REQUIRE_THROWS_AS(
        alpha_moment_diagnostic(c, make_ou_volspec(), 0.5, 1.0, 0, 10, 1),
        DomainError);
    REQUIRE_THROWS_AS(
        alpha_moment_diagnostic(c, make_ou_volspec(), 0.5, 1.0, 10, 0, 1),
        DomainError);
}
