#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "lpsv/model.hpp"

using namespace lpsv;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> g(n);
    for (int i = 0; i < n; ++i) g[i] = a + (b - a) * i / (n - 1);
    return g;
}

} // namespace

TEST_CASE("coefficient validation accepts the standard presets") {
    REQUIRE_NOTHROW(
        CoefficientVector::standard(1.0, 0.2, 0.4, 0.05, 0.3, 0.2, 0.5));
    // degenerate oracle reductions are legal
    CoefficientVector c = CoefficientVector::standard(0.0, 0.2, 0.0, 0.05, 0.0, 0.0, 0.0);
    REQUIRE_NOTHROW(c.validate());
}

TEST_CASE("coefficient validation names the violated bound") {
    CoefficientVector c = CoefficientVector::standard(1.0, 0.2, 0.4, 0.05, 0.3, 0.2, 0.5);
    c.rho1 = 1.5;
    REQUIRE_THROWS_WITH(c.validate(),
                        Catch::Matchers::ContainsSubstring("rho1 in (-1,1)"));
    c.rho1 = 0.3;
    c.rho2 = -1.0;
    REQUIRE_THROWS_AS(c.validate(), DomainError);
    c.rho2 = 0.2;
    c.k = -0.1;
    REQUIRE_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("standard model fills the cross coefficient") {
    const CoefficientVector c =
        CoefficientVector::standard(1.0, 0.2, 0.4, 0.05, 0.3, 0.2, 0.5);
    REQUIRE_THAT(c.rho, WithinAbs(0.4 * 0.5 * 0.3 * 0.2, 1e-15));
}

TEST_CASE("effective_rho pinned values") {
    CoefficientVector c =
        CoefficientVector::standard(1.0, 0.2, 0.4, 0.05, 0.3, 0.2, 0.5);
    // w1 = b1 = 1: second term vanishes
    REQUIRE_THAT(effective_rho(c, 1.0, 1.0), WithinAbs(0.012, 1e-15));
    REQUIRE_THAT(effective_rho(c, 1.0, 1.0),
                 WithinAbs(c.xi * c.rho3 * c.rho1 * c.rho2, 1e-15));

    CoefficientVector u = CoefficientVector::standard(1.0, 0.2, 1.0, 0.0, 0.0, 0.0, 0.0);
    REQUIRE_THAT(effective_rho(u, 0.6, 0.6), WithinAbs(0.64, 1e-12));
}

TEST_CASE("effective_rho rejects vanishing idiosyncratic weights") {
    const CoefficientVector c =
        CoefficientVector::standard(1.0, 0.2, 0.4, 0.05, 0.3, 0.2, 0.5);
    REQUIRE_THROWS_AS(effective_rho(c, 0.0, 0.5), DomainError);
    REQUIRE_THROWS_AS(effective_rho(c, 0.5, 0.0), DomainError);
    REQUIRE_THROWS_AS(effective_rho(c, 1.2, 0.5), DomainError);
}

TEST_CASE("correlation condition basic cases") {
    CoefficientVector c =
        CoefficientVector::standard(1.0, 0.2, 0.4, 0.05, 0.3, 0.2, 0.5);
    REQUIRE(check_correlation_condition(c));  // rho = xi rho3 rho1 rho2, lhs = 0
    c.rho += 0.4 * std::sqrt(1.0 - 0.09) * std::sqrt(1.0 - 0.04) + 1e-6;
    REQUIRE_FALSE(check_correlation_condition(c));
}

TEST_CASE("correlation condition is invariant under joint sign flip of rho1, rho2") {
    std::mt19937_64 gen(12345);
    std::uniform_real_distribution<double> u(-0.9, 0.9);
    for (int trial = 0; trial < 200; ++trial) {
        CoefficientVector c;
        c.k = 1.0;
        c.theta = 0.2;
        c.xi = 0.1 + std::abs(u(gen));
        c.r = 0.05;
        c.rho1 = u(gen);
        c.rho2 = u(gen);
        c.rho3 = u(gen);
        c.rho = u(gen) * 0.5;
        CoefficientVector flipped = c;
        flipped.rho1 = -c.rho1;
        flipped.rho2 = -c.rho2;
        REQUIRE(check_correlation_condition(c) ==
                check_correlation_condition(flipped));
    }
}

TEST_CASE("effective_rho always satisfies the correlation condition") {
    const CoefficientVector base =
        CoefficientVector::standard(1.0, 0.2, 0.4, 0.05, 0.3, 0.2, 0.5);
    for (double w1 : {-0.9, -0.3, 0.2, 0.7, 1.0})
        for (double b1 : {-0.8, 0.1, 0.5, 1.0}) {
            CoefficientVector c = base;
            c.rho = effective_rho(base, w1, b1);
            REQUIRE(check_correlation_condition(c));
        }
}

TEST_CASE("assumption checks pass for both presets") {
    const auto grid = linspace(-20.0, 20.0, 4001);
    REQUIRE(validate_assumption1(make_ou_volspec(), grid).passed);
    REQUIRE(validate_assumption1(make_rational_volspec(), grid).passed);
}

TEST_CASE("assumption check flags violated declared bounds") {
    VolSpec s = make_rational_volspec();
    s.M_q = 2.5;  // q(0) = 3 exceeds this
    const auto rep = validate_assumption1(s, linspace(-1.0, 1.0, 101));
    REQUIRE_FALSE(rep.passed);
    bool found = false;
    for (const auto& v : rep.violations)
        if (v.quantity == "q upper bound") found = true;
    REQUIRE(found);
}

TEST_CASE("assumption check is monotone in the probe grid") {
    VolSpec s = make_rational_volspec();
    s.M_q = 2.5;
    auto coarse = linspace(-1.0, 1.0, 11);
    auto fine = coarse;
    for (double x : linspace(-1.0, 1.0, 101)) fine.push_back(x);
    const bool coarse_pass = validate_assumption1(s, coarse).passed;
    const bool fine_pass = validate_assumption1(s, fine).passed;
    // adding probe points can only find more violations
    if (!coarse_pass) REQUIRE_FALSE(fine_pass);
}

TEST_CASE("assumption check reports non-finite evaluations with location") {
    VolSpec s = make_ou_volspec();
    s.q = [](double x) { return x == 0.5 ? std::nan("") : 1.0; };
    REQUIRE_THROWS_WITH(validate_assumption1(s, {0.0, 0.5, 1.0}),
                        Catch::Matchers::ContainsSubstring("x=0.5"));
    REQUIRE_THROWS_AS(validate_assumption1(s, {0.5}), NumericError);
    REQUIRE_THROWS_AS(validate_assumption1(make_ou_volspec(), {}), DomainError);
}

TEST_CASE("preset shapes") {
    const VolSpec ou = make_ou_volspec();
    REQUIRE(ou.q_is_constant);
    REQUIRE(ou.q(3.7) == 1.0);
    REQUIRE_THAT(ou.h(0.05), WithinAbs(0.1, 1e-15));  // clamped from below
    REQUIRE_THAT(ou.h(-2.0), WithinAbs(0.6, 1e-15));  // clamped from above
    REQUIRE_THAT(ou.h(0.3), WithinAbs(0.3, 1e-15));

    const VolSpec ch = make_const_h_volspec(1.0, 0.3);
    REQUIRE(ch.h(-5.0) == 0.3);
    REQUIRE(ch.h(5.0) == 0.3);

    const VolSpec rat = make_rational_volspec();
    REQUIRE_FALSE(rat.q_is_constant);
    REQUIRE_THAT(rat.q(0.0), WithinAbs(3.0, 1e-15));
    REQUIRE_THAT(rat.q(1.0), WithinAbs(2.5, 1e-15));
    // derivatives consistent with central finite differences
    for (double z : {-1.3, -0.2, 0.0, 0.4, 2.1}) {
        const double hstep = 1e-6;
        const double d1 = (rat.q(z + hstep) - rat.q(z - hstep)) / (2.0 * hstep);
        REQUIRE_THAT(rat.q1(z), WithinAbs(d1, 1e-7));
        const double d2 = (rat.q1(z + hstep) - rat.q1(z - hstep)) / (2.0 * hstep);
        REQUIRE_THAT(rat.q2(z), WithinAbs(d2, 1e-7));
        const double d3 = (rat.q2(z + hstep) - rat.q2(z - hstep)) / (2.0 * hstep);
        REQUIRE_THAT(rat.q3(z), WithinAbs(d3, 1e-6));
    }

    REQUIRE_THROWS_AS(make_volspec_preset("bogus"), ConfigError);
}
