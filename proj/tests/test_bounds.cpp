#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lsam/bounds.hpp"

using namespace lsam;
using bounds::BoundConstants;
using bounds::compute_constants;
using sim::StepSchedule;

TEST_CASE("constants from the drift lemmas") {
    {
        const auto c = compute_constants(1.0, 0.5, 0.5, 5, 1e-4);
        CHECK(c.kappa1 == Catch::Approx(62.0).margin(1e-12));
        CHECK(c.kappa2 == Catch::Approx(220.0).margin(1e-12));
        CHECK(c.kappa2_tilde == Catch::Approx(441.0).margin(1e-12));
        // 62 * 5e-4 + 0.5e-4 = 0.03105 <= 0.05 and eps tau = 5e-4 <= 1/4
        CHECK(c.step_quarter_ok);
        CHECK(c.step_drift_ok);
    }
    {
        const auto c = compute_constants(0.0, 1.0, 1.0, 1, 1e-4);
        CHECK(c.kappa1 == Catch::Approx(62.0));
        CHECK(c.kappa2 == Catch::Approx(55.0));
        CHECK(c.kappa2_tilde == Catch::Approx(110.0));
    }
    CHECK_THROWS_AS(compute_constants(1.0, 0.5, 0.5, 5, 0.0), Error);
    CHECK_THROWS_AS(compute_constants(1.0, 0.5, 0.5, 0, 1e-4), Error);
}

TEST_CASE("mean-square bound at k = tau and its tail") {
    const auto c = compute_constants(1.0, 0.5, 0.5, 5, 1e-4);
    // (gamma ratio = 1)(0.5 b_max)^2 + 441 * 0.5 * 5e-4 / 0.45 = 0.25 + 0.245
    const double at_tau = bounds::mean_square_bound(c, 0.0, 5);
    CHECK(at_tau == Catch::Approx(0.495).margin(1e-12));

    // k -> infinity leaves only the steady-state term
    const double far = bounds::mean_square_bound(c, 0.0, 40000000);
    CHECK(far == Catch::Approx(bounds::ms_steady(c)).epsilon(1e-9));
    CHECK(bounds::ms_steady(c) == Catch::Approx(0.245).margin(1e-12));

    // non-increasing in k
    double prev = at_tau;
    for (long k = 6; k < 200; ++k) {
        const double b = bounds::mean_square_bound(c, 0.0, k);
        CHECK(b <= prev + 1e-15);
        prev = b;
    }

    CHECK_THROWS_AS(bounds::mean_square_bound(c, 0.0, 4), Error);
    const auto invalid = compute_constants(1.0, 0.5, 0.5, 5, 0.1);
    CHECK_FALSE(invalid.valid());
    CHECK_THROWS_AS(bounds::mean_square_bound(invalid, 0.0, 5), Error);
}

TEST_CASE("steady-state term is exactly linear in eps tau") {
    const auto c1 = compute_constants(0.5, 0.5, 0.4, 3, 1e-4);
    const auto c2 = compute_constants(0.5, 0.5, 0.4, 3, 2e-4);
    CHECK(bounds::ms_steady(c2) == Catch::Approx(2.0 * bounds::ms_steady(c1)).epsilon(1e-14));
}

TEST_CASE("sample complexity matches a direct scan") {
    const auto c = compute_constants(1.0, 0.5, 0.5, 5, 1e-4);
    const double threshold = (2.0 - 1.0) * bounds::ms_steady(c);

    // direct scan oracle
    long expected = c.tau;
    while (bounds::ms_transient(c, 0.0, expected) > threshold) ++expected;
    const long k = bounds::sample_complexity(c, 0.0, 2.0);
    CHECK(k == expected);
    // geometric solve by hand gives k - tau = ceil(log(0.98)/log(1-1.8e-4))
    CHECK(k - c.tau == Catch::Approx(113).margin(1.0));

    // already below the threshold at tau
    const long trivial = bounds::sample_complexity(c, 0.0, 1e9);
    CHECK(trivial == c.tau);
}

TEST_CASE("halving eps roughly doubles the tail of the transient") {
    double previous = 0.0;
    for (double eps : {1e-3, 5e-4, 2.5e-4}) {
        const auto c = compute_constants(0.2, 0.5, 0.5, 1, eps);
        REQUIRE(c.valid());
        const long k = bounds::sample_complexity(c, 1.0, 2.0);
        const double tail = static_cast<double>(k - c.tau);
        // doubling up to the log factor from the shrinking steady-state term
        if (previous > 0.0) {
            const double ratio = tail / previous;
            CHECK(ratio > 1.8);
            CHECK(ratio < 2.8);
        }
        previous = tail;
    }
}

TEST_CASE("double factorial values and log-domain consistency") {
    CHECK(bounds::double_factorial_odd(0) == 1.0);
    CHECK(bounds::double_factorial_odd(1) == 1.0);
    CHECK(bounds::double_factorial_odd(2) == 3.0);
    CHECK(bounds::double_factorial_odd(3) == 15.0);
    CHECK(bounds::double_factorial_odd(4) == 105.0);
    for (long n : {10L, 80L, 150L}) {
        const double direct = bounds::double_factorial_odd(n);
        CHECK(std::log(direct) == Catch::Approx(bounds::log_double_factorial_odd(n)).epsilon(1e-12));
    }
    // above the direct range it stays finite in the log domain
    CHECK(std::isfinite(bounds::log_double_factorial_odd(500)));
}

TEST_CASE("higher-moment bound shape") {
    const auto c = compute_constants(1.0, 0.5, 0.5, 5, 1e-4);
    const double c_const = bounds::default_c_const(c);
    const double c_tilde = bounds::default_c_tilde(c);

    const auto hm1 = bounds::higher_moment_bound(c, 1, c_const, c_tilde);
    CHECK(hm1.bound == Catch::Approx(c_const * 5.0 * 1e-4).epsilon(1e-14));
    // k_1 = tau + (c_tilde/eps) log(1/eps)
    CHECK(hm1.k_n ==
          static_cast<long>(std::ceil(5.0 + (c_tilde / 1e-4) * std::log(1e4))));

    // unit coefficient: pick c_const so that c_const tau eps = 0.01
    const double unit_c = 0.01 / (5.0 * 1e-4);
    const auto hm3 = bounds::higher_moment_bound(c, 3, unit_c, c_tilde);
    CHECK(hm3.bound == Catch::Approx(15.0e-6).epsilon(1e-12));

    // consecutive orders differ by (2n+1) c tau eps
    const auto hm2 = bounds::higher_moment_bound(c, 2, c_const, c_tilde);
    CHECK(hm2.bound / hm1.bound ==
          Catch::Approx(3.0 * c_const * 5.0 * 1e-4).epsilon(1e-12));

    // order beyond the stated admissibility window
    CHECK_THROWS_AS(bounds::higher_moment_bound(c, 100000000, c_const, c_tilde), Error);
}

TEST_CASE("negative-definite specialization") {
    // A = -I: rho = 1, contraction 1 - 0.9 eps
    const double eps = 1e-4;
    const long tau = 2, k = 100;
    const double direct = bounds::neg_def_bound(Matrix{{-1.0, 0.0}, {0.0, -1.0}}, 0.5, 1.0, k, tau, eps);
    const auto c = compute_constants(0.5, 1.0, 1.0, tau, eps);
    const double expected = std::pow(1.0 - 0.9 * eps, static_cast<double>(k - tau)) *
                                (1.5 * 1.0 + 0.5 * 0.5) * (1.5 * 1.0 + 0.5 * 0.5) +
                            c.kappa2_tilde * eps * static_cast<double>(tau) / 0.9;
    CHECK(direct == Catch::Approx(expected).epsilon(1e-14));

    // diag(-1,-3) also has rho = 1
    const double diag_case =
        bounds::neg_def_bound(Matrix{{-1.0, 0.0}, {0.0, -3.0}}, 0.5, 1.0, k, tau, eps);
    CHECK(diag_case == Catch::Approx(expected).epsilon(1e-14));

    // Hurwitz but with an indefinite symmetric part: eigenvalues -1 +- 5
    CHECK_THROWS_AS(bounds::neg_def_bound(Matrix{{-1.0, 10.0}, {0.0, -1.0}}, 0.5, 1.0, k, tau, eps),
                    Error);
}

TEST_CASE("diminishing constants for the harmonic schedule") {
    // eps_j = eps0/(j+1), constant tau: the step ratio (k+1)/(k-tau+1) is
    // largest at the smallest admissible k
    const long tau = 3;
    const auto sched = StepSchedule::polynomial(1e-3, 1.0, 4000);
    const auto dc = bounds::make_diminishing_constants(
        sched, 4000, [&](double) { return tau; }, 62.0, 55.0, 1.0, 0.0);
    CHECK(dc.k_star == tau);
    const double expected_ks =
        static_cast<double>(dc.k_star + 1) / static_cast<double>(dc.k_star - tau + 1);
    CHECK(dc.kappa_s == Catch::Approx(expected_ks).epsilon(1e-12));
    CHECK(dc.kappa2_check == Catch::Approx(2.0 * 55.0 * dc.kappa_s).epsilon(1e-12));
    CHECK(dc.k_hat >= dc.k_star);
}

TEST_CASE("constant-as-sequence schedule reduces to the closed geometric form") {
    const double eps = 1e-4, gamma_max = 0.5, gamma_min = 0.4, b_max = 1.0;
    const long tau = 5;
    const std::size_t horizon = 5000;
    const auto sched = StepSchedule::sequence(std::vector<double>(horizon, eps));
    const auto c = compute_constants(b_max, gamma_max, gamma_min, tau, eps);
    REQUIRE(c.valid());
    const auto dc = bounds::make_diminishing_constants(
        sched, horizon, [&](double) { return tau; }, c.kappa1, c.kappa2, gamma_max, b_max);
    CHECK(dc.kappa_s == Catch::Approx(1.0).epsilon(1e-14));
    CHECK(dc.kappa2_check == Catch::Approx(c.kappa2_tilde).epsilon(1e-14));
    CHECK(dc.k_hat == dc.k_star);

    const double theta0 = 2.0;
    for (long k : {dc.k_hat, dc.k_hat + 1, dc.k_hat + 97, static_cast<long>(horizon)}) {
        const double loop =
            bounds::diminishing_bound(dc, sched, theta0, b_max, gamma_min, gamma_max, k);
        const double a = 1.0 - 0.9 * eps / gamma_max;
        const double m = static_cast<double>(k - dc.k_hat);
        const double base = 1.5 * theta0 + 0.5 * b_max;
        const double closed = (gamma_max / gamma_min) * base * base * std::pow(a, m) +
                              dc.kappa2_check * eps * eps * static_cast<double>(tau) *
                                  (1.0 - std::pow(a, m)) / (1.0 - a);
        REQUIRE(loop == Catch::Approx(closed).epsilon(1e-12));
    }
}

TEST_CASE("two-step horizon expands by hand") {
    const auto sched = StepSchedule::polynomial(1e-3, 0.7, 600);
    const auto dc = bounds::make_diminishing_constants(
        sched, 600, [&](double) { return 2L; }, 62.0, 55.0, 1.0, 0.5);
    const double theta0 = 1.0, b_max = 0.5, gmin = 0.8, gmax = 1.0;
    const long k = dc.k_hat + 1;
    const double eps = sched.at(static_cast<std::size_t>(dc.k_hat));
    const double a = 1.0 - 0.9 * eps / gmax;
    const double expected = (gmax / gmin) * std::pow(1.5 * theta0 + 0.5 * b_max, 2.0) * a +
                            dc.kappa2_check * eps * eps * 2.0;
    CHECK(bounds::diminishing_bound(dc, sched, theta0, b_max, gmin, gmax, k) ==
          Catch::Approx(expected).epsilon(1e-13));
    CHECK_THROWS_AS(bounds::diminishing_bound(dc, sched, theta0, b_max, gmin, gmax, dc.k_hat - 1),
                    Error);
}

TEST_CASE("bound curve agrees with pointwise evaluation") {
    const auto sched = StepSchedule::polynomial(1e-3, 0.7, 2000);
    const auto dc = bounds::make_diminishing_constants(
        sched, 2000, [&](double) { return 2L; }, 62.0, 55.0, 1.0, 0.5);
    std::vector<std::size_t> ks;
    for (long k = dc.k_hat; k < 2000; k += 97) ks.push_back(static_cast<std::size_t>(k));
    const auto curve = bounds::diminishing_bound_curve(dc, sched, 1.0, 0.5, 0.8, 1.0, ks);
    for (std::size_t i = 0; i < ks.size(); ++i) {
        const double point = bounds::diminishing_bound(dc, sched, 1.0, 0.5, 0.8, 1.0,
                                                       static_cast<long>(ks[i]));
        REQUIRE(curve[i] == Catch::Approx(point).epsilon(1e-12));
    }
}
