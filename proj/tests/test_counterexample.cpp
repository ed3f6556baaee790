#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "lsam/counterexample.hpp"

using namespace lsam;
using counterexample::TwoPointScalarModel;

TEST_CASE("averaged drift of the two-point model") {
    const TwoPointScalarModel m(0.1);
    // E[1 + eps A] = 0.5 (1.1 + 0.8) = 0.95, E[b] = 0
    CHECK(m.transfer_coefficient(1, 1) == Catch::Approx(0.95).margin(1e-15));
    CHECK(m.transfer_coefficient(1, 0) == Catch::Approx(0.0).margin(1e-16));
    // E[(1 + eps A)^2] = 0.5 (1.21 + 0.64) = 0.925
    CHECK(m.transfer_coefficient(2, 2) == Catch::Approx(0.925).margin(1e-15));
}

TEST_CASE("first moment stays zero from the origin") {
    const auto table = counterexample::exact_moment_recursion(TwoPointScalarModel(0.1), 4, 200, 0.0);
    for (std::size_t k = 0; k <= 200; ++k) CHECK(table.at(k, 1) == 0.0);
}

TEST_CASE("second moment converges to its fixed point") {
    const auto table = counterexample::exact_moment_recursion(TwoPointScalarModel(0.1), 2, 500, 0.0);
    // eps^2 E[b^2] / (1 - E[(1+eps A)^2]) = 0.01 / 0.075
    const double fixed_point = 0.01 / 0.075;
    CHECK(table.at(500, 2) == Catch::Approx(fixed_point).margin(1e-9));
    CHECK_FALSE(table.diverged(500, 2));

    // the initial condition is forgotten: same limit from Theta_0 = 10
    const auto far = counterexample::exact_moment_recursion(TwoPointScalarModel(0.1), 2, 800, 10.0);
    CHECK(far.at(800, 2) == Catch::Approx(fixed_point).margin(1e-9));
}

TEST_CASE("frozen dynamics at eps = 0") {
    const auto table = counterexample::exact_moment_recursion(TwoPointScalarModel(0.0), 6, 50, 2.0);
    for (std::size_t k = 0; k <= 50; ++k)
        for (long j = 0; j <= 6; ++j)
            REQUIRE(table.at(k, j) == Catch::Approx(std::pow(2.0, static_cast<double>(j))));
}

TEST_CASE("odd moments beyond the first are not identically zero") {
    const auto table = counterexample::exact_moment_recursion(TwoPointScalarModel(0.1), 4, 100, 0.0);
    CHECK(std::abs(table.at(100, 3)) > 0.0);
}

TEST_CASE("divergence threshold at eps = 0.1 is order six") {
    CHECK(counterexample::divergence_threshold(0.1) == 6);
    const TwoPointScalarModel m(0.1);
    // leading coefficients straight from the binomial expansion
    CHECK(m.transfer_coefficient(6, 6) == Catch::Approx(0.5 * (std::pow(1.1, 6) + std::pow(0.8, 6)))
                                              .epsilon(1e-15));
    CHECK(m.transfer_coefficient(6, 6) > 1.0);
    CHECK(m.transfer_coefficient(4, 4) == Catch::Approx(0.93685).margin(1e-10));
    CHECK(m.transfer_coefficient(4, 4) < 1.0);
}

TEST_CASE("threshold order is non-increasing in eps") {
    long previous = 1000000;
    for (double eps : {0.05, 0.1, 0.2}) {
        const long m = counterexample::divergence_threshold(eps);
        CHECK(m <= previous);
        previous = m;
    }
}

TEST_CASE("second-order coefficient approaches one from below as eps shrinks") {
    // 0.5[(1+e)^2 + (1-2e)^2] = 1 - e + 2.5 e^2, below 1 and increasing as e drops
    double previous = 0.0;
    for (double eps : {0.1, 0.01, 1e-3, 1e-4}) {
        const double coeff = TwoPointScalarModel(eps).transfer_coefficient(2, 2);
        CHECK(coeff < 1.0);
        CHECK(coeff > previous);
        CHECK(coeff == Catch::Approx(1.0 - eps + 2.5 * eps * eps).epsilon(1e-13));
        previous = coeff;
    }
}

TEST_CASE("above the threshold the recursion grows without bound") {
    const auto table =
        counterexample::exact_moment_recursion(TwoPointScalarModel(0.1), 6, 4000, 0.0);
    // eventually monotone and past 1e10 (or flagged as overflowed)
    double last = 0.0;
    bool passed_1e10 = false;
    bool monotone_tail = true;
    for (std::size_t k = 1000; k <= 4000; ++k) {
        if (table.diverged(k, 6)) {
            passed_1e10 = true;
            break;
        }
        const double v = table.at(k, 6);
        if (v < last) monotone_tail = false;
        last = v;
        if (v > 1e10) {
            passed_1e10 = true;
            break;
        }
    }
    CHECK(passed_1e10);
    CHECK(monotone_tail);

    // while the below-threshold orders stay finite in the same run
    CHECK_FALSE(table.diverged(4000, 2));
    CHECK(table.at(4000, 2) == Catch::Approx(0.01 / 0.075).margin(1e-9));
}

TEST_CASE("overflow marking is per entry and sticky") {
    const auto table =
        counterexample::exact_moment_recursion(TwoPointScalarModel(0.3), 20, 3000, 0.0);
    REQUIRE(table.diverged(3000, 20));
    // once an order overflows it stays flagged
    bool seen = false;
    for (std::size_t k = 1; k <= 3000; ++k) {
        if (table.diverged(k, 20)) seen = true;
        if (seen) REQUIRE(table.diverged(k, 20));
    }
    CHECK_FALSE(table.diverged(3000, 0));
}

TEST_CASE("monte carlo agrees with the exact second moment") {
    const TwoPointScalarModel m(0.1);
    const auto rep = counterexample::monte_carlo_cross_check(m, 2, 500, 20000, 515);
    CHECK(rep.exact == Catch::Approx(0.01 / 0.075).margin(1e-9));
    CHECK(rep.within_4se);
    CHECK(rep.std_error > 0.0);
}

TEST_CASE("monte carlo agrees at order four below threshold") {
    const TwoPointScalarModel m(0.1);
    const auto rep = counterexample::monte_carlo_cross_check(m, 4, 500, 40000, 616);
    CHECK(rep.within_4se);
}

TEST_CASE("order zero is exact on both routes") {
    const TwoPointScalarModel m(0.1);
    const auto rep = counterexample::monte_carlo_cross_check(m, 0, 50, 100, 1);
    CHECK(rep.exact == 1.0);
    CHECK(rep.empirical == 1.0);
    CHECK(rep.std_error == 0.0);
}

TEST_CASE("domain guards") {
    CHECK_THROWS_AS(counterexample::divergence_threshold(0.0), Error);
    CHECK_THROWS_AS(counterexample::divergence_threshold(0.6), Error);
    CHECK_THROWS_AS(
        counterexample::exact_moment_recursion(TwoPointScalarModel(0.1), 3, 10, 0.0), Error);
    CHECK_THROWS_AS(TwoPointScalarModel(-0.1), Error);
}
