#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "lsam/sim.hpp"
#include "lsam/td.hpp"

using namespace lsam;
using markov::FiniteChain;
using td::TdProblem;

namespace {

TdProblem two_state_problem(double alpha, double lambda, Vector rewards = {1.0, 0.0}) {
    return TdProblem(FiniteChain(Matrix{{0.5, 0.5}, {0.5, 0.5}}), std::move(rewards), alpha,
                     Matrix::identity(2), lambda);
}

TdProblem five_state_problem(double alpha, double lambda) {
    // circulant with spectrum {1, 0.1, 0.1, 0.1, 0.1}
    const std::vector<double> first_row{0.28, 0.18, 0.18, 0.18, 0.18};
    Matrix gamma(5, 5);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) gamma(i, j) = first_row[(j + 5 - i) % 5];
    return TdProblem(FiniteChain(std::move(gamma)), Vector{0.9, -0.3, 0.5, 0.0, 0.2}, alpha,
                     Matrix::identity(5), lambda);
}

Matrix invert(const Matrix& m) {
    const std::size_t n = m.rows();
    Matrix inv(n, n);
    for (std::size_t col = 0; col < n; ++col) {
        Vector e(n, 0.0);
        e[col] = 1.0;
        const Vector x = solve_linear(m, std::move(e));
        for (std::size_t i = 0; i < n; ++i) inv(i, col) = x[i];
    }
    return inv;
}

}  // namespace

TEST_CASE("value function of the 2-state example") {
    const auto p = two_state_problem(0.5, 0.0);
    const Vector v = td::value_function(p.chain, p.rewards, p.discount);
    // hand inverse of the 2x2 Bellman system
    CHECK(v[0] == Catch::Approx(1.5).margin(1e-12));
    CHECK(v[1] == Catch::Approx(0.5).margin(1e-12));

    // V = c + alpha Gamma V
    for (std::size_t i = 0; i < 2; ++i) {
        double rhs = p.rewards[i];
        for (std::size_t j = 0; j < 2; ++j) rhs += p.discount * p.chain.transition()(i, j) * v[j];
        REQUIRE(std::abs(v[i] - rhs) <= 1e-10);
    }
}

TEST_CASE("tabular TD(0) equilibrium recovers the scaled value function") {
    const auto compiled = td::compile_td0(two_state_problem(0.5, 0.0));
    const double s = compiled.normalization_scale;
    CHECK(s == Catch::Approx(1.0 / std::sqrt(1.5)).epsilon(1e-14));
    CHECK(compiled.theta_star[0] == Catch::Approx(1.5 / s).epsilon(1e-12));
    CHECK(compiled.theta_star[1] == Catch::Approx(0.5 / s).epsilon(1e-12));

    Vector resid = matvec(compiled.a_tilde, compiled.theta_star);
    for (std::size_t i = 0; i < resid.size(); ++i) resid[i] += compiled.b_tilde[i];
    CHECK(norm2(resid) <= 1e-10);
}

TEST_CASE("zero rewards compile to the zero equilibrium") {
    const auto compiled = td::compile_td0(two_state_problem(0.5, 0.0, {0.0, 0.0}));
    CHECK(norm2(compiled.b_tilde) == 0.0);
    CHECK(norm2(compiled.theta_star) <= 1e-14);
    for (const auto& b : compiled.pair_model->b_of) CHECK(norm2(b) <= 1e-14);
}

TEST_CASE("centered noise has exact zero stationary mean over pairs") {
    const auto compiled = td::compile_td0(five_state_problem(0.3, 0.0));
    const auto& model = *compiled.pair_model;
    const std::size_t d = model.dim;

    // independent re-check with the analytic pair law pi(z) Gamma(z,z')
    Vector mean(d, 0.0);
    Matrix a_mean(d, d);
    for (std::size_t s = 0; s < compiled.pair_states.size(); ++s) {
        for (std::size_t i = 0; i < d; ++i) mean[i] += compiled.pair_pi[s] * model.b_of[s][i];
        Matrix w = model.a_of[s];
        w *= compiled.pair_pi[s];
        a_mean += w;
    }
    CHECK(norm2(mean) <= 1e-12);
    a_mean -= compiled.a_tilde;
    CHECK(frobenius_norm(a_mean) <= 1e-12);

    // the pair chain's own stationary law agrees with pi(z) Gamma(z,z')
    const Vector pair_pi = markov::stationary_distribution(model.chain);
    for (std::size_t s = 0; s < pair_pi.size(); ++s)
        REQUIRE(pair_pi[s] == Catch::Approx(compiled.pair_pi[s]).margin(1e-12));
}

TEST_CASE("normalization scales features to the target") {
    {
        // phi_max = 2, alpha = 0.5, lambda = 0 -> scale = (1/sqrt(1.5))/2
        TdProblem p(FiniteChain(Matrix{{0.5, 0.5}, {0.5, 0.5}}), {1.0, 0.0}, 0.5,
                    Matrix{{2.0, 0.0}, {0.0, 1.0}}, 0.0);
        const auto [scaled, s] = td::normalize_features(p);
        CHECK(s == Catch::Approx(0.5 / std::sqrt(1.5)).epsilon(1e-14));
        CHECK(scaled.phi_max() == Catch::Approx(1.0 / std::sqrt(1.5)).epsilon(1e-14));
    }
    {
        // already below the target: unchanged
        TdProblem p(FiniteChain(Matrix{{0.5, 0.5}, {0.5, 0.5}}), {1.0, 0.0}, 0.5,
                    Matrix{{0.1, 0.0}, {0.0, 0.1}}, 0.0);
        const auto [scaled, s] = td::normalize_features(p);
        CHECK(s == 1.0);
        CHECK(scaled.phi_max() == Catch::Approx(0.1));
    }
    TdProblem zeros(FiniteChain(Matrix{{0.5, 0.5}, {0.5, 0.5}}), {1.0, 0.0}, 0.5, Matrix(2, 2),
                    0.0);
    CHECK_THROWS_AS(td::normalize_features(zeros), Error);
}

TEST_CASE("per-pair matrices respect the unit norm cap") {
    for (double alpha : {0.1, 0.5, 0.9}) {
        const auto compiled = td::compile_td0(five_state_problem(alpha, 0.0));
        CHECK(compiled.a_max <= 1.0 + 1e-12);
        for (const auto& a : compiled.pair_model->a_of)
            REQUIRE(linalg::induced_2norm(a) <= 1.0 + 1e-12);
    }
}

TEST_CASE("rank-deficient features are rejected") {
    Matrix collinear{{1.0, 2.0}, {2.0, 4.0}};
    TdProblem p(FiniteChain(Matrix{{0.5, 0.5}, {0.5, 0.5}}), {1.0, 0.0}, 0.5,
                std::move(collinear), 0.0);
    CHECK_THROWS_AS(td::compile_td0(p), Error);
}

TEST_CASE("reducible chains are rejected") {
    TdProblem p(FiniteChain(Matrix{{1.0, 0.0}, {0.0, 1.0}}), {1.0, 0.0}, 0.5,
                Matrix::identity(2), 0.0);
    CHECK_THROWS_AS(td::compile_td0(p), Error);
}

TEST_CASE("small lambda reduces to TD(0)") {
    const auto base = two_state_problem(0.5, 0.0);
    const auto td0 = td::compile_td0(base);
    const auto tdl = td::compile_tdlambda(two_state_problem(0.5, 1e-9));
    CHECK(frobenius_norm(td0.a_tilde - tdl.a_tilde) <= 1e-7);
    Vector db = td0.b_tilde;
    for (std::size_t i = 0; i < db.size(); ++i) db[i] -= tdl.b_tilde[i];
    CHECK(norm2(db) <= 1e-7);
}

TEST_CASE("TD(lambda) tabular equilibrium also recovers the value function") {
    const auto compiled = td::compile_tdlambda(two_state_problem(0.5, 0.6));
    const double s = compiled.normalization_scale;
    CHECK(compiled.theta_star[0] == Catch::Approx(1.5 / s).epsilon(1e-11));
    CHECK(compiled.theta_star[1] == Catch::Approx(0.5 / s).epsilon(1e-11));
}

TEST_CASE("eligibility trace stays within its geometric cap") {
    const auto problem = five_state_problem(0.9, 0.9);
    const auto compiled = td::compile_tdlambda(problem);
    auto source = compiled.make_trace_source();
    const double cap =
        compiled.problem.phi_max() / (1.0 - compiled.problem.discount * compiled.problem.lambda);
    Rng rng(404);
    source.reset(rng, std::nullopt);
    for (int step = 0; step < 20000; ++step) {
        REQUIRE(norm2(source.trace()) <= cap + 1e-12);
        source.advance(rng);
    }
}

TEST_CASE("trace simulator matches the recursion it claims") {
    // theta' = theta + eps * trace * (c(z) - (phi(z) - alpha phi(z'))^T (theta + theta*))
    const auto compiled = td::compile_tdlambda(two_state_problem(0.5, 0.4));
    auto source = compiled.make_trace_source();
    Rng rng(11);
    source.reset(rng, 0);
    Vector theta{0.2, -0.1}, out(2);
    const auto& f = compiled.problem.features;
    for (int step = 0; step < 200; ++step) {
        const int z = source.state(), zn = source.next_state();
        source.accumulate_update(theta, out);
        double inner = 0.0;
        for (std::size_t i = 0; i < 2; ++i)
            inner += (f(z, i) - 0.5 * f(zn, i)) * (theta[i] + compiled.theta_star[i]);
        const double gain = compiled.problem.rewards[z] - inner;
        for (std::size_t i = 0; i < 2; ++i)
            REQUIRE(out[i] == Catch::Approx(source.trace()[i] * gain).margin(1e-14));
        source.advance(rng);
    }
}

TEST_CASE("dA/dlambda matches the analytic resolvent derivative") {
    // small features keep the normalization scale at 1 across lambda
    const double alpha = 0.5, lambda = 0.1, h = 1e-5;
    const auto make = [&](double lam) {
        Matrix f = Matrix::identity(3);
        f *= 0.1;
        Matrix gamma{{0.6, 0.3, 0.1}, {0.2, 0.5, 0.3}, {0.3, 0.3, 0.4}};
        return TdProblem(FiniteChain(std::move(gamma)), {1.0, 0.0, -0.5}, alpha, std::move(f), lam);
    };
    const auto plus = td::compile_tdlambda(make(lambda + h));
    const auto minus = td::compile_tdlambda(make(lambda - h));
    REQUIRE(plus.normalization_scale == 1.0);
    REQUIRE(minus.normalization_scale == 1.0);
    Matrix fd = plus.a_tilde - minus.a_tilde;
    fd *= 1.0 / (2.0 * h);

    // analytic: d/dlambda (U - I) = (alpha Gamma - I) R alpha Gamma R,
    // R = (I - lambda alpha Gamma)^{-1}
    const auto p = make(lambda);
    const Matrix& gamma = p.chain.transition();
    const Vector pi = markov::stationary_distribution(p.chain);
    Matrix r_sys = Matrix::identity(3);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) r_sys(i, j) -= lambda * alpha * gamma(i, j);
    const Matrix r = invert(r_sys);
    Matrix ag = gamma;
    ag *= alpha;
    const Matrix du = (ag - Matrix::identity(3)) * r * ag * r;
    Matrix dmat(3, 3);
    for (std::size_t i = 0; i < 3; ++i) dmat(i, i) = pi[i];
    const Matrix analytic = p.features.transposed() * dmat * (du * p.features);

    CHECK(frobenius_norm(fd - analytic) <= 1e-4 * frobenius_norm(analytic));
}

TEST_CASE("TD(lambda) mixing over-estimate is certified by sampling") {
    const auto problem = two_state_problem(0.5, 0.5);
    const double delta = 0.05;
    const long tau = td::tdlambda_mixing_time(problem, delta, 2000);
    REQUIRE(tau >= 1);

    const auto compiled = td::compile_tdlambda(problem);
    const std::size_t d = compiled.problem.dim();
    const auto& f = compiled.problem.features;
    const double alpha = compiled.problem.discount;

    // Monte Carlo estimate of E[A(X_tau) | X_0] from a cold-started trace
    for (int z0 = 0; z0 < 2; ++z0) {
        Matrix mean(d, d);
        const std::size_t reps = 40000;
        for (std::size_t rep = 0; rep < reps; ++rep) {
            Rng rng(derive_stream_seed(1700 + z0, rep));
            auto source = compiled.make_trace_source();
            source.reset(rng, z0);
            for (long s = 0; s < tau; ++s) source.advance(rng);
            const int z = source.state(), zn = source.next_state();
            const auto trace = source.trace();
            for (std::size_t i = 0; i < d; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    mean(i, j) += -trace[i] * (f(z, j) - alpha * f(zn, j));
        }
        mean *= 1.0 / static_cast<double>(reps);
        mean -= compiled.a_tilde;
        // sampling noise allowance on top of delta
        CHECK(linalg::induced_2norm(mean) <= delta + 0.05);
    }
}
