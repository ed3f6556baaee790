#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "lsam/error.hpp"
#include "lsam/markov.hpp"
#include "lsam/sim.hpp"

namespace lsam::counterexample {

// Scalar recursion driven by i.i.d. two-point noise:
//   A(+1) = 1, b(+1) = 1 and A(-1) = -2, b(-1) = -1, each with probability
// one half. The averaged dynamics are contracting, yet steady-state moments
// beyond a finite order do not exist.
struct TwoPointScalarModel {
    double epsilon = 0.0;
    static constexpr double a_plus = 1.0;
    static constexpr double b_plus = 1.0;
    static constexpr double a_minus = -2.0;
    static constexpr double b_minus = -1.0;

    explicit TwoPointScalarModel(double eps) : epsilon(eps) {
        if (!(eps >= 0.0)) throw Error(ErrorCode::InvalidStep, "epsilon must be nonnegative");
    }

    // mean of (1 + eps A)^j (eps b)^{m-j} over the two noise points
    double transfer_coefficient(long m, long j) const {
        const double plus = std::pow(1.0 + epsilon * a_plus, static_cast<double>(j)) *
                            std::pow(epsilon * b_plus, static_cast<double>(m - j));
        const double minus = std::pow(1.0 + epsilon * a_minus, static_cast<double>(j)) *
                             std::pow(epsilon * b_minus, static_cast<double>(m - j));
        return 0.5 * (plus + minus);
    }

    // equivalent finite noise model (2 identical-row states), for Monte Carlo
    markov::MarkovNoiseModel as_noise_model() const {
        markov::FiniteChain chain(Matrix{{0.5, 0.5}, {0.5, 0.5}});
        std::vector<Matrix> a{Matrix{{a_plus}}, Matrix{{a_minus}}};
        std::vector<Vector> b{Vector{b_plus}, Vector{b_minus}};
        return markov::MarkovNoiseModel(std::move(chain), std::move(a), std::move(b));
    }
};

// Exact propagation of all moments E[Theta_k^j], j = 0..max_order, using the
// i.i.d. structure:
//   E[Theta_{k+1}^m] = sum_j C(m,j) * E[(1+eps A)^j (eps b)^{m-j}] * E[Theta_k^j].
// Entries are flagged once their magnitude leaves the safe double range.
struct MomentTable {
    long max_order = 0;
    std::size_t steps = 0;
    // row-major [k][j], k = 0..steps, j = 0..max_order
    std::vector<double> values;
    std::vector<char> overflowed;

    double at(std::size_t k, long j) const {
        return values[k * static_cast<std::size_t>(max_order + 1) + static_cast<std::size_t>(j)];
    }
    bool diverged(std::size_t k, long j) const {
        return overflowed[k * static_cast<std::size_t>(max_order + 1) +
                          static_cast<std::size_t>(j)] != 0;
    }
};

// Binomial coefficients by the Pascal recurrence in floating point; adequate
// through m = 200.
inline std::vector<std::vector<double>> pascal_triangle(long max_order) {
    if (max_order > 200)
        throw Error(ErrorCode::PreconditionViolated, "moment order capped at 200");
    std::vector<std::vector<double>> c(static_cast<std::size_t>(max_order + 1));
    for (long m = 0; m <= max_order; ++m) {
        auto& row = c[static_cast<std::size_t>(m)];
        row.assign(static_cast<std::size_t>(m + 1), 1.0);
        for (long j = 1; j < m; ++j)
            row[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(j - 1)] +
                                               c[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(j)];
    }
    return c;
}

inline MomentTable exact_moment_recursion(const TwoPointScalarModel& model, long max_order,
                                          std::size_t steps, double theta0) {
    if (max_order < 0 || max_order % 2 != 0)
        throw Error(ErrorCode::PreconditionViolated, "max_order must be a nonnegative even integer");
    if (steps < 1) throw Error(ErrorCode::PreconditionViolated, "need at least one step");

    const auto binom = pascal_triangle(max_order);
    const std::size_t width = static_cast<std::size_t>(max_order + 1);

    // transfer_coefficients[m][j]
    std::vector<std::vector<double>> coeff(width);
    for (long m = 0; m <= max_order; ++m) {
        coeff[static_cast<std::size_t>(m)].resize(static_cast<std::size_t>(m + 1));
        for (long j = 0; j <= m; ++j)
            coeff[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)] =
                model.transfer_coefficient(m, j);
    }

    MomentTable table;
    table.max_order = max_order;
    table.steps = steps;
    table.values.assign((steps + 1) * width, 0.0);
    table.overflowed.assign((steps + 1) * width, 0);

    std::vector<double> cur(width), nxt(width);
    std::vector<char> bad(width, 0);
    for (long j = 0; j <= max_order; ++j)
        cur[static_cast<std::size_t>(j)] = std::pow(theta0, static_cast<double>(j));
    for (std::size_t j = 0; j < width; ++j) table.values[j] = cur[j];

    constexpr double guard = 1e300;
    for (std::size_t k = 1; k <= steps; ++k) {
        for (long m = 0; m <= max_order; ++m) {
            double acc = 0.0;
            bool overflow = false;
            for (long j = 0; j <= m; ++j) {
                if (bad[static_cast<std::size_t>(j)]) {
                    overflow = true;
                    break;
                }
                acc += binom[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)] *
                       coeff[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)] *
                       cur[static_cast<std::size_t>(j)];
            }
            if (!overflow && (!std::isfinite(acc) || std::abs(acc) > guard)) overflow = true;
            nxt[static_cast<std::size_t>(m)] = overflow ? std::numeric_limits<double>::infinity() : acc;
            table.values[k * width + static_cast<std::size_t>(m)] = nxt[static_cast<std::size_t>(m)];
            if (overflow) table.overflowed[k * width + static_cast<std::size_t>(m)] = 1;
        }
        for (long m = 0; m <= max_order; ++m)
            if (table.overflowed[k * width + static_cast<std::size_t>(m)])
                bad[static_cast<std::size_t>(m)] = 1;
        cur.swap(nxt);
    }
    return table;
}

// Smallest even order whose leading transfer coefficient
// 0.5 ((1+eps)^m + (1-2eps)^m) exceeds 1. From that order on the exact
// recursion grows without bound (positive even-order forcing), so the
// steady-state moment does not exist.
inline long divergence_threshold(double epsilon) {
    if (!(epsilon > 0.0 && epsilon < 0.5))
        throw Error(ErrorCode::PreconditionViolated, "epsilon must lie in (0, 0.5)");
    for (long m = 2;; m += 2) {
        const double lead = 0.5 * (std::pow(1.0 + epsilon, static_cast<double>(m)) +
                                   std::pow(1.0 - 2.0 * epsilon, static_cast<double>(m)));
        if (lead > 1.0) return m;
    }
}

// Monte Carlo estimate of E[Theta_K^m] against the exact recursion.
struct CrossCheckReport {
    double exact = 0.0;
    double empirical = 0.0;
    double std_error = 0.0;
    bool within_4se = false;
};

inline CrossCheckReport monte_carlo_cross_check(const TwoPointScalarModel& model, long order,
                                                std::size_t steps, std::size_t n_runs,
                                                std::uint64_t seed, int n_threads = 0,
                                                double theta0 = 0.0) {
    if (order < 0 || order % 2 != 0)
        throw Error(ErrorCode::PreconditionViolated, "order must be a nonnegative even integer");
    const MomentTable table = exact_moment_recursion(model, order, steps, theta0);
    if (table.diverged(steps, order))
        throw Error(ErrorCode::PreconditionViolated,
                    "exact moment diverges; Monte Carlo comparison is meaningless");

    const auto noise = model.as_noise_model();
    const std::vector<int> orders{static_cast<int>(order / 2)};  // ||.||^{2n} with 2n = order
    sim::EnsembleOptions opts;
    opts.recorded_ks = {steps};
    opts.n_threads = n_threads;
    const auto moments = sim::run_ensemble(noise, Vector{theta0},
                                           sim::StepSchedule::constant(model.epsilon), steps,
                                           n_runs, orders, seed, opts);

    CrossCheckReport rep;
    rep.exact = table.at(steps, order);
    rep.empirical = moments.estimate(0, 0);
    rep.std_error = moments.std_error(0, 0);
    rep.within_4se = std::abs(rep.empirical - rep.exact) <= 4.0 * rep.std_error;
    return rep;
}

}  // namespace lsam::counterexample
