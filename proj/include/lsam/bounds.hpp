#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lsam/error.hpp"
#include "lsam/linalg.hpp"
#include "lsam/matrix.hpp"
#include "lsam/schedule.hpp"

namespace lsam::bounds {

inline double log_double_factorial_odd(long n) {
    if (n == 0) return 0.0;
    // (2n-1)!! = 2^n Gamma(n + 1/2) / sqrt(pi)
    return static_cast<double>(n) * std::log(2.0) + std::lgamma(static_cast<double>(n) + 0.5) -
           0.5 * std::log(M_PI);
}

// (2n-1)!! = 1 * 3 * ... * (2n-1); log domain above n = 150 where the direct
// product would overflow.
inline double double_factorial_odd(long n) {
    if (n < 0) throw Error(ErrorCode::PreconditionViolated, "double factorial needs n >= 0");
    if (n == 0) return 1.0;
    if (n <= 150) {
        double p = 1.0;
        for (long i = 1; i <= n; ++i) p *= static_cast<double>(2 * i - 1);
        return p;
    }
    return std::exp(log_double_factorial_odd(n));
}

// Constants feeding the constant-step finite-time bound:
//   kappa1 = 62 gamma_max (1 + b_max)
//   kappa2 = 55 gamma_max (1 + b_max)^3
//   kappa2_tilde = 2 (kappa2 + gamma_max b_max^2)
// plus the two step-validity conditions, eps*tau <= 1/4 and
// kappa1 eps tau + eps gamma_max <= 0.05, recorded as explicit flags.
struct BoundConstants {
    double b_max = 0.0;
    double a_max = 1.0;
    double gamma_min = 0.0;
    double gamma_max = 0.0;
    long tau = 1;
    double epsilon = 0.0;
    double kappa1 = 0.0;
    double kappa2 = 0.0;
    double kappa2_tilde = 0.0;
    bool step_quarter_ok = false;  // eps * tau <= 1/4
    bool step_drift_ok = false;    // kappa1 eps tau + eps gamma_max <= 0.05

    bool valid() const { return step_quarter_ok && step_drift_ok; }
};

inline BoundConstants compute_constants(double b_max, double gamma_max, double gamma_min,
                                        long tau, double epsilon, double a_max = 1.0) {
    if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidStep, "epsilon must be positive");
    if (tau < 1) throw Error(ErrorCode::PreconditionViolated, "tau must be >= 1");
    if (!(gamma_max > 0.0) || !(gamma_min > 0.0))
        throw Error(ErrorCode::PreconditionViolated, "gamma_min and gamma_max must be positive");
    if (b_max < 0.0) throw Error(ErrorCode::PreconditionViolated, "b_max must be >= 0");

    BoundConstants c;
    c.b_max = b_max;
    c.a_max = a_max;
    c.gamma_min = gamma_min;
    c.gamma_max = gamma_max;
    c.tau = tau;
    c.epsilon = epsilon;
    c.kappa1 = 62.0 * gamma_max * (1.0 + b_max);
    const double one_plus_b = 1.0 + b_max;
    c.kappa2 = 55.0 * gamma_max * one_plus_b * one_plus_b * one_plus_b;
    c.kappa2_tilde = 2.0 * (c.kappa2 + gamma_max * b_max * b_max);
    const double et = epsilon * static_cast<double>(tau);
    c.step_quarter_ok = et <= 0.25;
    c.step_drift_ok = c.kappa1 * et + epsilon * gamma_max <= 0.05;
    return c;
}

// Transient part of the mean-square bound:
//   (gamma_max/gamma_min) (1 - 0.9 eps/gamma_max)^{k-tau} (1.5||Theta_0|| + 0.5 b_max)^2
inline double ms_transient(const BoundConstants& c, double theta0_norm, long k) {
    const double base = 1.5 * theta0_norm + 0.5 * c.b_max;
    const double contraction = 1.0 - 0.9 * c.epsilon / c.gamma_max;
    return (c.gamma_max / c.gamma_min) *
           std::pow(contraction, static_cast<double>(k - c.tau)) * base * base;
}

// Steady-state part: kappa2_tilde gamma_max eps tau / (0.9 gamma_min)
inline double ms_steady(const BoundConstants& c) {
    return c.kappa2_tilde * c.gamma_max * c.epsilon * static_cast<double>(c.tau) /
           (0.9 * c.gamma_min);
}

inline double mean_square_bound(const BoundConstants& c, double theta0_norm, long k) {
    if (!c.valid())
        throw Error(ErrorCode::StepInvalid,
                    "step validity flags false (eps*tau or drift condition)");
    if (k < c.tau) throw Error(ErrorCode::KTooSmall, "bound defined for k >= tau");
    return ms_transient(c, theta0_norm, k) + ms_steady(c);
}

// Smallest k >= tau whose transient term is <= (target_multiple - 1) times
// the steady-state term, i.e. the sample count at which the bound is within
// target_multiple of its steady-state value.
inline long sample_complexity(const BoundConstants& c, double theta0_norm,
                              double target_multiple) {
    if (!(target_multiple > 1.0))
        throw Error(ErrorCode::PreconditionViolated, "target_multiple must exceed 1");
    const double threshold = (target_multiple - 1.0) * ms_steady(c);
    const double at_tau = ms_transient(c, theta0_norm, c.tau);
    if (at_tau <= threshold) return c.tau;
    const double contraction = 1.0 - 0.9 * c.epsilon / c.gamma_max;
    double k_real = c.tau + std::log(threshold / at_tau) / std::log(contraction);
    long k = static_cast<long>(std::ceil(k_real));
    // guard against log/pow rounding at the boundary
    while (k > c.tau && ms_transient(c, theta0_norm, k - 1) <= threshold) --k;
    while (ms_transient(c, theta0_norm, k) > threshold) ++k;
    return k;
}

// Higher-moment bound: (2n-1)!! (c_const tau eps)^n, valid from
//   k_n = n tau + (c_tilde/eps) log(1/eps) sum_{m=1}^n 1/m.
// The paper leaves the two constants implicit; the computable defaults below
// are 11 kappa2_tilde gamma_max / gamma_min and 10 gamma_max / 9.
struct HigherMomentBound {
    double bound = 0.0;
    long k_n = 0;
};

inline double default_c_const(const BoundConstants& c) {
    return 11.0 * c.kappa2_tilde * c.gamma_max / c.gamma_min;
}

inline double default_c_tilde(const BoundConstants& c) { return 10.0 * c.gamma_max / 9.0; }

inline HigherMomentBound higher_moment_bound(const BoundConstants& c, long n, double c_const,
                                             double c_tilde) {
    if (n < 1) throw Error(ErrorCode::PreconditionViolated, "moment order n must be >= 1");
    if (!(c_const > 0.0) || !(c_tilde > 0.0))
        throw Error(ErrorCode::PreconditionViolated, "c_const and c_tilde must be positive");
    const double limit =
        (1.0 / (4.0 * std::sqrt(c.gamma_min))) * (1.0 / c.gamma_min + c.b_max);
    const double etn = c.epsilon * static_cast<double>(c.tau) * static_cast<double>(n);
    if (etn > limit)
        throw Error(ErrorCode::MomentOrderTooHigh,
                    "eps tau n = " + std::to_string(etn) + " exceeds " + std::to_string(limit));

    HigherMomentBound out;
    const double unit = c_const * static_cast<double>(c.tau) * c.epsilon;
    if (n > 150) {
        const double log_bound =
            log_double_factorial_odd(n) + static_cast<double>(n) * std::log(unit);
        out.bound = log_bound > 709.0 ? std::numeric_limits<double>::infinity()
                                      : std::exp(log_bound);
    } else {
        out.bound = double_factorial_odd(n) * std::pow(unit, static_cast<double>(n));
    }
    double harmonic = 0.0;
    for (long m = 1; m <= n; ++m) harmonic += 1.0 / static_cast<double>(m);
    out.k_n = static_cast<long>(
        std::ceil(static_cast<double>(n * c.tau) +
                  (c_tilde / c.epsilon) * std::log(1.0 / c.epsilon) * harmonic));
    return out;
}

// Diminishing-step machinery. The schedule must be non-increasing;
// tau_of_delta supplies the mixing time at delta = eps_j.
//   k_star : smallest k with k' - tau_{eps_k'} >= 0 for all k' >= k
//   kappa_s: max over k >= k_star of eps_{k - tau_{eps_k}} / eps_k
//   kappa2_check = 2 kappa2 kappa_s + 2 gamma_max b_max^2
//   k_hat  : smallest k >= k_star with k eps_0 <= 1/4 and
//            kappa1 kappa_s eps_k tau_{eps_k} + gamma_max eps_k <= 0.05
struct DiminishingConstants {
    long k_star = 0;
    double kappa_s = 1.0;
    double kappa2_check = 0.0;
    long k_hat = 0;
    std::vector<long> taus;  // tau_{eps_j} for j = 0..horizon-1
};

inline DiminishingConstants make_diminishing_constants(
    const sim::StepSchedule& schedule, std::size_t horizon,
    const std::function<long(double)>& tau_of_delta, double kappa1, double kappa2,
    double gamma_max, double b_max) {
    if (schedule.is_constant())
        throw Error(ErrorCode::ScheduleInvalid, "diminishing analysis needs a sequence schedule");
    if (schedule.length() < horizon)
        throw Error(ErrorCode::ScheduleInvalid, "schedule shorter than the horizon");
    if (horizon < 2) throw Error(ErrorCode::PreconditionViolated, "horizon too short");

    DiminishingConstants dc;
    dc.taus.resize(horizon);
    for (std::size_t j = 0; j < horizon; ++j) dc.taus[j] = tau_of_delta(schedule.at(j));

    // scan backward for the last k with k - tau_{eps_k} < 0
    long k_star = 0;
    for (std::size_t k = 0; k < horizon; ++k)
        if (static_cast<long>(k) - dc.taus[k] < 0) k_star = static_cast<long>(k) + 1;
    if (k_star >= static_cast<long>(horizon))
        throw Error(ErrorCode::ScheduleInvalid, "k - tau never becomes nonnegative in horizon");
    dc.k_star = k_star;

    double kappa_s = 0.0;
    for (std::size_t k = static_cast<std::size_t>(k_star); k < horizon; ++k) {
        const long lag = static_cast<long>(k) - dc.taus[k];
        kappa_s = std::max(kappa_s, schedule.at(static_cast<std::size_t>(lag)) / schedule.at(k));
    }
    dc.kappa_s = kappa_s;
    dc.kappa2_check = 2.0 * kappa2 * kappa_s + 2.0 * gamma_max * b_max * b_max;

    const double eps0 = schedule.at(0);
    long k_hat = -1;
    for (long k = std::max<long>(dc.k_star, 1); k < static_cast<long>(horizon); ++k) {
        if (static_cast<double>(k) * eps0 > 0.25) break;
        const double eps_k = schedule.at(static_cast<std::size_t>(k));
        const double drift =
            kappa1 * kappa_s * eps_k * static_cast<double>(dc.taus[static_cast<std::size_t>(k)]) +
            gamma_max * eps_k;
        if (drift <= 0.05) {
            k_hat = k;
            break;
        }
    }
    if (k_hat < 0)
        throw Error(ErrorCode::ScheduleInvalid,
                    "no k_hat satisfies the three step-validity conditions");
    dc.k_hat = k_hat;
    return dc;
}

// Finite-time bound for diminishing steps at a single k >= k_hat:
//   (gamma_max/gamma_min)(1.5||Theta_0|| + 0.5 b_max)^2 prod_{j=k_hat}^{k-1} a_j
//     + kappa2_check sum_{j=k_hat}^{k-1} b_j prod_{l=j+1}^{k-1} a_l,
// a_j = 1 - 0.9 eps_j / gamma_max, b_j = eps_j^2 tau_{eps_j}.
inline double diminishing_bound(const DiminishingConstants& dc,
                                const sim::StepSchedule& schedule, double theta0_norm,
                                double b_max, double gamma_min, double gamma_max, long k) {
    if (k < dc.k_hat) throw Error(ErrorCode::KTooSmall, "bound defined for k >= k_hat");
    if (static_cast<std::size_t>(k) > dc.taus.size())
        throw Error(ErrorCode::ScheduleInvalid, "k beyond precomputed horizon");
    const double base = 1.5 * theta0_norm + 0.5 * b_max;
    double prod = 1.0;
    double weighted = 0.0;  // sum of b_j * prod_{l>j} a_l, built by the forward recurrence
    for (long j = dc.k_hat; j < k; ++j) {
        const double eps = schedule.at(static_cast<std::size_t>(j));
        const double a = 1.0 - 0.9 * eps / gamma_max;
        const double b = eps * eps * static_cast<double>(dc.taus[static_cast<std::size_t>(j)]);
        weighted = weighted * a + b;
        prod *= a;
    }
    return (gamma_max / gamma_min) * base * base * prod + dc.kappa2_check * weighted;
}

// Same bound evaluated on an increasing grid of ks in one forward pass.
inline std::vector<double> diminishing_bound_curve(const DiminishingConstants& dc,
                                                   const sim::StepSchedule& schedule,
                                                   double theta0_norm, double b_max,
                                                   double gamma_min, double gamma_max,
                                                   std::span<const std::size_t> ks) {
    std::vector<double> out;
    out.reserve(ks.size());
    const double base = 1.5 * theta0_norm + 0.5 * b_max;
    double prod = 1.0;
    double weighted = 0.0;
    long j = dc.k_hat;
    for (std::size_t k : ks) {
        if (static_cast<long>(k) < dc.k_hat)
            throw Error(ErrorCode::KTooSmall, "grid k below k_hat");
        for (; j < static_cast<long>(k); ++j) {
            const double eps = schedule.at(static_cast<std::size_t>(j));
            const double a = 1.0 - 0.9 * eps / gamma_max;
            const double b = eps * eps * static_cast<double>(dc.taus[static_cast<std::size_t>(j)]);
            weighted = weighted * a + b;
            prod *= a;
        }
        out.push_back((gamma_max / gamma_min) * base * base * prod + dc.kappa2_check * weighted);
    }
    return out;
}

// Negative-definite specialization: when the symmetric part of A_bar is
// negative definite, P = I works (gamma_min = gamma_max = 1) and the
// contraction factor uses rho = -lambda_max((A + A^T)/2) > 0:
//   (1 - 0.9 rho eps)^{k-tau} (1.5||Theta_0|| + 0.5 b_max)^2 + kappa2_tilde eps tau / 0.9
inline double neg_def_bound(const Matrix& a_bar, double b_max, double theta0_norm, long k,
                            long tau, double epsilon) {
    const std::size_t d = a_bar.rows();
    Matrix sym(d, d);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) sym(i, j) = 0.5 * (a_bar(i, j) + a_bar(j, i));
    const auto [lo, hi] = linalg::eig_extremes_symmetric(sym);
    (void)lo;
    if (!(hi < 0.0))
        throw Error(ErrorCode::NotNegativeDefinite,
                    "largest eigenvalue of the symmetric part is " + std::to_string(hi));
    const double rho = -hi;

    BoundConstants c = compute_constants(b_max, 1.0, 1.0, tau, epsilon);
    if (!c.valid())
        throw Error(ErrorCode::StepInvalid, "step validity fails with P = I constants");
    if (k < tau) throw Error(ErrorCode::KTooSmall, "bound defined for k >= tau");
    const double base = 1.5 * theta0_norm + 0.5 * b_max;
    return std::pow(1.0 - 0.9 * rho * epsilon, static_cast<double>(k - tau)) * base * base +
           c.kappa2_tilde * epsilon * static_cast<double>(tau) / 0.9;
}

}  // namespace lsam::bounds
