#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "lsam/error.hpp"
#include "lsam/markov.hpp"
#include "lsam/matrix.hpp"
#include "lsam/rng.hpp"
#include "lsam/schedule.hpp"

namespace lsam::sim {

// Noise source over a finite Markov model. A source exposes:
//   reset(rng, forced_state)       -- draw X_0 (or force it)
//   state()                        -- current state index
//   accumulate_update(theta, out)  -- out = A(X_k) theta + b(X_k)
//   advance(rng)                   -- move to X_{k+1}
// The simulation loop is templated on the source so TD(lambda)'s
// trace-augmented dynamics (uncountable state) can reuse it.
class FiniteNoiseSource {
  public:
    explicit FiniteNoiseSource(const markov::MarkovNoiseModel& model)
        : n_states_(model.chain.n_states()), dim_(model.dim) {
        const Vector pi = markov::stationary_distribution(model.chain);
        cumulative_pi_.resize(pi.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < pi.size(); ++i) {
            acc += pi[i];
            cumulative_pi_[i] = acc;
        }
        cumulative_pi_.back() = acc;
        // flatten per-state tables for the hot loop
        a_flat_.resize(n_states_ * dim_ * dim_);
        b_flat_.resize(n_states_ * dim_);
        cumulative_rows_.resize(n_states_ * n_states_);
        for (std::size_t x = 0; x < n_states_; ++x) {
            const Matrix& a = model.a_of[x];
            for (std::size_t i = 0; i < dim_; ++i)
                for (std::size_t j = 0; j < dim_; ++j)
                    a_flat_[(x * dim_ + i) * dim_ + j] = a(i, j);
            for (std::size_t i = 0; i < dim_; ++i) b_flat_[x * dim_ + i] = model.b_of[x][i];
            const auto row = model.chain.cumulative_row(x);
            for (std::size_t j = 0; j < n_states_; ++j) cumulative_rows_[x * n_states_ + j] = row[j];
        }
    }

    std::size_t dim() const { return dim_; }

    void reset(Rng& rng, std::optional<int> forced_state) {
        state_ = forced_state ? *forced_state
                              : rng.categorical_from_cumulative(cumulative_pi_);
        if (state_ < 0 || state_ >= static_cast<int>(n_states_))
            throw Error(ErrorCode::PreconditionViolated, "initial state out of range");
    }

    int state() const { return state_; }

    void accumulate_update(std::span<const double> theta, std::span<double> out) const {
        const double* a = a_flat_.data() + static_cast<std::size_t>(state_) * dim_ * dim_;
        const double* b = b_flat_.data() + static_cast<std::size_t>(state_) * dim_;
        for (std::size_t i = 0; i < dim_; ++i) {
            double acc = b[i];
            const double* row = a + i * dim_;
            for (std::size_t j = 0; j < dim_; ++j) acc += row[j] * theta[j];
            out[i] = acc;
        }
    }

    void advance(Rng& rng) {
        const double* row = cumulative_rows_.data() + static_cast<std::size_t>(state_) * n_states_;
        const double u = rng.uniform01() * row[n_states_ - 1];
        int next = static_cast<int>(n_states_) - 1;
        for (std::size_t j = 0; j + 1 < n_states_; ++j)
            if (u < row[j]) {
                next = static_cast<int>(j);
                break;
            }
        state_ = next;
    }

  private:
    std::size_t n_states_ = 0, dim_ = 0;
    std::vector<double> cumulative_pi_;
    std::vector<double> a_flat_;
    std::vector<double> b_flat_;
    std::vector<double> cumulative_rows_;
    int state_ = 0;
};

struct Trajectory {
    std::vector<Vector> theta;     // Theta_0 .. Theta_K
    std::vector<int> noise_path;   // X_0 .. X_{K-1}
    StepSchedule schedule = StepSchedule::constant(1.0);
};

// One path of Theta_{k+1} = Theta_k + eps_k (A(X_k) Theta_k + b(X_k)),
// deterministic given (seed, inputs).
template <class Noise>
Trajectory simulate_with(Noise noise, const Vector& theta0, const StepSchedule& schedule,
                         std::size_t steps, std::uint64_t seed,
                         std::optional<int> x0 = std::nullopt) {
    if (steps < 1) throw Error(ErrorCode::PreconditionViolated, "need at least one step");
    if (!schedule.is_constant() && schedule.length() < steps)
        throw Error(ErrorCode::ScheduleInvalid, "schedule shorter than the horizon");
    Rng rng(seed);
    noise.reset(rng, x0);

    Trajectory traj;
    traj.schedule = schedule;
    traj.theta.reserve(steps + 1);
    traj.noise_path.reserve(steps);
    Vector theta = theta0;
    Vector delta(theta.size());
    traj.theta.push_back(theta);
    for (std::size_t k = 0; k < steps; ++k) {
        traj.noise_path.push_back(noise.state());
        noise.accumulate_update(theta, delta);
        const double eps = schedule.at(k);
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += eps * delta[i];
        traj.theta.push_back(theta);
        noise.advance(rng);
    }
    return traj;
}

inline Trajectory simulate(const markov::MarkovNoiseModel& model, const Vector& theta0,
                           const StepSchedule& schedule, std::size_t steps, std::uint64_t seed,
                           std::optional<int> x0 = std::nullopt) {
    if (theta0.size() != model.dim)
        throw Error(ErrorCode::PreconditionViolated, "theta0 dimension mismatch");
    return simulate_with(FiniteNoiseSource(model), theta0, schedule, steps, seed, x0);
}

// Empirical moments of ||Theta_k||^{2n} over a seeded ensemble.
struct EnsembleMoments {
    std::vector<std::size_t> recorded_ks;
    std::vector<int> orders;
    // row-major [k_index][order_index]
    std::vector<double> estimates;
    std::vector<double> std_errors;
    std::vector<char> overflowed;  // 1 when some sample exceeded the double range
    std::size_t n_runs = 0;
    std::uint64_t base_seed = 0;

    std::size_t index(std::size_t ki, std::size_t oi) const { return ki * orders.size() + oi; }
    double estimate(std::size_t ki, std::size_t oi) const { return estimates[index(ki, oi)]; }
    double std_error(std::size_t ki, std::size_t oi) const { return std_errors[index(ki, oi)]; }
};

namespace detail {

// Pairwise (cascade) summation over a contiguous range; fixed order makes the
// reduction independent of thread count while keeping rounding error
// O(log n) over 1e5+ runs.
inline double pairwise_sum(std::span<const double> xs) {
    if (xs.size() <= 2) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.subspan(0, half)) + pairwise_sum(xs.subspan(half));
}

// ||theta||^{2n} with a log-domain guard; +inf when the value exceeds the
// double range even in the log domain.
inline double norm_power(double norm_sq, int n) {
    if (n == 0) return 1.0;
    if (n == 1) return norm_sq;
    if (norm_sq == 0.0) return 0.0;
    const double log_val = static_cast<double>(n) * std::log(norm_sq);
    if (log_val > 707.0) return std::numeric_limits<double>::infinity();
    return std::pow(norm_sq, static_cast<double>(n));
}

}  // namespace detail

struct EnsembleOptions {
    std::vector<std::size_t> recorded_ks;  // empty = every k in [0, K]
    int n_threads = 0;                     // 0 = hardware concurrency
    std::optional<int> x0;                 // forced initial state for every run
    static constexpr std::size_t block_size = 256;  // runs per reduction block
};

// Runs n_runs independent trajectories; trajectory r uses the seed
// derive_stream_seed(base_seed, r). Results are reduced blockwise in run
// order (block size fixed), so the output is bit-identical for any thread
// count.
template <class Noise>
EnsembleMoments run_ensemble_with(const Noise& prototype, const Vector& theta0,
                                  const StepSchedule& schedule, std::size_t steps,
                                  std::size_t n_runs, std::span<const int> orders,
                                  std::uint64_t base_seed, EnsembleOptions options = {}) {
    if (n_runs < 2) throw Error(ErrorCode::PreconditionViolated, "need n_runs >= 2");
    if (orders.empty()) throw Error(ErrorCode::PreconditionViolated, "orders must be non-empty");
    for (int n : orders)
        if (n < 0) throw Error(ErrorCode::PreconditionViolated, "moment orders must be >= 0");
    if (!schedule.is_constant() && schedule.length() < steps)
        throw Error(ErrorCode::ScheduleInvalid, "schedule shorter than the horizon");

    EnsembleMoments out;
    out.orders.assign(orders.begin(), orders.end());
    if (options.recorded_ks.empty()) {
        out.recorded_ks.resize(steps + 1);
        for (std::size_t k = 0; k <= steps; ++k) out.recorded_ks[k] = k;
    } else {
        out.recorded_ks = options.recorded_ks;
        for (std::size_t i = 0; i < out.recorded_ks.size(); ++i) {
            if (out.recorded_ks[i] > steps)
                throw Error(ErrorCode::PreconditionViolated, "recorded k beyond horizon");
            if (i > 0 && out.recorded_ks[i] <= out.recorded_ks[i - 1])
                throw Error(ErrorCode::PreconditionViolated, "recorded ks must be increasing");
        }
    }
    out.n_runs = n_runs;
    out.base_seed = base_seed;

    const std::size_t n_cells = out.recorded_ks.size() * out.orders.size();
    const std::size_t n_blocks =
        (n_runs + EnsembleOptions::block_size - 1) / EnsembleOptions::block_size;
    // per block and cell: pairwise sum (for the mean) plus Welford mean/M2
    // (for the standard error; immune to cancellation when samples coincide)
    std::vector<double> block_sums(n_blocks * n_cells, 0.0);
    std::vector<double> block_means(n_blocks * n_cells, 0.0);
    std::vector<double> block_m2(n_blocks * n_cells, 0.0);

    const int hw = static_cast<int>(std::thread::hardware_concurrency());
    const int n_threads =
        options.n_threads > 0 ? options.n_threads : std::max(1, hw);

    std::atomic<std::size_t> next_block{0};
    const auto worker = [&]() {
        const std::size_t d = theta0.size();
        Vector theta(d), delta(d);
        std::vector<double> cell_values(n_cells * EnsembleOptions::block_size);
        for (;;) {
            const std::size_t blk = next_block.fetch_add(1);
            if (blk >= n_blocks) return;
            const std::size_t run_begin = blk * EnsembleOptions::block_size;
            const std::size_t run_end = std::min(run_begin + EnsembleOptions::block_size, n_runs);
            const std::size_t runs_here = run_end - run_begin;

            for (std::size_t r = run_begin; r < run_end; ++r) {
                Rng rng(derive_stream_seed(base_seed, r));
                Noise noise = prototype;
                noise.reset(rng, options.x0);
                theta = theta0;
                std::size_t rec_idx = 0;
                for (std::size_t k = 0;; ++k) {
                    if (rec_idx < out.recorded_ks.size() && out.recorded_ks[rec_idx] == k) {
                        const double nsq = norm2_squared(theta);
                        for (std::size_t oi = 0; oi < out.orders.size(); ++oi) {
                            const double v = detail::norm_power(nsq, out.orders[oi]);
                            cell_values[(rec_idx * out.orders.size() + oi) *
                                            EnsembleOptions::block_size +
                                        (r - run_begin)] = v;
                        }
                        ++rec_idx;
                        if (rec_idx == out.recorded_ks.size()) break;
                    }
                    if (k == steps) break;
                    noise.accumulate_update(theta, delta);
                    const double eps = schedule.at(k);
                    for (std::size_t i = 0; i < d; ++i) theta[i] += eps * delta[i];
                    noise.advance(rng);
                }
            }
            for (std::size_t cell = 0; cell < n_cells; ++cell) {
                std::span<const double> vals(cell_values.data() + cell * EnsembleOptions::block_size,
                                             runs_here);
                block_sums[blk * n_cells + cell] = detail::pairwise_sum(vals);
                double mean = 0.0, m2 = 0.0;
                for (std::size_t i = 0; i < runs_here; ++i) {
                    const double delta = vals[i] - mean;
                    mean += delta / static_cast<double>(i + 1);
                    m2 += delta * (vals[i] - mean);
                }
                block_means[blk * n_cells + cell] = mean;
                block_m2[blk * n_cells + cell] = m2;
            }
        }
    };

    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(n_threads));
        for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    out.estimates.resize(n_cells);
    out.std_errors.resize(n_cells);
    out.overflowed.assign(n_cells, 0);
    std::vector<double> per_block(n_blocks);
    for (std::size_t cell = 0; cell < n_cells; ++cell) {
        for (std::size_t b = 0; b < n_blocks; ++b) per_block[b] = block_sums[b * n_cells + cell];
        const double total = detail::pairwise_sum(per_block);
        const double r = static_cast<double>(n_runs);
        const double mean = total / r;
        if (!std::isfinite(mean)) {
            out.overflowed[cell] = 1;
            out.estimates[cell] = std::numeric_limits<double>::infinity();
            out.std_errors[cell] = std::numeric_limits<double>::infinity();
            continue;
        }
        out.estimates[cell] = mean;

        // Chan merge of the per-block Welford states, in block order
        double count = 0.0, mu = 0.0, m2 = 0.0;
        for (std::size_t b = 0; b < n_blocks; ++b) {
            const std::size_t run_begin = b * EnsembleOptions::block_size;
            const double nb = static_cast<double>(
                std::min(EnsembleOptions::block_size, n_runs - run_begin));
            const double delta = block_means[b * n_cells + cell] - mu;
            const double merged = count + nb;
            m2 += block_m2[b * n_cells + cell] + delta * delta * count * nb / merged;
            mu += delta * nb / merged;
            count = merged;
        }
        const double var = std::max(0.0, m2 / (r - 1.0));
        const double se = std::sqrt(var / r);
        out.std_errors[cell] = std::isfinite(se) ? se : std::numeric_limits<double>::infinity();
    }
    return out;
}

inline EnsembleMoments run_ensemble(const markov::MarkovNoiseModel& model, const Vector& theta0,
                                    const StepSchedule& schedule, std::size_t steps,
                                    std::size_t n_runs, std::span<const int> orders,
                                    std::uint64_t base_seed, EnsembleOptions options = {}) {
    if (theta0.size() != model.dim)
        throw Error(ErrorCode::PreconditionViolated, "theta0 dimension mismatch");
    return run_ensemble_with(FiniteNoiseSource(model), theta0, schedule, steps, n_runs, orders,
                             base_seed, std::move(options));
}

// Path-wise check of the three tau-step displacement inequalities
// (the third in its tau^2 form):
//   ||Theta_tau - Theta_0||   <= 2 eps tau ||Theta_0|| + 2 eps tau b_max
//   ||Theta_tau - Theta_0||   <= 4 eps tau ||Theta_tau|| + 4 eps tau b_max
//   ||Theta_tau - Theta_0||^2 <= 32 eps^2 tau^2 ||Theta_tau||^2 + 32 eps^2 tau^2 b_max^2
// Requires eps * tau <= 1/4 and a model with A_max <= 1 (caller's obligation).
struct DisplacementReport {
    double lhs = 0.0;          // ||Theta_tau - Theta_0||
    double rhs_initial = 0.0;  // bound in terms of Theta_0
    double rhs_final = 0.0;    // bound in terms of Theta_tau
    double lhs_sq = 0.0;
    double rhs_sq = 0.0;
    bool holds_initial = false;
    bool holds_final = false;
    bool holds_square = false;
    bool all_hold() const { return holds_initial && holds_final && holds_square; }
};

inline DisplacementReport check_lemma1(const Trajectory& traj, std::size_t tau, double b_max) {
    if (tau < 1 || tau >= traj.theta.size())
        throw Error(ErrorCode::PreconditionViolated, "tau outside the trajectory");
    const double eps = traj.schedule.max_over(tau);
    if (eps * static_cast<double>(tau) > 0.25)
        throw Error(ErrorCode::PreconditionViolated, "requires eps * tau <= 1/4");

    const Vector& start = traj.theta.front();
    const Vector& end = traj.theta[tau];
    Vector diff(start.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = end[i] - start[i];

    DisplacementReport rep;
    rep.lhs = norm2(diff);
    const double et = eps * static_cast<double>(tau);
    rep.rhs_initial = 2.0 * et * norm2(start) + 2.0 * et * b_max;
    rep.rhs_final = 4.0 * et * norm2(end) + 4.0 * et * b_max;
    rep.lhs_sq = rep.lhs * rep.lhs;
    rep.rhs_sq = 32.0 * et * et * norm2_squared(end) + 32.0 * et * et * b_max * b_max;
    rep.holds_initial = rep.lhs <= rep.rhs_initial + 1e-12;
    rep.holds_final = rep.lhs <= rep.rhs_final + 1e-12;
    rep.holds_square = rep.lhs_sq <= rep.rhs_sq + 1e-12;
    return rep;
}

// Path-wise quadratic-form bound on every step:
//   |(Theta_{k+1}-Theta_k)^T P (Theta_{k+1}-Theta_k)|
//     <= 2 eps_k^2 gamma_max (||Theta_k||^2 + b_max^2).
// Requires A_max <= 1 for the model that generated the trajectory.
struct QuadraticDriftReport {
    std::size_t violations = 0;
    double worst_ratio = 0.0;  // max over steps of lhs / rhs
};

inline QuadraticDriftReport check_lemma2(const Trajectory& traj, const Matrix& p,
                                         double gamma_max, double b_max) {
    QuadraticDriftReport rep;
    const std::size_t d = traj.theta.front().size();
    Vector diff(d), pd(d);
    for (std::size_t k = 0; k + 1 < traj.theta.size(); ++k) {
        const Vector& cur = traj.theta[k];
        const Vector& nxt = traj.theta[k + 1];
        for (std::size_t i = 0; i < d; ++i) diff[i] = nxt[i] - cur[i];
        for (std::size_t i = 0; i < d; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += p(i, j) * diff[j];
            pd[i] = acc;
        }
        const double lhs = std::abs(dot(diff, pd));
        const double eps = traj.schedule.at(k);
        const double rhs =
            2.0 * eps * eps * gamma_max * (norm2_squared(cur) + b_max * b_max);
        if (lhs > rhs + 1e-12) ++rep.violations;
        if (rhs > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, lhs / rhs);
    }
    return rep;
}

}  // namespace lsam::sim
