#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "lsam/error.hpp"
#include "lsam/linalg.hpp"
#include "lsam/matrix.hpp"

namespace lsam::markov {

// Finite Markov chain with a row-stochastic transition matrix.
class FiniteChain {
  public:
    explicit FiniteChain(Matrix transition) : transition_(std::move(transition)) {
        const std::size_t n = transition_.rows();
        if (n == 0 || transition_.cols() != n)
            throw Error(ErrorCode::NonStochastic, "transition matrix must be square and non-empty");
        for (std::size_t i = 0; i < n; ++i) {
            double row_sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double p = transition_(i, j);
                if (p < -1e-15 || p > 1.0 + 1e-12)
                    throw Error(ErrorCode::NonStochastic, "entry outside [0, 1] at row " + std::to_string(i));
                row_sum += p;
            }
            if (std::abs(row_sum - 1.0) > 1e-12)
                throw Error(ErrorCode::NonStochastic,
                            "row " + std::to_string(i) + " sums to " + std::to_string(row_sum));
        }
        cumulative_rows_.resize(n * n);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += transition_(i, j);
                cumulative_rows_[i * n + j] = acc;
            }
            cumulative_rows_[i * n + n - 1] = acc;  // keep the exact total as the last entry
        }
    }

    std::size_t n_states() const { return transition_.rows(); }
    const Matrix& transition() const { return transition_; }
    std::span<const double> cumulative_row(std::size_t i) const {
        return {cumulative_rows_.data() + i * n_states(), n_states()};
    }

    bool is_irreducible() const {
        const std::size_t n = n_states();
        const auto reachable = [&](bool forward) {
            std::vector<char> seen(n, 0);
            std::vector<std::size_t> stack{0};
            seen[0] = 1;
            while (!stack.empty()) {
                const std::size_t u = stack.back();
                stack.pop_back();
                for (std::size_t v = 0; v < n; ++v) {
                    const double p = forward ? transition_(u, v) : transition_(v, u);
                    if (p > 0.0 && !seen[v]) {
                        seen[v] = 1;
                        stack.push_back(v);
                    }
                }
            }
            return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
        };
        return reachable(true) && reachable(false);
    }

    // Period via gcd of (level[u] + 1 - level[v]) over edges of one BFS tree;
    // valid for irreducible chains.
    bool is_aperiodic() const {
        if (!is_irreducible()) return false;
        const std::size_t n = n_states();
        std::vector<long> level(n, -1);
        std::vector<std::size_t> queue{0};
        level[0] = 0;
        for (std::size_t qi = 0; qi < queue.size(); ++qi) {
            const std::size_t u = queue[qi];
            for (std::size_t v = 0; v < n; ++v)
                if (transition_(u, v) > 0.0 && level[v] < 0) {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
        }
        long g = 0;
        for (std::size_t u = 0; u < n; ++u)
            for (std::size_t v = 0; v < n; ++v)
                if (transition_(u, v) > 0.0) g = std::gcd(g, level[u] + 1 - level[v]);
        return std::abs(g) == 1;
    }

  private:
    Matrix transition_;
    std::vector<double> cumulative_rows_;
};

// pi Gamma = pi, sum(pi) = 1, via the direct linear solve (replace one
// balance equation with the normalization row).
inline Vector stationary_distribution(const FiniteChain& chain) {
    if (!chain.is_irreducible())
        throw Error(ErrorCode::NotIrreducible, "stationary distribution requires irreducibility");
    const std::size_t n = chain.n_states();
    Matrix system = chain.transition().transposed();
    for (std::size_t i = 0; i < n; ++i) system(i, i) -= 1.0;
    for (std::size_t j = 0; j < n; ++j) system(0, j) = 1.0;
    Vector rhs(n, 0.0);
    rhs[0] = 1.0;
    Vector pi = solve_linear(std::move(system), std::move(rhs));

    // one step of iterative refinement keeps the residual at round-off even
    // for poorly scaled chains
    {
        Matrix system2 = chain.transition().transposed();
        for (std::size_t i = 0; i < n; ++i) system2(i, i) -= 1.0;
        for (std::size_t j = 0; j < n; ++j) system2(0, j) = 1.0;
        Vector res(n, 0.0);
        res[0] = 1.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) res[i] -= system2(i, j) * pi[j];
        const Vector corr = solve_linear(std::move(system2), std::move(res));
        for (std::size_t i = 0; i < n; ++i) pi[i] += corr[i];
    }

    double residual = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < n; ++i) col += pi[i] * chain.transition()(i, j);
        residual = std::max(residual, std::abs(col - pi[j]));
    }
    if (residual > 1e-12)
        throw Error(ErrorCode::SingularSystem, "stationary residual " + std::to_string(residual));
    for (double p : pi)
        if (!(p > 0.0))
            throw Error(ErrorCode::NotIrreducible, "stationary distribution has a non-positive entry");
    return pi;
}

// Finite-state noise model driving the linear recursion: per-state matrix
// A(x) and vector b(x).
struct MarkovNoiseModel {
    FiniteChain chain;
    std::vector<Matrix> a_of;
    std::vector<Vector> b_of;
    std::size_t dim = 0;

    MarkovNoiseModel(FiniteChain c, std::vector<Matrix> a, std::vector<Vector> b)
        : chain(std::move(c)), a_of(std::move(a)), b_of(std::move(b)) {
        if (a_of.size() != chain.n_states() || b_of.size() != chain.n_states())
            throw Error(ErrorCode::ConfigInvalid, "need one A(x) and b(x) per state");
        dim = a_of.front().rows();
        for (const auto& m : a_of)
            if (m.rows() != dim || m.cols() != dim)
                throw Error(ErrorCode::ConfigInvalid, "A(x) dimensions disagree");
        for (const auto& v : b_of)
            if (v.size() != dim) throw Error(ErrorCode::ConfigInvalid, "b(x) dimensions disagree");
        for (const auto& m : a_of)
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t j = 0; j < dim; ++j)
                    if (!std::isfinite(m(i, j)))
                        throw Error(ErrorCode::ConfigInvalid, "A(x) has a non-finite entry");
        for (const auto& v : b_of)
            for (double x : v)
                if (!std::isfinite(x)) throw Error(ErrorCode::ConfigInvalid, "b(x) has a non-finite entry");
    }

    double a_max() const {
        double m = 0.0;
        for (const auto& a : a_of) m = std::max(m, linalg::induced_2norm(a));
        return m;
    }
    double b_max() const {
        double m = 0.0;
        for (const auto& b : b_of) m = std::max(m, norm2(b));
        return m;
    }

    Matrix stationary_a_mean(const Vector& pi) const {
        Matrix abar(dim, dim);
        for (std::size_t x = 0; x < a_of.size(); ++x) {
            Matrix w = a_of[x];
            w *= pi[x];
            abar += w;
        }
        return abar;
    }
    Vector stationary_b_mean(const Vector& pi) const {
        Vector bbar(dim, 0.0);
        for (std::size_t x = 0; x < b_of.size(); ++x)
            for (std::size_t i = 0; i < dim; ++i) bbar[i] += pi[x] * b_of[x][i];
        return bbar;
    }
};

// Exact conditional means E[A(X_k) | X_0 = i] and E[b(X_k) | X_0 = i] for
// every i, via the k-th matrix power (binary exponentiation, no sampling).
struct ConditionalMeans {
    std::vector<Matrix> a_mean;  // per initial state
    std::vector<Vector> b_mean;
};

inline Matrix matrix_power(const Matrix& m, long k) {
    Matrix result = Matrix::identity(m.rows());
    Matrix base = m;
    for (long e = k; e > 0; e >>= 1) {
        if (e & 1) result = result * base;
        if (e > 1) base = base * base;
    }
    return result;
}

inline ConditionalMeans conditional_means(const MarkovNoiseModel& model, long k) {
    if (k < 0) throw Error(ErrorCode::PreconditionViolated, "conditional_means: k must be >= 0");
    const std::size_t n = model.chain.n_states();
    const Matrix pk = matrix_power(model.chain.transition(), k);
    ConditionalMeans out;
    out.a_mean.reserve(n);
    out.b_mean.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Matrix am(model.dim, model.dim);
        Vector bm(model.dim, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            const double w = pk(i, j);
            if (w == 0.0) continue;
            Matrix t = model.a_of[j];
            t *= w;
            am += t;
            for (std::size_t r = 0; r < model.dim; ++r) bm[r] += w * model.b_of[j][r];
        }
        out.a_mean.push_back(std::move(am));
        out.b_mean.push_back(std::move(bm));
    }
    return out;
}

// Worst-case (over initial states) deviation of the conditional means from
// their stationary values, computed exactly one step at a time. deviations[k]
// holds the value for step k+1.
struct DeviationProfile {
    std::vector<double> deviations;
    int certified_at = -1;      // first step index (1-based) of the qualifying run
    bool tail_certified = false;
};

namespace detail {

struct DeviationScan {
    Matrix powers;        // Gamma^k rows, updated in place
    const MarkovNoiseModel* model;
    Matrix a_bar;

    explicit DeviationScan(const MarkovNoiseModel& m, const Vector& pi)
        : powers(Matrix::identity(m.chain.n_states())), model(&m), a_bar(m.stationary_a_mean(pi)) {}

    // magnitude of the quantities whose differences we measure; deviations
    // below rounding noise relative to this count as zero
    double model_scale() const {
        double s = frobenius_norm(a_bar);
        for (const auto& a : model->a_of) s = std::max(s, frobenius_norm(a));
        for (const auto& b : model->b_of) s = std::max(s, norm2(b));
        return std::max(s, 1e-300);
    }

    // advance to the next step and return max_i of the A- and b-deviations
    double step() {
        powers = powers * model->chain.transition();
        const std::size_t n = model->chain.n_states();
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            Matrix am(model->dim, model->dim);
            Vector bm(model->dim, 0.0);
            for (std::size_t j = 0; j < n; ++j) {
                const double w = powers(i, j);
                if (w == 0.0) continue;
                Matrix t = model->a_of[j];
                t *= w;
                am += t;
                for (std::size_t r = 0; r < model->dim; ++r) bm[r] += w * model->b_of[j][r];
            }
            am -= a_bar;
            worst = std::max(worst, linalg::induced_2norm(am));
            worst = std::max(worst, norm2(bm));
        }
        return worst;
    }
};

}  // namespace detail

// Assumption-1 mixing check as a decidable procedure: deviations are computed
// exactly by matrix powers for k = 1..k_cap; tau_delta is the first step from
// which they stay <= delta through the cap, and the profile's tail must still
// be decaying over the last `window` steps (geometric-tail certificate), so
// the "for all k >= tau" quantifier is justified beyond the cap. Deviations
// at the rounding-noise plateau count as decayed.
class MixingAnalysis {
  public:
    MixingAnalysis(const MarkovNoiseModel& model, const Vector& pi, long k_cap = 10000,
                   int window = 10)
        : scan_(model, pi), k_cap_(k_cap), window_(window) {
        if (k_cap_ < window_ + 1)
            throw Error(ErrorCode::PreconditionViolated, "k_cap too small for the tail window");
        const Vector bbar = model.stationary_b_mean(pi);
        if (norm2(bbar) > 1e-10)
            throw Error(ErrorCode::SteadyStateBiased,
                        "stationary mean of b is " + std::to_string(norm2(bbar)) + ", expected 0");
    }

    // Smallest tau >= 1 such that deviations stay <= delta for all
    // k in [tau, k_cap], with the tail certificate.
    long tau_for(double delta) {
        if (!(delta > 0.0)) throw Error(ErrorCode::PreconditionViolated, "delta must be positive");
        ensure_profile();
        if (!tail_certified_)
            throw Error(ErrorCode::MixingExceedsCap,
                        "deviation tail not decaying at k_cap = " + std::to_string(k_cap_));
        // suffix_max_ is non-increasing: binary search the first index <= delta
        const auto first = std::lower_bound(suffix_max_.begin(), suffix_max_.end(), delta,
                                            [](double s, double d) { return s > d; });
        if (first == suffix_max_.end())
            throw Error(ErrorCode::MixingExceedsCap,
                        "deviations never fall below delta = " + std::to_string(delta) +
                            " within k_cap = " + std::to_string(k_cap_));
        return static_cast<long>(first - suffix_max_.begin()) + 1;
    }

    double deviation_at(long k) {
        ensure_profile();
        return deviations_.at(static_cast<std::size_t>(k - 1));
    }

    const std::vector<double>& deviations() {
        ensure_profile();
        return deviations_;
    }
    bool tail_certified() {
        ensure_profile();
        return tail_certified_;
    }

  private:
    void ensure_profile() {
        if (!deviations_.empty()) return;
        deviations_.reserve(static_cast<std::size_t>(k_cap_));
        for (long k = 1; k <= k_cap_; ++k) deviations_.push_back(scan_.step());
        suffix_max_.assign(deviations_.size(), 0.0);
        double running = 0.0;
        for (std::size_t i = deviations_.size(); i-- > 0;) {
            running = std::max(running, deviations_[i]);
            suffix_max_[i] = running;
        }
        const double tail_now = deviations_.back();
        const double tail_then = deviations_[deviations_.size() - 1 - window_];
        const double noise_floor = 1e-13 * scan_.model_scale();
        tail_certified_ = tail_now < tail_then || tail_now <= noise_floor;
    }

    detail::DeviationScan scan_;
    std::vector<double> deviations_;
    std::vector<double> suffix_max_;
    bool tail_certified_ = false;
    long k_cap_;
    int window_;
};

inline long mixing_time(const MarkovNoiseModel& model, double delta, long k_cap = 10000) {
    const Vector pi = stationary_distribution(model.chain);
    MixingAnalysis analysis(model, pi, k_cap);
    return analysis.tau_for(delta);
}

// Least-squares fit of tau_delta against log(1/delta), reporting the slope as
// the empirical geometric-mixing constant K (and the intercept for
// diagnostics). The constant is measured, never assumed.
struct GeometricFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::vector<std::pair<double, long>> samples;  // (delta, tau)
};

inline GeometricFit fit_geometric_mixing_constant(const MarkovNoiseModel& model,
                                                  std::span<const double> delta_grid,
                                                  long k_cap = 10000) {
    if (delta_grid.size() < 2)
        throw Error(ErrorCode::PreconditionViolated, "need at least two deltas to fit");
    const Vector pi = stationary_distribution(model.chain);
    MixingAnalysis analysis(model, pi, k_cap);
    GeometricFit fit;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (double delta : delta_grid) {
        const long tau = analysis.tau_for(delta);
        fit.samples.emplace_back(delta, tau);
        const double x = std::log(1.0 / delta);
        const double y = static_cast<double>(tau);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double n = static_cast<double>(delta_grid.size());
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-30) {
        fit.slope = 0.0;
        fit.intercept = sy / n;
    } else {
        fit.slope = (n * sxy - sx * sy) / denom;
        fit.intercept = (sy - fit.slope * sx) / n;
    }
    return fit;
}

}  // namespace lsam::markov
