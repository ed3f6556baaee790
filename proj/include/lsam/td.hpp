#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "lsam/error.hpp"
#include "lsam/linalg.hpp"
#include "lsam/markov.hpp"
#include "lsam/matrix.hpp"
#include "lsam/rng.hpp"

namespace lsam::td {

// Policy-evaluation instance: MDP chain under the fixed policy, per-state
// rewards, discount, feature rows, and the trace parameter (0 for one-step
// TD).
struct TdProblem {
    markov::FiniteChain chain;
    Vector rewards;
    double discount = 0.0;       // alpha in [0, 1)
    Matrix features;             // N x d, rows are phi(i)^T
    double lambda = 0.0;         // in [0, 1)

    TdProblem(markov::FiniteChain c, Vector r, double alpha, Matrix f, double lam)
        : chain(std::move(c)), rewards(std::move(r)), discount(alpha), features(std::move(f)),
          lambda(lam) {
        const std::size_t n = chain.n_states();
        if (rewards.size() != n)
            throw Error(ErrorCode::ConfigInvalid, "rewards must have one entry per state");
        if (features.rows() != n || features.cols() == 0)
            throw Error(ErrorCode::ConfigInvalid, "features must be N x d with d >= 1");
        if (!(discount >= 0.0 && discount < 1.0))
            throw Error(ErrorCode::ConfigInvalid, "discount must lie in [0, 1)");
        if (!(lambda >= 0.0 && lambda < 1.0))
            throw Error(ErrorCode::ConfigInvalid, "lambda must lie in [0, 1)");
    }

    std::size_t n_states() const { return chain.n_states(); }
    std::size_t dim() const { return features.cols(); }

    double phi_max() const {
        double m = 0.0;
        for (std::size_t i = 0; i < n_states(); ++i) m = std::max(m, norm2(features.row(i)));
        return m;
    }
    double c_max() const {
        double m = 0.0;
        for (double r : rewards) m = std::max(m, std::abs(r));
        return m;
    }

    // smallest/largest eigenvalue ratio of F^T F decides column rank
    void require_full_rank() const {
        const std::size_t d = dim();
        Matrix gram(d, d);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i; j < d; ++j) {
                double s = 0.0;
                for (std::size_t r = 0; r < n_states(); ++r)
                    s += features(r, i) * features(r, j);
                gram(i, j) = s;
                gram(j, i) = s;
            }
        const auto eig = linalg::eigen_symmetric(gram);
        if (!(eig.values.front() > 1e-12 * std::max(eig.values.back(), 1e-300)))
            throw Error(ErrorCode::RankDeficientFeatures,
                        "feature matrix is numerically rank deficient");
    }
};

// Feature scale that makes every per-sample matrix satisfy ||A(x)|| <= 1:
// phi_max <= 1/sqrt(1+alpha) for TD(0), sqrt((1-alpha lambda)/(1+alpha)) for
// TD(lambda). Never scales up.
inline double normalization_target(double alpha, double lambda) {
    return lambda == 0.0 ? 1.0 / std::sqrt(1.0 + alpha)
                         : std::sqrt((1.0 - alpha * lambda) / (1.0 + alpha));
}

inline std::pair<TdProblem, double> normalize_features(const TdProblem& p) {
    const double pm = p.phi_max();
    if (pm == 0.0) throw Error(ErrorCode::ZeroFeatures, "all feature rows are zero");
    const double scale = std::min(1.0, normalization_target(p.discount, p.lambda) / pm);
    if (scale == 1.0) return {p, 1.0};
    Matrix f = p.features;
    f *= scale;
    return {TdProblem(p.chain, p.rewards, p.discount, std::move(f), p.lambda), scale};
}

// V = (I - alpha Gamma)^{-1} c_bar, the fixed point of V = c_bar + alpha Gamma V.
inline Vector value_function(const markov::FiniteChain& chain, const Vector& rewards,
                             double alpha) {
    const std::size_t n = chain.n_states();
    Matrix system = Matrix::identity(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) system(i, j) -= alpha * chain.transition()(i, j);
    return solve_linear(std::move(system), rewards);
}

// TD(lambda) trace-augmented dynamics: the noise state is
// (Z_k, Z_{k+1}, trace_k) with trace_k = (alpha lambda) trace_{k-1} + phi(Z_k).
// A(X_k) = -trace_k (phi(Z_k) - alpha phi(Z_{k+1}))^T and centered
// b(X_k) = A(X_k) theta_star + c(Z_k) trace_k, so
//   A theta + b = trace_k (c(Z_k) - (phi(Z_k) - alpha phi(Z_{k+1}))^T (theta + theta_star)).
class TraceNoiseSource {
  public:
    TraceNoiseSource(const markov::FiniteChain& chain, const Matrix& scaled_features,
                     const Vector& rewards, double alpha, double lambda, Vector theta_star)
        : chain_(&chain), features_(&scaled_features), rewards_(&rewards), alpha_(alpha),
          lambda_(lambda), theta_star_(std::move(theta_star)),
          pi_(markov::stationary_distribution(chain)) {
        cumulative_pi_.resize(pi_.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < pi_.size(); ++i) {
            acc += pi_[i];
            cumulative_pi_[i] = acc;
        }
        trace_.assign(features_->cols(), 0.0);
    }

    std::size_t dim() const { return features_->cols(); }

    void reset(Rng& rng, std::optional<int> forced_state) {
        z_ = forced_state ? *forced_state : rng.categorical_from_cumulative(cumulative_pi_);
        if (z_ < 0 || z_ >= static_cast<int>(chain_->n_states()))
            throw Error(ErrorCode::PreconditionViolated, "initial state out of range");
        z_next_ = rng.categorical_from_cumulative(chain_->cumulative_row(z_));
        trace_.assign(dim(), 0.0);
        add_phi(z_);
    }

    int state() const { return z_; }
    int next_state() const { return z_next_; }
    std::span<const double> trace() const { return trace_; }

    void accumulate_update(std::span<const double> theta, std::span<double> out) const {
        const auto phi_cur = features_->row(static_cast<std::size_t>(z_));
        const auto phi_next = features_->row(static_cast<std::size_t>(z_next_));
        double inner = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i)
            inner += (phi_cur[i] - alpha_ * phi_next[i]) * (theta[i] + theta_star_[i]);
        const double gain = (*rewards_)[static_cast<std::size_t>(z_)] - inner;
        for (std::size_t i = 0; i < theta.size(); ++i) out[i] = trace_[i] * gain;
    }

    void advance(Rng& rng) {
        z_ = z_next_;
        z_next_ = rng.categorical_from_cumulative(chain_->cumulative_row(z_));
        const double decay = alpha_ * lambda_;
        for (double& t : trace_) t *= decay;
        add_phi(z_);
    }

  private:
    void add_phi(int z) {
        const auto phi = features_->row(static_cast<std::size_t>(z));
        for (std::size_t i = 0; i < trace_.size(); ++i) trace_[i] += phi[i];
    }

    const markov::FiniteChain* chain_;
    const Matrix* features_;
    const Vector* rewards_;
    double alpha_, lambda_;
    Vector theta_star_;
    Vector pi_;
    std::vector<double> cumulative_pi_;
    Vector trace_;
    int z_ = 0, z_next_ = 0;
};

// Result of compiling a TD instance into linear-stochastic-approximation
// form. TD(0) carries an exact finite noise model over materialized pair
// states; TD(lambda) carries the trace simulator instead.
struct CompiledTd {
    TdProblem problem;                    // after feature scaling
    double normalization_scale = 1.0;
    Matrix a_tilde;                       // averaged dynamics matrix
    Vector b_tilde;                       // averaged forcing term (uncentered)
    Vector theta_star;                    // equilibrium, A~ theta* + b~ = 0
    double b_max = 0.0;                   // sup over noise states of ||centered b||
    double a_max = 0.0;                   // sup over noise states of ||A||
    std::optional<markov::MarkovNoiseModel> pair_model;  // TD(0) only
    std::vector<std::pair<int, int>> pair_states;        // (z, z') per model state
    Vector pair_pi;                       // stationary law of pair states

    TraceNoiseSource make_trace_source() const {
        if (problem.lambda == 0.0)
            throw Error(ErrorCode::PreconditionViolated, "trace source is for lambda > 0");
        return TraceNoiseSource(problem.chain, problem.features, problem.rewards,
                                problem.discount, problem.lambda, theta_star);
    }
};

namespace detail {

inline Matrix diag(const Vector& v) {
    Matrix d(v.size(), v.size());
    for (std::size_t i = 0; i < v.size(); ++i) d(i, i) = v[i];
    return d;
}

inline Matrix rank_one(std::span<const double> u, const Vector& v) {
    Matrix m(u.size(), v.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = u[i] * v[j];
    return m;
}

}  // namespace detail

// TD(0): pair chain on (Z_k, Z_{k+1}) restricted to pairs with positive
// transition probability; A((z,z')) = -phi(z)(phi(z) - alpha phi(z'))^T;
// centered b((z,z')) = A((z,z')) theta_star + c(z) phi(z). The (z,z') ->
// (z',z'') transition has probability Gamma(z',z'').
inline CompiledTd compile_td0(const TdProblem& input) {
    if (input.lambda != 0.0)
        throw Error(ErrorCode::PreconditionViolated, "compile_td0 requires lambda = 0");
    if (!input.chain.is_irreducible())
        throw Error(ErrorCode::NotIrreducible, "TD compilation requires an irreducible chain");
    if (!input.chain.is_aperiodic())
        throw Error(ErrorCode::NotIrreducible, "TD compilation requires an aperiodic chain");
    input.require_full_rank();

    auto [p, scale] = normalize_features(input);
    const std::size_t n = p.n_states();
    const std::size_t d = p.dim();
    const Vector pi = markov::stationary_distribution(p.chain);
    const Matrix& gamma = p.chain.transition();
    const Matrix& f = p.features;

    // A~ = -F^T D (F - alpha Gamma F),  b~ = F^T D c_bar
    const Matrix dmat = detail::diag(pi);
    const Matrix ft = f.transposed();
    Matrix a_tilde = ft * dmat * (f - gamma * f * p.discount);
    a_tilde *= -1.0;
    const Vector b_tilde = matvec(ft * dmat, p.rewards);

    Vector neg_b = b_tilde;
    for (double& x : neg_b) x = -x;
    const Vector theta_star = solve_linear(a_tilde, neg_b);

    {
        Vector resid = matvec(a_tilde, theta_star);
        for (std::size_t i = 0; i < d; ++i) resid[i] += b_tilde[i];
        if (norm2(resid) > 1e-10)
            throw Error(ErrorCode::SingularSystem,
                        "equilibrium residual " + std::to_string(norm2(resid)));
    }

    // materialize pair states
    std::vector<std::pair<int, int>> pairs;
    std::vector<std::vector<int>> pair_index(n, std::vector<int>(n, -1));
    for (std::size_t z = 0; z < n; ++z)
        for (std::size_t zn = 0; zn < n; ++zn)
            if (gamma(z, zn) > 0.0) {
                pair_index[z][zn] = static_cast<int>(pairs.size());
                pairs.emplace_back(static_cast<int>(z), static_cast<int>(zn));
            }
    const std::size_t m = pairs.size();
    Matrix pair_transition(m, m);
    for (std::size_t s = 0; s < m; ++s) {
        const int mid = pairs[s].second;
        for (std::size_t zn = 0; zn < n; ++zn) {
            const int t = pair_index[static_cast<std::size_t>(mid)][zn];
            if (t >= 0) pair_transition(s, static_cast<std::size_t>(t)) = gamma(mid, zn);
        }
    }

    std::vector<Matrix> a_of;
    std::vector<Vector> b_of;
    a_of.reserve(m);
    b_of.reserve(m);
    double a_max = 0.0, b_max = 0.0;
    for (const auto& [z, zn] : pairs) {
        const auto phi_z = f.row(static_cast<std::size_t>(z));
        const auto phi_zn = f.row(static_cast<std::size_t>(zn));
        Vector direction(d);
        for (std::size_t i = 0; i < d; ++i) direction[i] = phi_z[i] - p.discount * phi_zn[i];
        Matrix a = detail::rank_one(phi_z, direction);
        a *= -1.0;
        // ||u v^T|| = ||u|| ||v||
        a_max = std::max(a_max, norm2(phi_z) * norm2(direction));
        Vector b = matvec(a, theta_star);
        for (std::size_t i = 0; i < d; ++i)
            b[i] += p.rewards[static_cast<std::size_t>(z)] * phi_z[i];
        b_max = std::max(b_max, norm2(b));
        a_of.push_back(std::move(a));
        b_of.push_back(std::move(b));
    }

    // exact stationary law of pairs and the two steady-state identities
    Vector pair_pi(m);
    Matrix a_bar_check(d, d);
    Vector b_bar_check(d, 0.0);
    for (std::size_t s = 0; s < m; ++s) {
        const auto [z, zn] = pairs[s];
        pair_pi[s] = pi[static_cast<std::size_t>(z)] * gamma(z, zn);
        Matrix w = a_of[s];
        w *= pair_pi[s];
        a_bar_check += w;
        for (std::size_t i = 0; i < d; ++i) b_bar_check[i] += pair_pi[s] * b_of[s][i];
    }
    a_bar_check -= a_tilde;
    if (frobenius_norm(a_bar_check) > 1e-10)
        throw Error(ErrorCode::SingularSystem, "stationary A mean does not match A~");
    if (norm2(b_bar_check) > 1e-10)
        throw Error(ErrorCode::SteadyStateBiased, "centered b has nonzero stationary mean");
    if (a_max > 1.0 + 1e-12)
        throw Error(ErrorCode::ConfigInvalid, "normalization failed to enforce ||A(x)|| <= 1");

    const auto cert = linalg::solve_lyapunov(a_tilde);
    if (!cert.hurwitz)
        throw Error(ErrorCode::NotHurwitz, "compiled A~ failed the Lyapunov certificate");

    markov::MarkovNoiseModel model(markov::FiniteChain(std::move(pair_transition)),
                                   std::move(a_of), std::move(b_of));

    CompiledTd out{std::move(p),
                   scale,
                   std::move(a_tilde),
                   b_tilde,
                   theta_star,
                   b_max,
                   a_max,
                   std::nullopt,
                   std::move(pairs),
                   std::move(pair_pi)};
    out.pair_model.emplace(std::move(model));
    return out;
}

// TD(lambda): U = (1-lambda) alpha Gamma (I - lambda alpha Gamma)^{-1},
// c~ = (I - alpha lambda Gamma)^{-1} c_bar, A~ = F^T D (U - I) F,
// b~ = F^T D c~. The noise state is trace-augmented; b_max uses the trace
// norm bound phi_max / (1 - alpha lambda).
inline CompiledTd compile_tdlambda(const TdProblem& input) {
    if (!(input.lambda > 0.0))
        throw Error(ErrorCode::PreconditionViolated, "compile_tdlambda requires lambda in (0,1)");
    if (!input.chain.is_irreducible())
        throw Error(ErrorCode::NotIrreducible, "TD compilation requires an irreducible chain");
    if (!input.chain.is_aperiodic())
        throw Error(ErrorCode::NotIrreducible, "TD compilation requires an aperiodic chain");
    input.require_full_rank();

    auto [p, scale] = normalize_features(input);
    const std::size_t n = p.n_states();
    const std::size_t d = p.dim();
    const double alpha = p.discount, lambda = p.lambda;
    const Vector pi = markov::stationary_distribution(p.chain);
    const Matrix& gamma = p.chain.transition();
    const Matrix& f = p.features;

    // (I - lambda alpha Gamma)^{-1} applied column-by-column
    Matrix resolvent_sys = Matrix::identity(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) resolvent_sys(i, j) -= lambda * alpha * gamma(i, j);
    Matrix resolvent(n, n);
    for (std::size_t col = 0; col < n; ++col) {
        Vector e(n, 0.0);
        e[col] = 1.0;
        const Vector x = solve_linear(resolvent_sys, std::move(e));
        for (std::size_t i = 0; i < n; ++i) resolvent(i, col) = x[i];
    }

    Matrix u = gamma * resolvent;
    u *= (1.0 - lambda) * alpha;
    const Vector c_tilde = matvec(resolvent, p.rewards);

    const Matrix dmat = detail::diag(pi);
    const Matrix ft = f.transposed();
    const Matrix a_tilde = ft * dmat * ((u - Matrix::identity(n)) * f);
    const Vector b_tilde = matvec(ft * dmat, c_tilde);

    Vector neg_b = b_tilde;
    for (double& x : neg_b) x = -x;
    const Vector theta_star = solve_linear(a_tilde, neg_b);
    {
        Vector resid = matvec(a_tilde, theta_star);
        for (std::size_t i = 0; i < d; ++i) resid[i] += b_tilde[i];
        if (norm2(resid) > 1e-10)
            throw Error(ErrorCode::SingularSystem,
                        "equilibrium residual " + std::to_string(norm2(resid)));
    }

    const double phi_max = p.phi_max();
    const double trace_cap = phi_max / (1.0 - alpha * lambda);
    const double a_max = (1.0 + alpha) * phi_max * trace_cap;
    const double b_max =
        (p.c_max() + (1.0 + alpha) * phi_max * norm2(theta_star)) * trace_cap;

    const auto cert = linalg::solve_lyapunov(a_tilde);
    if (!cert.hurwitz)
        throw Error(ErrorCode::NotHurwitz, "compiled A~ failed the Lyapunov certificate");

    return CompiledTd{std::move(p), scale,       a_tilde, b_tilde, theta_star,
                      b_max,        a_max,       std::nullopt,     {},
                      {}};
}

// Deterministic over-estimate of the TD(lambda) mixing time: the chain part
// at delta/2 (measured on the lambda = 0 pair model of the same problem) plus
// the number of steps after which the geometric trace truncation contributes
// less than delta/2.
inline long tdlambda_mixing_time(const TdProblem& input, double delta, long k_cap = 10000) {
    if (!(input.lambda > 0.0))
        throw Error(ErrorCode::PreconditionViolated, "tdlambda_mixing_time requires lambda > 0");
    TdProblem td0(input.chain, input.rewards, input.discount, input.features, 0.0);
    const CompiledTd compiled0 = compile_td0(td0);
    const long tau_chain = markov::mixing_time(*compiled0.pair_model, delta / 2.0, k_cap);

    auto [p, scale] = normalize_features(input);
    (void)scale;
    const double alpha = p.discount, lambda = p.lambda;
    const double phi_max = p.phi_max();
    const double c_trace = (1.0 + alpha) * phi_max * phi_max / (1.0 - alpha * lambda);
    const double decay = alpha * lambda;
    const long tail =
        static_cast<long>(std::ceil(std::log(2.0 * c_trace / delta) / std::log(1.0 / decay)));
    return tau_chain + std::max<long>(tail, 0);
}

}  // namespace lsam::td
