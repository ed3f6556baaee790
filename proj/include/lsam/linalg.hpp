#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "lsam/error.hpp"
#include "lsam/matrix.hpp"

namespace lsam::linalg {

struct EigenSym {
    Vector values;    // ascending
    Matrix vectors;   // columns are the corresponding eigenvectors
};

namespace detail {

inline double off_diagonal_norm(const Matrix& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (i != j) s += m(i, j) * m(i, j);
    return std::sqrt(s);
}

}  // namespace detail

// Cyclic Jacobi for symmetric matrices. Converges when the off-diagonal
// Frobenius mass drops below 1e-13 * ||M||_F; 100 sweeps is far more than
// d <= 200 ever needs.
inline EigenSym eigen_symmetric(Matrix m, int max_sweeps = 100) {
    const std::size_t n = m.rows();
    if (m.cols() != n) throw Error(ErrorCode::ConfigInvalid, "eigen_symmetric: non-square input");
    Matrix v = Matrix::identity(n);
    const double target = 1e-13 * std::max(frobenius_norm(m), 1e-300);

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        if (detail::off_diagonal_norm(m) <= target) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (apq == 0.0) continue;
                const double app = m(p, p), aqq = m(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    EigenSym result;
    result.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) result.values[i] = m(i, i);

    // sort ascending, permuting eigenvector columns alongside
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return result.values[a] < result.values[b]; });
    Vector sorted_vals(n);
    Matrix sorted_vecs(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        sorted_vals[j] = result.values[order[j]];
        for (std::size_t i = 0; i < n; ++i) sorted_vecs(i, j) = v(i, order[j]);
    }
    result.values = std::move(sorted_vals);
    result.vectors = std::move(sorted_vecs);
    return result;
}

// Extreme eigenvalues of a symmetric matrix. Rejects inputs whose asymmetry
// exceeds 1e-10 in the max norm.
inline std::pair<double, double> eig_extremes_symmetric(const Matrix& m) {
    const std::size_t n = m.rows();
    if (m.cols() != n) throw Error(ErrorCode::ConfigInvalid, "eig_extremes_symmetric: non-square");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(m(i, j) - m(j, i)) > 1e-10)
                throw Error(ErrorCode::NotSymmetric, "asymmetry exceeds 1e-10");
    Matrix sym(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) sym(i, j) = 0.5 * (m(i, j) + m(j, i));
    const EigenSym e = eigen_symmetric(std::move(sym));
    return {e.values.front(), e.values.back()};
}

// Induced 2-norm via the symmetric eigenproblem on M^T M.
inline double induced_2norm(const Matrix& m) {
    if (m.empty()) return 0.0;
    Matrix gram(m.cols(), m.cols());
    for (std::size_t i = 0; i < m.cols(); ++i)
        for (std::size_t j = i; j < m.cols(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < m.rows(); ++k) s += m(k, i) * m(k, j);
            gram(i, j) = s;
            gram(j, i) = s;
        }
    const EigenSym e = eigen_symmetric(std::move(gram));
    return std::sqrt(std::max(e.values.back(), 0.0));
}

struct LyapunovCertificate {
    Matrix a_bar;        // the matrix the certificate is for
    Matrix p;            // symmetric solution of A^T P + P A = -I (if solvable)
    double gamma_min = 0.0;
    double gamma_max = 0.0;
    bool hurwitz = false;
    bool singular_system = false;  // vectorized system was numerically singular
    double residual_fro = 0.0;     // ||A^T P + P A + I||_F
    std::string diagnostics;
};

// Solves A^T P + P A = -I through the d^2 x d^2 Kronecker system
// (I (x) A^T + A^T (x) I) vec(P) = vec(-I), symmetrizes P, and certifies
// Hurwitz stability by positive definiteness of P. A singular system means
// some eigenvalue pair satisfies lambda_i + lambda_j ~ 0, which already rules
// out Hurwitz; it is reported in-band rather than thrown.
inline LyapunovCertificate solve_lyapunov(const Matrix& a_bar) {
    const std::size_t d = a_bar.rows();
    if (d == 0 || a_bar.cols() != d)
        throw Error(ErrorCode::ConfigInvalid, "solve_lyapunov: need a square matrix, d >= 1");

    LyapunovCertificate cert;
    cert.a_bar = a_bar;

    const Matrix at = a_bar.transposed();
    const Matrix system = kron(Matrix::identity(d), at) + kron(at, Matrix::identity(d));
    Vector rhs(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) rhs[i * d + i] = -1.0;  // vec(-I)

    Vector p_vec;
    try {
        p_vec = solve_linear(system, std::move(rhs));
    } catch (const Error& e) {
        if (e.code() != ErrorCode::SingularSystem) throw;
        cert.singular_system = true;
        cert.hurwitz = false;
        cert.diagnostics = "vectorized Lyapunov system singular (lambda_i + lambda_j ~ 0): ";
        cert.diagnostics += e.what();
        return cert;
    }

    Matrix p = unvec_columns(p_vec, d, d);
    // enforce exact symmetry
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) {
            const double avg = 0.5 * (p(i, j) + p(j, i));
            p(i, j) = avg;
            p(j, i) = avg;
        }
    cert.p = p;
    cert.residual_fro = frobenius_norm(at * p + p * a_bar + Matrix::identity(d));

    const EigenSym e = eigen_symmetric(p);
    cert.gamma_min = e.values.front();
    cert.gamma_max = e.values.back();
    cert.hurwitz = cert.gamma_min > 1e-12;
    if (!cert.hurwitz)
        cert.diagnostics = "Lyapunov solution not positive definite (gamma_min = " +
                           std::to_string(cert.gamma_min) + ")";
    return cert;
}

// Symmetric positive-definite square root: S = V sqrt(L) V^T, so S S = P.
inline Matrix symmetric_sqrt(const Matrix& p) {
    const std::size_t n = p.rows();
    if (p.cols() != n) throw Error(ErrorCode::ConfigInvalid, "symmetric_sqrt: non-square");
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(p(i, j) - p(j, i)) > 1e-10)
                throw Error(ErrorCode::NotSymmetric, "asymmetry exceeds 1e-10");
    const EigenSym e = eigen_symmetric(p);
    if (e.values.front() <= 0.0)
        throw Error(ErrorCode::NotPositiveDefinite,
                    "smallest eigenvalue " + std::to_string(e.values.front()));
    Matrix s(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                acc += e.vectors(i, k) * std::sqrt(e.values[k]) * e.vectors(j, k);
            s(i, j) = acc;
        }
    // clean up rounding asymmetry
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double avg = 0.5 * (s(i, j) + s(j, i));
            s(i, j) = avg;
            s(j, i) = avg;
        }
    return s;
}

}  // namespace lsam::linalg
