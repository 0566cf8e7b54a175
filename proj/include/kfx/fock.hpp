#ifndef KFX_FOCK_HPP
#define KFX_FOCK_HPP

#include "kfx/error.hpp"
#include "kfx/params.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

namespace kfx
{
using cplx           = std::complex< double >;
using OperatorMatrix = Eigen::MatrixXcd;

/// Real symmetric matrix of cos(q x̂) in the oscillator eigenbasis |0⟩ … |N-1⟩.
struct CosMatrix
{
    Eigen::MatrixXd entries;
    double          q    = 0.0;
    double          hbar = 1.0;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast< std::size_t >(entries.rows()); }
};

/// ⟨n| cos(q x̂) |n+m⟩ for even m:
///   (-1)^{m/2} e^{-z/2} z^{m/2} √(n!/(n+m)!) L_n^m(z),   z = ħq²/2,
/// and 0 for odd m. The (-1)^{m/2} is the real part of i^m from ⟨n|e^{iqx̂}|n+m⟩.
///
/// The normalized Laguerre function f_n = √(n!/(n+m)!) L_n^m satisfies
///   √((n+1)(n+m+1)) f_{n+1} = (2n+1+m-z) f_n - √(n(n+m)) f_{n-1},
/// which is run with a tracked log-scale so neither the factorials nor the
/// z^{m/2}/√m! prefactor ever overflow or underflow prematurely.
inline CosMatrix cos_matrix(std::size_t N, double q, double hbar)
{
    if (N < 1)
        throw ConfigError("cos_matrix needs N >= 1");
    CosMatrix C;
    C.q       = q;
    C.hbar    = hbar;
    C.entries = Eigen::MatrixXd::Zero(static_cast< Eigen::Index >(N), static_cast< Eigen::Index >(N));
    const double z = 0.5 * hbar * q * q;
    if (z == 0.0)
    {
        C.entries.setIdentity();
        return C;
    }

    constexpr double big     = 1e150;
    const double     log_big = std::log(big);
    const double     log_z   = std::log(z);

    for (std::size_t m = 0; m < N; m += 2)
    {
        const double md   = static_cast< double >(m);
        const double sign = (m / 2) % 2 == 0 ? 1.0 : -1.0;
        // log of e^{-z/2} z^{m/2} / √(m!)
        double log_scale = -0.5 * z + 0.5 * md * log_z - 0.5 * std::lgamma(md + 1.0);
        double prev      = 0.0;
        double cur       = 1.0;
        for (std::size_t n = 0; n + m < N; ++n)
        {
            const auto   r = static_cast< Eigen::Index >(n);
            const auto   c = static_cast< Eigen::Index >(n + m);
            const double v = sign * cur * std::exp(log_scale);
            C.entries(r, c) = v;
            C.entries(c, r) = v;

            const double nd   = static_cast< double >(n);
            const double next = ((2.0 * nd + 1.0 + md - z) * cur - std::sqrt(nd * (nd + md)) * prev) /
                                std::sqrt((nd + 1.0) * (nd + md + 1.0));
            prev = cur;
            cur  = next;
            if (std::abs(cur) > big)
            {
                cur /= big;
                prev /= big;
                log_scale += log_big;
            }
        }
    }
    return C;
}

/// Gauss–Hermite rule for ∫ f(ξ) dξ written in terms of Hermite *functions*:
/// ∫ f ≈ Σ_i w_i f(ξ_i) with w_i = 1 / Σ_{k<Q} ψ_k(ξ_i)², so no e^{ξ²} factor ever appears.
struct GaussHermiteRule
{
    std::vector< double > nodes;
    std::vector< double > weights;
};

inline constexpr std::size_t kMaxQuadratureOrder = 512;

/// Orthonormal Hermite functions ψ_0 … ψ_{count-1} at ξ.
inline std::vector< double > hermite_functions(std::size_t count, double xi)
{
    std::vector< double > psi(count);
    if (count == 0)
        return psi;
    psi[0] = std::pow(std::numbers::pi, -0.25) * std::exp(-0.5 * xi * xi);
    if (count > 1)
        psi[1] = std::sqrt(2.0) * xi * psi[0];
    for (std::size_t k = 1; k + 1 < count; ++k)
    {
        const double kd = static_cast< double >(k);
        psi[k + 1]      = std::sqrt(2.0 / (kd + 1.0)) * xi * psi[k] - std::sqrt(kd / (kd + 1.0)) * psi[k - 1];
    }
    return psi;
}

inline GaussHermiteRule gauss_hermite(std::size_t order)
{
    if (order < 1 || order > kMaxQuadratureOrder)
        throw ConfigError("gauss_hermite: order must be in [1, " + std::to_string(kMaxQuadratureOrder) + "]");
    const auto      Q = static_cast< Eigen::Index >(order);
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(Q);
    Eigen::VectorXd sub(std::max< Eigen::Index >(Q - 1, 0));
    for (Eigen::Index k = 1; k < Q; ++k)
        sub(k - 1) = std::sqrt(0.5 * static_cast< double >(k));
    Eigen::SelfAdjointEigenSolver< Eigen::MatrixXd > es;
    es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw NumericalAbort("gauss_hermite: tridiagonal eigensolver failed");

    GaussHermiteRule rule;
    const double     qd = static_cast< double >(order);
    for (Eigen::Index i = 0; i < Q; ++i)
    {
        double x = es.eigenvalues()(i);
        for (int it = 0; it < 4; ++it)
        {
            const auto   psi = hermite_functions(order + 1, x);
            const double f   = psi[order];
            const double df  = std::sqrt(2.0 * qd) * psi[order - 1] - x * f;
            if (df == 0.0)
                break;
            x -= f / df;
        }
        const auto psi = hermite_functions(order, x);
        double     s   = 0.0;
        for (double v : psi)
            s += v * v;
        rule.nodes.push_back(x);
        rule.weights.push_back(1.0 / s);
    }
    return rule;
}

/// ∫ cos(q x) ψ_n(x) ψ_{n+m}(x) dx with the given rule (x = √ħ ξ).
inline double cos_element_quadrature(const GaussHermiteRule& rule, std::size_t n, std::size_t m, double q, double hbar)
{
    const std::size_t top = n + m + 1;
    const double      k   = q * std::sqrt(hbar);
    double            acc = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i)
    {
        const double xi  = rule.nodes[i];
        const auto   psi = hermite_functions(top, xi);
        acc += rule.weights[i] * std::cos(k * xi) * psi[n] * psi[n + m];
    }
    return acc;
}

/// Same, choosing a rule of order 2(n+m) + 64.
inline double cos_element_quadrature(std::size_t n, std::size_t m, double q, double hbar)
{
    const std::size_t order = 2 * (n + m) + 64;
    if (order > kMaxQuadratureOrder)
        throw ConfigError("cos_element_quadrature: n+m too large for the quadrature limit");
    return cos_element_quadrature(gauss_hermite(order), n, m, q, hbar);
}

/// exp(i (K/ħ) cos q x̂) restricted to the two parity sectors.
/// Sector matrices act on the even indices 0,2,4,… and the odd indices 1,3,5,… respectively.
struct KickOperator
{
    std::size_t      N = 0;
    Eigen::MatrixXcd even;
    Eigen::MatrixXcd odd;

    [[nodiscard]] OperatorMatrix full() const
    {
        OperatorMatrix U = OperatorMatrix::Zero(static_cast< Eigen::Index >(N), static_cast< Eigen::Index >(N));
        for (Eigen::Index i = 0; i < even.rows(); ++i)
            for (Eigen::Index j = 0; j < even.cols(); ++j)
                U(2 * i, 2 * j) = even(i, j);
        for (Eigen::Index i = 0; i < odd.rows(); ++i)
            for (Eigen::Index j = 0; j < odd.cols(); ++j)
                U(2 * i + 1, 2 * j + 1) = odd(i, j);
        return U;
    }
};

namespace detail
{
inline Eigen::MatrixXd parity_block(const Eigen::MatrixXd& A, Eigen::Index offset)
{
    const Eigen::Index n = (A.rows() - offset + 1) / 2;
    Eigen::MatrixXd    B(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            B(i, j) = A(2 * i + offset, 2 * j + offset);
    return B;
}

inline Eigen::MatrixXcd exp_i_symmetric(const Eigen::MatrixXd& A, double scale)
{
    if (A.rows() == 0)
        return {};
    Eigen::SelfAdjointEigenSolver< Eigen::MatrixXd > es(A);
    if (es.info() != Eigen::Success)
        throw NumericalAbort("kick_unitary: eigensolver failed on a " + std::to_string(A.rows()) + "x" +
                             std::to_string(A.rows()) + " parity block");
    const Eigen::VectorXcd phase =
        es.eigenvalues().unaryExpr([scale](double l) { return std::polar(1.0, scale * l); });
    const Eigen::MatrixXcd V = es.eigenvectors().cast< cplx >();
    return V * phase.asDiagonal() * V.transpose();
}
} // namespace detail

inline KickOperator kick_unitary(const CosMatrix& C, double K_over_hbar)
{
    KickOperator U;
    U.N    = C.size();
    U.even = detail::exp_i_symmetric(detail::parity_block(C.entries, 0), K_over_hbar);
    U.odd  = detail::exp_i_symmetric(detail::parity_block(C.entries, 1), K_over_hbar);
    return U;
}

struct FockVector
{
    Eigen::VectorXcd amps;
    double           truncated_weight   = 0.0; ///< 1 - Σ|c_n|²
    bool             truncation_warning = false;
};

/// Fills out[0..N) with coherent amplitudes e^{-|α|²/2} αⁿ/√n!, magnitudes carried in log form.
inline void coherent_amplitudes(cplx alpha, Eigen::Ref< Eigen::VectorXcd > out)
{
    const Eigen::Index N = out.size();
    const double       r = std::abs(alpha);
    if (r == 0.0)
    {
        out.setZero();
        if (N > 0)
            out(0) = 1.0;
        return;
    }
    const double theta = std::arg(alpha);
    const double log_r = std::log(r);
    double       lm    = -0.5 * r * r;
    for (Eigen::Index n = 0; n < N; ++n)
    {
        out(n) = std::polar(std::exp(lm), static_cast< double >(n) * theta);
        lm += log_r - 0.5 * std::log(static_cast< double >(n + 1));
    }
}

/// α = (x + i p)/√(2ħ), so that ⟨x̂⟩ = x and ⟨p̂⟩ = p.
inline cplx coherent_label(double x, double p, double hbar)
{
    return cplx(x, p) / std::sqrt(2.0 * hbar);
}

inline FockVector coherent_state(double x, double p, double hbar, std::size_t N)
{
    FockVector v;
    v.amps.resize(static_cast< Eigen::Index >(N));
    coherent_amplitudes(coherent_label(x, p, hbar), v.amps);
    v.truncated_weight   = 1.0 - v.amps.squaredNorm();
    v.truncation_warning = v.truncated_weight > 1e-6;
    return v;
}

inline FockVector coherent_state(double x, double p, const SystemParams& params)
{
    return coherent_state(x, p, params.hbar(), params.basis_N());
}

/// â with entries √n on the first superdiagonal: â|n⟩ = √n |n-1⟩.
inline OperatorMatrix lowering_matrix(std::size_t N)
{
    const auto     n = static_cast< Eigen::Index >(N);
    OperatorMatrix a = OperatorMatrix::Zero(n, n);
    for (Eigen::Index k = 1; k < n; ++k)
        a(k - 1, k) = std::sqrt(static_cast< double >(k));
    return a;
}

/// Diagonal of the parity operator, entry n = (-1)ⁿ.
inline Eigen::VectorXd parity_vector(std::size_t N)
{
    Eigen::VectorXd P(static_cast< Eigen::Index >(N));
    for (Eigen::Index n = 0; n < P.size(); ++n)
        P(n) = n % 2 == 0 ? 1.0 : -1.0;
    return P;
}
} // namespace kfx

#endif // KFX_FOCK_HPP
