#ifndef KFX_OBSERVABLES_HPP
#define KFX_OBSERVABLES_HPP

#include "kfx/error.hpp"
#include "kfx/fock.hpp"
#include "kfx/lindblad.hpp"
#include "kfx/phase_grid.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

namespace kfx
{
struct HusimiReport
{
    PhaseGrid grid;
    double    min_raw_value = 0.0; ///< smallest value before clipping at 0
};

/// Q(x, p) = ⟨α|ρ|α⟩ / (2πħ) at the cell centres, α = (x + ip)/√(2ħ).
/// One row of the grid is evaluated as a batch: C = [c(α_1) … c(α_M)], Q = diag(C† ρ C).
inline HusimiReport husimi_grid(const OperatorMatrix& rho, const GridSpec& spec, double hbar)
{
    spec.validate();
    const Eigen::Index N    = rho.rows();
    const auto         Mx   = static_cast< Eigen::Index >(spec.M_x);
    const double       norm = 1.0 / (2.0 * std::numbers::pi * hbar);

    HusimiReport     rep{PhaseGrid(spec), std::numeric_limits< double >::infinity()};
    Eigen::MatrixXcd C(N, Mx), Y(N, Mx);
    for (std::size_t ip = 0; ip < spec.M_p; ++ip)
    {
        for (Eigen::Index ix = 0; ix < Mx; ++ix)
            coherent_amplitudes(coherent_label(spec.x_center(static_cast< std::size_t >(ix)), spec.p_center(ip), hbar),
                                C.col(ix));
        Y.noalias() = rho * C;
        for (Eigen::Index ix = 0; ix < Mx; ++ix)
        {
            const double v    = C.col(ix).dot(Y.col(ix)).real() * norm; // dot() conjugates the left side
            rep.min_raw_value = std::min(rep.min_raw_value, v);
            rep.grid.at(ip, static_cast< std::size_t >(ix)) = std::max(v, 0.0);
        }
    }
    rep.grid.overflow_mass = std::max(0.0, rho.trace().real() - rep.grid.mass());
    return rep;
}

/// Husimi function of a pure state |χ⟩⟨χ|: |⟨α|χ⟩|² / (2πħ).
inline PhaseGrid husimi_grid_pure(const Eigen::VectorXcd& chi, const GridSpec& spec, double hbar)
{
    spec.validate();
    const double     norm = 1.0 / (2.0 * std::numbers::pi * hbar);
    PhaseGrid        g(spec);
    Eigen::VectorXcd c(chi.size());
    for (std::size_t ip = 0; ip < spec.M_p; ++ip)
        for (std::size_t ix = 0; ix < spec.M_x; ++ix)
        {
            coherent_amplitudes(coherent_label(spec.x_center(ix), spec.p_center(ip), hbar), c);
            g.at(ip, ix) = std::norm(c.dot(chi)) * norm;
        }
    g.overflow_mass = std::max(0.0, chi.squaredNorm() - g.mass());
    return g;
}

struct SpectrumResult
{
    std::vector< double > eigenvalues;  ///< descending
    Eigen::MatrixXcd      eigenvectors; ///< columns match the first k_top eigenvalues
    std::uint64_t         kick = 0;
};

namespace detail
{
/// True when every entry with odd n - m is exactly zero, i.e. [op, P] = 0.
inline bool parity_symmetric(const OperatorMatrix& op)
{
    for (Eigen::Index j = 0; j < op.cols(); ++j)
        for (Eigen::Index i = (j + 1) % 2; i < op.rows(); i += 2)
            if (op(i, j) != cplx(0.0, 0.0))
                return false;
    return true;
}

struct EigenPairs
{
    Eigen::VectorXd  values;  ///< ascending
    Eigen::MatrixXcd vectors; ///< full basis, empty when not requested
};

inline EigenPairs hermitian_eigen(const OperatorMatrix& A, bool want_vectors)
{
    Eigen::SelfAdjointEigenSolver< Eigen::MatrixXcd > es(A, want_vectors ? Eigen::ComputeEigenvectors
                                                                          : Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw NumericalAbort("Hermitian eigensolver failed for a " + std::to_string(A.rows()) + "x" +
                             std::to_string(A.rows()) + " matrix");
    EigenPairs r{es.eigenvalues(), {}};
    if (want_vectors)
        r.vectors = es.eigenvectors();
    return r;
}
} // namespace detail

/// Full Hermitian eigendecomposition, descending. Parity-symmetric input is split into its
/// even and odd sectors first.
inline SpectrumResult spectrum(const OperatorMatrix& rho, std::size_t k_top = 0)
{
    const Eigen::Index N    = rho.rows();
    const bool         want = k_top > 0;
    k_top                   = std::min< std::size_t >(k_top, static_cast< std::size_t >(N));

    struct Pair
    {
        double       value;
        Eigen::Index sector; // -1 whole, 0 even, 1 odd
        Eigen::Index column;
    };
    std::vector< Pair >          pairs;
    std::vector< detail::EigenPairs > sectors;

    if (N > 1 && detail::parity_symmetric(rho))
    {
        for (Eigen::Index off : {0, 1})
        {
            const auto idx = Eigen::seqN(off, (N - off + 1) / 2, 2);
            sectors.push_back(detail::hermitian_eigen(rho(idx, idx), want));
            for (Eigen::Index c = 0; c < sectors.back().values.size(); ++c)
                pairs.push_back({sectors.back().values(c), off, c});
        }
    }
    else
    {
        sectors.push_back(detail::hermitian_eigen(rho, want));
        for (Eigen::Index c = 0; c < N; ++c)
            pairs.push_back({sectors.back().values(c), -1, c});
    }
    std::ranges::stable_sort(pairs, [](const Pair& a, const Pair& b) { return a.value > b.value; });

    SpectrumResult sr;
    sr.eigenvalues.reserve(pairs.size());
    for (const auto& p : pairs)
        sr.eigenvalues.push_back(p.value);
    if (want)
    {
        sr.eigenvectors = Eigen::MatrixXcd::Zero(N, static_cast< Eigen::Index >(k_top));
        for (std::size_t i = 0; i < k_top; ++i)
        {
            const auto& p = pairs[i];
            if (p.sector < 0)
                sr.eigenvectors.col(static_cast< Eigen::Index >(i)) = sectors[0].vectors.col(p.column);
            else
            {
                const auto& v = sectors[static_cast< std::size_t >(p.sector)].vectors.col(p.column);
                for (Eigen::Index r = 0; r < v.size(); ++r)
                    sr.eigenvectors(2 * r + p.sector, static_cast< Eigen::Index >(i)) = v(r);
            }
        }
    }
    return sr;
}

inline SpectrumResult spectrum(const DensityMatrix& rho, std::size_t k_top = 0)
{
    auto sr = spectrum(rho.rho, k_top);
    sr.kick = rho.kick;
    return sr;
}

/// (λ0 - λ1, λ2 - λ3, λ4 - λ5).
inline std::array< double, 3 > pair_splittings(const SpectrumResult& sr)
{
    if (sr.eigenvalues.size() < 6)
        throw ConfigError("pair_splittings needs at least 6 eigenvalues");
    const auto& l = sr.eigenvalues;
    return {l[0] - l[1], l[2] - l[3], l[4] - l[5]};
}

/// -Σ λ ln λ over the positive eigenvalues.
inline double entanglement_entropy(const SpectrumResult& sr)
{
    double s = 0.0;
    for (double l : sr.eigenvalues)
        if (l > 0.0)
            s -= l * std::log(l);
    return s;
}

struct StateDiagnostics
{
    double trace           = 0.0;
    double purity          = 0.0;
    double min_eigenvalue  = 0.0;
    double edge_population = 0.0;
};

inline StateDiagnostics purity_trace_diagnostics(const OperatorMatrix& rho)
{
    const auto sr = spectrum(rho);
    return {rho.trace().real(), rho.squaredNorm(), sr.eigenvalues.empty() ? 0.0 : sr.eigenvalues.back(),
            edge_population(rho)};
}

inline double mean_energy(const DensityMatrix& rho)
{
    return mean_energy(rho.rho, rho.params.hbar());
}

/// Pearson correlation over cells. NaN when either grid is constant.
inline double grid_correlation(const PhaseGrid& a, const PhaseGrid& b)
{
    if (!(a.spec == b.spec))
        throw ConfigError("grid_correlation: grids differ in extent or resolution");
    const auto n  = static_cast< double >(a.values.size());
    double     ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
    {
        ma += a.values[i];
        mb += b.values[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
    {
        const double da = a.values[i] - ma, db = b.values[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0)
        return std::numeric_limits< double >::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

// --- negativity -------------------------------------------------------------------------------

struct NegativitySample
{
    std::uint64_t kick            = 0;
    double        negativity      = 0.0; ///< |Σ negative eigenvalues of ρ^{T_g}|
    double        trace           = 0.0;
    double        hermiticity_err = 0.0; ///< max |M - M†| before symmetrization
    double        min_eigenvalue  = 0.0;
};

struct NegativityResult
{
    double                          overlap         = 0.0; ///< |⟨α|β⟩|
    bool                            overlap_warning = false;
    std::vector< NegativitySample > samples;
    std::vector< std::string >      warnings;
};

/// Partially transposed virtual-qubit state
///   ½ [[L(|α⟩⟨α|)ᵗ, L(|α⟩⟨β|)ᵗ], [L(|β⟩⟨α|)ᵗ, L(|β⟩⟨β|)ᵗ]]
/// with ᵗ the oscillator transpose.
inline OperatorMatrix assemble_partial_transpose(const OperatorMatrix& aa, const OperatorMatrix& ab, const OperatorMatrix& ba,
                                                 const OperatorMatrix& bb)
{
    const Eigen::Index N = aa.rows();
    OperatorMatrix     M(2 * N, 2 * N);
    M.topLeftCorner(N, N)     = 0.5 * aa.transpose();
    M.topRightCorner(N, N)    = 0.5 * ab.transpose();
    M.bottomLeftCorner(N, N)  = 0.5 * ba.transpose();
    M.bottomRightCorner(N, N) = 0.5 * bb.transpose();
    return M;
}

inline NegativitySample negativity_of(const OperatorMatrix& aa, const OperatorMatrix& ab, const OperatorMatrix& ba,
                                      const OperatorMatrix& bb, std::uint64_t kick)
{
    OperatorMatrix   M = assemble_partial_transpose(aa, ab, ba, bb);
    NegativitySample s;
    s.kick            = kick;
    s.hermiticity_err = (M - M.adjoint()).cwiseAbs().maxCoeff();
    if (s.hermiticity_err > 1e-8)
        throw NumericalAbort("negativity assembly not Hermitian (" + std::to_string(s.hermiticity_err) + ") at kick " +
                             std::to_string(kick) + ": L(beta alpha) != L(alpha beta)^dagger");
    hermitize(M);
    s.trace                 = M.trace().real();
    const auto   ev         = detail::hermitian_eigen(M, false).values;
    double       neg        = 0.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (ev(i) < 0.0)
            neg += ev(i);
    s.negativity     = std::abs(neg);
    s.min_eigenvalue = ev.size() ? ev(0) : 0.0;
    return s;
}

/// Evolves the four coherence blocks of (|g0 α⟩ + |g1 β⟩)/√2 through the period map and
/// samples the negativity at the requested kicks.
inline NegativityResult evolve_negativity(const LindbladEngine& engine, double ax, double ap, double bx, double bp,
                                          std::uint64_t n_kicks, const std::vector< std::uint64_t >& sample_kicks,
                                          TruncationPolicy policy = {})
{
    const auto&      P = engine.params();
    const FockVector a = coherent_state(ax, ap, P);
    const FockVector b = coherent_state(bx, bp, P);

    NegativityResult res;
    res.overlap         = std::abs(a.amps.dot(b.amps));
    res.overlap_warning = res.overlap > 1e-6;
    if (res.overlap_warning)
        res.warnings.push_back("coherent labels overlap: |<alpha|beta>| = " + std::to_string(res.overlap));
    if (a.truncation_warning || b.truncation_warning)
        res.warnings.push_back("coherent label truncated by the basis");

    OperatorMatrix aa = a.amps * a.amps.adjoint();
    OperatorMatrix ab = a.amps * b.amps.adjoint();
    OperatorMatrix ba = b.amps * a.amps.adjoint();
    OperatorMatrix bb = b.amps * b.amps.adjoint();

    auto sampled = [&](std::uint64_t t) { return std::ranges::find(sample_kicks, t) != sample_kicks.end(); };
    bool warned  = false;
    for (std::uint64_t t = 0;; ++t)
    {
        const double edge = std::max(edge_population(aa), edge_population(bb));
        if (edge > policy.abort)
            throw NumericalAbort("basis truncation: edge population " + std::to_string(edge) + " at kick " + std::to_string(t));
        if (edge > policy.warn && !warned)
        {
            warned = true;
            res.warnings.push_back("edge population " + std::to_string(edge) + " exceeds 1e-6 at kick " + std::to_string(t));
        }
        if (sampled(t))
            res.samples.push_back(negativity_of(aa, ab, ba, bb, t));
        if (t == n_kicks)
            break;
        aa = engine.period_step(aa, true);
        ab = engine.period_step(ab, false);
        ba = engine.period_step(ba, false);
        bb = engine.period_step(bb, true);
    }
    return res;
}
} // namespace kfx

#endif // KFX_OBSERVABLES_HPP
