#ifndef KFX_LINDBLAD_HPP
#define KFX_LINDBLAD_HPP

#include "kfx/error.hpp"
#include "kfx/fock.hpp"
#include "kfx/params.hpp"

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace kfx
{
/// ρ in the Fock basis, stamped with the parameters and the number of kicks applied.
struct DensityMatrix
{
    OperatorMatrix rho;
    SystemParams   params = validate_params({});
    std::uint64_t  kick   = 0;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast< std::size_t >(rho.rows()); }
};

inline DensityMatrix pure_state(const FockVector& psi, const SystemParams& params)
{
    if (static_cast< std::size_t >(psi.amps.size()) != params.basis_N())
        throw ConfigError("state size does not match basis_N");
    return {psi.amps * psi.amps.adjoint(), params, 0};
}

/// Constants and tables for the exact zero-temperature damping channel over one period.
/// Entry (n, n+k) receives Σ_j w(n,k,j) ρ(n+j, n+k+j) with
///   w(n,k,j) = e^{-γT(2n+k)} s^j √(C(n+j,j) C(n+k+j,j)),  s = 1 - e^{-2γT}.
/// Weights are generated per (n,k) by their ratio recurrence; they never exceed 1.
struct ChannelCache
{
    double              gamma = 0.0;
    double              T     = 0.0;
    std::size_t         N     = 0;
    double              decay = 0.0; ///< γT
    double              s     = 0.0; ///< 1 - e^{-2γT}
    double              log_s = 0.0;
    std::vector< double > sqrt_n;    ///< √n, n ≤ N
    std::vector< double > inv_n;     ///< 1/n (inv_n[0] unused)
    std::vector< double > half_log_n;///< ½ ln n
    std::vector< double > log_n;     ///< ln n

    static constexpr double kTinyWeight    = 1e-18;
    static constexpr double kLogTinyWeight = -41.446531673892822; // ln 1e-18

    ChannelCache(double gamma_, double T_, std::size_t N_) : gamma(gamma_), T(T_), N(N_)
    {
        if (!(gamma >= 0.0) || !(T >= 0.0))
            throw ConfigError("channel needs gamma >= 0 and T >= 0");
        decay = gamma * T;
        s     = -std::expm1(-2.0 * decay);
        log_s = s > 0.0 ? std::log(s) : -INFINITY;
        sqrt_n.resize(N + 2);
        inv_n.resize(N + 2);
        half_log_n.resize(N + 2);
        log_n.resize(N + 2);
        for (std::size_t i = 0; i < N + 2; ++i)
        {
            const auto d  = static_cast< double >(i);
            sqrt_n[i]     = std::sqrt(d);
            inv_n[i]      = i ? 1.0 / d : 0.0;
            log_n[i]      = i ? std::log(d) : 0.0;
            half_log_n[i] = 0.5 * log_n[i];
        }
    }

    explicit ChannelCache(const SystemParams& p) : ChannelCache(p.gamma(), p.period_T(), p.basis_N()) {}

    /// Visits the nonnegligible weights w(n,k,j), j = 0 … jmax, as fn(j, w).
    template < typename Fn >
    void for_each_weight(std::size_t n, std::size_t k, std::size_t jmax, Fn&& fn) const
    {
        if (s == 0.0)
        {
            fn(std::size_t{0}, 1.0);
            return;
        }
        std::size_t j  = 0;
        double      lw = -decay * static_cast< double >(2 * n + k);
        // below threshold and rising: step in log space until the weight becomes visible
        while (lw < kLogTinyWeight)
        {
            if (j >= jmax)
                return;
            const double step = log_s + half_log_n[n + j + 1] + half_log_n[n + k + j + 1] - log_n[j + 1];
            if (step <= 0.0)
                return;
            lw += step;
            ++j;
        }
        double w = std::exp(lw);
        for (;;)
        {
            fn(j, w);
            if (j >= jmax)
                return;
            const double ratio = s * sqrt_n[n + j + 1] * sqrt_n[n + k + j + 1] * inv_n[j + 1];
            w *= ratio;
            ++j;
            if (w < kTinyWeight && ratio < 1.0)
                return;
        }
    }
};

/// Exact solution of the interaction-picture damping equation over one period,
/// applied independently to every diagonal k = m - n (both signs). Linear; any operator.
inline OperatorMatrix damping_channel(const OperatorMatrix& op, const ChannelCache& cache)
{
    const auto N = static_cast< std::size_t >(op.rows());
    if (N != cache.N || op.cols() != op.rows())
        throw ConfigError("damping_channel: operator size does not match the channel cache");
    if (cache.s == 0.0)
        return op;

    OperatorMatrix        out(op.rows(), op.cols());
    std::vector< cplx >   upper, lower;
    upper.reserve(N);
    lower.reserve(N);
    for (std::size_t k = 0; k < N; ++k)
    {
        const std::size_t len = N - k;
        upper.resize(len);
        lower.resize(len);
        bool any = false;
        for (std::size_t i = 0; i < len; ++i)
        {
            upper[i] = op(static_cast< Eigen::Index >(i), static_cast< Eigen::Index >(i + k));
            lower[i] = op(static_cast< Eigen::Index >(i + k), static_cast< Eigen::Index >(i));
            any      = any || upper[i] != cplx{} || lower[i] != cplx{};
        }
        if (!any)
        {
            for (std::size_t i = 0; i < len; ++i)
            {
                out(static_cast< Eigen::Index >(i), static_cast< Eigen::Index >(i + k)) = cplx{};
                out(static_cast< Eigen::Index >(i + k), static_cast< Eigen::Index >(i)) = cplx{};
            }
            continue;
        }
        for (std::size_t n = 0; n < len; ++n)
        {
            cplx up{}, lo{};
            cache.for_each_weight(n, k, len - 1 - n, [&](std::size_t j, double w) {
                up += w * upper[n + j];
                lo += w * lower[n + j];
            });
            out(static_cast< Eigen::Index >(n), static_cast< Eigen::Index >(n + k)) = up;
            out(static_cast< Eigen::Index >(n + k), static_cast< Eigen::Index >(n)) = lo;
        }
    }
    return out;
}

/// Classic fixed-step RK4 integration of
///   dρ̃_{nm}/dt = 2γ ( √((n+1)(m+1)) ρ̃_{n+1,m+1} - (n+m) ρ̃_{nm}/2 )
/// over time t. Used as an independent check of damping_channel.
inline OperatorMatrix damping_channel_rk(const OperatorMatrix& op, double gamma, double t, double dt)
{
    const Eigen::Index N = op.rows();
    if (gamma == 0.0 || t == 0.0)
        return op;
    if (!(dt > 0.0) || dt > 1.0 / (4.0 * gamma * static_cast< double >(N)))
        throw ConfigError("damping_channel_rk: dt exceeds the stability bound 1/(4 γ N)");

    Eigen::MatrixXd feed(std::max< Eigen::Index >(N - 1, 0), std::max< Eigen::Index >(N - 1, 0));
    Eigen::MatrixXd loss(N, N);
    for (Eigen::Index n = 0; n < N; ++n)
        for (Eigen::Index m = 0; m < N; ++m)
        {
            loss(n, m) = 0.5 * static_cast< double >(n + m);
            if (n + 1 < N && m + 1 < N)
                feed(n, m) = std::sqrt(static_cast< double >((n + 1) * (m + 1)));
        }

    auto rhs = [&](const OperatorMatrix& X) {
        OperatorMatrix F = -(loss.cast< cplx >().cwiseProduct(X));
        if (N > 1)
            F.topLeftCorner(N - 1, N - 1) += feed.cast< cplx >().cwiseProduct(X.bottomRightCorner(N - 1, N - 1));
        return OperatorMatrix(2.0 * gamma * F);
    };

    const auto     steps = static_cast< long >(std::ceil(t / dt));
    const double   h     = t / static_cast< double >(steps);
    OperatorMatrix X     = op;
    for (long s = 0; s < steps; ++s)
    {
        const OperatorMatrix k1 = rhs(X);
        const OperatorMatrix k2 = rhs(X + 0.5 * h * k1);
        const OperatorMatrix k3 = rhs(X + 0.5 * h * k2);
        const OperatorMatrix k4 = rhs(X + h * k3);
        X += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return X;
}

namespace detail
{
inline bool is_quarter_period(double T)
{
    return std::abs(T - std::numbers::pi / 2.0) <= 4.0 * std::numeric_limits< double >::epsilon();
}
} // namespace detail

/// Entry (n, m) times e^{i(m-n)T}; at T = π/2 the factor is taken as the exact i^{(m-n) mod 4}.
inline OperatorMatrix free_phase_rotation(const OperatorMatrix& op, double T)
{
    const Eigen::Index N = op.rows();
    std::vector< cplx > phase(static_cast< std::size_t >(2 * N + 1));
    const bool          quarter = detail::is_quarter_period(T);
    for (Eigen::Index d = -N; d <= N; ++d)
    {
        cplx f;
        if (quarter)
        {
            static constexpr cplx powers[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
            f = powers[((d % 4) + 4) % 4];
        }
        else
            f = std::polar(1.0, static_cast< double >(d) * T);
        phase[static_cast< std::size_t >(d + N)] = f;
    }
    OperatorMatrix out(N, N);
    for (Eigen::Index m = 0; m < N; ++m)
        for (Eigen::Index n = 0; n < N; ++n)
            out(n, m) = op(n, m) * phase[static_cast< std::size_t >(m - n + N)];
    return out;
}

/// U·op·U† using the parity sectors of U; sectors of op that are exactly zero stay zero.
inline OperatorMatrix kick_conjugation(const OperatorMatrix& op, const KickOperator& U)
{
    const auto N = static_cast< Eigen::Index >(U.N);
    if (op.rows() != N || op.cols() != N)
        throw ConfigError("kick_conjugation: size mismatch");
    const Eigen::Index ne = U.even.rows();
    const Eigen::Index no = U.odd.rows();
    const auto         ev = Eigen::seqN(0, ne, 2);
    const auto         od = Eigen::seqN(1, no, 2);

    OperatorMatrix out = OperatorMatrix::Zero(N, N);
    OperatorMatrix blk, tmp, res;
    auto conj_block = [&](const auto& rows, const auto& cols, const Eigen::MatrixXcd& L, const Eigen::MatrixXcd& R) {
        blk = op(rows, cols);
        if (blk.size() == 0 || blk.cwiseAbs2().maxCoeff() == 0.0)
            return;
        tmp.noalias()    = L * blk;
        res.noalias()    = tmp * R.adjoint();
        out(rows, cols) = res;
    };
    conj_block(ev, ev, U.even, U.even);
    conj_block(ev, od, U.even, U.odd);
    conj_block(od, ev, U.odd, U.even);
    conj_block(od, od, U.odd, U.odd);
    return out;
}

/// (op + op†)/2, exactly Hermitian entrywise.
inline void hermitize(OperatorMatrix& op)
{
    const Eigen::Index N = op.rows();
    for (Eigen::Index i = 0; i < N; ++i)
    {
        op(i, i) = cplx(op(i, i).real(), 0.0);
        for (Eigen::Index j = i + 1; j < N; ++j)
        {
            const cplx v = 0.5 * (op(i, j) + std::conj(op(j, i)));
            op(i, j)     = v;
            op(j, i)     = std::conj(v);
        }
    }
}

/// ħ Σ ρ_nn (n + ½).
inline double mean_energy(const OperatorMatrix& rho, double hbar)
{
    double e = 0.0;
    for (Eigen::Index n = 0; n < rho.rows(); ++n)
        e += rho(n, n).real() * (static_cast< double >(n) + 0.5);
    return hbar * e;
}

/// Population in the top 10% of the basis, Σ_{n > 0.9N} ρ_nn.
inline double edge_population(const OperatorMatrix& rho)
{
    const Eigen::Index N     = rho.rows();
    const auto         first = static_cast< Eigen::Index >(std::floor(0.9 * static_cast< double >(N))) + 1;
    double             s     = 0.0;
    for (Eigen::Index n = first; n < N; ++n)
        s += rho(n, n).real();
    return s;
}

/// Per-parameter-set propagator: cached channel tables and kick unitary.
class LindbladEngine
{
public:
    explicit LindbladEngine(const SystemParams& p)
        : params_(p), cache_(p), kick_(kick_unitary(cos_matrix(p.basis_N(), p.q(), p.hbar()), p.K_over_hbar()))
    {}

    [[nodiscard]] const SystemParams& params() const noexcept { return params_; }
    [[nodiscard]] const ChannelCache& channel() const noexcept { return cache_; }
    [[nodiscard]] const KickOperator& kick() const noexcept { return kick_; }

    /// Damping over T, free rotation over T, then the kick. Hermitian inputs are re-symmetrized.
    [[nodiscard]] OperatorMatrix period_step(const OperatorMatrix& op, bool hermitian) const
    {
        OperatorMatrix out = kick_conjugation(free_phase_rotation(damping_channel(op, cache_), params_.period_T()), kick_);
        if (hermitian)
            hermitize(out);
        return out;
    }

    void step(DensityMatrix& rho) const
    {
        rho.rho = period_step(rho.rho, true);
        ++rho.kick;
    }

private:
    SystemParams params_;
    ChannelCache cache_;
    KickOperator kick_;
};

/// Basis-size rule of thumb: N ħ ≥ 1.5 Δp²/2 with Δp = qK/√(2γ).
struct BasisCheck
{
    bool   sufficient = true;
    double required_N = 0.0;
};

inline BasisCheck basis_sufficiency(const SystemParams& p)
{
    if (p.kick_K() == 0.0)
        return {true, 0.0};
    if (p.gamma() == 0.0)
        return {false, INFINITY};
    const double dp2 = p.q() * p.q() * p.kick_K() * p.kick_K() / (2.0 * p.gamma());
    const double req = 1.5 * dp2 / 2.0 / p.hbar();
    return {static_cast< double >(p.basis_N()) >= req, req};
}

struct Diagnostics
{
    std::uint64_t kick            = 0;
    double        trace           = 0.0;
    double        purity          = 0.0;
    double        mean_energy     = 0.0;
    double        edge_population = 0.0;
};

inline Diagnostics diagnose(const DensityMatrix& rho)
{
    return {rho.kick, rho.rho.trace().real(), rho.rho.squaredNorm(), mean_energy(rho.rho, rho.params.hbar()),
            edge_population(rho.rho)};
}

/// Which kicks get a snapshot: every > 0 selects multiples of `every`; 0 selects every kick up
/// to 60 and every 10th after. Kick 0 is always included.
struct SnapshotSchedule
{
    std::uint64_t every = 0;

    [[nodiscard]] bool operator()(std::uint64_t t) const noexcept
    {
        if (t == 0)
            return true;
        if (every > 0)
            return t % every == 0;
        return t <= 60 || t % 10 == 0;
    }
};

struct EvolutionRecord
{
    std::vector< Diagnostics > history; ///< one entry per kick, including t = 0
    std::vector< std::string > warnings;
    DensityMatrix              final_state;
};

using SnapshotSink = std::function< void(const DensityMatrix&, const Diagnostics&) >;

inline constexpr double kEdgeWarn  = 1e-6;
inline constexpr double kEdgeAbort = 1e-3;

/// Edge-population thresholds. A forced run keeps the warning and drops the abort.
struct TruncationPolicy
{
    double warn  = kEdgeWarn;
    double abort = kEdgeAbort;

    static TruncationPolicy forced() { return {kEdgeWarn, INFINITY}; }
};

/// Iterates the period map n_kicks times from rho0. The sink sees every scheduled kick and the last one.
inline EvolutionRecord evolve(const LindbladEngine& engine, DensityMatrix rho0, std::uint64_t n_kicks,
                              SnapshotSchedule schedule = {}, const SnapshotSink& sink = {},
                              TruncationPolicy policy = {})
{
    if (!(rho0.params == engine.params()))
        throw ConfigError("evolve: state parameters differ from the engine parameters");
    EvolutionRecord     rec;
    bool                warned = false;
    const std::uint64_t last   = rho0.kick + n_kicks;
    auto            visit  = [&](const DensityMatrix& r) {
        const Diagnostics d = diagnose(r);
        rec.history.push_back(d);
        if (d.edge_population > policy.abort)
            throw NumericalAbort("basis truncation: edge population " + std::to_string(d.edge_population) + " at kick " +
                                 std::to_string(d.kick));
        if (d.edge_population > policy.warn && !warned)
        {
            warned = true;
            rec.warnings.push_back("edge population " + std::to_string(d.edge_population) + " exceeds 1e-6 at kick " +
                                   std::to_string(d.kick));
        }
        if (sink && (schedule(r.kick) || r.kick == last))
            sink(r, d);
    };

    visit(rho0);
    for (std::uint64_t t = 1; t <= n_kicks; ++t)
    {
        engine.step(rho0);
        visit(rho0);
    }
    rec.final_state = std::move(rho0);
    return rec;
}

/// Earliest index i with |mean(h[i+w, i+2w)) - mean(h[i, i+w))| ≤ tol · |mean(h[i, i+w))|.
inline std::optional< std::size_t > steady_state_detect(const std::vector< double >& history, std::size_t window = 20,
                                                        double tol = 1e-3)
{
    if (window == 0 || history.size() < 2 * window)
        return std::nullopt;
    for (std::size_t i = 0; i + 2 * window <= history.size(); ++i)
    {
        double a = 0.0, b = 0.0;
        for (std::size_t k = 0; k < window; ++k)
        {
            a += history[i + k];
            b += history[i + window + k];
        }
        a /= static_cast< double >(window);
        b /= static_cast< double >(window);
        if (std::abs(b - a) <= tol * std::abs(a))
            return i;
    }
    return std::nullopt;
}

// --- binary snapshot -------------------------------------------------------------------------
// "KFLX", u16 version, u32 N, ħ q K γ T (f64), u64 kick, then N² (re, im) f64 pairs row-major.
// All little-endian.

inline constexpr std::uint16_t kSnapshotVersion = 1;

namespace detail
{
template < typename T >
void put_le(std::ostream& os, T v)
{
    using U = std::conditional_t< sizeof(T) == 8, std::uint64_t, std::conditional_t< sizeof(T) == 4, std::uint32_t, std::uint16_t > >;
    U bits  = std::bit_cast< U >(v);
    char buf[sizeof(U)];
    for (std::size_t i = 0; i < sizeof(U); ++i)
        buf[i] = static_cast< char >((bits >> (8 * i)) & 0xFF);
    os.write(buf, sizeof buf);
}

template < typename T >
T get_le(std::istream& is)
{
    using U = std::conditional_t< sizeof(T) == 8, std::uint64_t, std::conditional_t< sizeof(T) == 4, std::uint32_t, std::uint16_t > >;
    unsigned char buf[sizeof(U)];
    if (!is.read(reinterpret_cast< char* >(buf), sizeof buf))
        throw ConfigError("snapshot: truncated stream");
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        bits |= static_cast< U >(buf[i]) << (8 * i);
    return std::bit_cast< T >(bits);
}
} // namespace detail

inline void write_snapshot(std::ostream& os, const DensityMatrix& rho)
{
    os.write("KFLX", 4);
    detail::put_le< std::uint16_t >(os, kSnapshotVersion);
    detail::put_le< std::uint32_t >(os, static_cast< std::uint32_t >(rho.size()));
    const auto& p = rho.params;
    for (double v : {p.hbar(), p.q(), p.kick_K(), p.gamma(), p.period_T()})
        detail::put_le< double >(os, v);
    detail::put_le< std::uint64_t >(os, rho.kick);
    for (Eigen::Index i = 0; i < rho.rho.rows(); ++i)
        for (Eigen::Index j = 0; j < rho.rho.cols(); ++j)
        {
            detail::put_le< double >(os, rho.rho(i, j).real());
            detail::put_le< double >(os, rho.rho(i, j).imag());
        }
}

inline DensityMatrix read_snapshot(std::istream& is)
{
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, "KFLX", 4) != 0)
        throw ConfigError("snapshot: bad magic");
    const auto version = detail::get_le< std::uint16_t >(is);
    if (version != kSnapshotVersion)
        throw ConfigError("snapshot: unsupported version " + std::to_string(version));
    const auto N     = detail::get_le< std::uint32_t >(is);
    RawParams  raw;
    raw.hbar         = detail::get_le< double >(is);
    raw.q            = detail::get_le< double >(is);
    raw.K            = detail::get_le< double >(is);
    raw.gamma        = detail::get_le< double >(is);
    raw.T            = detail::get_le< double >(is);
    raw.N            = N;
    DensityMatrix r;
    r.params = validate_params(raw);
    r.kick   = detail::get_le< std::uint64_t >(is);
    r.rho.resize(N, N);
    for (Eigen::Index i = 0; i < r.rho.rows(); ++i)
        for (Eigen::Index j = 0; j < r.rho.cols(); ++j)
        {
            const double re = detail::get_le< double >(is);
            const double im = detail::get_le< double >(is);
            r.rho(i, j)     = cplx(re, im);
        }
    return r;
}
} // namespace kfx

#endif // KFX_LINDBLAD_HPP
