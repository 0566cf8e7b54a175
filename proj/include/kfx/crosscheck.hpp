#ifndef KFX_CROSSCHECK_HPP
#define KFX_CROSSCHECK_HPP

// Independent reference computations: Gauss-Hermite quadrature for the kick matrix, RK4 on
// the master equation for the damping channel, an adaptive ODE solver for the free flow.

#include "kfx/classical.hpp"
#include "kfx/fock.hpp"
#include "kfx/lindblad.hpp"
#include "kfx/observables.hpp"

#include <boost/numeric/odeint.hpp>

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace kfx
{
struct OracleRow
{
    std::string name;
    double      error     = 0.0;
    double      tolerance = 0.0;
    bool        at_least  = false; ///< pass when error >= tolerance (correlations)

    [[nodiscard]] bool passed() const noexcept
    {
        if (!std::isfinite(error))
            return false;
        return at_least ? error >= tolerance : error <= tolerance;
    }
};

/// max |C(n, n+m) - quadrature| over n + m ≤ n_max (m ≥ 0).
inline double cos_oracle_error(const CosMatrix& C, std::size_t n_max)
{
    const double rule_order = static_cast< double >(2 * n_max + 64);
    const auto   rule       = gauss_hermite(std::min< std::size_t >(static_cast< std::size_t >(rule_order), kMaxQuadratureOrder));
    double       worst      = 0.0;
    for (std::size_t n = 0; n <= n_max; ++n)
        for (std::size_t m = 0; n + m <= n_max; ++m)
        {
            const double ref = cos_element_quadrature(rule, n, m, C.q, C.hbar);
            const double got = C.entries(static_cast< Eigen::Index >(n), static_cast< Eigen::Index >(n + m));
            worst            = std::max(worst, std::abs(got - ref));
        }
    return worst;
}

inline double cos_oracle_error(double q, double hbar, std::size_t n_max = 40)
{
    return cos_oracle_error(cos_matrix(n_max + 1, q, hbar), n_max);
}

/// Complex entries uniform in the unit square, scaled to unit Frobenius norm.
inline OperatorMatrix random_operator(std::size_t N, std::mt19937_64& rng)
{
    std::uniform_real_distribution< double > u(-1.0, 1.0);
    const auto                               n = static_cast< Eigen::Index >(N);
    OperatorMatrix                           A(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i)
        {
            const double re = u(rng);
            A(i, j)         = cplx(re, u(rng));
        }
    return A / A.norm();
}

/// RK4 step small enough that the fastest decay rate γ·2N moves ≤ 0.05 per step.
inline double channel_oracle_dt(double gamma, std::size_t N)
{
    if (gamma == 0.0)
        return 0.01;
    return std::min(0.01, 0.05 / (2.0 * gamma * static_cast< double >(N)));
}

/// max Frobenius distance between the exact channel and RK4 over `count` random operators.
inline double channel_oracle_error(double gamma, double T, std::size_t N, std::size_t count, std::uint64_t seed)
{
    const ChannelCache cache(gamma, T, N);
    std::mt19937_64    rng(seed);
    const double       dt    = channel_oracle_dt(gamma, N);
    double             worst = 0.0;
    for (std::size_t i = 0; i < count; ++i)
    {
        const OperatorMatrix A = random_operator(N, rng);
        worst = std::max(worst, (damping_channel(A, cache) - damping_channel_rk(A, gamma, T, dt)).norm());
    }
    return worst;
}

/// Free flow integrated by a controlled Runge-Kutta-Fehlberg 7(8) stepper.
inline PhasePoint free_flow_ode(PhasePoint pt, double gamma, double T)
{
    namespace ode = boost::numeric::odeint;
    using State   = std::array< double, 2 >;
    State s{pt.x, pt.p};
    auto  rhs = [gamma](const State& y, State& dy, double) {
        dy[0] = y[1];
        dy[1] = -2.0 * gamma * y[1] - y[0];
    };
    ode::integrate_adaptive(ode::make_controlled(1e-15, 1e-15, ode::runge_kutta_fehlberg78< State >()), rhs, s, 0.0, T,
                            T / 64.0);
    return {s[0], s[1]};
}

/// max |free_dissipative_step - ODE| over random inputs in [-10, 10]².
inline double map_oracle_error(double gamma, double T, std::size_t count, std::uint64_t seed)
{
    std::mt19937_64                          rng(seed);
    std::uniform_real_distribution< double > u(-10.0, 10.0);
    double                                   worst = 0.0;
    for (std::size_t i = 0; i < count; ++i)
    {
        const double     x = u(rng);
        const PhasePoint pt{x, u(rng)};
        const PhasePoint a = free_dissipative_step(pt, gamma, T);
        const PhasePoint b = free_flow_ode(pt, gamma, T);
        worst              = std::max({worst, std::abs(a.x - b.x), std::abs(a.p - b.p)});
    }
    return worst;
}

/// max relative deviation of det J from e^{-2γT} over random points.
inline double jacobian_det_error(const SystemParams& p, std::size_t count, std::uint64_t seed)
{
    std::mt19937_64                          rng(seed);
    std::uniform_real_distribution< double > u(-30.0, 30.0);
    const double                             expect = std::exp(-2.0 * p.gamma() * p.period_T());
    double                                   worst  = 0.0;
    for (std::size_t i = 0; i < count; ++i)
    {
        const double x = u(rng);
        const double d = jacobian({x, u(rng)}, p).determinant();
        worst          = std::max(worst, std::abs(d / expect - 1.0));
    }
    return worst;
}

/// ‖A⁴ - I‖_max for the undamped quarter-period flow.
inline double quarter_turn_error()
{
    const Eigen::Matrix2d A = LinearFlow(0.0, kQuarterPeriod).matrix();
    return (A * A * A * A - Eigen::Matrix2d::Identity()).cwiseAbs().maxCoeff();
}

struct CorrespondenceResult
{
    double    pearson         = 0.0;
    double    edge_population = 0.0;
    PhaseGrid husimi;
    PhaseGrid classical;
};

/// Husimi grid of the quantum state after n_kicks against the classical occupation histogram
/// of the same map (transient discarded) on a shared grid.
inline CorrespondenceResult quantum_classical_correspondence(const SystemParams& p, PhasePoint start, std::uint64_t n_kicks,
                                                             const GridSpec& spec, std::size_t trajectories,
                                                             std::uint64_t seed, TruncationPolicy policy = {},
                                                             unsigned workers = 1)
{
    const LindbladEngine engine(p);
    auto rec = evolve(engine, pure_state(coherent_state(start.x, start.p, p), p), n_kicks, SnapshotSchedule{n_kicks + 1}, {},
                      policy);

    CorrespondenceResult r;
    r.edge_population = rec.history.back().edge_population;
    r.husimi          = husimi_grid(rec.final_state.rho, spec, p.hbar()).grid;

    const std::uint64_t discard = default_transient(p);
    const Ensemble      ens     = make_ensemble(trajectories, start.x, start.p, seed);
    r.classical                 = accumulate_histogram(ens, p, discard + n_kicks, spec, discard, workers);
    r.pearson                   = grid_correlation(r.husimi, r.classical);
    return r;
}
} // namespace kfx

#endif // KFX_CROSSCHECK_HPP
