#ifndef KFX_CLASSICAL_HPP
#define KFX_CLASSICAL_HPP

#include "kfx/error.hpp"
#include "kfx/params.hpp"
#include "kfx/phase_grid.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace kfx
{
struct PhasePoint
{
    double x = 0.0;
    double p = 0.0;

    bool operator==(const PhasePoint&) const = default;
};

struct Ensemble
{
    std::vector< PhasePoint > points;
    std::uint64_t             rng_seed = 0;
};

/// Exact propagator of  dx/dt = p,  dp/dt = -2γp - x  over time T.
///   x(T) = e^{-γT} [x cos ωT + (p + γx)/ω sin ωT],  p(T) = dx/dt(T),  ω = √(1-γ²).
/// At γ = 0, T = π/2 this is the clockwise quarter turn (x, p) → (p, -x).
class LinearFlow
{
public:
    LinearFlow(double gamma, double T)
    {
        if (!(gamma >= 0.0 && gamma < 1.0))
            throw ConfigError("overdamped regime unsupported (gamma >= 1)");
        const double w = std::sqrt(1.0 - gamma * gamma);
        const double e = std::exp(-gamma * T);
        const double c = std::cos(w * T);
        const double s = std::sin(w * T);
        m_ << e * (c + gamma * s / w), e * s / w, -e * s / w, e * (c - gamma * s / w);
    }

    [[nodiscard]] PhasePoint operator()(PhasePoint pt) const noexcept
    {
        return {m_(0, 0) * pt.x + m_(0, 1) * pt.p, m_(1, 0) * pt.x + m_(1, 1) * pt.p};
    }

    [[nodiscard]] const Eigen::Matrix2d& matrix() const noexcept { return m_; }

private:
    Eigen::Matrix2d m_;
};

inline PhasePoint free_dissipative_step(PhasePoint pt, double gamma, double T)
{
    return LinearFlow(gamma, T)(pt);
}

/// δ-kick of  -K cos(q x):  p → p - K q sin(q x).
inline PhasePoint kick_step(PhasePoint pt, double K, double q) noexcept
{
    return {pt.x, pt.p - K * q * std::sin(q * pt.x)};
}

/// One period: free damped rotation over T, then the kick.
class PeriodMap
{
public:
    explicit PeriodMap(const SystemParams& p)
        : flow_(p.gamma(), p.period_T()), K_(p.kick_K()), q_(p.q()), gamma_(p.gamma()), T_(p.period_T())
    {}

    [[nodiscard]] PhasePoint operator()(PhasePoint pt) const noexcept { return kick_step(flow_(pt), K_, q_); }

    /// Tangent map at pt: shear(x̃) · flow, with x̃ the pre-kick coordinate.
    [[nodiscard]] Eigen::Matrix2d jacobian(PhasePoint pt) const noexcept
    {
        const PhasePoint mid = flow_(pt);
        Eigen::Matrix2d  J   = flow_.matrix();
        J.row(1) -= K_ * q_ * q_ * std::cos(q_ * mid.x) * J.row(0);
        return J;
    }

    /// log |det J| per period, the same at every point.
    [[nodiscard]] double log_contraction() const noexcept { return -2.0 * gamma_ * T_; }

private:
    LinearFlow flow_;
    double     K_, q_, gamma_, T_;
};

inline PhasePoint period_map(PhasePoint pt, const SystemParams& params)
{
    return PeriodMap(params)(pt);
}

inline Eigen::Matrix2d jacobian(PhasePoint pt, const SystemParams& params)
{
    return PeriodMap(params).jacobian(pt);
}

/// Uniform sample of the disk of the given radius around (x0, p0).
/// Points are generated in fixed chunks, each with its own engine seeded from (seed, chunk),
/// so the result does not depend on how the caller parallelizes later.
inline Ensemble make_ensemble(std::size_t n, double x0, double p0, std::uint64_t seed, double radius = 1.0)
{
    constexpr std::size_t chunk = 4096;
    Ensemble              ens;
    ens.rng_seed = seed;
    ens.points.resize(n);
    for (std::size_t c0 = 0; c0 < n; c0 += chunk)
    {
        std::seed_seq seq{static_cast< std::uint32_t >(seed), static_cast< std::uint32_t >(seed >> 32),
                          static_cast< std::uint32_t >(c0 / chunk)};
        std::mt19937_64                          rng(seq);
        std::uniform_real_distribution< double > uni(0.0, 1.0);
        for (std::size_t i = c0; i < std::min(n, c0 + chunk); ++i)
        {
            const double r     = radius * std::sqrt(uni(rng));
            const double theta = 2.0 * std::numbers::pi * uni(rng);
            ens.points[i]      = {x0 + r * std::cos(theta), p0 + r * std::sin(theta)};
        }
    }
    return ens;
}

namespace detail
{
inline bool escaped(PhasePoint pt) noexcept
{
    constexpr double limit = 1e150;
    return !(std::abs(pt.x) < limit && std::abs(pt.p) < limit);
}

/// Runs fn(begin, end) over [0, n) split into `workers` contiguous ranges.
template < typename Fn >
void parallel_ranges(std::size_t n, unsigned workers, Fn&& fn)
{
    workers = std::max(1u, std::min< unsigned >(workers, static_cast< unsigned >(std::max< std::size_t >(n, 1))));
    if (workers == 1)
    {
        fn(std::size_t{0}, n);
        return;
    }
    std::vector< std::jthread > pool;
    const std::size_t           per = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w)
    {
        const std::size_t b = std::min(n, w * per);
        const std::size_t e = std::min(n, b + per);
        pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
}
} // namespace detail

/// Called after every accumulated (post-transient) step with the 1-based step index.
using EnsembleObserver = std::function< void(std::uint64_t step, const Ensemble&) >;

/// Advances every point n_steps periods. The observer sees steps discard+1 .. n_steps.
inline Ensemble evolve_ensemble(Ensemble ens, const SystemParams& params, std::uint64_t n_steps, std::uint64_t discard = 0,
                                const EnsembleObserver& observer = {}, unsigned workers = 1)
{
    if (ens.points.empty())
        throw ConfigError("ensemble is empty");
    const PeriodMap map(params);
    auto&           pts = ens.points;

    auto advance = [&](std::size_t b, std::size_t e, std::uint64_t steps) -> std::size_t {
        for (std::uint64_t s = 0; s < steps; ++s)
            for (std::size_t i = b; i < e; ++i)
            {
                pts[i] = map(pts[i]);
                if (detail::escaped(pts[i]))
                    return i;
            }
        return std::numeric_limits< std::size_t >::max();
    };
    auto run = [&](std::uint64_t steps) {
        std::vector< std::size_t > first_bad;
        std::mutex                 m;
        detail::parallel_ranges(pts.size(), workers, [&](std::size_t b, std::size_t e) {
            const auto r = advance(b, e, steps);
            std::scoped_lock lk(m);
            first_bad.push_back(r);
        });
        const auto worst = *std::ranges::min_element(first_bad);
        if (worst != std::numeric_limits< std::size_t >::max())
            throw NumericalAbort("trajectory " + std::to_string(worst) + " overflowed");
    };

    if (!observer)
    {
        run(n_steps);
        return ens;
    }
    for (std::uint64_t step = 1; step <= n_steps; ++step)
    {
        run(1);
        if (step > discard)
            observer(step, ens);
    }
    return ens;
}

/// Default transient before accumulation: max(100, 5/γ) periods.
inline std::uint64_t default_transient(const SystemParams& p)
{
    const double by_gamma = p.gamma() > 0.0 ? 5.0 / p.gamma() : 0.0;
    return static_cast< std::uint64_t >(std::ceil(std::max(100.0, by_gamma)));
}

/// Occupation histogram of the iterates discard+1 .. n_steps of every trajectory, as a
/// probability density (Σ values · cell area + overflow_mass = 1).
inline PhaseGrid accumulate_histogram(Ensemble ens, const SystemParams& params, std::uint64_t n_steps, const GridSpec& spec,
                                      std::uint64_t discard, unsigned workers = 1)
{
    spec.validate();
    if (ens.points.empty())
        throw ConfigError("ensemble is empty");
    if (discard >= n_steps)
        throw ConfigError("histogram needs n_steps > discard");

    const PeriodMap map(params);
    const double    inv_dx = 1.0 / spec.dx();
    const double    inv_dp = 1.0 / spec.dp();
    auto&           pts    = ens.points;

    struct Tally
    {
        std::vector< std::uint64_t > counts;
        std::uint64_t                outside = 0;
        std::size_t                  bad     = std::numeric_limits< std::size_t >::max();
    };
    std::vector< Tally > tallies;
    std::mutex           m;

    detail::parallel_ranges(pts.size(), workers, [&](std::size_t b, std::size_t e) {
        Tally t;
        t.counts.assign(spec.M_x * spec.M_p, 0);
        for (std::size_t i = b; i < e && t.bad == std::numeric_limits< std::size_t >::max(); ++i)
        {
            PhasePoint pt = pts[i];
            for (std::uint64_t s = 1; s <= n_steps; ++s)
            {
                pt = map(pt);
                if (detail::escaped(pt))
                {
                    t.bad = i;
                    break;
                }
                if (s <= discard)
                    continue;
                const double fx = std::floor((pt.x - spec.x_min) * inv_dx);
                const double fp = std::floor((pt.p - spec.p_min) * inv_dp);
                if (fx >= 0.0 && fp >= 0.0 && fx < static_cast< double >(spec.M_x) && fp < static_cast< double >(spec.M_p))
                    ++t.counts[static_cast< std::size_t >(fp) * spec.M_x + static_cast< std::size_t >(fx)];
                else
                    ++t.outside;
            }
            pts[i] = pt;
        }
        std::scoped_lock lk(m);
        tallies.push_back(std::move(t));
    });

    std::vector< std::uint64_t > counts(spec.M_x * spec.M_p, 0);
    std::uint64_t                outside = 0;
    std::size_t                  bad     = std::numeric_limits< std::size_t >::max();
    for (const auto& t : tallies)
    {
        bad = std::min(bad, t.bad);
        outside += t.outside;
        for (std::size_t c = 0; c < counts.size(); ++c)
            counts[c] += t.counts[c];
    }
    if (bad != std::numeric_limits< std::size_t >::max())
        throw NumericalAbort("trajectory " + std::to_string(bad) + " overflowed");

    const auto total = static_cast< double >(pts.size()) * static_cast< double >(n_steps - discard);
    PhaseGrid  grid(spec);
    const double norm = 1.0 / (total * spec.cell_area());
    for (std::size_t c = 0; c < counts.size(); ++c)
        grid.values[c] = static_cast< double >(counts[c]) * norm;
    grid.overflow_mass = static_cast< double >(outside) / total;
    return grid;
}

/// Histogram of the current points only (no iteration).
inline PhaseGrid ensemble_histogram(const Ensemble& ens, const GridSpec& spec)
{
    spec.validate();
    if (ens.points.empty())
        throw ConfigError("ensemble is empty");
    PhaseGrid     grid(spec);
    std::uint64_t outside = 0;
    const double  inc     = 1.0 / (static_cast< double >(ens.points.size()) * spec.cell_area());
    for (const auto& pt : ens.points)
    {
        const double fx = std::floor((pt.x - spec.x_min) / spec.dx());
        const double fp = std::floor((pt.p - spec.p_min) / spec.dp());
        if (fx >= 0.0 && fp >= 0.0 && fx < static_cast< double >(spec.M_x) && fp < static_cast< double >(spec.M_p))
            grid.at(static_cast< std::size_t >(fp), static_cast< std::size_t >(fx)) += inc;
        else
            ++outside;
    }
    grid.overflow_mass = static_cast< double >(outside) / static_cast< double >(ens.points.size());
    return grid;
}

struct LyapunovResult
{
    double        lambda1 = 0.0; ///< per unit time
    double        lambda2 = 0.0; ///< per unit time
    double        period_T = 1.0;
    std::uint64_t n_steps  = 0;
    std::uint64_t discarded = 0;
    std::uint64_t reseeds   = 0; ///< degenerate tangent frames that had to be re-seeded

    [[nodiscard]] double lambda1_per_kick() const noexcept { return lambda1 * period_T; }
    [[nodiscard]] double lambda2_per_kick() const noexcept { return lambda2 * period_T; }
};

/// Both Lyapunov exponents from the iterated tangent map, re-orthonormalized every
/// `reorth_every` periods. The second vector is rebuilt from the frame determinant, so
/// λ1 + λ2 tracks log|det J| to rounding.
inline LyapunovResult lyapunov_spectrum(const SystemParams& params, PhasePoint start, std::uint64_t n_steps,
                                        std::uint64_t discard = 1000, std::uint64_t reorth_every = 10)
{
    if (n_steps == 0 || reorth_every == 0)
        throw ConfigError("lyapunov_spectrum needs n_steps > 0");
    const PeriodMap map(params);
    PhasePoint      pt = start;
    for (std::uint64_t s = 0; s < discard; ++s)
    {
        pt = map(pt);
        if (detail::escaped(pt))
            throw NumericalAbort("lyapunov trajectory overflowed during transient");
    }

    Eigen::Matrix2d frame = Eigen::Matrix2d::Identity();
    double          sum1 = 0.0, sum2 = 0.0;
    double          log_area = 0.0; // Σ ln|det J| since the last reorthonormalization
    std::uint64_t   reseeds = 0;

    // second length from the accumulated area, not from det(frame)
    auto reorthonormalize = [&] {
        const Eigen::Vector2d v1 = frame.col(0);
        const double          n1 = v1.norm();
        if (!(n1 > 0.0) || !std::isfinite(n1) || !std::isfinite(log_area))
        {
            frame    = Eigen::Matrix2d::Identity();
            log_area = 0.0;
            ++reseeds;
            return;
        }
        const Eigen::Vector2d u1 = v1 / n1;
        sum1 += std::log(n1);
        sum2 += log_area - std::log(n1);
        log_area = 0.0;
        frame.col(0) = u1;
        frame.col(1) = Eigen::Vector2d(-u1.y(), u1.x());
    };

    for (std::uint64_t s = 1; s <= n_steps; ++s)
    {
        const Eigen::Matrix2d J = map.jacobian(pt);
        log_area += std::log(std::abs(J.determinant()));
        frame = J * frame;
        pt    = map(pt);
        if (detail::escaped(pt))
            throw NumericalAbort("lyapunov trajectory overflowed");
        if (s % reorth_every == 0 || s == n_steps)
            reorthonormalize();
    }

    LyapunovResult r;
    r.period_T  = params.period_T();
    r.n_steps   = n_steps;
    r.discarded = discard;
    r.reseeds   = reseeds;
    const double time = static_cast< double >(n_steps) * params.period_T();
    r.lambda1         = sum1 / time;
    r.lambda2         = sum2 / time;
    return r;
}

struct DimensionEstimate
{
    bool   strange_attractor = false; ///< false: λ1 ≤ 0, no fractal attractor
    double d_info            = std::numeric_limits< double >::quiet_NaN(); ///< 2 - γ/λ1 (λ1 per kick)
    double d_kaplan_yorke    = std::numeric_limits< double >::quiet_NaN(); ///< 1 + λ1/|λ2|
};

inline DimensionEstimate information_dimension(const LyapunovResult& lr, double gamma)
{
    DimensionEstimate d;
    const double      l1 = lr.lambda1_per_kick();
    const double      l2 = lr.lambda2_per_kick();
    if (!(l1 > 0.0) || !(l2 < 0.0))
        return d;
    d.strange_attractor = true;
    d.d_info            = 2.0 - gamma / l1;
    d.d_kaplan_yorke    = 1.0 + l1 / std::abs(l2);
    return d;
}

struct EnergyMoments
{
    double E  = 0.0; ///< mean of (x² + p²)/2
    double dx = 0.0; ///< standard deviation of x
    double dp = 0.0; ///< standard deviation of p
};

inline EnergyMoments energy_moments(const Ensemble& ens)
{
    if (ens.points.empty())
        throw ConfigError("ensemble is empty");
    const auto n = static_cast< double >(ens.points.size());
    double     sx = 0.0, sp = 0.0, se = 0.0;
    for (const auto& pt : ens.points)
    {
        sx += pt.x;
        sp += pt.p;
        se += 0.5 * (pt.x * pt.x + pt.p * pt.p);
    }
    const double mx = sx / n, mp = sp / n;
    double       vx = 0.0, vp = 0.0;
    for (const auto& pt : ens.points)
    {
        vx += (pt.x - mx) * (pt.x - mx);
        vp += (pt.p - mp) * (pt.p - mp);
    }
    return {se / n, std::sqrt(vx / n), std::sqrt(vp / n)};
}
} // namespace kfx

#endif // KFX_CLASSICAL_HPP
