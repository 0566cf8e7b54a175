#include "kfx/classical.hpp"

#include <boost/numeric/odeint.hpp>
#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <numbers>
#include <random>

using namespace kfx;

namespace
{
constexpr double kPi = std::numbers::pi;

// Dormand-Prince 5(4) on dx/dt = p, dp/dt = -2γp - x.
PhasePoint ode_reference(PhasePoint pt, double gamma, double T)
{
    namespace ode = boost::numeric::odeint;
    using State   = std::array< double, 2 >;
    State s{pt.x, pt.p};
    ode::integrate_adaptive(ode::make_controlled(1e-14, 1e-14, ode::runge_kutta_dopri5< State >()),
                            [gamma](const State& y, State& dy, double) {
                                dy[0] = y[1];
                                dy[1] = -2.0 * gamma * y[1] - y[0];
                            },
                            s, 0.0, T, 1e-3);
    return {s[0], s[1]};
}

SystemParams params(double K, double q, double gamma, double T = kQuarterPeriod)
{
    return validate_params({.hbar = 1.0, .q = q, .K = K, .gamma = gamma, .T = T, .N = 2});
}

Eigen::Matrix2d finite_difference_jacobian(PhasePoint pt, const SystemParams& p, double h)
{
    Eigen::Matrix2d J;
    for (int c = 0; c < 2; ++c)
    {
        PhasePoint a = pt, b = pt;
        (c == 0 ? a.x : a.p) += h;
        (c == 0 ? b.x : b.p) -= h;
        const PhasePoint fa = period_map(a, p), fb = period_map(b, p);
        J(0, c)             = (fa.x - fb.x) / (2 * h);
        J(1, c)             = (fa.p - fb.p) / (2 * h);
    }
    return J;
}
} // namespace

TEST(FreeStep, QuarterTurnClockwise)
{
    const PhasePoint r = free_dissipative_step({1.0, 0.0}, 0.0, kPi / 2);
    EXPECT_NEAR(r.x, 0.0, 1e-15);
    EXPECT_NEAR(r.p, -1.0, 1e-15);
    const PhasePoint o = ode_reference({1.0, 0.0}, 0.0, kPi / 2);
    EXPECT_NEAR(o.x, 0.0, 1e-10);
    EXPECT_NEAR(o.p, -1.0, 1e-10);
}

TEST(FreeStep, FullPeriodIsIdentity)
{
    const PhasePoint r = free_dissipative_step({3.5, -2.25}, 0.0, 2 * kPi);
    EXPECT_NEAR(r.x, 3.5, 1e-14);
    EXPECT_NEAR(r.p, -2.25, 1e-14);
}

TEST(FreeStep, DampedMatchesOde)
{
    const PhasePoint a = free_dissipative_step({1.0, 0.0}, 0.1, kPi / 2);
    const PhasePoint b = ode_reference({1.0, 0.0}, 0.1, kPi / 2);
    EXPECT_NEAR(a.x, b.x, 1e-12);
    EXPECT_NEAR(a.p, b.p, 1e-12);
    EXPECT_NEAR(LinearFlow(0.1, kPi / 2).matrix().determinant(), std::exp(-0.1 * kPi), 1e-15);
    EXPECT_NEAR(std::exp(-0.1 * kPi), 0.73040, 5e-6);
}

// 10³ random (x, p, γ, T) against the adaptive integrator
TEST(FreeStep, OdeOracleProperty)
{
    std::mt19937_64                          rng(7);
    std::uniform_real_distribution< double > u(0.0, 1.0);
    double                                   worst = 0.0;
    for (int i = 0; i < 1000; ++i)
    {
        const PhasePoint pt{20.0 * u(rng) - 10.0, 20.0 * u(rng) - 10.0};
        const double     gamma = 0.95 * u(rng);
        const double     T     = 0.05 + 2.0 * kPi * u(rng);
        const PhasePoint a     = free_dissipative_step(pt, gamma, T);
        const PhasePoint b     = ode_reference(pt, gamma, T);
        worst                  = std::max({worst, std::abs(a.x - b.x), std::abs(a.p - b.p)});
    }
    EXPECT_LE(worst, 1e-10);
}

TEST(FreeStep, RejectsOverdamped)
{
    EXPECT_THROW(LinearFlow(1.0, 1.0), ConfigError);
}

TEST(Kick, Examples)
{
    EXPECT_EQ(kick_step({1.3, -0.7}, 0.0, 0.4), (PhasePoint{1.3, -0.7}));
    EXPECT_EQ(kick_step({0.0, 2.5}, 40.0, 0.4), (PhasePoint{0.0, 2.5}));
    const PhasePoint r = kick_step({kPi / (2 * 0.4), 0.0}, 40.0, 0.4);
    EXPECT_DOUBLE_EQ(r.x, kPi / 0.8);
    EXPECT_NEAR(r.p, -16.0, 1e-13);
}

TEST(PeriodMap, UndampedUnkickedIsQuarterRotation)
{
    const auto       p = params(0.0, 1.0, 0.0);
    const PhasePoint r = period_map({2.0, 5.0}, p);
    EXPECT_NEAR(r.x, 5.0, 1e-14);
    EXPECT_NEAR(r.p, -2.0, 1e-14);

    PhasePoint q{2.0, 5.0};
    for (int i = 0; i < 4; ++i)
        q = period_map(q, p);
    EXPECT_NEAR(q.x, 2.0, 1e-12);
    EXPECT_NEAR(q.p, 5.0, 1e-12);
}

TEST(PeriodMap, OriginIsFixed)
{
    for (const auto& p : {params(40.0, 0.4, 0.05), params(8.0, 1.0, 0.0), params(3.0, 2.0, 0.7, 1.0)})
        EXPECT_EQ(period_map({0.0, 0.0}, p), (PhasePoint{0.0, 0.0}));
}

TEST(PeriodMap, KickFollowsFreeFlow)
{
    const auto       p  = params(6.4, 1.0, 0.05);
    const PhasePoint pt{1.7, -0.3};
    const PhasePoint expect = kick_step(free_dissipative_step(pt, 0.05, kQuarterPeriod), 6.4, 1.0);
    EXPECT_EQ(period_map(pt, p), expect);
}

// diffusive growth: slope of ⟨E⟩ per kick within a factor 3 of q²K²/2
TEST(PeriodMap, UndampedChaoticEnergyGrowth)
{
    const auto            p   = params(6.4, 1.0, 0.0);
    std::vector< double > E;
    evolve_ensemble(make_ensemble(2000, 0.0, 0.0, 3), p, 200, 0,
                    [&](std::uint64_t, const Ensemble& e) { E.push_back(energy_moments(e).E); });
    // least-squares slope over steps 20..200
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (std::size_t i = 19; i < E.size(); ++i)
    {
        const double t = static_cast< double >(i + 1);
        sx += t;
        sy += E[i];
        sxx += t * t;
        sxy += t * E[i];
        n += 1;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double ref   = 6.4 * 6.4 / 2.0;
    EXPECT_GT(slope, ref / 3.0);
    EXPECT_LT(slope, ref * 3.0);
}

TEST(Jacobian, NoKickIsLinearFlow)
{
    const auto p = params(0.0, 1.0, 0.2);
    EXPECT_TRUE(jacobian({3.0, 1.0}, p).isApprox(LinearFlow(0.2, kQuarterPeriod).matrix(), 1e-15));
}

TEST(Jacobian, DeterminantProperty)
{
    std::mt19937_64                          rng(11);
    std::uniform_real_distribution< double > u(-40.0, 40.0);
    const auto                               cons = params(6.4, 1.0, 0.0);
    const auto                               diss = params(40.0, 0.4, 0.05);
    for (int i = 0; i < 1000; ++i)
    {
        const PhasePoint pt{u(rng), u(rng)};
        EXPECT_NEAR(jacobian(pt, cons).determinant(), 1.0, 1e-12);
        EXPECT_NEAR(jacobian(pt, diss).determinant() / std::exp(-0.1 * kQuarterPeriod), 1.0, 1e-13);
    }
}

TEST(Jacobian, MatchesFiniteDifferences)
{
    std::mt19937_64                          rng(5);
    std::uniform_real_distribution< double > u(-20.0, 20.0);
    const auto                               p = params(6.4, 1.0, 0.05);
    for (int i = 0; i < 200; ++i)
    {
        const PhasePoint      pt{u(rng), u(rng)};
        const Eigen::Matrix2d J  = jacobian(pt, p);
        const Eigen::Matrix2d Jf = finite_difference_jacobian(pt, p, 1e-6);
        EXPECT_LE((J - Jf).norm(), 1e-6 * J.norm()) << pt.x << ' ' << pt.p;
    }
}

TEST(Ensemble, DiskSamplingIsSeeded)
{
    const Ensemble a = make_ensemble(10000, 10.0, 1.0, 42);
    const Ensemble b = make_ensemble(10000, 10.0, 1.0, 42);
    const Ensemble c = make_ensemble(10000, 10.0, 1.0, 43);
    const Ensemble d = make_ensemble(5000, 10.0, 1.0, 42);
    EXPECT_EQ(a.points, b.points);
    EXPECT_NE(a.points, c.points);
    EXPECT_TRUE(std::equal(d.points.begin(), d.points.end(), a.points.begin()));
    double mx = 0, mp = 0;
    for (const auto& pt : a.points)
    {
        EXPECT_LE(std::hypot(pt.x - 10.0, pt.p - 1.0), 1.0);
        mx += pt.x;
        mp += pt.p;
    }
    EXPECT_NEAR(mx / 10000, 10.0, 0.02);
    EXPECT_NEAR(mp / 10000, 1.0, 0.02);
}

TEST(Ensemble, ZeroStepsIsIdentity)
{
    const Ensemble e = make_ensemble(100, 1.0, 2.0, 1);
    EXPECT_EQ(evolve_ensemble(e, params(8.0, 1.0, 0.05), 0).points, e.points);
}

TEST(Ensemble, UnkickedContraction)
{
    const double   gamma = 0.1;
    const auto     p     = params(0.0, 1.0, gamma);
    const Ensemble e0    = make_ensemble(500, 5.0, -3.0, 9);
    for (std::uint64_t n : {10u, 40u, 100u})
    {
        const Ensemble e     = evolve_ensemble(e0, p, n);
        const double   decay = std::exp(-gamma * kQuarterPeriod * static_cast< double >(n));
        for (std::size_t i = 0; i < e.points.size(); ++i)
        {
            const double r0 = std::hypot(e0.points[i].x, e0.points[i].p);
            const double r  = std::hypot(e.points[i].x, e.points[i].p);
            EXPECT_NEAR(r / (r0 * decay), 1.0, 0.15);
        }
    }
}

TEST(Ensemble, OverflowNamesTrajectory)
{
    const auto p = params(1e200, 1.0, 0.0);
    Ensemble   e;
    e.points = {{0.0, 0.0}, {0.0, 0.0}, {0.0, 1.0}, {0.0, 0.0}};
    try
    {
        evolve_ensemble(e, p, 5);
        FAIL() << "no abort";
    }
    catch (const NumericalAbort& err)
    {
        EXPECT_NE(std::string(err.what()).find("trajectory 2"), std::string::npos) << err.what();
    }
    EXPECT_THROW(accumulate_histogram(e, p, 5, GridSpec::square(1.0, 4), 0), NumericalAbort);
}

TEST(Ensemble, WorkerCountDoesNotChangeResults)
{
    const auto     p  = params(6.4, 1.0, 0.05);
    const Ensemble e0 = make_ensemble(3001, 10.0, 1.0, 77);
    EXPECT_EQ(evolve_ensemble(e0, p, 50, 0, {}, 1).points, evolve_ensemble(e0, p, 50, 0, {}, 4).points);
    const auto spec = GridSpec::square(30.0, 40);
    const auto h1   = accumulate_histogram(e0, p, 80, spec, 20, 1);
    const auto h3   = accumulate_histogram(e0, p, 80, spec, 20, 3);
    EXPECT_EQ(h1.values, h3.values);
    EXPECT_EQ(h1.overflow_mass, h3.overflow_mass);
}

TEST(Histogram, MassPlusOverflowIsOne)
{
    const auto p = params(6.4, 1.0, 0.05);
    const auto g = accumulate_histogram(make_ensemble(1000, 10.0, 1.0, 2), p, 150, GridSpec{-10, 25, -5, 12, 37, 23}, 100);
    EXPECT_GT(g.overflow_mass, 0.0);
    EXPECT_NEAR(g.mass() + g.overflow_mass, 1.0, 1e-12);
    for (double v : g.values)
        EXPECT_GE(v, 0.0);
    EXPECT_THROW(accumulate_histogram(make_ensemble(10, 0, 0, 1), p, 10, GridSpec::square(1, 2), 10), ConfigError);
}

TEST(Histogram, UnkickedMassAtOrigin)
{
    const auto     p    = params(0.0, 1.0, 0.1);
    const GridSpec spec = GridSpec::square(1.0, 10); // origin sits on the corner of cells 4 and 5
    const auto     g    = accumulate_histogram(make_ensemble(200, 3.0, 1.0, 4), p, 600, spec, default_transient(p));
    double         adj  = 0;
    for (std::size_t ip : {4u, 5u})
        for (std::size_t ix : {4u, 5u})
            adj += g.at(ip, ix) * spec.cell_area();
    EXPECT_NEAR(adj, 1.0, 1e-12);
    EXPECT_EQ(g.overflow_mass, 0.0);
}

TEST(Histogram, AttractorMomentumSupport)
{
    const auto     p    = params(40.0, 0.4, 0.05);
    const GridSpec spec{-75, 75, -75, 75, 30, 30};
    const auto     g    = accumulate_histogram(make_ensemble(20000, 10.0, 1.0, 1), p, 300, spec, 100);
    double         within = 0.0;
    for (std::size_t ip = 0; ip < spec.M_p; ++ip)
        if (std::abs(spec.p_center(ip)) < 50.0)
            for (std::size_t ix = 0; ix < spec.M_x; ++ix)
                within += g.at(ip, ix) * spec.cell_area();
    EXPECT_GT(within, 0.95);
    EXPECT_LT(g.overflow_mass, 1e-3);
}

// doubling the ensemble moves cells by no more than their Poisson scatter
TEST(Histogram, MonteCarloConvergence)
{
    const auto     p  = params(6.4, 1.0, 0.05);
    const GridSpec s  = GridSpec::square(40.0, 32);
    const auto     a  = accumulate_histogram(make_ensemble(2000, 10.0, 1.0, 11), p, 200, s, 100);
    const auto     b  = accumulate_histogram(make_ensemble(4000, 10.0, 1.0, 12), p, 200, s, 100);
    const double   na = 2000.0 * 100, nb = 4000.0 * 100, area = s.cell_area();
    double         chi = 0.0;
    int            cells = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
    {
        const double pa = a.values[i] * area, pb = b.values[i] * area;
        const double var = pa / na + pb / nb;
        if (var <= 0.0)
            continue;
        const double z2 = (pa - pb) * (pa - pb) / var;
        EXPECT_LT(z2, 25.0) << "cell " << i;
        chi += z2;
        ++cells;
    }
    EXPECT_GT(cells, 100);
    EXPECT_LT(chi / cells, 2.0);
}

TEST(EnsembleHistogram, CountsCurrentPoints)
{
    Ensemble e;
    e.points = {{0.5, 0.5}, {0.5, 0.5}, {-0.5, 0.5}, {5.0, 0.0}};
    const auto g = ensemble_histogram(e, GridSpec::square(1.0, 2));
    EXPECT_DOUBLE_EQ(g.at(1, 1), 0.5);
    EXPECT_DOUBLE_EQ(g.at(1, 0), 0.25);
    EXPECT_DOUBLE_EQ(g.overflow_mass, 0.25);
}

TEST(Lyapunov, UnkickedBothEqualMinusGamma)
{
    const auto lr = lyapunov_spectrum(params(0.0, 1.0, 0.05), {1.0, 0.5}, 20000, 100);
    EXPECT_NEAR(lr.lambda1, -0.05, 1e-4);
    EXPECT_NEAR(lr.lambda2, -0.05, 1e-4);
    EXPECT_FALSE(information_dimension(lr, 0.05).strange_attractor);
}

TEST(Lyapunov, ChaoticSpectrumAndSumRule)
{
    const auto lr = lyapunov_spectrum(params(6.4, 1.0, 0.05), {10.0, 1.0}, 20000);
    EXPECT_GE(lr.lambda1, lr.lambda2);
    EXPECT_NEAR(lr.lambda1 + lr.lambda2, -2 * 0.05, 1e-6);
    EXPECT_NEAR(lr.lambda1_per_kick(), std::log(3.2), 0.2 * std::log(3.2));
    EXPECT_EQ(lr.reseeds, 0u);
    EXPECT_THROW(lyapunov_spectrum(params(6.4, 1.0, 0.05), {1, 1}, 0), ConfigError);
}

TEST(InformationDimension, Formulas)
{
    LyapunovResult lr;
    lr.period_T = kQuarterPeriod;
    lr.lambda1  = 1.0 / kQuarterPeriod;
    lr.lambda2  = -1.0 / kQuarterPeriod - 2 * 0.05;
    const auto d = information_dimension(lr, 0.05);
    EXPECT_TRUE(d.strange_attractor);
    EXPECT_NEAR(d.d_info, 1.95, 1e-15);
    EXPECT_NEAR(d.d_kaplan_yorke, 1.0 + 1.0 / (1.0 + 0.1 * kQuarterPeriod), 1e-15);

    lr.lambda2   = -lr.lambda1;
    const auto c = information_dimension(lr, 0.0);
    EXPECT_DOUBLE_EQ(c.d_info, 2.0);
    EXPECT_DOUBLE_EQ(c.d_kaplan_yorke, 2.0);

    lr.lambda1 = -0.01;
    EXPECT_FALSE(information_dimension(lr, 0.05).strange_attractor);
    EXPECT_TRUE(std::isnan(information_dimension(lr, 0.05).d_info));
}

TEST(EnergyMoments, Examples)
{
    Ensemble e;
    e.points.assign(10, {0.0, 0.0});
    const auto z = energy_moments(e);
    EXPECT_EQ(z.E, 0.0);
    EXPECT_EQ(z.dx, 0.0);
    EXPECT_EQ(z.dp, 0.0);

    e.points = {{1.0, 2.0}, {3.0, -2.0}};
    const auto m = energy_moments(e);
    EXPECT_DOUBLE_EQ(m.E, (5.0 + 13.0) / 4.0);
    EXPECT_DOUBLE_EQ(m.dx, 1.0);
    EXPECT_DOUBLE_EQ(m.dp, 2.0);
    EXPECT_THROW(energy_moments(Ensemble{}), ConfigError);
}
