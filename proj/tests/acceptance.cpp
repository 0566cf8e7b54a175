#include "kfx/crosscheck.hpp"
#include "kfx/runner.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <thread>
#include <vector>

using namespace kfx;

namespace
{
// criterion thresholds
constexpr double kCosTol         = 1e-10;
constexpr double kChannelTol     = 1e-6;
constexpr double kTraceDriftTol  = 1e-8;
constexpr double kHermTol        = 1e-12;
constexpr double kMinEigTol      = -1e-8;
constexpr double kParityTol      = 1e-12;
constexpr double kMapTol         = 1e-10;
constexpr double kDetTol         = 1e-12;
constexpr double kFourthTol      = 1e-12;
constexpr double kLambdaRelTol   = 0.20;
constexpr double kSumRuleTol     = 1e-6;
constexpr double kWidthRelTol    = 0.30;
constexpr double kPearsonMin     = 0.9;
constexpr double kSplitFraction  = 0.1;
constexpr double kBellTol        = 1e-6;
constexpr double kOverlapMax     = 1e-10;
constexpr double kSeparableTol   = 1e-8;
constexpr double kDecayedBelow   = 1e-3;
constexpr double kPersistsAbove  = 0.1;
constexpr std::uint64_t kSeed    = 20240611;

struct Line
{
    std::string id;
    bool        pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

SystemParams desk(double gamma, std::size_t N = 512)
{
    return validate_params({.hbar = 1.0, .q = 1.0, .K = 8.0, .gamma = gamma, .N = static_cast< long long >(N)});
}

double parity_commutator(const OperatorMatrix& op)
{
    double s = 0.0;
    for (Eigen::Index j = 0; j < op.cols(); ++j)
        for (Eigen::Index i = (j + 1) % 2; i < op.rows(); i += 2)
            s += std::norm(op(i, j));
    return 2.0 * std::sqrt(s);
}

std::vector< Line > criterion_1()
{
    double worst = 0.0;
    for (auto [q, hbar] : {std::pair{0.4, 1.0}, {1.0, 1.0}, {0.4, 0.16}})
        worst = std::max(worst, cos_oracle_error(q, hbar, 40));
    return {{"1", worst <= kCosTol, fmt("max |cos_matrix - quadrature| = %.3e (tol %.0e)", worst, kCosTol)}};
}

std::vector< Line > criterion_2()
{
    double worst = 0.0;
    for (double gamma : {0.01, 0.05, 0.2})
        worst = std::max(worst, channel_oracle_error(gamma, kQuarterPeriod, 64, 20, kSeed));
    return {{"2", worst <= kChannelTol, fmt("max Frobenius |exact - RK4| = %.3e over 60 operators (tol %.0e)", worst, kChannelTol)}};
}

// one forced 1000-kick run from (10,1) serves criteria 3, 7 and 8; a cat start checks parity
std::vector< Line > criterion_3_7_8()
{
    const auto           p = desk(0.05);
    const LindbladEngine engine(p);
    const GridSpec       spec = GridSpec::square(40.0, 128);

    double              drift = 0.0, herm = 0.0, min_eig = 1.0, edge = 0.0;
    std::map< std::uint64_t, std::array< double, 3 > > split;
    std::map< std::uint64_t, double >                  lambda0;
    PhaseGrid                                          husimi;

    DensityMatrix rho = pure_state(coherent_state(10.0, 1.0, p), p);
    for (std::uint64_t t = 1; t <= 1000; ++t)
    {
        OperatorMatrix raw = engine.period_step(rho.rho, false);
        herm               = std::max(herm, (raw - raw.adjoint()).cwiseAbs().maxCoeff());
        hermitize(raw);
        rho.rho = std::move(raw);
        rho.kick = t;
        drift    = std::max(drift, std::abs(rho.rho.trace().real() - 1.0));
        edge     = std::max(edge, edge_population(rho.rho));
        if (t % 50 == 0)
        {
            const auto sr = spectrum(rho);
            min_eig       = std::min(min_eig, sr.eigenvalues.back());
            split[t]      = pair_splittings(sr);
            lambda0[t]    = sr.eigenvalues.front();
        }
        if (t == 200)
            husimi = husimi_grid(rho.rho, spec, p.hbar()).grid;
    }

    // even cat (|α⟩ + |-α⟩) from the same label
    const auto       a = coherent_state(10.0, 1.0, p), b = coherent_state(-10.0, -1.0, p);
    Eigen::VectorXcd cat = (a.amps + b.amps).normalized();
    OperatorMatrix   c   = cat * cat.adjoint();
    double           parity = parity_commutator(c);
    for (int t = 0; t < 1000; ++t)
    {
        c      = engine.period_step(c, true);
        parity = std::max(parity, parity_commutator(c));
    }

    const std::uint64_t discard   = default_transient(p);
    const PhaseGrid     classical = accumulate_histogram(make_ensemble(10000, 10.0, 1.0, kSeed), p, discard + 200, spec,
                                                         discard, std::max(1u, std::thread::hardware_concurrency()));
    const double        r         = grid_correlation(husimi, classical);

    const bool ok3 = drift < kTraceDriftTol && herm < kHermTol && min_eig >= kMinEigTol && parity < kParityTol;
    const double d1000 = split.at(1000)[0], d50 = split.at(50)[0];
    const bool   ok8   = d1000 < kSplitFraction * lambda0.at(1000) && d1000 < d50;
    return {
        {"3", ok3,
         fmt("trace drift %.2e, hermiticity %.2e, min eigenvalue %.2e, parity commutator %.2e (forced, max edge population %.2e)",
             drift, herm, min_eig, parity, edge)},
        {"7", r >= kPearsonMin, fmt("Pearson r = %.4f at t=200 (min %.2f)", r, kPearsonMin)},
        {"8", ok8,
         fmt("lambda0-lambda1 = %.3e at t=1000 vs 0.1*lambda0 = %.3e; %.3e at t=50", d1000, kSplitFraction * lambda0.at(1000),
             d50)},
    };
}

std::vector< Line > criterion_4()
{
    const double map_err = map_oracle_error(0.05, kQuarterPeriod, 1000, kSeed);
    const double det_err = jacobian_det_error(desk(0.05), 1000, kSeed);

    const auto                               flat = validate_params({.K = 0.0, .gamma = 0.0, .N = 2});
    std::mt19937_64                          rng(kSeed);
    std::uniform_real_distribution< double > u(-10.0, 10.0);
    double                                   fourth = quarter_turn_error();
    for (int i = 0; i < 1000; ++i)
    {
        const PhasePoint pt{u(rng), u(rng)};
        PhasePoint       q = pt;
        for (int k = 0; k < 4; ++k)
            q = period_map(q, flat);
        fourth = std::max({fourth, std::abs(q.x - pt.x), std::abs(q.p - pt.p)});
    }
    const bool ok = map_err <= kMapTol && det_err <= kDetTol && fourth <= kFourthTol;
    return {{"4", ok, fmt("free step vs ODE %.2e, det J relative %.2e, fourth power %.2e", map_err, det_err, fourth)}};
}

std::vector< Line > criterion_5()
{
    const auto   p   = validate_params({.hbar = 1.0, .q = 1.0, .K = 6.4, .gamma = 0.05, .N = 2});
    const auto   lr  = lyapunov_spectrum(p, {10.0, 1.0}, 100000);
    const auto   dim = information_dimension(lr, p.gamma());
    const double l1  = lr.lambda1_per_kick();
    const double sum = lr.lambda1 + lr.lambda2 + 2.0 * p.gamma();
    const bool   ok  = std::abs(l1 / std::log(3.2) - 1.0) <= kLambdaRelTol && std::abs(sum) <= kSumRuleTol &&
                    dim.strange_attractor;
    return {{"5", ok,
             fmt("lambda1 = %.4f per kick (ln 3.2 = %.4f), d_info = %.4f, d_KY = %.4f, sum rule residual %.2e", l1,
                 std::log(3.2), dim.d_info, dim.d_kaplan_yorke, sum)}};
}

std::vector< Line > criterion_6()
{
    const auto     p      = validate_params({.hbar = 1.0, .q = 0.4, .K = 40.0, .gamma = 0.05, .N = 2});
    const Ensemble ens    = evolve_ensemble(make_ensemble(100000, 10.0, 1.0, kSeed), p, default_transient(p), 0, {},
                                            std::max(1u, std::thread::hardware_concurrency()));
    const double   dp     = energy_moments(ens).dp;
    const double   target = p.q() * p.kick_K() / std::sqrt(2.0 * p.gamma());
    const bool     ok     = std::abs(dp / target - 1.0) <= kWidthRelTol;
    return {{"6", ok, fmt("steady-state dp = %.3f vs qK/sqrt(2 gamma) = %.3f (ratio %.3f, window +-%.0f%%)", dp, target,
                          dp / target, 100 * kWidthRelTol)}};
}

std::vector< Line > criterion_9()
{
    const std::vector< double > gammas{1e-3, 1e-2, 1e-1};
    std::vector< double >       s20, s_late;
    std::vector< std::vector< double > > series(gammas.size());
    for (std::size_t g = 0; g < gammas.size(); ++g)
    {
        const auto           p = desk(gammas[g]);
        const LindbladEngine engine(p);
        DensityMatrix        rho = pure_state(coherent_state(10.0, 1.0, p), p);
        const std::uint64_t  horizon = gammas[g] >= 1e-2 ? 200 : 20;
        for (std::uint64_t t = 1; t <= horizon; ++t)
        {
            engine.step(rho);
            if (t <= 20)
                series[g].push_back(entanglement_entropy(spectrum(rho)));
        }
        s20.push_back(series[g].back());
        if (horizon > 20)
            s_late.push_back(entanglement_entropy(spectrum(rho)));
    }
    const bool ordered = s20[0] < s20[1] && s20[1] < s20[2];
    std::uint64_t last_ordered = 0;
    for (std::size_t t = 0; t < 20; ++t)
        if (series[0][t] < series[1][t] && series[1][t] < series[2][t])
            last_ordered = t + 1;
        else
            break;
    const double lnN       = std::log(512.0);
    const bool   saturated = s_late[0] < lnN && s_late[1] < lnN;
    return {{"9", ordered && saturated,
             fmt("S_E(t=20) = %.3f, %.3f, %.3f for gamma = 1e-3, 1e-2, 1e-1 (ordered through kick %llu); S_E(t=200) = %.3f, "
                 "%.3f < ln 512 = %.3f",
                 s20[0], s20[1], s20[2], static_cast< unsigned long long >(last_ordered), s_late[0], s_late[1], lnN)}};
}

std::vector< Line > criterion_10()
{
    std::vector< std::uint64_t > samples(21);
    std::iota(samples.begin(), samples.end(), 0);

    const auto           p1 = desk(0.01);
    const LindbladEngine e1(p1);
    const auto           decay = evolve_negativity(e1, 10.0, 1.0, -10.0, -1.0, 20, samples, TruncationPolicy::forced());
    const auto           same  = evolve_negativity(e1, 10.0, 1.0, 10.0, 1.0, 20, samples, TruncationPolicy::forced());

    const auto           p2 = desk(1e-5);
    const LindbladEngine e2(p2);
    const auto           keep = evolve_negativity(e2, 10.0, 1.0, -10.0, -1.0, 20, samples, TruncationPolicy::forced());

    const double g0 = decay.samples.front().negativity;
    double       same_max = 0.0, decay_min = 1.0, keep_min = 1.0;
    for (const auto& s : same.samples)
        same_max = std::max(same_max, s.negativity);
    for (const auto& s : decay.samples)
        decay_min = std::min(decay_min, s.negativity);
    for (const auto& s : keep.samples)
        keep_min = std::min(keep_min, s.negativity);

    const bool ok = decay.overlap < kOverlapMax && std::abs(g0 - 0.5) <= kBellTol && same_max <= kSeparableTol &&
                    decay_min < kDecayedBelow && keep_min > kPersistsAbove;
    return {{"10", ok,
             fmt("G_N(0) = %.8f (overlap %.1e); beta=alpha max %.1e; gamma=0.01 min %.2e; gamma=1e-5 min %.3f over 20 kicks",
                 g0, decay.overlap, same_max, decay_min, keep_min)}};
}

std::vector< Line > criterion_11()
{
    namespace fs   = std::filesystem;
    const fs::path root = fs::temp_directory_path() / ("kfx_acceptance_" + std::to_string(kSeed));
    fs::remove_all(root);

    auto base = parse_run_config("hbar = 1\nq = 1\nK = 8\ngamma = 0.1\nN = 256\nn_kicks = 30\ngrid_L = 30\ngrid_M = 64\n"
                                 "ensemble = 20000\nseed = 11\n");
    auto sums = [&](const std::string& cmd, const std::string& tag, unsigned workers) {
        auto cfg    = base;
        cfg.out_dir = (root / (cmd + "_" + tag)).string();
        std::map< std::string, std::string > out;
        for (const auto& f : run_command(cmd, cfg, {.force = true, .workers = workers}).files)
            out[f.name] = f.sha256;
        return out;
    };
    bool        ok = true;
    std::size_t files = 0;
    for (const std::string cmd : {"classical", "quantum", "spectrum", "negativity"})
    {
        const auto a = sums(cmd, "w1", 1), b = sums(cmd, "w1_again", 1), c = sums(cmd, "w4", 4);
        ok           = ok && a == b && a == c && !a.empty();
        files += a.size();
    }
    fs::remove_all(root);
    return {{"11", ok, fmt("%zu checksummed files identical across repeats and 1 vs 4 workers", files)}};
}

using Criterion = std::pair< std::string, std::function< std::vector< Line >() > >;

const std::vector< Criterion >& registry()
{
    static const std::vector< Criterion > r{
        {"1", criterion_1},   {"2", criterion_2},   {"3_7_8", criterion_3_7_8}, {"4", criterion_4},
        {"5", criterion_5},   {"6", criterion_6},   {"9", criterion_9},         {"10", criterion_10},
        {"11", criterion_11},
    };
    return r;
}
} // namespace

int main(int argc, char** argv)
{
    std::vector< std::string > ids(argv + 1, argv + argc);
    if (ids.empty())
        for (const auto& [id, fn] : registry())
            ids.push_back(id);

    bool all = true;
    for (const auto& id : ids)
    {
        const auto it = std::ranges::find(registry(), id, &Criterion::first);
        if (it == registry().end())
        {
            std::fprintf(stderr, "unknown criterion %s\n", id.c_str());
            return 2;
        }
        const auto t0 = std::chrono::steady_clock::now();
        std::vector< Line > lines;
        try
        {
            lines = it->second();
        }
        catch (const std::exception& e)
        {
            lines = {{id, false, std::string("error: ") + e.what()}};
        }
        const double secs = std::chrono::duration< double >(std::chrono::steady_clock::now() - t0).count();
        for (const auto& l : lines)
        {
            std::printf("criterion %s %s %s [%.1f s]\n", l.id.c_str(), l.pass ? "PASS" : "FAIL", l.detail.c_str(), secs);
            all = all && l.pass;
        }
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
