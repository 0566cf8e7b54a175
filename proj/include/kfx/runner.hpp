#ifndef KFX_RUNNER_HPP
#define KFX_RUNNER_HPP

#include "kfx/classical.hpp"
#include "kfx/crosscheck.hpp"
#include "kfx/error.hpp"
#include "kfx/lindblad.hpp"
#include "kfx/manifest.hpp"
#include "kfx/observables.hpp"
#include "kfx/params.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace kfx
{
enum ExitCode : int
{
    kExitOk             = 0,
    kExitConfigError    = 2,
    kExitNumericalAbort = 3,
    kExitOracleFailure  = 4,
};

struct RunOptions
{
    std::optional< std::string >   out_dir;
    std::optional< std::uint64_t > seed;
    bool                           force   = false;
    unsigned                       workers = 1;
};

inline RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read config " + path.string());
    const std::string text((std::istreambuf_iterator< char >(in)), std::istreambuf_iterator< char >());
    return parse_run_config(text);
}

inline RunConfig apply_options(RunConfig cfg, const RunOptions& opt)
{
    if (opt.out_dir)
        cfg.out_dir = *opt.out_dir;
    if (opt.seed)
        cfg.seed = *opt.seed;
    return cfg;
}

/// Output directory plus the manifest that tracks every file written into it.
class RunArtifacts
{
public:
    RunArtifacts(std::string command, const RunConfig& cfg, bool forced) : dir_(cfg.out_dir)
    {
        std::filesystem::create_directories(dir_);
        manifest_.command = std::move(command);
        manifest_.config  = cfg;
        manifest_.forced  = forced;
        manifest_.started = utc_stamp();
    }

    void write(const std::string& name, const std::function< void(std::ostream&) >& fill)
    {
        {
            std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
            if (!out)
                throw ConfigError("cannot write " + (dir_ / name).string());
            fill(out);
            if (!out)
                throw ConfigError("short write to " + (dir_ / name).string());
        }
        manifest_.add_file(dir_, name);
    }

    void grid(const std::string& stem, const PhaseGrid& g)
    {
        write(stem + ".csv", [&](std::ostream& os) { write_grid_csv(os, g); });
        write(stem + ".pgm", [&](std::ostream& os) { write_grid_pgm(os, g); });
    }

    void warn(const std::string& w) { manifest_.warnings.push_back(w); }
    void warn(const std::vector< std::string >& ws)
    {
        for (const auto& w : ws)
            warn(w);
    }

    RunManifest& manifest() noexcept { return manifest_; }
    [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }

    void finish()
    {
        manifest_.finished = utc_stamp();
        write_file_atomic(dir_ / "manifest.txt", manifest_.render());
    }

private:
    std::filesystem::path dir_;
    RunManifest           manifest_;
};

namespace detail
{
inline std::string kick_tag(std::uint64_t t)
{
    char buf[24];
    std::snprintf(buf, sizeof buf, "%06llu", static_cast< unsigned long long >(t));
    return buf;
}

inline GridSpec run_grid(const RunConfig& cfg)
{
    return GridSpec::square(cfg.grid_L, static_cast< std::size_t >(cfg.grid_M));
}

inline TruncationPolicy run_policy(const RunOptions& opt)
{
    return opt.force ? TruncationPolicy::forced() : TruncationPolicy{};
}

inline void require_basis(const SystemParams& p, const RunOptions& opt, RunArtifacts& art)
{
    const auto chk = basis_sufficiency(p);
    if (chk.sufficient)
        return;
    const std::string msg = "basis N=" + std::to_string(p.basis_N()) + " below the estimated requirement " +
                            format_double(std::ceil(chk.required_N));
    if (!opt.force)
        throw ConfigError(msg + " (use --force to run anyway)");
    art.warn(msg);
}

/// ⟨χ|P|χ⟩ for a column vector.
inline double parity_expectation(const Eigen::VectorXcd& chi)
{
    double s = 0.0;
    for (Eigen::Index n = 0; n < chi.size(); ++n)
        s += (n % 2 ? -1.0 : 1.0) * std::norm(chi(n));
    return s;
}
} // namespace detail

/// Ensemble histogram, moment series and Lyapunov exponents of the classical map.
inline RunManifest cmd_classical(const RunConfig& cfg, const RunOptions& opt = {})
{
    RunArtifacts     art("classical", cfg, opt.force);
    const auto&      p    = cfg.params;
    const GridSpec   spec = detail::run_grid(cfg);
    const Ensemble   ens0 = make_ensemble(cfg.ensemble, cfg.x0, cfg.p0, cfg.seed);
    std::ostringstream series;
    series << "step,E,dx,dp\n";
    auto row = [&](std::uint64_t step, const Ensemble& e) {
        const auto m = energy_moments(e);
        series << step << ',' << detail::format_double(m.E) << ',' << detail::format_double(m.dx) << ','
               << detail::format_double(m.dp) << '\n';
    };
    row(0, ens0);
    const Ensemble last = evolve_ensemble(ens0, p, cfg.n_kicks, 0, row, opt.workers);

    PhaseGrid grid;
    if (cfg.n_kicks == 0)
        grid = ensemble_histogram(ens0, spec);
    else
    {
        const std::uint64_t discard = std::min(default_transient(p), cfg.n_kicks / 2);
        grid = accumulate_histogram(ens0, p, cfg.n_kicks, spec, discard, opt.workers);
        art.manifest().add_result("histogram_discard", std::to_string(discard));
    }
    art.grid("classical_grid", grid);
    art.write("classical_series.csv", [&](std::ostream& os) { os << series.str(); });

    const std::uint64_t ly_steps = std::max< std::uint64_t >(cfg.n_kicks, 10000);
    const auto          ly       = lyapunov_spectrum(p, {cfg.x0, cfg.p0}, ly_steps);
    const auto          dim      = information_dimension(ly, p.gamma());
    const auto          m        = energy_moments(last);

    auto& man = art.manifest();
    man.add_result("lambda1_per_kick", ly.lambda1_per_kick());
    man.add_result("lambda2_per_kick", ly.lambda2_per_kick());
    man.add_result("lambda1_per_time", ly.lambda1);
    man.add_result("lambda2_per_time", ly.lambda2);
    man.add_result("lyapunov_steps", std::to_string(ly_steps));
    man.add_result("strange_attractor", dim.strange_attractor ? "true" : "false");
    man.add_result("d_info", dim.d_info);
    man.add_result("d_kaplan_yorke", dim.d_kaplan_yorke);
    man.add_result("final_E", m.E);
    man.add_result("final_dx", m.dx);
    man.add_result("final_dp", m.dp);
    man.add_result("overflow_mass", grid.overflow_mass);
    if (grid.overflow_mass > 0.0)
        art.warn("classical histogram: mass " + detail::format_double(grid.overflow_mass) + " outside the grid extent");
    art.finish();
    return art.manifest();
}

/// Density-matrix evolution with Husimi grids at the snapshot cadence.
inline RunManifest cmd_quantum(const RunConfig& cfg, const RunOptions& opt = {})
{
    RunArtifacts art("quantum", cfg, opt.force);
    const auto&  p = cfg.params;
    detail::require_basis(p, opt, art);

    const GridSpec       spec = detail::run_grid(cfg);
    const LindbladEngine engine(p);
    const FockVector     psi = coherent_state(cfg.x0, cfg.p0, p);
    if (psi.truncation_warning)
        art.warn("initial coherent state truncated: lost weight " + detail::format_double(psi.truncated_weight));

    double min_raw = 0.0;
    auto   sink    = [&](const DensityMatrix& rho, const Diagnostics&) {
        const auto rep = husimi_grid(rho.rho, spec, p.hbar());
        min_raw        = std::min(min_raw, rep.min_raw_value);
        art.grid("husimi_" + detail::kick_tag(rho.kick), rep.grid);
    };
    const auto rec = evolve(engine, pure_state(psi, p), cfg.n_kicks, SnapshotSchedule{cfg.snapshot_every}, sink,
                            detail::run_policy(opt));
    art.warn(rec.warnings);
    if (min_raw < -1e-14)
        art.warn("husimi grid clipped negative values down to " + detail::format_double(min_raw));

    art.write("quantum_series.csv", [&](std::ostream& os) {
        os << "t,trace,purity,E,edge\n";
        for (const auto& d : rec.history)
            os << d.kick << ',' << detail::format_double(d.trace) << ',' << detail::format_double(d.purity) << ','
               << detail::format_double(d.mean_energy) << ',' << detail::format_double(d.edge_population) << '\n';
    });
    art.write("state_" + detail::kick_tag(rec.final_state.kick) + ".kflx",
              [&](std::ostream& os) { write_snapshot(os, rec.final_state); });

    std::vector< double > energy;
    for (const auto& d : rec.history)
        energy.push_back(d.mean_energy);
    auto& man = art.manifest();
    if (const auto ss = steady_state_detect(energy))
        man.add_result("steady_state_kick", std::to_string(*ss));
    else
        man.add_result("steady_state_kick", "none");
    man.add_result("final_E", rec.history.back().mean_energy);
    man.add_result("final_trace", rec.history.back().trace);
    man.add_result("final_edge_population", rec.history.back().edge_population);
    art.finish();
    return man;
}

inline constexpr std::size_t kSpectrumColumns = 10;

/// Eigenvalue spectrum, pair splittings and entropy along the evolution; Husimi of the top
/// eigenvectors at the end.
inline RunManifest cmd_spectrum(const RunConfig& cfg, const RunOptions& opt = {})
{
    RunArtifacts art("spectrum", cfg, opt.force);
    const auto&  p = cfg.params;
    detail::require_basis(p, opt, art);

    const LindbladEngine engine(p);
    const std::size_t    cols = std::min< std::size_t >(kSpectrumColumns, p.basis_N());
    std::ostringstream   spec_csv, split_csv, ent_csv;
    spec_csv << 't';
    for (std::size_t i = 0; i < cols; ++i)
        spec_csv << ",l" << i;
    spec_csv << '\n';
    split_csv << "t,d01,d23,d45\n";
    ent_csv << "t,value\n";

    const std::uint64_t last = cfg.n_kicks;
    SpectrumResult      final_sr;
    auto                sink = [&](const DensityMatrix& rho, const Diagnostics&) {
        const bool is_last = rho.kick == last;
        auto       sr      = spectrum(rho, is_last ? 2 : 0);
        spec_csv << rho.kick;
        for (std::size_t i = 0; i < cols; ++i)
            spec_csv << ',' << detail::format_double(sr.eigenvalues[i]);
        spec_csv << '\n';
        if (sr.eigenvalues.size() >= 6)
        {
            const auto d = pair_splittings(sr);
            split_csv << rho.kick << ',' << detail::format_double(d[0]) << ',' << detail::format_double(d[1]) << ','
                      << detail::format_double(d[2]) << '\n';
        }
        ent_csv << rho.kick << ',' << detail::format_double(entanglement_entropy(sr)) << '\n';
        if (is_last)
            final_sr = std::move(sr);
    };
    const auto rec = evolve(engine, pure_state(coherent_state(cfg.x0, cfg.p0, p), p), cfg.n_kicks,
                            SnapshotSchedule{cfg.snapshot_every}, sink, detail::run_policy(opt));
    art.warn(rec.warnings);

    art.write("spectrum.csv", [&](std::ostream& os) { os << spec_csv.str(); });
    art.write("splittings.csv", [&](std::ostream& os) { os << split_csv.str(); });
    art.write("entropy.csv", [&](std::ostream& os) { os << ent_csv.str(); });

    const GridSpec spec = detail::run_grid(cfg);
    auto&          man  = art.manifest();
    for (Eigen::Index i = 0; i < final_sr.eigenvectors.cols(); ++i)
    {
        const Eigen::VectorXcd chi = final_sr.eigenvectors.col(i);
        art.grid("eigvec" + std::to_string(i) + "_husimi", husimi_grid_pure(chi, spec, p.hbar()));
        man.add_result("eigvec" + std::to_string(i) + "_parity", detail::parity_expectation(chi));
    }
    man.add_result("final_entropy", entanglement_entropy(final_sr));
    art.finish();
    return man;
}

/// Negativity of the virtual-qubit state built from the labels (x0, p0) and β.
inline RunManifest cmd_negativity(const RunConfig& cfg, const RunOptions& opt = {})
{
    RunArtifacts art("negativity", cfg, opt.force);
    const auto&  p = cfg.params;
    detail::require_basis(p, opt, art);

    const double bx = cfg.beta_x.value_or(-cfg.x0);
    const double bp = cfg.beta_p.value_or(-cfg.p0);

    const SnapshotSchedule        sched{cfg.snapshot_every};
    std::vector< std::uint64_t > samples;
    for (std::uint64_t t = 0; t <= cfg.n_kicks; ++t)
        if (sched(t) || t == cfg.n_kicks)
            samples.push_back(t);

    const LindbladEngine engine(p);
    const auto res = evolve_negativity(engine, cfg.x0, cfg.p0, bx, bp, cfg.n_kicks, samples, detail::run_policy(opt));
    art.warn(res.warnings);
    art.write("negativity.csv", [&](std::ostream& os) {
        os << "t,value\n";
        for (const auto& s : res.samples)
            os << s.kick << ',' << detail::format_double(s.negativity) << '\n';
    });
    auto& man = art.manifest();
    man.add_result("overlap", res.overlap);
    man.add_result("final_negativity", res.samples.back().negativity);
    art.finish();
    return man;
}

/// Reduced-size oracle suite. Returns the table; the caller maps failures to an exit code.
inline std::vector< OracleRow > crosscheck_rows(const RunConfig& cfg, unsigned workers = 1)
{
    const auto&              p = cfg.params;
    std::vector< OracleRow > rows;
    rows.push_back({"cos_vs_quadrature", cos_oracle_error(p.q(), p.hbar(), 40), 1e-10});
    rows.push_back({"channel_vs_rk4", channel_oracle_error(p.gamma(), p.period_T(), 32, 5, cfg.seed), 1e-6});
    rows.push_back({"map_vs_ode", map_oracle_error(p.gamma(), p.period_T(), 200, cfg.seed), 1e-10});
    rows.push_back({"jacobian_det", jacobian_det_error(p, 200, cfg.seed), 1e-12});
    rows.push_back({"quarter_turn", quarter_turn_error(), 1e-12});

    const auto ref = validate_params({.hbar = 1.0, .q = 1.0, .K = 8.0, .gamma = 0.1, .N = 384});
    const auto cc  = quantum_classical_correspondence(ref, {10.0, 1.0}, 60, GridSpec::square(30.0, 64), 4000, cfg.seed, {},
                                                      workers);
    rows.push_back({"quantum_vs_classical", cc.pearson, 0.9, true});
    return rows;
}

inline RunManifest cmd_crosscheck(const RunConfig& cfg, const RunOptions& opt = {})
{
    RunArtifacts art("crosscheck", cfg, opt.force);
    const auto   rows = crosscheck_rows(cfg, opt.workers);
    art.write("crosscheck.csv", [&](std::ostream& os) {
        os << "oracle,value,tolerance,pass\n";
        for (const auto& r : rows)
            os << r.name << ',' << detail::format_double(r.error) << ',' << (r.at_least ? ">=" : "<=")
               << detail::format_double(r.tolerance) << ',' << (r.passed() ? "pass" : "FAIL") << '\n';
    });
    std::string failed;
    for (const auto& r : rows)
        if (!r.passed())
            failed += (failed.empty() ? "" : ", ") + r.name;
    if (!failed.empty())
        art.warn("oracle failures: " + failed);
    art.manifest().add_result("oracles_failed", failed.empty() ? "none" : failed);
    art.finish();
    if (!failed.empty())
        throw OracleFailure("oracle failures: " + failed);
    return art.manifest();
}

/// Dispatch by name. Errors propagate as exceptions.
inline RunManifest run_command(const std::string& name, const RunConfig& cfg, const RunOptions& opt)
{
    if (name == "classical")
        return cmd_classical(cfg, opt);
    if (name == "quantum")
        return cmd_quantum(cfg, opt);
    if (name == "spectrum")
        return cmd_spectrum(cfg, opt);
    if (name == "negativity")
        return cmd_negativity(cfg, opt);
    if (name == "crosscheck")
        return cmd_crosscheck(cfg, opt);
    throw ConfigError("unknown command '" + name + "'");
}

/// Runs a command and maps errors to exit codes, reporting on `err`.
inline int run_and_report(const std::string& name, const std::filesystem::path& config, const RunOptions& opt,
                          std::ostream& err)
{
    try
    {
        const RunConfig cfg = apply_options(load_config(config), opt);
        run_command(name, cfg, opt);
        return kExitOk;
    }
    catch (const ConfigError& e)
    {
        err << "kfx " << name << ": config error: " << e.what() << '\n';
        return kExitConfigError;
    }
    catch (const NumericalAbort& e)
    {
        err << "kfx " << name << ": numerical abort: " << e.what() << '\n';
        return kExitNumericalAbort;
    }
    catch (const OracleFailure& e)
    {
        err << "kfx " << name << ": " << e.what() << '\n';
        return kExitOracleFailure;
    }
    catch (const std::filesystem::filesystem_error& e)
    {
        err << "kfx " << name << ": " << e.what() << '\n';
        return kExitConfigError;
    }
}
} // namespace kfx

#endif // KFX_RUNNER_HPP
