#ifndef KFX_PARAMS_HPP
#define KFX_PARAMS_HPP

#include "kfx/error.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

namespace kfx
{
inline constexpr double kQuarterPeriod = std::numbers::pi / 2.0; // T = 2π/R at R = 4

/// Raw, unvalidated model parameters as they come from a config or a caller.
struct RawParams
{
    double                hbar  = 1.0;
    double                q     = 1.0;
    double                K     = 0.0;
    double                gamma = 0.0;
    std::optional<double> T;
    long long             N = 2;
};

/// Dimensionless parameters of the kicked, damped oscillator
///   H = (p² + x²)/2 - K cos(q x) Σ δ(t - mT),  damping rate γ,  Fock truncation N.
/// Only constructible through validate_params().
class SystemParams
{
public:
    [[nodiscard]] double      hbar() const noexcept { return hbar_; }
    [[nodiscard]] double      q() const noexcept { return q_; }
    [[nodiscard]] double      kick_K() const noexcept { return K_; }
    [[nodiscard]] double      gamma() const noexcept { return gamma_; }
    [[nodiscard]] double      period_T() const noexcept { return T_; }
    [[nodiscard]] std::size_t basis_N() const noexcept { return N_; }

    /// Classical chaos parameter after the q → 1 rescaling.
    [[nodiscard]] double K_cl() const noexcept { return K_ * q_ * q_; }
    /// Effective Planck constant after the q → 1 rescaling.
    [[nodiscard]] double hbar_eff() const noexcept { return hbar_ * q_ * q_; }
    /// Damped oscillator frequency √(1 - γ²).
    [[nodiscard]] double omega() const noexcept { return std::sqrt(1.0 - gamma_ * gamma_); }
    /// Dimensionless kick strength K/ħ entering exp(i K/ħ cos q x).
    [[nodiscard]] double K_over_hbar() const noexcept { return K_ / hbar_; }

    bool operator==(const SystemParams&) const = default;

private:
    friend SystemParams validate_params(const RawParams&);
    SystemParams() = default;

    double      hbar_  = 1.0;
    double      q_     = 1.0;
    double      K_     = 0.0;
    double      gamma_ = 0.0;
    double      T_     = kQuarterPeriod;
    std::size_t N_     = 2;
};

inline SystemParams validate_params(const RawParams& raw)
{
    auto finite = [](double v) { return std::isfinite(v); };
    if (!finite(raw.hbar) || !finite(raw.q) || !finite(raw.K) || !finite(raw.gamma))
        throw ConfigError("parameters must be finite");
    if (raw.hbar <= 0.0)
        throw ConfigError("hbar must be positive");
    if (raw.q <= 0.0)
        throw ConfigError("q must be positive");
    if (raw.K < 0.0)
        throw ConfigError("K must be nonnegative");
    if (raw.gamma < 0.0)
        throw ConfigError("gamma must be nonnegative");
    if (raw.gamma >= 1.0)
        throw ConfigError("overdamped regime unsupported (gamma >= 1)");
    const double T = raw.T.value_or(kQuarterPeriod);
    if (!finite(T) || T <= 0.0)
        throw ConfigError("period T must be positive");
    if (raw.N < 2)
        throw ConfigError("basis size N must be at least 2");

    SystemParams p;
    p.hbar_  = raw.hbar;
    p.q_     = raw.q;
    p.K_     = raw.K;
    p.gamma_ = raw.gamma;
    p.T_     = T;
    p.N_     = static_cast< std::size_t >(raw.N);
    return p;
}

/// Equivalent parameter set at q = 1: K → K q² (classical K_cl), ħ → ħ q² (ħ_eff).
/// K/ħ is unchanged, so the same set drives both the classical map and the quantum kick.
inline SystemParams rescale_to_unit_q(const SystemParams& p)
{
    return validate_params(
        {.hbar = p.hbar_eff(), .q = 1.0, .K = p.K_cl(), .gamma = p.gamma(), .T = p.period_T(), .N = static_cast< long long >(p.basis_N())});
}

/// Circuit-level fluxonium parameters (any common frequency unit, ħ = 1).
struct FluxoniumParams
{
    double E_C      = 0.0;
    double E_L      = 0.0;
    double E_J      = 0.0;
    double pulse_dt = 0.0;
};

struct FluxoniumConversion
{
    double Omega;            ///< oscillator frequency 2√(2 E_C E_L)
    double kick_K_over_hbar; ///< J/Ω with J = E_J δt
};

inline FluxoniumConversion fluxonium_to_dimensionless(const FluxoniumParams& fp)
{
    if (!(fp.E_C > 0.0 && fp.E_L > 0.0 && fp.E_J > 0.0 && fp.pulse_dt > 0.0))
        throw ConfigError("fluxonium parameters must be positive");
    const double Omega = 2.0 * std::sqrt(2.0 * fp.E_C * fp.E_L);
    const double J     = fp.E_J * fp.pulse_dt;
    return {Omega, J / Omega};
}

/// Everything one CLI invocation needs.
struct RunConfig
{
    SystemParams          params = validate_params({});
    std::uint64_t         n_kicks        = 0;
    double                x0             = 10.0;
    double                p0             = 1.0;
    std::optional<double> beta_x;          ///< second negativity label; default -x0
    std::optional<double> beta_p;          ///< default -p0
    double                grid_L         = 40.0;
    std::uint64_t         grid_M         = 128;
    std::uint64_t         ensemble       = 10000;
    std::uint64_t         seed           = 0;
    std::string           out_dir        = "out";
    std::uint64_t         snapshot_every = 0; ///< 0: every kick up to 60, then every 10

    bool operator==(const RunConfig&) const = default;
};

namespace detail
{
inline std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::string line_error(std::size_t line, const std::string& what)
{
    return "config line " + std::to_string(line) + ": " + what;
}

inline double parse_double(std::string_view v, std::size_t line, std::string_view key)
{
    double      out{};
    const auto* end = v.data() + v.size();
    auto [ptr, ec]  = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end || !std::isfinite(out))
        throw ConfigError(line_error(line, "malformed number for '" + std::string(key) + "': '" + std::string(v) + "'"));
    return out;
}

inline std::uint64_t parse_uint(std::string_view v, std::size_t line, std::string_view key)
{
    std::uint64_t out{};
    const auto*   end = v.data() + v.size();
    auto [ptr, ec]    = std::from_chars(v.data(), end, out);
    if (ec != std::errc{} || ptr != end)
        throw ConfigError(line_error(line, "malformed integer for '" + std::string(key) + "': '" + std::string(v) + "'"));
    return out;
}

/// Shortest representation that parses back to the same double.
inline std::string format_double(double v)
{
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}
} // namespace detail

/// Parses the `key = value` config format. '#' starts a comment.
/// Mandatory keys: hbar, q, K, gamma, N. Unknown and duplicate keys are errors.
inline RunConfig parse_run_config(std::string_view text)
{
    std::map< std::string, std::pair< std::string, std::size_t > > kv;

    std::size_t line_no = 0;
    while (!text.empty())
    {
        ++line_no;
        const auto       nl   = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text                  = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);

        if (const auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(detail::line_error(line_no, "expected 'key = value'"));
        const auto key   = std::string(detail::trim(line.substr(0, eq)));
        const auto value = std::string(detail::trim(line.substr(eq + 1)));
        if (key.empty() || value.empty())
            throw ConfigError(detail::line_error(line_no, "empty key or value"));
        if (!kv.emplace(key, std::make_pair(value, line_no)).second)
            throw ConfigError(detail::line_error(line_no, "duplicate key '" + key + "'"));
    }

    RunConfig cfg;
    RawParams raw;
    for (const char* k : {"hbar", "q", "K", "gamma", "N"})
        if (!kv.contains(k))
            throw ConfigError(std::string("missing mandatory key '") + k + "'");

    for (const auto& [key, entry] : kv)
    {
        const auto& [v, ln] = entry;
        if (key == "hbar")
            raw.hbar = detail::parse_double(v, ln, key);
        else if (key == "q")
            raw.q = detail::parse_double(v, ln, key);
        else if (key == "K")
            raw.K = detail::parse_double(v, ln, key);
        else if (key == "gamma")
            raw.gamma = detail::parse_double(v, ln, key);
        else if (key == "T")
            raw.T = detail::parse_double(v, ln, key);
        else if (key == "N")
            raw.N = static_cast< long long >(detail::parse_uint(v, ln, key));
        else if (key == "n_kicks")
            cfg.n_kicks = detail::parse_uint(v, ln, key);
        else if (key == "x0")
            cfg.x0 = detail::parse_double(v, ln, key);
        else if (key == "p0")
            cfg.p0 = detail::parse_double(v, ln, key);
        else if (key == "beta_x")
            cfg.beta_x = detail::parse_double(v, ln, key);
        else if (key == "beta_p")
            cfg.beta_p = detail::parse_double(v, ln, key);
        else if (key == "grid_L")
            cfg.grid_L = detail::parse_double(v, ln, key);
        else if (key == "grid_M")
            cfg.grid_M = detail::parse_uint(v, ln, key);
        else if (key == "ensemble")
            cfg.ensemble = detail::parse_uint(v, ln, key);
        else if (key == "seed")
            cfg.seed = detail::parse_uint(v, ln, key);
        else if (key == "out_dir")
            cfg.out_dir = v;
        else if (key == "snapshot_every")
            cfg.snapshot_every = detail::parse_uint(v, ln, key);
        else
            throw ConfigError(detail::line_error(ln, "unknown key '" + key + "'"));
    }

    try
    {
        cfg.params = validate_params(raw);
    }
    catch (const ConfigError& e)
    {
        throw ConfigError(std::string("invalid parameters: ") + e.what());
    }
    if (!(cfg.grid_L > 0.0))
        throw ConfigError("grid_L must be positive");
    if (cfg.grid_M < 1)
        throw ConfigError("grid_M must be at least 1");
    return cfg;
}

/// Inverse of parse_run_config: every field is written, doubles in shortest round-trip form.
inline std::string serialize_run_config(const RunConfig& cfg)
{
    using detail::format_double;
    std::ostringstream os;
    const auto&        p = cfg.params;
    os << "hbar = " << format_double(p.hbar()) << '\n'
       << "q = " << format_double(p.q()) << '\n'
       << "K = " << format_double(p.kick_K()) << '\n'
       << "gamma = " << format_double(p.gamma()) << '\n'
       << "T = " << format_double(p.period_T()) << '\n'
       << "N = " << p.basis_N() << '\n'
       << "n_kicks = " << cfg.n_kicks << '\n'
       << "x0 = " << format_double(cfg.x0) << '\n'
       << "p0 = " << format_double(cfg.p0) << '\n';
    if (cfg.beta_x)
        os << "beta_x = " << format_double(*cfg.beta_x) << '\n';
    if (cfg.beta_p)
        os << "beta_p = " << format_double(*cfg.beta_p) << '\n';
    os << "grid_L = " << format_double(cfg.grid_L) << '\n'
       << "grid_M = " << cfg.grid_M << '\n'
       << "ensemble = " << cfg.ensemble << '\n'
       << "seed = " << cfg.seed << '\n'
       << "out_dir = " << cfg.out_dir << '\n'
       << "snapshot_every = " << cfg.snapshot_every << '\n';
    return os.str();
}
} // namespace kfx

#endif // KFX_PARAMS_HPP
