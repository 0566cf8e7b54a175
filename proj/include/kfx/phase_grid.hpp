#ifndef KFX_PHASE_GRID_HPP
#define KFX_PHASE_GRID_HPP

#include "kfx/error.hpp"
#include "kfx/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace kfx
{
/// Rectangular (x, p) cell layout. Cell (ix, ip) covers
/// [x_min + ix·dx, x_min + (ix+1)·dx) × [p_min + ip·dp, p_min + (ip+1)·dp).
struct GridSpec
{
    double      x_min = -1.0;
    double      x_max = 1.0;
    double      p_min = -1.0;
    double      p_max = 1.0;
    std::size_t M_x   = 1;
    std::size_t M_p   = 1;

    static GridSpec square(double L, std::size_t M) { return {-L, L, -L, L, M, M}; }

    void validate() const
    {
        if (!(x_max > x_min) || !(p_max > p_min) || M_x == 0 || M_p == 0)
            throw ConfigError("grid extent and resolution must be positive");
    }

    [[nodiscard]] double dx() const noexcept { return (x_max - x_min) / static_cast< double >(M_x); }
    [[nodiscard]] double dp() const noexcept { return (p_max - p_min) / static_cast< double >(M_p); }
    [[nodiscard]] double cell_area() const noexcept { return dx() * dp(); }
    [[nodiscard]] double x_center(std::size_t ix) const noexcept { return x_min + (static_cast< double >(ix) + 0.5) * dx(); }
    [[nodiscard]] double p_center(std::size_t ip) const noexcept { return p_min + (static_cast< double >(ip) + 0.5) * dp(); }

    bool operator==(const GridSpec&) const = default;
};

/// Nonnegative density on a GridSpec, row-major with p as the row index.
struct PhaseGrid
{
    GridSpec              spec;
    std::vector< double > values;        ///< size M_p·M_x
    double                overflow_mass = 0.0; ///< probability mass outside the extent

    PhaseGrid() = default;
    explicit PhaseGrid(const GridSpec& s) : spec(s), values(s.M_x * s.M_p, 0.0) { s.validate(); }

    [[nodiscard]] double&       at(std::size_t ip, std::size_t ix) { return values[ip * spec.M_x + ix]; }
    [[nodiscard]] double        at(std::size_t ip, std::size_t ix) const { return values[ip * spec.M_x + ix]; }

    /// Σ values · cell area.
    [[nodiscard]] double mass() const
    {
        double s = 0.0;
        for (double v : values)
            s += v;
        return s * spec.cell_area();
    }

    [[nodiscard]] double max_value() const { return values.empty() ? 0.0 : *std::ranges::max_element(values); }
};

/// Grid CSV: header `# x_min x_max p_min p_max M_x M_p overflow_mass`, then M_p rows of M_x values.
inline void write_grid_csv(std::ostream& os, const PhaseGrid& g)
{
    using detail::format_double;
    const auto& s = g.spec;
    os << "# " << format_double(s.x_min) << ' ' << format_double(s.x_max) << ' ' << format_double(s.p_min) << ' '
       << format_double(s.p_max) << ' ' << s.M_x << ' ' << s.M_p << ' ' << format_double(g.overflow_mass) << '\n';
    for (std::size_t ip = 0; ip < s.M_p; ++ip)
    {
        for (std::size_t ix = 0; ix < s.M_x; ++ix)
        {
            if (ix)
                os << ',';
            os << format_double(g.at(ip, ix));
        }
        os << '\n';
    }
}

inline PhaseGrid read_grid_csv(std::istream& is)
{
    std::string header;
    if (!std::getline(is, header) || header.size() < 2 || header[0] != '#')
        throw ConfigError("grid csv: missing header");
    std::istringstream hs(header.substr(1));
    GridSpec           s;
    double             overflow = 0.0;
    if (!(hs >> s.x_min >> s.x_max >> s.p_min >> s.p_max >> s.M_x >> s.M_p >> overflow))
        throw ConfigError("grid csv: malformed header");
    PhaseGrid g(s);
    g.overflow_mass = overflow;
    std::string line;
    for (std::size_t ip = 0; ip < s.M_p; ++ip)
    {
        if (!std::getline(is, line))
            throw ConfigError("grid csv: truncated");
        std::istringstream ls(line);
        std::string        cell;
        for (std::size_t ix = 0; ix < s.M_x; ++ix)
        {
            if (!std::getline(ls, cell, ','))
                throw ConfigError("grid csv: short row " + std::to_string(ip));
            g.at(ip, ix) = std::stod(cell);
        }
    }
    return g;
}

/// Binary PGM (P5, 8-bit), top row = largest p. The scale is recorded in a header comment.
inline void write_grid_pgm(std::ostream& os, const PhaseGrid& g)
{
    const double vmax = g.max_value();
    const auto&  s    = g.spec;
    os << "P5\n# max_value " << detail::format_double(vmax) << " extent " << detail::format_double(s.x_min) << ' '
       << detail::format_double(s.x_max) << ' ' << detail::format_double(s.p_min) << ' ' << detail::format_double(s.p_max)
       << '\n'
       << s.M_x << ' ' << s.M_p << "\n255\n";
    for (std::size_t r = 0; r < s.M_p; ++r)
    {
        const std::size_t ip = s.M_p - 1 - r;
        for (std::size_t ix = 0; ix < s.M_x; ++ix)
        {
            const double v     = vmax > 0.0 ? std::clamp(g.at(ip, ix) / vmax, 0.0, 1.0) : 0.0;
            const auto   level = static_cast< unsigned char >(std::lround(255.0 * v));
            os.put(static_cast< char >(level));
        }
    }
}
} // namespace kfx

#endif // KFX_PHASE_GRID_HPP
