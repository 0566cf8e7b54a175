#ifndef KFX_ERROR_HPP
#define KFX_ERROR_HPP

#include <stdexcept>
#include <string>

namespace kfx
{
/// Rejected input: bad parameters, malformed config text, bad CLI usage.
class ConfigError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// The numerics left their domain of validity (overflow, truncation, broken symmetry).
class NumericalAbort : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// An independent oracle disagreed with the production path.
class OracleFailure : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};
} // namespace kfx

#endif // KFX_ERROR_HPP
