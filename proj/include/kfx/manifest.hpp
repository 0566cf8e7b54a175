#ifndef KFX_MANIFEST_HPP
#define KFX_MANIFEST_HPP

#include "kfx/error.hpp"
#include "kfx/params.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace kfx
{
inline constexpr const char* kToolVersion = "0.3.1";

/// Lowercase hex SHA-256 of a file's bytes.
inline std::string sha256_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open " + path.string() + " for hashing");

    std::unique_ptr< EVP_MD_CTX, decltype(&EVP_MD_CTX_free) > ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw NumericalAbort("sha256: digest init failed");

    std::array< char, 1 << 16 > buf{};
    while (in)
    {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf.data(), static_cast< std::size_t >(in.gcount())) != 1)
            throw NumericalAbort("sha256: digest update failed");
    }
    std::array< unsigned char, EVP_MAX_MD_SIZE > md{};
    unsigned int                                 len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1)
        throw NumericalAbort("sha256: digest final failed");

    static constexpr char hex[] = "0123456789abcdef";
    std::string           out;
    out.reserve(2 * len);
    for (unsigned i = 0; i < len; ++i)
    {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

/// UTC, second resolution: 2026-01-31T12:00:00Z.
inline std::string utc_stamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now())
{
    const std::time_t tt = std::chrono::system_clock::to_time_t(t);
    std::tm           tm{};
    gmtime_r(&tt, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct ManifestFile
{
    std::string   name; ///< relative to the run directory
    std::string   sha256;
    std::uintmax_t bytes = 0;
};

/// Run record. Written once at the end of a run, after every artifact is closed.
struct RunManifest
{
    std::string                 command;
    RunConfig                   config;
    bool                        forced = false;
    std::string                 started;
    std::string                 finished;
    std::vector< std::string >  warnings;
    std::vector< std::string >  results; ///< "key = value" scalar outputs
    std::vector< ManifestFile > files;

    void add_file(const std::filesystem::path& dir, const std::string& name)
    {
        const auto p = dir / name;
        files.push_back({name, sha256_file(p), std::filesystem::file_size(p)});
    }

    void add_result(const std::string& key, double v) { results.push_back(key + " = " + detail::format_double(v)); }
    void add_result(const std::string& key, const std::string& v) { results.push_back(key + " = " + v); }

    [[nodiscard]] std::string render() const
    {
        std::ostringstream os;
        os << "# kfx run manifest\n"
           << "tool_version = " << kToolVersion << '\n'
           << "command = " << command << '\n'
           << "started = " << started << '\n'
           << "finished = " << finished << '\n'
           << "force = " << (forced ? "true" : "false") << '\n'
           << serialize_run_config(config);
        for (const auto& r : results)
            os << "result." << r << '\n';
        for (const auto& w : warnings)
            os << "warning = " << w << '\n';
        for (const auto& f : files)
            os << "file = " << f.name << ' ' << f.sha256 << ' ' << f.bytes << '\n';
        return os.str();
    }
};

/// Write to a sibling temp file, then rename over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw ConfigError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out)
            throw ConfigError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

/// Files listed in a manifest, for verification.
inline std::vector< ManifestFile > manifest_files(const std::string& text)
{
    std::vector< ManifestFile > out;
    std::istringstream          is(text);
    std::string                 line;
    while (std::getline(is, line))
    {
        if (!line.starts_with("file = "))
            continue;
        std::istringstream ls(line.substr(7));
        ManifestFile       f;
        if (!(ls >> f.name >> f.sha256 >> f.bytes))
            throw ConfigError("manifest: malformed file line: " + line);
        out.push_back(f);
    }
    return out;
}

/// Names of listed files that are missing or whose checksum no longer matches.
inline std::vector< std::string > verify_manifest(const std::filesystem::path& dir, const std::string& text)
{
    std::vector< std::string > bad;
    for (const auto& f : manifest_files(text))
    {
        const auto p = dir / f.name;
        if (!std::filesystem::exists(p) || sha256_file(p) != f.sha256)
            bad.push_back(f.name);
    }
    return bad;
}
} // namespace kfx

#endif // KFX_MANIFEST_HPP
