#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace gradflow {

/// Flat `key = value` configuration. One entry per line; `#` starts a
/// comment line; list values are comma separated. Keys may contain letters,
/// digits, `_`, `-` and `.`; a repeated key is an error.
class Config {
public:
    static Config parse(std::istream& in, const std::string& source = "<config>");
    static Config load(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    std::optional<std::string> get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;

    std::vector<std::string> list(const std::string& key, const std::vector<std::string>& fallback = {}) const;
    double real(const std::string& key, double fallback) const;
    std::size_t count(const std::string& key, std::size_t fallback) const;
    std::uint64_t u64(const std::string& key, std::uint64_t fallback) const;
    bool boolean(const std::string& key, bool fallback) const;

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    /// Throws ConfigError naming the first key not in `known`.
    void require_known(const std::set<std::string>& known) const;

    const std::map<std::string, std::string>& entries() const noexcept { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::vector<std::string> split_list(std::string_view value);
double parse_real(std::string_view text, const std::string& what);
std::uint64_t parse_u64(std::string_view text, const std::string& what);
bool parse_bool(std::string_view text, const std::string& what);

}  // namespace gradflow
