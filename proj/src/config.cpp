#include "gradflow/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>

#include "gradflow/errors.hpp"

namespace gradflow {
namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_key(std::string_view key) {
    return !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
               c == '.';
    });
}

}  // namespace

std::vector<std::string> split_list(std::string_view value) {
    std::vector<std::string> out;
    while (true) {
        const auto comma = value.find(',');
        const auto item = trim(value.substr(0, comma));
        if (!item.empty()) out.emplace_back(item);
        if (comma == std::string_view::npos) break;
        value.remove_prefix(comma + 1);
    }
    return out;
}

double parse_real(std::string_view text, const std::string& what) {
    text = trim(text);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw ConfigError(what + ": '" + std::string(text) + "' is not a number");
    }
    return v;
}

std::uint64_t parse_u64(std::string_view text, const std::string& what) {
    text = trim(text);
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
        throw ConfigError(what + ": '" + std::string(text) + "' is not a non-negative integer");
    }
    return v;
}

bool parse_bool(std::string_view text, const std::string& what) {
    text = trim(text);
    if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
    if (text == "false" || text == "0" || text == "no" || text == "off") return false;
    throw ConfigError(what + ": '" + std::string(text) + "' is not a boolean");
}

Config Config::parse(std::istream& in, const std::string& source) {
    Config cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = trim(line);
        if (body.empty() || body.front() == '#') continue;
        const auto eq = body.find('=');
        const std::string where = source + ":" + std::to_string(lineno);
        if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
        const auto key = trim(body.substr(0, eq));
        const auto value = trim(body.substr(eq + 1));
        if (!valid_key(key)) throw ConfigError(where + ": invalid key '" + std::string(key) + "'");
        if (!cfg.values_.emplace(std::string(key), std::string(value)).second) {
            throw ConfigError(where + ": duplicate key '" + std::string(key) + "'");
        }
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    return parse(in, path.string());
}

std::optional<std::string> Config::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string Config::get_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

std::vector<std::string> Config::list(const std::string& key, const std::vector<std::string>& fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    auto items = split_list(*v);
    if (items.empty()) throw ConfigError(key + ": list is empty");
    return items;
}

double Config::real(const std::string& key, double fallback) const {
    const auto v = get(key);
    return v ? parse_real(*v, key) : fallback;
}

std::size_t Config::count(const std::string& key, std::size_t fallback) const {
    const auto v = get(key);
    return v ? static_cast<std::size_t>(parse_u64(*v, key)) : fallback;
}

std::uint64_t Config::u64(const std::string& key, std::uint64_t fallback) const {
    const auto v = get(key);
    return v ? parse_u64(*v, key) : fallback;
}

bool Config::boolean(const std::string& key, bool fallback) const {
    const auto v = get(key);
    return v ? parse_bool(*v, key) : fallback;
}

void Config::require_known(const std::set<std::string>& known) const {
    for (const auto& [key, value] : values_) {
        if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
    }
}

}  // namespace gradflow
