#include "aissm/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "aissm/errors.hpp"

namespace aissm {

namespace {

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues KeyValues::parse_text(const std::string& text, const std::string& origin) {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = strip(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ": line " + std::to_string(line_no) + ": expected key = value");
        }
        const auto key = strip(line.substr(0, eq));
        if (key.empty()) throw ConfigError(origin + ": line " + std::to_string(line_no) + ": empty key");
        kv.values_[key] = strip(line.substr(eq + 1));
    }
    return kv;
}

KeyValues KeyValues::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_text(ss.str(), path.string());
}

void KeyValues::merge(const KeyValues& other) {
    for (const auto& [k, v] : other.values_) values_[k] = v;
}

KeyValues KeyValues::prefixed(const std::string& prefix) const {
    KeyValues out;
    for (const auto& [k, v] : values_) out.values_[prefix + k] = v;
    return out;
}

KeyValues KeyValues::under(const std::string& prefix) const {
    KeyValues out;
    for (auto it = values_.lower_bound(prefix); it != values_.end() && it->first.starts_with(prefix); ++it) {
        out.values_[it->first.substr(prefix.size())] = it->second;
    }
    return out;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    char* end = nullptr;
    const double v = std::strtod(it->second.c_str(), &end);
    if (it->second.empty() || end != it->second.c_str() + it->second.size()) {
        throw ConfigError("config key '" + key + "': '" + it->second + "' is not a number");
    }
    return v;
}

std::uint64_t KeyValues::get_uint(const std::string& key, std::uint64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::uint64_t v = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
        throw ConfigError("config key '" + key + "': '" + s + "' is not a non-negative integer");
    }
    return v;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto& s = it->second;
    if (s == "on" || s == "true" || s == "1" || s == "yes") return true;
    if (s == "off" || s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config key '" + key + "': '" + s + "' is not on/off");
}

std::vector<std::size_t> KeyValues::get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<std::size_t> out;
    std::istringstream in(it->second);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = strip(item);
        std::size_t v = 0;
        auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || ec != std::errc() || ptr != item.data() + item.size()) {
            throw ConfigError("config key '" + key + "': '" + it->second + "' is not a comma-separated size list");
        }
        out.push_back(v);
    }
    return out;
}

std::string KeyValues::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

std::string join_sizes(const std::vector<std::size_t>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(values[i]);
    }
    return out;
}

}  // namespace aissm
