#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace aissm {

// Flat "key = value" text with '#' comments. Later assignments win.
class KeyValues {
public:
    static KeyValues parse_text(const std::string& text, const std::string& origin = "<text>");
    static KeyValues parse_file(const std::filesystem::path& path);

    bool has(const std::string& key) const { return values_.count(key) != 0; }
    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    void merge(const KeyValues& other);
    // Copy with every key prefixed / only keys under prefix, prefix removed.
    KeyValues prefixed(const std::string& prefix) const;
    KeyValues under(const std::string& prefix) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    // on/off, true/false, 1/0
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;

    // Sorted "key=value\n" lines.
    std::string to_text() const;
    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

std::string join_sizes(const std::vector<std::size_t>& values);

}  // namespace aissm
