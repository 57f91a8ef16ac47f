#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace mlmkit {

/// Flat `key = value` text configuration.
///
/// Blank lines and lines starting with `#` are ignored. Keys are unique;
/// a duplicate key or a line without `=` is a ParseError.
class KeyValues {
public:
    static KeyValues parse(std::string_view text, const std::string& source = "<text>");
    static KeyValues read(const std::filesystem::path& path);

    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& entries() const { return values_; }

    std::string get_string(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::int64_t get_int(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;

    /// Throws Error naming the first key not present in `known`.
    template <class Range>
    void require_known(const Range& known) const {
        for (const auto& [key, value] : values_) {
            bool found = false;
            for (const auto& k : known) {
                if (key == k) {
                    found = true;
                    break;
                }
            }
            if (!found) {
                throw_unknown(key);
            }
        }
    }

    /// Sorted `key=value` lines.
    std::string render() const;

private:
    [[noreturn]] static void throw_unknown(const std::string& key);

    std::map<std::string, std::string> values_;
    std::string source_ = "<text>";
};

double parse_double(std::string_view text, std::string_view what);
std::int64_t parse_int(std::string_view text, std::string_view what);

/// Shortest round-tripping decimal form of a double.
std::string format_double(double value);

}  // namespace mlmkit
