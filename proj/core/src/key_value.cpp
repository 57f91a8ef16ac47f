#include "mlmkit/key_value.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mlmkit/error.hpp"

namespace mlmkit {

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, const std::string& source) {
    KeyValues kv;
    kv.source_ = source;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        ++line_no;
        const std::string_view line = trim(text.substr(pos, end - pos));
        pos = end + 1;
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ParseError(source, line_no, "expected key=value, got '" + std::string(line) + "'");
        }
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) {
            throw ParseError(source, line_no, "empty key");
        }
        if (kv.values_.count(key) != 0) {
            throw ParseError(source, line_no, "duplicate key '" + key + "'");
        }
        kv.values_.emplace(std::move(key), std::move(value));
    }
    return kv;
}

KeyValues KeyValues::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open config file " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.string());
}

std::string KeyValues::get_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        throw Error(source_ + ": missing key '" + key + "'");
    }
    return it->second;
}

double KeyValues::get_double(const std::string& key) const { return parse_double(get_string(key), key); }

std::int64_t KeyValues::get_int(const std::string& key) const { return parse_int(get_string(key), key); }

std::uint64_t KeyValues::get_uint(const std::string& key) const {
    const std::int64_t v = get_int(key);
    if (v < 0) {
        throw Error("key '" + key + "' must be non-negative");
    }
    return static_cast<std::uint64_t>(v);
}

void KeyValues::throw_unknown(const std::string& key) { throw Error("unknown config key '" + key + "'"); }

std::string KeyValues::render() const {
    std::string out;
    for (const auto& [k, v] : values_) {
        out += k;
        out += '=';
        out += v;
        out += '\n';
    }
    return out;
}

double parse_double(std::string_view text, std::string_view what) {
    const std::string s(trim(text));
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (s.empty() || used != s.size() || !std::isfinite(v)) {
        throw Error("invalid number for '" + std::string(what) + "': '" + s + "'");
    }
    return v;
}

std::int64_t parse_int(std::string_view text, std::string_view what) {
    std::string s(trim(text));
    // Thousands separators are accepted.
    std::erase(s, ',');
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        throw Error("invalid integer for '" + std::string(what) + "': '" + std::string(trim(text)) + "'");
    }
    return v;
}

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ec == std::errc{} ? ptr : buf);
}

}  // namespace mlmkit
