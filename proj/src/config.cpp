#include "ul2r/config.hpp"

#include <charconv>

#include "ul2r/errors.hpp"

namespace ul2r {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

} // namespace

KeyValues KeyValues::parse(std::string_view text) {
    KeyValues kv;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (line.empty() || line.front() == '#') continue;
        const auto colon = line.find(':');
        if (colon == std::string_view::npos) {
            throw Error(ErrorCode::config, "line " + std::to_string(line_no) + ": expected 'key: value'");
        }
        const std::string key(trim(line.substr(0, colon)));
        if (key.empty()) {
            throw Error(ErrorCode::config, "line " + std::to_string(line_no) + ": empty key");
        }
        kv.set(key, std::string(trim(line.substr(colon + 1))));
    }
    return kv;
}

void KeyValues::set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
        if (k == key) {
            v = value;
            return;
        }
    }
    entries_.emplace_back(key, value);
}

std::optional<std::string> KeyValues::get(const std::string& key) const {
    for (const auto& [k, v] : entries_) {
        if (k == key) return v;
    }
    return std::nullopt;
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

double KeyValues::get_double(const std::string& key, double fallback) const {
    const auto v = get(key);
    return v ? parse_double(*v) : fallback;
}

std::int64_t KeyValues::get_int(const std::string& key, std::int64_t fallback) const {
    const auto v = get(key);
    return v ? parse_int(*v) : fallback;
}

std::uint64_t KeyValues::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) {
        throw Error(ErrorCode::config, "'" + key + "' is not an unsigned integer: " + *v);
    }
    return out;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
    const auto v = get(key);
    return v ? parse_bool(*v) : fallback;
}

std::string KeyValues::require(const std::string& key) const {
    const auto v = get(key);
    if (!v) throw Error(ErrorCode::config, "missing key '" + key + "'");
    return *v;
}

std::string KeyValues::dump() const {
    std::string out;
    for (const auto& [k, v] : entries_) {
        out += k;
        out += ": ";
        out += v;
        out += '\n';
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, ptr);
    // to_chars writes exponents as e-04 / e+10; drop the sign padding.
    if (const auto e = s.find('e'); e != std::string::npos) {
        std::string mant = s.substr(0, e);
        std::string exp = s.substr(e + 1);
        const bool neg = !exp.empty() && exp[0] == '-';
        if (!exp.empty() && (exp[0] == '-' || exp[0] == '+')) exp.erase(0, 1);
        while (exp.size() > 1 && exp[0] == '0') exp.erase(0, 1);
        s = mant + "e" + (neg ? "-" : "") + exp;
    }
    return s;
}

double parse_double(std::string_view text) {
    text = trim(text);
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        throw Error(ErrorCode::config, "not a number: '" + std::string(text) + "'");
    }
    return out;
}

std::int64_t parse_int(std::string_view text) {
    text = trim(text);
    std::int64_t out = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
        throw Error(ErrorCode::config, "not an integer: '" + std::string(text) + "'");
    }
    return out;
}

bool parse_bool(std::string_view text) {
    text = trim(text);
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw Error(ErrorCode::config, "not a boolean: '" + std::string(text) + "'");
}

std::vector<std::pair<std::string, std::string>> parse_assignments(std::string_view text) {
    std::vector<std::pair<std::string, std::string>> out;
    while (!text.empty()) {
        const auto comma = text.find(',');
        std::string_view item = trim(text.substr(0, comma));
        text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string_view::npos) {
            throw Error(ErrorCode::config, "expected name=value in '" + std::string(item) + "'");
        }
        out.emplace_back(std::string(trim(item.substr(0, eq))), std::string(trim(item.substr(eq + 1))));
    }
    return out;
}

} // namespace ul2r
