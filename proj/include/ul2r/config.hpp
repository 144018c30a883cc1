#pragma once

// Flat "key: value" text used for run configs, checkpoint headers and run
// manifests. Lines starting with '#' and blank lines are ignored. Entry order
// is preserved so dump(parse(dump(x))) == dump(x).

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ul2r {

class KeyValues {
public:
    static KeyValues parse(std::string_view text);

    void set(const std::string& key, const std::string& value);
    std::optional<std::string> get(const std::string& key) const;
    bool contains(const std::string& key) const { return get(key).has_value(); }

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Fails with ErrorCode::config if a key is missing.
    std::string require(const std::string& key) const;

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }
    std::string dump() const;

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

// Shortest round-trip decimal form with a compact exponent ("1e-4", "0.25").
std::string format_double(double v);

double parse_double(std::string_view text);
std::int64_t parse_int(std::string_view text);
bool parse_bool(std::string_view text);

// "a=1,b=2" style lists used inside single config values.
std::vector<std::pair<std::string, std::string>> parse_assignments(std::string_view text);

} // namespace ul2r
