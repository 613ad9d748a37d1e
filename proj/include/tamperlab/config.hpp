#pragma once

// Flat key = value configuration text with typed access and unknown-key
// rejection: every key must be consumed, and finish() names any leftovers.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

namespace tlab {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class KeyValueConfig {
public:
    static KeyValueConfig parse_file(const std::string& path);
    static KeyValueConfig parse_string(const std::string& text, const std::string& origin = "<string>");

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    std::string take_string(const std::string& key, const std::string& fallback);
    std::string take_string(const std::string& key); // required
    double take_double(const std::string& key, double fallback);
    std::uint64_t take_u64(const std::string& key, std::uint64_t fallback);
    bool take_bool(const std::string& key, bool fallback);

    // Throws if any parsed key was never consumed.
    void finish() const;

private:
    std::string origin_;
    std::map<std::string, std::string> entries_;
    std::map<std::string, bool> consumed_;

    const std::string* fetch(const std::string& key);
};

} // namespace tlab
