#include "tamperlab/config.hpp"

#include <fstream>
#include <sstream>

namespace tlab {

namespace {
std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}
} // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("config: cannot read " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_string(buf.str(), path);
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text, const std::string& origin) {
    KeyValueConfig cfg;
    cfg.origin_ = origin;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected key = value, got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        if (cfg.entries_.count(key))
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
        cfg.entries_[key] = val;
        cfg.consumed_[key] = false;
    }
    return cfg;
}

const std::string* KeyValueConfig::fetch(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    consumed_[key] = true;
    return &it->second;
}

std::string KeyValueConfig::take_string(const std::string& key, const std::string& fallback) {
    const std::string* v = fetch(key);
    return v ? *v : fallback;
}

std::string KeyValueConfig::take_string(const std::string& key) {
    const std::string* v = fetch(key);
    if (!v) throw ConfigError(origin_ + ": missing required key '" + key + "'");
    return *v;
}

double KeyValueConfig::take_double(const std::string& key, double fallback) {
    const std::string* v = fetch(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        const double d = std::stod(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": key '" + key + "' wants a number, got '" + *v + "'");
    }
}

std::uint64_t KeyValueConfig::take_u64(const std::string& key, std::uint64_t fallback) {
    const std::string* v = fetch(key);
    if (!v) return fallback;
    try {
        std::size_t pos = 0;
        const auto u = std::stoull(*v, &pos);
        if (pos != v->size()) throw std::invalid_argument("trailing");
        return u;
    } catch (const std::exception&) {
        throw ConfigError(origin_ + ": key '" + key + "' wants an unsigned integer, got '" +
                          *v + "'");
    }
}

bool KeyValueConfig::take_bool(const std::string& key, bool fallback) {
    const std::string* v = fetch(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw ConfigError(origin_ + ": key '" + key + "' wants true/false, got '" + *v + "'");
}

void KeyValueConfig::finish() const {
    std::string unknown;
    for (const auto& [key, used] : consumed_)
        if (!used) unknown += (unknown.empty() ? "" : ", ") + key;
    if (!unknown.empty())
        throw ConfigError(origin_ + ": unknown key(s): " + unknown);
}

} // namespace tlab
