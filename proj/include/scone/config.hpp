#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace scone {

/// Plain-text "key = value" config files. Blank lines and lines starting
/// with '#' are ignored. Unknown keys are rejected by the typed loaders.
class ConfigMap {
public:
    static ConfigMap parse_file(const std::string& path);
    static ConfigMap parse_text(const std::string& text, const std::string& origin = "<text>");

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    double get_double(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;

    const std::map<std::string, std::string>& values() const { return values_; }

    /// Throws "parse" if any key is outside the allowed set.
    void require_known_keys(const std::vector<std::string>& allowed) const;

private:
    std::map<std::string, std::string> values_;
    std::string origin_;
};

} // namespace scone
