#pragma once

#include "densmap/simulator.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace densmap {

/// Flat INI-style run configuration: `key = value` lines under [section]
/// headers. '#' starts a comment. Section order is preserved.
class RunConfig {
public:
    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_string(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::string get(const std::string& section, const std::string& key) const;
    std::string get_or(const std::string& section, const std::string& key,
                       const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key) const;
    double get_double_or(const std::string& section, const std::string& key,
                         double fallback) const;
    long get_int(const std::string& section, const std::string& key) const;
    long get_int_or(const std::string& section, const std::string& key, long fallback) const;
    bool get_bool_or(const std::string& section, const std::string& key,
                     bool fallback) const;

    /// Sections whose name starts with the given prefix, in file order.
    std::vector<std::string> sections_with_prefix(const std::string& prefix) const;

    std::uint64_t config_hash() const { return hash_; }
    const std::string& raw_text() const { return text_; }

private:
    std::vector<std::string> section_order_;
    std::map<std::string, std::map<std::string, std::string>> sections_;
    std::uint64_t hash_ = 0;
    std::string text_;
};

std::vector<double> parse_double_list(const std::string& s);
std::vector<std::string> parse_string_list(const std::string& s);

/// Builds a SimConfig from the [sim], [reader *] and [pairing] sections.
SimConfig sim_config_from(const RunConfig& cfg, std::uint64_t seed);

}  // namespace densmap
