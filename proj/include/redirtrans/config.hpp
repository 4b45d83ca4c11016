#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

namespace rdt::cfg {

// Key-value run configuration.
//
// Grammar: UTF-8 lines of `key = value`. A `#` that starts a line or follows
// whitespace begins a comment; blank lines are skipped. Keys are dotted paths
// (e.g. train.batch_size). Duplicate keys in one file are an error.
//
// Consumers read keys through the typed getters, which record what was
// consumed; reject_unknown() then throws if the file contained keys nothing
// asked for, so typos fail loudly instead of silently using defaults.
class Config {
  public:
    Config() = default;

    static Config parse_file(const std::string& path);
    static Config parse_text(const std::string& text);

    // Highest-precedence write (command-line flags).
    void set(const std::string& key, const std::string& value);
    // Lowest-precedence write (environment): only fills a missing key.
    void set_default(const std::string& key, const std::string& value);

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_str(const std::string& key, const std::string& def);
    double get_f64(const std::string& key, double def);
    long get_i64(const std::string& key, long def);
    uint64_t get_u64(const std::string& key, uint64_t def);
    bool get_bool(const std::string& key, bool def);  // true/false/1/0

    // Throws std::invalid_argument naming every never-consumed key.
    void reject_unknown() const;

    // Sorted `key = value` lines for the run-directory echo.
    std::string resolved() const;

  private:
    std::string take(const std::string& key);  // marks consumed, "" if absent
    std::map<std::string, std::string> values_;
    std::set<std::string> used_;
};

}  // namespace rdt::cfg
