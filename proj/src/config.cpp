#include "redirtrans/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rdt::cfg {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Strip a comment: '#' at the start or after whitespace. A '#' glued to
// non-space text (e.g. inside a path) is kept.
std::string strip_comment(const std::string& line) {
    for (size_t i = 0; i < line.size(); ++i) {
        if (line[i] != '#') continue;
        if (i == 0 || line[i - 1] == ' ' || line[i - 1] == '\t') return line.substr(0, i);
    }
    return line;
}

}  // namespace

Config Config::parse_text(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        size_t eq = body.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected 'key = value', got '" + body + "'");
        std::string key = trim(body.substr(0, eq));
        std::string value = trim(body.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        if (c.values_.count(key))
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": duplicate key '" + key + "'");
        c.values_[key] = value;
    }
    return c;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_text(buf.str());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

void Config::set_default(const std::string& key, const std::string& value) {
    values_.emplace(key, value);
}

std::string Config::take(const std::string& key) {
    used_.insert(key);
    auto it = values_.find(key);
    return it == values_.end() ? "" : it->second;
}

std::string Config::get_str(const std::string& key, const std::string& def) {
    std::string v = take(key);
    return values_.count(key) ? v : def;
}

double Config::get_f64(const std::string& key, double def) {
    std::string v = take(key);
    if (!values_.count(key)) return def;
    size_t pos = 0;
    double out;
    try {
        out = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': not a number: '" + v + "'");
    }
    if (pos != v.size())
        throw std::invalid_argument("config key '" + key + "': not a number: '" + v + "'");
    return out;
}

long Config::get_i64(const std::string& key, long def) {
    std::string v = take(key);
    if (!values_.count(key)) return def;
    size_t pos = 0;
    long out;
    try {
        out = std::stol(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': not an integer: '" + v + "'");
    }
    if (pos != v.size())
        throw std::invalid_argument("config key '" + key + "': not an integer: '" + v + "'");
    return out;
}

uint64_t Config::get_u64(const std::string& key, uint64_t def) {
    std::string v = take(key);
    if (!values_.count(key)) return def;
    size_t pos = 0;
    unsigned long long out;
    try {
        out = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': not an unsigned integer: '" + v +
                                    "'");
    }
    if (pos != v.size())
        throw std::invalid_argument("config key '" + key + "': not an unsigned integer: '" + v +
                                    "'");
    return out;
}

bool Config::get_bool(const std::string& key, bool def) {
    std::string v = take(key);
    if (!values_.count(key)) return def;
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::invalid_argument("config key '" + key + "': expected true/false/1/0, got '" + v +
                                "'");
}

void Config::reject_unknown() const {
    std::string unknown;
    for (const auto& [key, value] : values_) {
        if (used_.count(key)) continue;
        if (!unknown.empty()) unknown += ", ";
        unknown += key;
    }
    if (!unknown.empty()) throw std::invalid_argument("unknown config keys: " + unknown);
}

std::string Config::resolved() const {
    std::string out;
    for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
    return out;
}

}  // namespace rdt::cfg
