#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "bhh/cli.hpp"

namespace bhh::cli {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool valid_key(const std::string& k) {
    if (k.empty() || k.front() == '.' || k.back() == '.' || k.find("..") != std::string::npos) return false;
    for (char c : k) {
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')) return false;
    }
    return true;
}

std::optional<double> to_double(const std::string& s) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || p != end) return std::nullopt;
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::vector<double> numbers(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& tok : split(s, ',')) {
        const auto v = to_double(tok);
        if (!v) throw std::invalid_argument(what + ": '" + tok + "' is not a number");
        out.push_back(*v);
    }
    return out;
}

}  // namespace

ConfigFileError::ConfigFileError(const std::string& source, int line, const std::string& msg)
    : std::invalid_argument(line > 0 ? source + ":" + std::to_string(line) + ": " + msg : source + ": " + msg),
      line_(line) {}

Config Config::parse(const std::string& text, const std::string& source) {
    Config c;
    c.source_ = source;
    std::istringstream in(text);
    std::string raw_line;
    int line = 0;
    while (std::getline(in, raw_line)) {
        ++line;
        const auto hash = raw_line.find('#');
        const std::string body = trim(hash == std::string::npos ? raw_line : raw_line.substr(0, hash));
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw ConfigFileError(source, line, "expected 'key = value'");
        const std::string key = trim(body.substr(0, eq));
        const std::string value = trim(body.substr(eq + 1));
        if (!valid_key(key)) throw ConfigFileError(source, line, "malformed key '" + key + "'");
        if (value.empty()) throw ConfigFileError(source, line, "empty value for '" + key + "'");
        if (c.entries_.count(key)) {
            throw ConfigFileError(source, line,
                                  "duplicate key '" + key + "' (first set on line " +
                                      std::to_string(c.entries_[key].line) + ")");
        }
        c.entries_[key] = {value, line};
    }
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigFileError(path, 0, "cannot open config file");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
}

void Config::set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }

std::optional<std::string> Config::raw(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
}

int Config::line_of(const std::string& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? 0 : it->second.line;
}

std::vector<std::string> Config::keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries_) out.push_back(k);
    return out;
}

void Config::fail(const std::string& key, const std::string& msg) const {
    throw ConfigFileError(source_, line_of(key), key + ": " + msg);
}

double Config::get_double(const std::string& key, double def) const {
    const auto r = raw(key);
    if (!r) return def;
    const auto v = to_double(*r);
    if (!v) fail(key, "'" + *r + "' is not a number");
    return *v;
}

long long Config::get_int(const std::string& key, long long def) const {
    const auto r = raw(key);
    if (!r) return def;
    long long v = 0;
    const auto* end = r->data() + r->size();
    const auto [p, ec] = std::from_chars(r->data(), end, v);
    if (ec != std::errc() || p != end) fail(key, "'" + *r + "' is not an integer");
    return v;
}

bool Config::get_bool(const std::string& key, bool def) const {
    const auto r = raw(key);
    if (!r) return def;
    if (*r == "true" || *r == "1" || *r == "yes") return true;
    if (*r == "false" || *r == "0" || *r == "no") return false;
    fail(key, "'" + *r + "' is not a boolean");
}

std::string Config::get_string(const std::string& key, const std::string& def) const {
    const auto r = raw(key);
    return r ? *r : def;
}

std::vector<double> Config::get_list(const std::string& key, const std::vector<double>& def) const {
    const auto r = raw(key);
    if (!r) return def;
    try {
        return numbers(*r, "list");
    } catch (const std::invalid_argument& e) {
        fail(key, e.what());
    }
}

geom::TargetSet parse_target(const std::string& text) {
    const auto parts = split(text, '+');
    std::vector<geom::TargetSet> sets;
    for (const auto& part : parts) {
        const auto open = part.find('(');
        if (open == std::string::npos || part.back() != ')') {
            throw std::invalid_argument("target '" + part + "': expected shape(args)");
        }
        const std::string shape = trim(part.substr(0, open));
        const std::string args = part.substr(open + 1, part.size() - open - 2);
        const auto groups = split(args, ';');
        if (shape == "point" && groups.size() == 1) {
            sets.push_back(geom::TargetSet::point(numbers(groups[0], "point")));
        } else if (shape == "ball" && groups.size() == 2) {
            const auto r = numbers(groups[1], "ball radius");
            if (r.size() != 1) throw std::invalid_argument("ball: one radius expected");
            sets.push_back(geom::TargetSet::ball(numbers(groups[0], "ball center"), r[0]));
        } else if (shape == "box" && groups.size() == 2) {
            sets.push_back(geom::TargetSet::box(numbers(groups[0], "box corner"), numbers(groups[1], "box sides")));
        } else {
            throw std::invalid_argument("target '" + part + "': unknown shape or wrong argument groups");
        }
    }
    auto out = sets.size() == 1 ? sets.front() : geom::TargetSet::finite_union(std::move(sets));
    out.validate();
    return out;
}

}  // namespace bhh::cli
