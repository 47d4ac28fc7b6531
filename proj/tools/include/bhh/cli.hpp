#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bhh/geometry.hpp"

namespace bhh::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitUsage = 64;

/// Malformed or invalid configuration, with the 1-based line of the
/// offending entry (0 when the value came from a default or a flag).
class ConfigFileError : public std::invalid_argument {
public:
    ConfigFileError(const std::string& source, int line, const std::string& msg);
    [[nodiscard]] int line() const noexcept { return line_; }

private:
    int line_;
};

/// Flat `section.key = value` file. '#' starts a comment; blank lines are
/// ignored; duplicate keys are an error.
class Config {
public:
    static Config parse(const std::string& text, const std::string& source = "<config>");
    static Config load(const std::string& path);

    void set(const std::string& key, const std::string& value);  // flag overrides, line 0
    [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) != 0; }
    [[nodiscard]] std::optional<std::string> raw(const std::string& key) const;
    [[nodiscard]] int line_of(const std::string& key) const;
    [[nodiscard]] const std::string& source() const noexcept { return source_; }
    [[nodiscard]] std::vector<std::string> keys() const;

    /// Diagnostic anchored at the key's line.
    [[noreturn]] void fail(const std::string& key, const std::string& msg) const;

    double get_double(const std::string& key, double def) const;
    long long get_int(const std::string& key, long long def) const;
    bool get_bool(const std::string& key, bool def) const;
    std::string get_string(const std::string& key, const std::string& def) const;
    std::vector<double> get_list(const std::string& key, const std::vector<double>& def) const;

private:
    struct Entry {
        std::string value;
        int line = 0;
    };
    std::map<std::string, Entry> entries_;
    std::string source_;
};

/// Target sets written as point(a,b), ball(a,b;r), box(a,b;s1,s2), joined
/// with '+' for finite unions.
geom::TargetSet parse_target(const std::string& text);

struct Invocation {
    std::string command;
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::string out_dir = ".";
    bool dry_run = false;
};

const std::vector<std::string>& commands();
std::string usage();

/// Runs one command; returns the process exit status. Diagnostics go to `err`,
/// a one-line summary to `out`.
int run(const Invocation& inv, std::ostream& out, std::ostream& err);

/// Parses argv with CLI11 and calls run.
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace bhh::cli
