#pragma once

// Key-value run configuration and atomic output directories for the CLI.

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsl::cli {

/// Bad invocation or configuration; maps to exit code 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Key {
    std::string name;
    std::string value;  ///< default
    std::string help;
};

/// Values for a fixed schema. Later layers override earlier ones:
/// defaults, preset, config file, command-line flags.
class Params {
public:
    explicit Params(std::vector<Key> schema);

    const std::vector<Key>& schema() const noexcept { return schema_; }
    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);
    /// Set only if neither the config file nor a flag supplied the key.
    void set_default(const std::string& key, const std::string& value);
    bool touched(const std::string& key) const { return touched_.count(key) != 0; }

    /// Lines of `key = value`; '#' starts a comment. Unknown keys are errors.
    void merge_file(std::istream& in, const std::string& origin);

    const std::string& str(const std::string& key) const;
    long long integer(const std::string& key) const;
    std::size_t count(const std::string& key) const;  ///< non-negative integer
    double real(const std::string& key) const;
    bool flag(const std::string& key) const;
    std::vector<double> reals(const std::string& key) const;  ///< comma separated

    /// `key=value` per schema entry, schema order.
    void write(std::ostream& out) const;

private:
    std::vector<Key> schema_;
    std::map<std::string, std::string> values_;
    std::set<std::string> touched_;
};

/// Files are written into a sibling staging directory that is renamed onto
/// the final path by commit().
class OutputDir {
public:
    OutputDir(std::filesystem::path target, bool force);
    ~OutputDir();

    OutputDir(const OutputDir&) = delete;
    OutputDir& operator=(const OutputDir&) = delete;

    void write(const std::string& name, const std::function<void(std::ostream&)>& body);
    void commit();

private:
    std::filesystem::path target_;
    std::filesystem::path staging_;
    bool force_;
    bool committed_ = false;
};

} // namespace dsl::cli
