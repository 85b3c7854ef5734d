#include "params.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace dsl::cli {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
    throw UsageError(key + ": expected " + what + ", got '" + value + "'");
}

} // namespace

Params::Params(std::vector<Key> schema) : schema_(std::move(schema)) {
    for (const auto& k : schema_) values_[k.name] = k.value;
}

bool Params::has(const std::string& key) const { return values_.count(key) != 0; }

void Params::set(const std::string& key, const std::string& value) {
    if (!has(key)) throw UsageError("unknown key '" + key + "'");
    values_[key] = value;
    touched_.insert(key);
}

void Params::set_default(const std::string& key, const std::string& value) {
    if (!has(key)) throw std::logic_error("key not in schema: " + key);
    if (!touched(key)) values_[key] = value;
}

void Params::merge_file(std::istream& in, const std::string& origin) {
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (!has(key)) throw UsageError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        values_[key] = trim(line.substr(eq + 1));
        touched_.insert(key);
    }
}

const std::string& Params::str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::logic_error("key not in schema: " + key);
    return it->second;
}

long long Params::integer(const std::string& key) const {
    const auto& s = str(key);
    char* end = nullptr;
    errno = 0;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0' || errno == ERANGE) bad_value(key, s, "an integer");
    return v;
}

std::size_t Params::count(const std::string& key) const {
    const long long v = integer(key);
    if (v < 0) bad_value(key, str(key), "a non-negative integer");
    return static_cast<std::size_t>(v);
}

double Params::real(const std::string& key) const {
    const auto& s = str(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0' || !std::isfinite(v)) bad_value(key, s, "a finite number");
    return v;
}

bool Params::flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    bad_value(key, s, "true or false");
}

std::vector<double> Params::reals(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (item.empty() || *end != '\0' || !std::isfinite(v)) bad_value(key, str(key), "a comma-separated number list");
        out.push_back(v);
    }
    if (out.empty()) bad_value(key, str(key), "a comma-separated number list");
    return out;
}

void Params::write(std::ostream& out) const {
    for (const auto& k : schema_) out << k.name << '=' << values_.at(k.name) << '\n';
}

OutputDir::OutputDir(std::filesystem::path target, bool force) : target_(std::move(target)), force_(force) {
    namespace fs = std::filesystem;
    if (target_.empty()) throw UsageError("--out: output directory is required");
    if (fs::exists(target_) && !force_)
        throw UsageError("--out: " + target_.string() + " already exists (use --force to replace it)");
    staging_ = target_;
    staging_ += ".partial";
    fs::remove_all(staging_);
    if (target_.has_parent_path()) fs::create_directories(target_.parent_path());
    fs::create_directory(staging_);
}

OutputDir::~OutputDir() {
    if (!committed_) {
        std::error_code ec;
        std::filesystem::remove_all(staging_, ec);
    }
}

void OutputDir::write(const std::string& name, const std::function<void(std::ostream&)>& body) {
    std::ofstream out(staging_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (staging_ / name).string());
    body(out);
    if (!out) throw std::runtime_error("write failed: " + (staging_ / name).string());
}

void OutputDir::commit() {
    namespace fs = std::filesystem;
    if (fs::exists(target_)) fs::remove_all(target_);
    fs::rename(staging_, target_);
    committed_ = true;
}

} // namespace dsl::cli
