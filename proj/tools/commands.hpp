#pragma once

#include "params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dsl::cli {

struct Context {
    std::uint64_t seed = 0;
    unsigned threads = 1;
    OutputDir* out = nullptr;
};

struct Command {
    std::string name;
    std::string description;
    std::vector<Key> (*schema)();
    void (*apply_preset)(Params&);  ///< may be null
    void (*run)(const Params&, const Context&);
};

const std::vector<Command>& commands();

} // namespace dsl::cli
