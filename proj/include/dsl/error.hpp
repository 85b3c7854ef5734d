#pragma once

#include <stdexcept>
#include <string>

namespace dsl {

enum class Errc {
    invalid_vocab,
    dimension,
    invalid_snr,
    empty_support,
    invalid_path,
    invalid_quadrature,
    invalid_config,
    invalid_target,
    training,
    undefined_ratio,
    invalid_budget,
    empty_report,
    trace_too_short,
    io,
};

const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

inline const char* to_string(Errc code) noexcept {
    switch (code) {
    case Errc::invalid_vocab: return "invalid vocabulary";
    case Errc::dimension: return "dimension mismatch";
    case Errc::invalid_snr: return "invalid SNR";
    case Errc::empty_support: return "empty support";
    case Errc::invalid_path: return "invalid SNR path";
    case Errc::invalid_quadrature: return "invalid quadrature";
    case Errc::invalid_config: return "invalid config";
    case Errc::invalid_target: return "invalid target";
    case Errc::training: return "training error";
    case Errc::undefined_ratio: return "undefined ratio";
    case Errc::invalid_budget: return "invalid budget";
    case Errc::empty_report: return "empty report";
    case Errc::trace_too_short: return "trace too short";
    case Errc::io: return "I/O error";
    }
    return "error";
}

} // namespace dsl
