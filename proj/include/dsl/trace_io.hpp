#pragma once

// JSONL export of refinement traces: one object per step.

#include "dsl/refine.hpp"

#include <iosfwd>

namespace dsl {

void write_trace_jsonl(std::ostream& out, const RefinementTrace& trace);

/// Inverse of write_trace_jsonl. Throws io on malformed input.
RefinementTrace read_trace_jsonl(std::istream& in);

} // namespace dsl
