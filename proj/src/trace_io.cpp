#include "dsl/trace_io.hpp"

#include "dsl/error.hpp"

#include <json.hpp>

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <string>

namespace dsl {

namespace {

using nlohmann::json;

json vector_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(std::isfinite(v(i)) ? json(v(i)) : json(nullptr));
    return out;
}

Vector vector_from(const json& j) {
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = j[i].is_null() ? std::numeric_limits<double>::quiet_NaN() : j[i].get<double>();
    return v;
}

} // namespace

void write_trace_jsonl(std::ostream& out, const RefinementTrace& trace) {
    for (const auto& s : trace.steps) {
        std::vector<int> masked;
        for (std::size_t i = 0; i < s.after.size(); ++i)
            if (s.after[i] == trace.mask_id()) masked.push_back(static_cast<int>(i));
        json posterior = json::array();
        for (Eigen::Index i = 0; i < s.posterior.rows(); ++i) posterior.push_back(vector_json(s.posterior.row(i).transpose()));
        json rec = {
            {"step", s.step},
            {"t", s.t},
            {"budget", trace.budget},
            {"vocab_size", trace.vocab_size},
            {"top_p", trace.top_p},
            {"r", s.mask_ratio},
            {"alpha", s.alpha},
            {"q", s.q},
            {"before", s.before},
            {"draft", s.after},
            {"masked", masked},
            {"remasked", s.remasked},
            {"revealed", s.revealed},
            {"max_prob", vector_json(s.max_prob)},
            {"confidence", vector_json(s.confidence)},
            {"posterior", posterior},
        };
        out << rec.dump() << '\n';
    }
}

RefinementTrace read_trace_jsonl(std::istream& in) {
    RefinementTrace trace;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const json rec = json::parse(line);
            StepRecord s;
            s.step = rec.at("step").get<int>();
            s.t = rec.at("t").get<double>();
            s.mask_ratio = rec.at("r").get<double>();
            s.alpha = rec.at("alpha").get<double>();
            s.q = rec.at("q").get<double>();
            s.before = rec.at("before").get<Sequence>();
            s.after = rec.at("draft").get<Sequence>();
            s.remasked = rec.at("remasked").get<std::vector<int>>();
            s.revealed = rec.at("revealed").get<std::vector<int>>();
            s.max_prob = vector_from(rec.at("max_prob"));
            s.confidence = vector_from(rec.at("confidence"));
            const auto& post = rec.at("posterior");
            if (!post.empty()) {
                s.posterior.resize(static_cast<Eigen::Index>(post.size()), static_cast<Eigen::Index>(post[0].size()));
                for (std::size_t i = 0; i < post.size(); ++i)
                    s.posterior.row(static_cast<Eigen::Index>(i)) = vector_from(post[i]).transpose();
            }
            if (trace.steps.empty()) {
                trace.budget = rec.at("budget").get<int>();
                trace.vocab_size = rec.at("vocab_size").get<int>();
                trace.top_p = rec.at("top_p").get<double>();
                trace.initial = s.before;
            }
            trace.steps.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw Error(Errc::io, "trace line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (trace.steps.empty()) throw Error(Errc::io, "trace is empty");
    return trace;
}

} // namespace dsl
