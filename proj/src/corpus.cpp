#include "dsl/corpus.hpp"

#include "dsl/random.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace dsl {

EmbeddingTable make_circle_embeddings(int vocab_size) {
    if (vocab_size < 2) throw Error(Errc::invalid_vocab, "K must be >= 2, got " + std::to_string(vocab_size));
    Matrix rows(vocab_size, 2);
    for (int k = 0; k < vocab_size; ++k) {
        const double angle = 2.0 * std::numbers::pi * k / vocab_size;
        rows(k, 0) = std::cos(angle);
        rows(k, 1) = std::sin(angle);
    }
    return EmbeddingTable(rows);
}

EmbeddingTable make_sphere_embeddings(int vocab_size, int dim, std::uint64_t seed) {
    if (vocab_size < 2) throw Error(Errc::invalid_vocab, "K must be >= 2, got " + std::to_string(vocab_size));
    if (dim < 2) throw Error(Errc::dimension, "sphere embeddings need d >= 2, got " + std::to_string(dim));
    Rng rng = make_rng(seed, 0x656d62 /* "emb" */);
    std::normal_distribution<double> normal;
    Matrix rows(vocab_size, dim);
    for (int k = 0; k < vocab_size; ++k) {
        for (;;) {
            for (int j = 0; j < dim; ++j) rows(k, j) = normal(rng);
            const double norm = rows.row(k).norm();
            if (norm < 1e-12) continue;
            rows.row(k) /= norm;
            bool distinct = true;
            for (int w = 0; w < k && distinct; ++w) distinct = (rows.row(k) - rows.row(w)).norm() > 1e-9;
            if (distinct) break;
        }
    }
    return EmbeddingTable(rows);
}

EmpiricalDistribution::EmpiricalDistribution(std::vector<Sequence> sequences, std::vector<double> weights,
                                             int vocab_size)
    : vocab_size_(vocab_size) {
    if (vocab_size < 2) throw Error(Errc::invalid_vocab, "K must be >= 2, got " + std::to_string(vocab_size));
    if (sequences.empty()) throw Error(Errc::empty_support, "distribution needs at least one sequence");
    if (weights.size() != sequences.size())
        throw Error(Errc::dimension, "got " + std::to_string(weights.size()) + " weights for " +
                                         std::to_string(sequences.size()) + " sequences");
    length_ = static_cast<int>(sequences.front().size());
    if (length_ < 1) throw Error(Errc::dimension, "sequences must be non-empty");

    std::map<Sequence, std::size_t> seen;
    std::vector<double> merged;
    for (std::size_t n = 0; n < sequences.size(); ++n) {
        const Sequence& seq = sequences[n];
        if (static_cast<int>(seq.size()) != length_)
            throw Error(Errc::dimension, "sequence " + std::to_string(n) + " has length " +
                                             std::to_string(seq.size()) + ", expected " + std::to_string(length_));
        for (Token v : seq)
            if (v < 0 || v >= vocab_size)
                throw Error(Errc::invalid_vocab, "token id " + std::to_string(v) + " outside [0, " +
                                                     std::to_string(vocab_size) + ")");
        if (!(weights[n] >= 0.0) || !std::isfinite(weights[n]))
            throw Error(Errc::invalid_config, "weight of sequence " + std::to_string(n) + " must be finite and >= 0");
        auto [it, inserted] = seen.emplace(seq, sequences_.size());
        if (inserted) {
            sequences_.push_back(seq);
            merged.push_back(weights[n]);
        } else {
            merged[it->second] += weights[n];
        }
    }

    double total = 0.0;
    for (double w : merged) total += w;
    if (!(total > 0.0)) throw Error(Errc::empty_support, "weights sum to zero");

    const auto count = static_cast<Eigen::Index>(sequences_.size());
    weights_.resize(count);
    log_weights_.resize(count);
    tokens_.resize(count, length_);
    for (Eigen::Index n = 0; n < count; ++n) {
        weights_(n) = merged[static_cast<std::size_t>(n)] / total;
        log_weights_(n) = std::log(weights_(n));
        for (int i = 0; i < length_; ++i) tokens_(n, i) = sequences_[static_cast<std::size_t>(n)][i];
    }
}

EmpiricalDistribution::EmpiricalDistribution(std::vector<Sequence> sequences, int vocab_size)
    : EmpiricalDistribution(sequences, std::vector<double>(sequences.size(), 1.0), vocab_size) {}

std::optional<std::size_t> EmpiricalDistribution::find(const Sequence& seq) const {
    for (std::size_t n = 0; n < sequences_.size(); ++n)
        if (sequences_[n] == seq) return n;
    return std::nullopt;
}

EmpiricalDistribution EmpiricalDistribution::condition(const std::vector<std::optional<Token>>& observed) const {
    if (static_cast<int>(observed.size()) != length_)
        throw Error(Errc::dimension, "observation length " + std::to_string(observed.size()) +
                                         " does not match sequence length " + std::to_string(length_));
    std::vector<Sequence> kept;
    std::vector<double> kept_weights;
    for (std::size_t n = 0; n < sequences_.size(); ++n) {
        bool consistent = true;
        for (int i = 0; i < length_ && consistent; ++i)
            consistent = !observed[i] || *observed[i] == sequences_[n][i];
        if (consistent && weights_(static_cast<Eigen::Index>(n)) > 0.0) {
            kept.push_back(sequences_[n]);
            kept_weights.push_back(weights_(static_cast<Eigen::Index>(n)));
        }
    }
    if (kept.empty()) throw Error(Errc::empty_support, "no sequence is consistent with the observation");
    return EmpiricalDistribution(std::move(kept), std::move(kept_weights), vocab_size_);
}

EmpiricalDistribution cyclic_dataset(int vocab_size) {
    if (vocab_size < 2) throw Error(Errc::invalid_vocab, "K must be >= 2, got " + std::to_string(vocab_size));
    std::vector<Sequence> shifts;
    shifts.reserve(static_cast<std::size_t>(vocab_size));
    for (int s = 0; s < vocab_size; ++s) {
        Sequence seq(static_cast<std::size_t>(vocab_size));
        for (int i = 0; i < vocab_size; ++i) seq[i] = ((i - s) % vocab_size + vocab_size) % vocab_size;
        shifts.push_back(std::move(seq));
    }
    return EmpiricalDistribution(std::move(shifts), vocab_size);
}

EmpiricalDistribution read_corpus(std::istream& in, bool weighted, int vocab_size) {
    std::vector<Sequence> sequences;
    std::vector<double> weights;
    std::string line;
    int max_id = -1;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        double weight = 1.0;
        if (weighted) {
            if (!(fields >> weight)) continue;  // blank line
        }
        Sequence seq;
        long long id;
        while (fields >> id) {
            if (id < 0) throw Error(Errc::invalid_vocab, "negative token id on line " + std::to_string(line_no));
            seq.push_back(static_cast<Token>(id));
            max_id = std::max(max_id, static_cast<int>(id));
        }
        if (!fields.eof()) throw Error(Errc::io, "unparseable token on line " + std::to_string(line_no));
        if (seq.empty()) {
            if (weighted) throw Error(Errc::io, "weight without tokens on line " + std::to_string(line_no));
            continue;
        }
        sequences.push_back(std::move(seq));
        weights.push_back(weight);
    }
    if (sequences.empty()) throw Error(Errc::empty_support, "corpus contains no sequences");
    if (vocab_size <= 0) vocab_size = std::max(2, max_id + 1);
    return EmpiricalDistribution(std::move(sequences), std::move(weights), vocab_size);
}

EmpiricalDistribution load_corpus(const std::string& path, bool weighted, int vocab_size) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io, "cannot open corpus file '" + path + "'");
    return read_corpus(in, weighted, vocab_size);
}

void write_embedding_csv(std::ostream& out, const EmbeddingTable& table) {
    out << "token";
    for (int j = 0; j < table.dim(); ++j) out << ",e" << j;
    out << '\n';
    const auto& rows = table.with_mask();
    std::ostringstream line;
    line.precision(17);
    for (Eigen::Index v = 0; v < rows.rows(); ++v) {
        line.str("");
        line << v;
        for (Eigen::Index j = 0; j < rows.cols(); ++j) line << ',' << rows(v, j);
        out << line.str() << '\n';
    }
}

} // namespace dsl
