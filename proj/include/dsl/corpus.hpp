#pragma once

#include "dsl/error.hpp"
#include "dsl/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace dsl {

/// Spherical token embeddings: K unit rows followed by one all-zero mask row.
template <typename Scalar = double>
class BasicEmbeddingTable {
public:
    BasicEmbeddingTable() = default;

    /// `token_rows` holds the K data-token rows; the mask row is appended.
    explicit BasicEmbeddingTable(const MatrixX<Scalar>& token_rows)
        : rows_(token_rows.rows() + 1, token_rows.cols()) {
        if (token_rows.rows() < 2) throw Error(Errc::invalid_vocab, "need at least two tokens");
        if (token_rows.cols() < 1) throw Error(Errc::dimension, "embedding dimension must be positive");
        rows_.topRows(token_rows.rows()) = token_rows;
        rows_.bottomRows(1).setZero();
        validate();
    }

    int vocab_size() const noexcept { return static_cast<int>(rows_.rows()) - 1; }
    int dim() const noexcept { return static_cast<int>(rows_.cols()); }
    Token mask_id() const noexcept { return vocab_size(); }

    /// K x d block of data-token embeddings (no mask row).
    auto tokens() const { return rows_.topRows(rows_.rows() - 1); }
    /// (K+1) x d table including the zero mask row.
    const MatrixX<Scalar>& with_mask() const noexcept { return rows_; }
    auto row(Token v) const { return rows_.row(v); }

    /// Stacked embeddings of a sequence (L x d). Mask ids map to zero rows.
    MatrixX<Scalar> encode(const Sequence& seq) const {
        MatrixX<Scalar> out(static_cast<Eigen::Index>(seq.size()), dim());
        for (std::size_t i = 0; i < seq.size(); ++i) {
            const Token v = seq[i];
            if (v < 0 || v > mask_id()) throw Error(Errc::invalid_vocab, "token id out of range: " + std::to_string(v));
            out.row(static_cast<Eigen::Index>(i)) = rows_.row(v);
        }
        return out;
    }

    template <typename Other>
    BasicEmbeddingTable<Other> cast() const {
        return BasicEmbeddingTable<Other>(tokens().template cast<Other>().eval());
    }

private:
    void validate() const {
        using std::abs;
        const Scalar tol = std::max<Scalar>(Scalar(1e-12), Scalar(64) * Eigen::NumTraits<Scalar>::epsilon());
        const auto k = rows_.rows() - 1;
        for (Eigen::Index v = 0; v < k; ++v) {
            if (abs(rows_.row(v).norm() - Scalar(1)) > tol)
                throw Error(Errc::invalid_vocab, "embedding row " + std::to_string(v) + " is not unit norm");
            for (Eigen::Index w = 0; w < v; ++w)
                if ((rows_.row(v) - rows_.row(w)).norm() <= Scalar(1e-9))
                    throw Error(Errc::invalid_vocab, "embedding rows " + std::to_string(w) + " and " +
                                                         std::to_string(v) + " coincide");
        }
    }

    MatrixX<Scalar> rows_;
};

using EmbeddingTable = BasicEmbeddingTable<double>;

/// Unit-circle embeddings with equal angular spacing (d = 2).
EmbeddingTable make_circle_embeddings(int vocab_size);

/// Normalized isotropic Gaussian draws in R^d, deterministic in `seed`.
EmbeddingTable make_sphere_embeddings(int vocab_size, int dim, std::uint64_t seed);

/// Weighted finite set of equal-length token sequences over a vocabulary of size K.
class EmpiricalDistribution {
public:
    EmpiricalDistribution() = default;

    /// Duplicate sequences are merged (weights added); weights are normalized.
    EmpiricalDistribution(std::vector<Sequence> sequences, std::vector<double> weights, int vocab_size);

    /// Uniform weights.
    EmpiricalDistribution(std::vector<Sequence> sequences, int vocab_size);

    std::size_t size() const noexcept { return sequences_.size(); }
    int length() const noexcept { return length_; }
    int vocab_size() const noexcept { return vocab_size_; }

    const std::vector<Sequence>& sequences() const noexcept { return sequences_; }
    const Sequence& sequence(std::size_t n) const { return sequences_.at(n); }
    const Vector& weights() const noexcept { return weights_; }
    const Vector& log_weights() const noexcept { return log_weights_; }

    /// Token id at (sequence n, position i).
    Token token(std::size_t n, int i) const { return tokens_(static_cast<Eigen::Index>(n), i); }
    const Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& token_matrix() const noexcept {
        return tokens_;
    }

    std::optional<std::size_t> find(const Sequence& seq) const;

    /// Restriction to sequences consistent with `observed` (nullopt = free).
    /// Throws empty_support when no sequence is consistent.
    EmpiricalDistribution condition(const std::vector<std::optional<Token>>& observed) const;

private:
    std::vector<Sequence> sequences_;
    Vector weights_;
    Vector log_weights_;
    Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> tokens_;
    int length_ = 0;
    int vocab_size_ = 0;
};

/// All K cyclic shifts of [0, ..., K-1], uniformly weighted. Shift s is
/// roll([0..K-1], s), so sequence s holds token (i - s) mod K at position i.
EmpiricalDistribution cyclic_dataset(int vocab_size);

/// Reads one sequence per line of whitespace-separated token ids. With
/// `weighted`, the first column of each line is a non-negative weight.
/// `vocab_size` <= 0 infers K = max id + 1 (at least 2).
EmpiricalDistribution read_corpus(std::istream& in, bool weighted, int vocab_size = 0);
EmpiricalDistribution load_corpus(const std::string& path, bool weighted, int vocab_size = 0);

void write_embedding_csv(std::ostream& out, const EmbeddingTable& table);

} // namespace dsl
