#pragma once

#include "hindpo/rng.hpp"
#include "hindpo/textmetrics.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace hindpo::policy {

using TokenId = std::uint32_t;
using TokenIds = std::vector<TokenId>;

/// Ordered unique token list. Index 0 is BOS, index 1 is EOS.
class Vocabulary {
public:
    static constexpr std::string_view kBos = "<s>";
    static constexpr std::string_view kEos = "</s>";
    static constexpr TokenId kBosId = 0;
    static constexpr TokenId kEosId = 1;

    /// Builds BOS, EOS, then `tokens` in first-seen order with duplicates
    /// dropped. Throws hindpo::Error if the result has fewer than 3 entries
    /// or a token is empty or collides with a reserved marker.
    explicit Vocabulary(const std::vector<std::string>& tokens);

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(TokenId id) const { return tokens_.at(id); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    bool contains(std::string_view token) const;

    /// Throws VocabularyError for unknown tokens.
    TokenId id(std::string_view token) const;
    TokenIds encode(const textmetrics::TokenSequence& tokens) const;
    /// Encoded tokens followed by EOS.
    TokenIds encode_response(const textmetrics::TokenSequence& tokens) const;
    /// Drops BOS/EOS markers.
    textmetrics::TokenSequence decode(std::span<const TokenId> ids) const;

    bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Dense gradient over the logit table with a record of touched rows.
class GradientTable {
public:
    explicit GradientTable(std::size_t vocab_size)
        : n_(vocab_size), values_(vocab_size * vocab_size, 0.0), touched_(vocab_size, false) {}

    std::size_t dim() const { return n_; }
    double at(TokenId row, TokenId col) const { return values_[row * n_ + col]; }
    std::span<const double> row(TokenId r) const { return {values_.data() + r * n_, n_}; }
    std::span<double> row(TokenId r) {
        touched_[r] = true;
        return {values_.data() + r * n_, n_};
    }
    bool touched(TokenId r) const { return touched_[r]; }
    std::vector<TokenId> touched_rows() const;
    std::span<const double> values() const { return values_; }

    void scale(double factor);
    /// this += factor * other
    void add(const GradientTable& other, double factor = 1.0);

private:
    std::size_t n_;
    std::vector<double> values_;
    std::vector<bool> touched_;
};

/// Bigram softmax policy: logits(prev, next), rows are previous tokens.
class PolicyParameters {
public:
    explicit PolicyParameters(Vocabulary vocab);
    PolicyParameters(Vocabulary vocab, std::vector<double> logits);

    const Vocabulary& vocab() const { return vocab_; }
    std::size_t dim() const { return vocab_.size(); }

    double logit(TokenId prev, TokenId next) const { return logits_[prev * dim() + next]; }
    double& logit(TokenId prev, TokenId next) { return logits_[prev * dim() + next]; }
    std::span<const double> row(TokenId prev) const { return {logits_.data() + prev * dim(), dim()}; }
    std::span<const double> logits() const { return logits_; }
    std::span<double> logits() { return logits_; }

    /// Softmax of row / temperature.
    std::vector<double> softmax_row(TokenId prev, double temperature = 1.0) const;
    std::vector<double> log_softmax_row(TokenId prev, double temperature = 1.0) const;

    /// logits -= step * gradient
    void apply_gradient(const GradientTable& gradient, double step);

    bool all_finite() const;

private:
    Vocabulary vocab_;
    std::vector<double> logits_;
};

struct NoiseInit {
    double stddev = 0.01;
    std::uint64_t seed = 0;
};

/// Zero logits (uniform rows), or Gaussian noise when `noise` is given.
PolicyParameters new_policy(Vocabulary vocab, std::optional<NoiseInit> noise = std::nullopt);

/// Sum over response positions of log softmax(logits[prev])[next]. The first
/// response token is conditioned on the last prompt token, or on BOS when
/// the prompt is empty. The response must end with EOS.
double sequence_log_prob(const PolicyParameters& policy, std::span<const TokenId> prompt,
                         std::span<const TokenId> response, double temperature = 1.0);

double sequence_log_prob(const PolicyParameters& policy, const textmetrics::TokenSequence& prompt,
                         const textmetrics::TokenSequence& response);

/// sequence_log_prob at temperature 1, accumulated in long double.
long double sequence_log_prob_extended(const PolicyParameters& policy, std::span<const TokenId> prompt,
                                       std::span<const TokenId> response);

/// gradient += coefficient * d/dlogits sequence_log_prob
void accumulate_sequence_grad(const PolicyParameters& policy, std::span<const TokenId> prompt,
                              std::span<const TokenId> response, double coefficient, GradientTable& gradient);

GradientTable grad_sequence_log_prob(const PolicyParameters& policy, std::span<const TokenId> prompt,
                                     std::span<const TokenId> response);

/// Draws tokens from softmax(row / temperature) until EOS or `max_len`
/// tokens. The returned sequence includes the EOS when one was drawn.
TokenIds sample_response(const PolicyParameters& policy, std::span<const TokenId> prompt, double temperature,
                         std::size_t max_len, Rng& rng);

/// Argmax decoding; ties resolve to the lowest token id.
TokenIds greedy_response(const PolicyParameters& policy, std::span<const TokenId> prompt, std::size_t max_len);

/// Frozen copy of a policy, shared cheaply and never mutated.
class ReferenceSnapshot {
public:
    explicit ReferenceSnapshot(const PolicyParameters& source)
        : params_(std::make_shared<const PolicyParameters>(source)) {}

    const PolicyParameters& params() const { return *params_; }

private:
    std::shared_ptr<const PolicyParameters> params_;
};

inline ReferenceSnapshot snapshot_reference(const PolicyParameters& policy) { return ReferenceSnapshot(policy); }

// Checkpoint file: JSON object
//   {"format": "hindpo-policy", "version": 1, "vocab": [...],
//    "dim": N, "logits": [row-major N*N numbers]}
inline constexpr int kCheckpointVersion = 1;

std::string checkpoint_to_string(const PolicyParameters& policy);
PolicyParameters checkpoint_from_string(std::string_view text);
void save_checkpoint(const PolicyParameters& policy, const std::filesystem::path& path);
PolicyParameters load_checkpoint(const std::filesystem::path& path);

} // namespace hindpo::policy
