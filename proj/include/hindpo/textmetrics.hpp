#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace hindpo::textmetrics {

/// Normalized text units. Never contains empty strings.
using TokenSequence = std::vector<std::string>;

struct PrfScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Splits Devanagari or Latin text into tokens.
///
/// The input is NFC-normalized, then split on whitespace and on Unicode
/// punctuation (including the danda). Combining marks stay attached to their
/// base character. Latin-script letters are
/// lowercased; other scripts are left as is. Invalid UTF-8 sequences are
/// replaced with U+FFFD.
TokenSequence tokenize(std::string_view text);

std::string join(const TokenSequence& tokens, std::string_view separator = " ");

/// Clipped n-gram overlap. All zeros when either side has no n-grams.
PrfScore rouge_n(const TokenSequence& candidate, const TokenSequence& reference, int n);

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b);

/// LCS-based precision/recall with the balanced F1.
PrfScore rouge_l(const TokenSequence& candidate, const TokenSequence& reference);

struct MeteorBreakdown {
    std::size_t matches = 0;
    std::size_t chunks = 0;
    double precision = 0.0;
    double recall = 0.0;
    double fmean = 0.0;
    double penalty = 0.0;
    double score = 0.0;
};

// Exact-match METEOR: greedy left-to-right unigram alignment,
// Fmean = 10PR/(R+9P), fragmentation penalty 0.5 (chunks/matches)^3.
MeteorBreakdown meteor_breakdown(const TokenSequence& candidate, const TokenSequence& reference);
double meteor(const TokenSequence& candidate, const TokenSequence& reference);

/// Semantic similarity backend. Implementations return a value in [0, 1]
/// and must return 1 for identical non-empty inputs. Failures are reported
/// by throwing ProviderError, never by returning 0.
class SemanticScorer {
public:
    virtual ~SemanticScorer() = default;
    virtual double score(std::string_view candidate, std::string_view reference) const = 0;
    virtual std::string name() const = 0;
};

/// Cosine similarity of character 3-gram count vectors taken over the
/// normalized token stream. Strings shorter than three code points
/// contribute a single gram holding the whole string.
class NgramCosineScorer final : public SemanticScorer {
public:
    double score(std::string_view candidate, std::string_view reference) const override;
    std::string name() const override { return "char3-cosine"; }
};

const SemanticScorer& default_semantic_scorer();

double semantic_score(std::string_view candidate, std::string_view reference,
                      const SemanticScorer& scorer = default_semantic_scorer());

inline constexpr double kFinalScoreMax = 1.75;

/// fs = (bs + 3 (rl + mt)) / 4, every input in [0, 1].
///
/// Evaluated in extended precision and rounded once to double. Throws hindpo::Error
/// on out-of-range or non-finite input.
double final_score(double semantic, double rouge_l_f1, double meteor_score);

} // namespace hindpo::textmetrics
