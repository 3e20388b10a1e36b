#pragma once

#include "hindpo/textmetrics.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hindpo::dataforge {

enum class Label { fake, real };

std::string_view to_string(Label label);

inline constexpr std::size_t kCandidatesPerArticle = 3;

struct Candidate {
    std::string model_id;
    std::string text;

    bool operator==(const Candidate&) const = default;
};

struct ArticleRecord {
    std::string id;
    Label label = Label::fake;
    std::string news_text;
    std::string ground_truth_explanation;
    std::array<Candidate, kCandidatesPerArticle> candidates;
    std::optional<double> actuality_preferred;
    std::optional<std::array<double, kCandidatesPerArticle>> actuality_candidates;

    bool operator==(const ArticleRecord&) const = default;
};

enum class Bucket { low, medium, high };

/// "B_L", "B_M", "B_H"
std::string_view to_string(Bucket bucket);
Bucket parse_bucket(std::string_view name);

/// rank 2 -> B_L, rank 1 -> B_M, rank 0 -> B_H
Bucket bucket_for_rank(int rank);

struct PreferencePair {
    std::string id;
    std::string article_id;
    std::string model_id;
    int candidate_index = 0;
    std::string prompt;
    std::string preferred;
    std::string rejected;
    double s_w = 0.0;
    double s_l = 0.0;
    double fs = 0.0;
    int rank = 0;
    Bucket bucket = Bucket::low;

    bool operator==(const PreferencePair&) const = default;
};

enum class CurriculumOrder { algorithm1, section4 };

std::string_view to_string(CurriculumOrder order);
CurriculumOrder parse_order(std::string_view name);

/// algorithm1: B_L, B_M, B_H. section4: B_H, B_M, B_L.
std::array<Bucket, 3> stage_buckets(CurriculumOrder order);

struct Stage {
    Bucket bucket = Bucket::low;
    std::vector<PreferencePair> pairs;
};

struct CurriculumDataset {
    std::vector<Stage> stages;
    CurriculumOrder order = CurriculumOrder::algorithm1;
};

// Line-delimited JSON. One ArticleRecord per line:
//   {"id", "label": "fake"|"real", "news_text", "ground_truth_explanation",
//    "candidates": [{"model_id", "text"} x3],
//    "actuality_preferred"?: number, "actuality_candidates"?: [number x3]}

nlohmann::ordered_json to_json(const ArticleRecord& record);
/// Validates field types and invariants. Throws SchemaError.
ArticleRecord article_from_json(const nlohmann::ordered_json& j);

nlohmann::ordered_json to_json(const PreferencePair& pair);
PreferencePair pair_from_json(const nlohmann::ordered_json& j);

/// Records in input order. Errors name the 1-based line number: malformed
/// JSON, schema violations (candidate count != 3, empty news_text) and
/// duplicate ids.
std::vector<ArticleRecord> parse_articles(std::istream& in);
std::vector<ArticleRecord> load_articles(const std::filesystem::path& path);

void write_articles(std::ostream& out, std::span<const ArticleRecord> records);
std::string articles_to_string(std::span<const ArticleRecord> records);

/// Candidate metrics against the ground-truth explanation.
struct CandidateScores {
    double semantic = 0.0;
    double rouge_l = 0.0;
    double meteor = 0.0;
    double fs = 0.0;
};

CandidateScores score_candidate(const std::string& candidate, const std::string& ground_truth,
                                const textmetrics::SemanticScorer& scorer);

/// Sets rank and bucket from fs. Rank 0 is the highest fs; ties go to the
/// lexicographically smaller model_id.
void assign_ranks(std::span<PreferencePair, 3> pairs);

/// Three pairs in candidate order, each carrying fs, rank and bucket.
/// Actuality fields are left at zero.
std::array<PreferencePair, 3> score_and_rank(const ArticleRecord& record,
                                             const textmetrics::SemanticScorer& scorer =
                                                 textmetrics::default_semantic_scorer());

class ActualityProvider {
public:
    virtual ~ActualityProvider() = default;
    virtual double preferred(const ArticleRecord& record) const = 0;
    virtual double candidate(const ArticleRecord& record, std::size_t index) const = 0;
};

/// Scores carried on the records themselves. Missing scores are an error.
class EmbeddedActuality final : public ActualityProvider {
public:
    double preferred(const ArticleRecord& record) const override;
    double candidate(const ArticleRecord& record, std::size_t index) const override;
};

/// Text file with lines `<record_id> <pref|cand0|cand1|cand2> <score>`.
/// Blank lines and lines starting with '#' are ignored. Scores outside
/// [0, 1] and malformed lines are rejected at load time; lookups for absent
/// entries throw.
class FileActuality final : public ActualityProvider {
public:
    explicit FileActuality(const std::filesystem::path& path);
    explicit FileActuality(std::istream& in, std::string source_name = "<stream>");

    double preferred(const ArticleRecord& record) const override;
    double candidate(const ArticleRecord& record, std::size_t index) const override;

private:
    void parse(std::istream& in);
    double lookup(const std::string& id, const std::string& role) const;

    std::string source_;
    std::map<std::pair<std::string, std::string>, double> scores_;
};

class ConstantActuality final : public ActualityProvider {
public:
    explicit ConstantActuality(double value);
    double preferred(const ArticleRecord&) const override { return value_; }
    double candidate(const ArticleRecord&, std::size_t) const override { return value_; }

private:
    double value_;
};

/// Sets s_w and s_l (clamped to [0, 1]) on pairs generated from `record`.
void attach_actuality(std::span<PreferencePair> pairs, const ArticleRecord& record,
                      const ActualityProvider& provider);

/// Per-article rank bucketing, stages in `order`, pairs inside a stage
/// sorted by (article_id, id). Throws when an article does not contribute
/// exactly ranks {0, 1, 2}.
CurriculumDataset bucketize(std::span<const PreferencePair> pairs,
                            CurriculumOrder order = CurriculumOrder::algorithm1);

struct SplitFractions {
    double train = 0.75;
    double val = 0.05;
    double test = 0.20;

    /// Throws SchemaError unless all are >= 0 and they sum to 1 within 1e-9.
    void validate() const;
};

struct CorpusSplit {
    std::vector<ArticleRecord> train;
    std::vector<ArticleRecord> val;
    std::vector<ArticleRecord> test;
};

/// Article-level split. Records are ordered by id, shuffled with `seed`,
/// then cut into train/val/test by rounded counts. Each part is returned
/// sorted by id.
CorpusSplit split_articles(std::span<const ArticleRecord> records, const SplitFractions& fractions,
                           std::uint64_t seed);

/// 64-bit FNV-1a of the bytes, rendered as "fnv1a64:<16 hex digits>".
std::string checksum(std::string_view bytes);

struct EmitInfo {
    std::string corpus_checksum;
    SplitFractions split;
    std::size_t train_articles = 0;
    std::size_t val_articles = 0;
    std::size_t test_articles = 0;
    std::uint64_t seed = 0;
};

/// Writes `stage_<i>_<bucket>.jsonl` per stage and `manifest.json`:
///   {"stages": [{"bucket", "file", "count"}...], "counts": {...},
///    "checksum": ..., "split": {"train","val","test"}, "order": ..., "seed": ...}
/// Returns the manifest path.
std::filesystem::path emit_curriculum(const CurriculumDataset& dataset, const std::filesystem::path& out_dir,
                                      const EmitInfo& info);

/// Reads stage files back in manifest order.
CurriculumDataset load_curriculum(const std::filesystem::path& manifest_path);

std::vector<PreferencePair> read_pairs(const std::filesystem::path& path);

} // namespace hindpo::dataforge
