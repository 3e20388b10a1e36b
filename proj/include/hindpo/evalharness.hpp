#pragma once

#include "hindpo/policy.hpp"
#include "hindpo/textmetrics.hpp"

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

namespace hindpo::evalharness {

struct GenerateOptions {
    std::size_t max_len = 48;
    /// <= 0 selects greedy decoding.
    double temperature = 0.0;
    std::uint64_t seed = 0;
};

/// Decodes one continuation per prompt and renders it as space-joined
/// tokens. Throws VocabularyError if a prompt token is unknown.
std::vector<std::string> generate(const policy::PolicyParameters& policy, std::span<const std::string> prompts,
                                  const GenerateOptions& options = {});

struct MetricReport {
    std::string config_name;
    double r1 = 0.0;
    double r2 = 0.0;
    double rl = 0.0;
    double meteor = 0.0;
    double semantic = 0.0;
    std::size_t pairs = 0;
};

/// Corpus scores are the arithmetic mean of per-pair F1 / METEOR / semantic
/// scores. Throws hindpo::Error on a length mismatch.
MetricReport evaluate(std::span<const std::string> generated, std::span<const std::string> references,
                      const std::string& config_name = "",
                      const textmetrics::SemanticScorer& scorer = textmetrics::default_semantic_scorer());

/// Canonical row order: base, dpo, dpo_act, dpo_fin, hin_dpo. Unknown
/// names follow in input order.
std::vector<MetricReport> order_reports(std::span<const MetricReport> reports);

struct RenderedReport {
    std::string table;
    nlohmann::ordered_json data;
};

/// Aligned text table, values scaled by 100 with two decimals; the best
/// value in each column carries a trailing '*'. Also returns
/// {config: {r1, r2, rl, meteor, semantic}} with unscaled values.
RenderedReport report_table(std::span<const MetricReport> reports);

/// Parses the text produced by report_table. Values come back unscaled and
/// rounded to the rendered precision.
std::vector<MetricReport> parse_table(std::string_view table);

} // namespace hindpo::evalharness
