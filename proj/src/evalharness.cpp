#include "hindpo/evalharness.hpp"

#include "hindpo/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace hindpo::evalharness {

std::vector<std::string> generate(const policy::PolicyParameters& policy, std::span<const std::string> prompts,
                                  const GenerateOptions& options) {
    std::vector<std::string> out;
    out.reserve(prompts.size());
    Rng rng(options.seed);
    for (const auto& prompt : prompts) {
        const auto ids = policy.vocab().encode(textmetrics::tokenize(prompt));
        const auto response = options.temperature > 0.0
                                  ? policy::sample_response(policy, ids, options.temperature, options.max_len, rng)
                                  : policy::greedy_response(policy, ids, options.max_len);
        out.push_back(textmetrics::join(policy.vocab().decode(response)));
    }
    return out;
}

MetricReport evaluate(std::span<const std::string> generated, std::span<const std::string> references,
                      const std::string& config_name, const textmetrics::SemanticScorer& scorer) {
    if (generated.size() != references.size()) {
        throw Error("evaluate: " + std::to_string(generated.size()) + " generations for " +
                    std::to_string(references.size()) + " references");
    }
    MetricReport report;
    report.config_name = config_name;
    report.pairs = generated.size();
    if (generated.empty()) return report;
    for (std::size_t i = 0; i < generated.size(); ++i) {
        const auto cand = textmetrics::tokenize(generated[i]);
        const auto ref = textmetrics::tokenize(references[i]);
        report.r1 += textmetrics::rouge_n(cand, ref, 1).f1;
        report.r2 += textmetrics::rouge_n(cand, ref, 2).f1;
        report.rl += textmetrics::rouge_l(cand, ref).f1;
        report.meteor += textmetrics::meteor(cand, ref);
        report.semantic += textmetrics::semantic_score(generated[i], references[i], scorer);
    }
    const auto n = static_cast<double>(generated.size());
    report.r1 /= n;
    report.r2 /= n;
    report.rl /= n;
    report.meteor /= n;
    report.semantic /= n;
    return report;
}

namespace {

constexpr std::array<std::string_view, 5> kCanonicalRows = {"base", "dpo", "dpo_act", "dpo_fin", "hin_dpo"};
constexpr std::array<std::string_view, 5> kColumns = {"R-1", "R-2", "R-L", "METEOR", "Semantic"};
constexpr int kCellWidth = 10;

std::array<double, 5> values_of(const MetricReport& r) { return {r.r1, r.r2, r.rl, r.meteor, r.semantic}; }

// Percent value rounded to the two rendered decimals.
double rendered(double v) { return std::round(v * 10000.0) / 100.0; }

std::string pad_right(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

std::string pad_left(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

} // namespace

std::vector<MetricReport> order_reports(std::span<const MetricReport> reports) {
    std::vector<MetricReport> ordered;
    for (auto name : kCanonicalRows) {
        for (const auto& r : reports) {
            if (r.config_name == name) ordered.push_back(r);
        }
    }
    for (const auto& r : reports) {
        if (std::find(kCanonicalRows.begin(), kCanonicalRows.end(), r.config_name) == kCanonicalRows.end()) {
            ordered.push_back(r);
        }
    }
    return ordered;
}

RenderedReport report_table(std::span<const MetricReport> reports) {
    if (reports.empty()) throw Error("report_table: no reports");
    const auto rows = order_reports(reports);

    std::array<double, 5> best;
    best.fill(-1.0);
    for (const auto& r : rows) {
        const auto v = values_of(r);
        for (std::size_t c = 0; c < v.size(); ++c) best[c] = std::max(best[c], rendered(v[c]));
    }

    std::size_t name_width = 8;
    for (const auto& r : rows) name_width = std::max(name_width, r.config_name.size() + 2);

    std::ostringstream table;
    table << pad_right("Config", name_width);
    for (auto col : kColumns) table << pad_left(std::string(col), kCellWidth);
    table << '\n';

    RenderedReport out;
    out.data = nlohmann::ordered_json::object();
    for (const auto& r : rows) {
        table << pad_right(r.config_name, name_width);
        const auto v = values_of(r);
        for (std::size_t c = 0; c < v.size(); ++c) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.2f%s", rendered(v[c]), rendered(v[c]) == best[c] ? "*" : " ");
            table << pad_left(buf, kCellWidth);
        }
        table << '\n';
        out.data[r.config_name] = {{"r1", r.r1}, {"r2", r.r2}, {"rl", r.rl}, {"meteor", r.meteor},
                                   {"semantic", r.semantic}, {"pairs", r.pairs}};
    }
    out.table = table.str();
    return out;
}

std::vector<MetricReport> parse_table(std::string_view text) {
    std::vector<MetricReport> reports;
    std::istringstream in{std::string(text)};
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(' ') == std::string::npos) continue;
        if (header) {
            header = false;
            continue;
        }
        std::istringstream fields(line);
        MetricReport r;
        std::array<double, 5> v{};
        if (!(fields >> r.config_name)) throw SchemaError("report row without a name: " + line);
        for (double& x : v) {
            std::string cell;
            if (!(fields >> cell)) throw SchemaError("report row has fewer than 5 values: " + line);
            if (!cell.empty() && cell.back() == '*') cell.pop_back();
            try {
                x = std::stod(cell) / 100.0;
            } catch (const std::exception&) {
                throw SchemaError("bad report cell '" + cell + "'");
            }
        }
        r.r1 = v[0];
        r.r2 = v[1];
        r.rl = v[2];
        r.meteor = v[3];
        r.semantic = v[4];
        reports.push_back(std::move(r));
    }
    return reports;
}

} // namespace hindpo::evalharness
