#include "hindpo/dataforge.hpp"

#include "hindpo/error.hpp"
#include "hindpo/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace hindpo::dataforge {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Label label) { return label == Label::fake ? "fake" : "real"; }

std::string_view to_string(Bucket bucket) {
    switch (bucket) {
    case Bucket::low: return "B_L";
    case Bucket::medium: return "B_M";
    case Bucket::high: return "B_H";
    }
    return "?";
}

Bucket parse_bucket(std::string_view name) {
    for (Bucket b : {Bucket::low, Bucket::medium, Bucket::high}) {
        if (to_string(b) == name) return b;
    }
    throw SchemaError("unknown bucket '" + std::string(name) + "'");
}

Bucket bucket_for_rank(int rank) {
    switch (rank) {
    case 0: return Bucket::high;
    case 1: return Bucket::medium;
    case 2: return Bucket::low;
    }
    throw Error("rank out of range: " + std::to_string(rank));
}

std::string_view to_string(CurriculumOrder order) {
    return order == CurriculumOrder::algorithm1 ? "algorithm1" : "section4";
}

CurriculumOrder parse_order(std::string_view name) {
    if (name == "algorithm1") return CurriculumOrder::algorithm1;
    if (name == "section4") return CurriculumOrder::section4;
    throw SchemaError("unknown curriculum order '" + std::string(name) + "' (expected algorithm1|section4)");
}

std::array<Bucket, 3> stage_buckets(CurriculumOrder order) {
    if (order == CurriculumOrder::algorithm1) return {Bucket::low, Bucket::medium, Bucket::high};
    return {Bucket::high, Bucket::medium, Bucket::low};
}

namespace {

const std::set<std::string> kArticleKeys = {"id", "label", "news_text", "ground_truth_explanation", "candidates",
                                            "actuality_preferred", "actuality_candidates"};

std::string require_string(const ojson& j, const char* key) {
    if (!j.contains(key)) throw SchemaError(std::string("missing field '") + key + "'");
    const auto& v = j.at(key);
    if (!v.is_string()) throw SchemaError(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

double require_unit(const ojson& v, const std::string& what) {
    if (!v.is_number()) throw SchemaError(what + " must be a number");
    const double x = v.get<double>();
    if (!std::isfinite(x) || x < 0.0 || x > 1.0) throw SchemaError(what + " must lie in [0, 1]");
    return x;
}

} // namespace

ojson to_json(const ArticleRecord& record) {
    ojson j;
    j["id"] = record.id;
    j["label"] = to_string(record.label);
    j["news_text"] = record.news_text;
    j["ground_truth_explanation"] = record.ground_truth_explanation;
    ojson cands = ojson::array();
    for (const auto& c : record.candidates) cands.push_back({{"model_id", c.model_id}, {"text", c.text}});
    j["candidates"] = std::move(cands);
    if (record.actuality_preferred) j["actuality_preferred"] = *record.actuality_preferred;
    if (record.actuality_candidates) j["actuality_candidates"] = *record.actuality_candidates;
    return j;
}

ArticleRecord article_from_json(const ojson& j) {
    if (!j.is_object()) throw SchemaError("record must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!kArticleKeys.contains(key)) throw SchemaError("unknown field '" + key + "'");
    }
    ArticleRecord r;
    r.id = require_string(j, "id");
    if (r.id.empty()) throw SchemaError("id must be non-empty");
    const std::string label = require_string(j, "label");
    if (label == "fake") {
        r.label = Label::fake;
    } else if (label == "real") {
        r.label = Label::real;
    } else {
        throw SchemaError("label must be 'fake' or 'real', got '" + label + "'");
    }
    r.news_text = require_string(j, "news_text");
    if (r.news_text.empty()) throw SchemaError("news_text must be non-empty");
    r.ground_truth_explanation = require_string(j, "ground_truth_explanation");

    if (!j.contains("candidates") || !j.at("candidates").is_array()) {
        throw SchemaError("field 'candidates' must be an array");
    }
    const auto& cands = j.at("candidates");
    if (cands.size() != kCandidatesPerArticle) {
        throw SchemaError("expected exactly 3 candidates, got " + std::to_string(cands.size()));
    }
    std::set<std::string> model_ids;
    for (std::size_t i = 0; i < kCandidatesPerArticle; ++i) {
        const auto& c = cands[i];
        if (!c.is_object()) throw SchemaError("candidate must be an object");
        r.candidates[i].model_id = require_string(c, "model_id");
        r.candidates[i].text = require_string(c, "text");
        if (!model_ids.insert(r.candidates[i].model_id).second) {
            throw SchemaError("duplicate candidate model_id '" + r.candidates[i].model_id + "'");
        }
    }

    if (j.contains("actuality_preferred")) {
        r.actuality_preferred = require_unit(j.at("actuality_preferred"), "actuality_preferred");
    }
    if (j.contains("actuality_candidates")) {
        const auto& a = j.at("actuality_candidates");
        if (!a.is_array() || a.size() != kCandidatesPerArticle) {
            throw SchemaError("actuality_candidates must be an array of 3 numbers");
        }
        std::array<double, kCandidatesPerArticle> values{};
        for (std::size_t i = 0; i < kCandidatesPerArticle; ++i) values[i] = require_unit(a[i], "actuality_candidates");
        r.actuality_candidates = values;
    }
    return r;
}

ojson to_json(const PreferencePair& pair) {
    ojson j;
    j["id"] = pair.id;
    j["article_id"] = pair.article_id;
    j["model_id"] = pair.model_id;
    j["candidate_index"] = pair.candidate_index;
    j["prompt"] = pair.prompt;
    j["preferred"] = pair.preferred;
    j["rejected"] = pair.rejected;
    j["s_w"] = pair.s_w;
    j["s_l"] = pair.s_l;
    j["fs"] = pair.fs;
    j["rank"] = pair.rank;
    j["bucket"] = to_string(pair.bucket);
    return j;
}

PreferencePair pair_from_json(const ojson& j) {
    try {
        PreferencePair p;
        p.id = j.at("id").get<std::string>();
        p.article_id = j.at("article_id").get<std::string>();
        p.model_id = j.at("model_id").get<std::string>();
        p.candidate_index = j.at("candidate_index").get<int>();
        p.prompt = j.at("prompt").get<std::string>();
        p.preferred = j.at("preferred").get<std::string>();
        p.rejected = j.at("rejected").get<std::string>();
        p.s_w = require_unit(j.at("s_w"), "s_w");
        p.s_l = require_unit(j.at("s_l"), "s_l");
        p.fs = j.at("fs").get<double>();
        p.rank = j.at("rank").get<int>();
        p.bucket = parse_bucket(j.at("bucket").get<std::string>());
        if (p.rank < 0 || p.rank > 2) throw SchemaError("rank must be 0, 1 or 2");
        if (p.bucket != bucket_for_rank(p.rank)) throw SchemaError("bucket does not match rank");
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("preference pair: ") + e.what());
    }
}

std::vector<ArticleRecord> parse_articles(std::istream& in) {
    std::vector<ArticleRecord> records;
    std::set<std::string> ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        ojson j;
        try {
            j = ojson::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw SchemaError(where + "malformed JSON: " + e.what());
        }
        ArticleRecord r;
        try {
            r = article_from_json(j);
        } catch (const SchemaError& e) {
            throw SchemaError(where + e.what());
        }
        if (!ids.insert(r.id).second) throw SchemaError(where + "duplicate id '" + r.id + "'");
        records.push_back(std::move(r));
    }
    return records;
}

std::vector<ArticleRecord> load_articles(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open corpus " + path.string());
    try {
        return parse_articles(in);
    } catch (const SchemaError& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

void write_articles(std::ostream& out, std::span<const ArticleRecord> records) {
    for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::string articles_to_string(std::span<const ArticleRecord> records) {
    std::ostringstream out;
    write_articles(out, records);
    return out.str();
}

CandidateScores score_candidate(const std::string& candidate, const std::string& ground_truth,
                                const textmetrics::SemanticScorer& scorer) {
    const auto cand = textmetrics::tokenize(candidate);
    const auto ref = textmetrics::tokenize(ground_truth);
    CandidateScores s;
    s.semantic = textmetrics::semantic_score(candidate, ground_truth, scorer);
    s.rouge_l = textmetrics::rouge_l(cand, ref).f1;
    s.meteor = textmetrics::meteor(cand, ref);
    s.fs = textmetrics::final_score(s.semantic, s.rouge_l, s.meteor);
    return s;
}

std::array<PreferencePair, 3> score_and_rank(const ArticleRecord& record, const textmetrics::SemanticScorer& scorer) {
    std::array<PreferencePair, 3> pairs;
    for (std::size_t i = 0; i < kCandidatesPerArticle; ++i) {
        const auto& c = record.candidates[i];
        auto& p = pairs[i];
        p.id = record.id + ":" + c.model_id;
        p.article_id = record.id;
        p.model_id = c.model_id;
        p.candidate_index = static_cast<int>(i);
        p.prompt = record.news_text;
        p.preferred = record.ground_truth_explanation;
        p.rejected = c.text;
        p.fs = score_candidate(c.text, record.ground_truth_explanation, scorer).fs;
    }
    assign_ranks(pairs);
    return pairs;
}

void assign_ranks(std::span<PreferencePair, 3> pairs) {
    std::array<std::size_t, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (pairs[a].fs != pairs[b].fs) return pairs[a].fs > pairs[b].fs;
        return pairs[a].model_id < pairs[b].model_id;
    });
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        auto& p = pairs[order[pos]];
        p.rank = static_cast<int>(pos);
        p.bucket = bucket_for_rank(p.rank);
    }
}

double EmbeddedActuality::preferred(const ArticleRecord& record) const {
    if (!record.actuality_preferred) throw ProviderError("record '" + record.id + "' has no actuality_preferred");
    return *record.actuality_preferred;
}

double EmbeddedActuality::candidate(const ArticleRecord& record, std::size_t index) const {
    if (!record.actuality_candidates) throw ProviderError("record '" + record.id + "' has no actuality_candidates");
    return record.actuality_candidates->at(index);
}

FileActuality::FileActuality(const std::filesystem::path& path) : source_(path.string()) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open actuality file " + source_);
    parse(in);
}

FileActuality::FileActuality(std::istream& in, std::string source_name) : source_(std::move(source_name)) {
    parse(in);
}

void FileActuality::parse(std::istream& in) {
    static const std::set<std::string> roles = {"pref", "cand0", "cand1", "cand2"};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const std::string where = source_ + ":" + std::to_string(line_no) + ": ";
        std::istringstream fields(line);
        std::string id, role, value, extra;
        if (!(fields >> id >> role >> value) || (fields >> extra)) {
            throw SchemaError(where + "expected '<record_id> <role> <score>'");
        }
        if (!roles.contains(role)) throw SchemaError(where + "unknown role '" + role + "'");
        double score = 0.0;
        std::size_t used = 0;
        try {
            score = std::stod(value, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != value.size()) throw SchemaError(where + "score is not a number: '" + value + "'");
        if (!std::isfinite(score) || score < 0.0 || score > 1.0) {
            throw SchemaError(where + "score out of range [0, 1]: " + value);
        }
        if (!scores_.emplace(std::make_pair(id, role), score).second) {
            throw SchemaError(where + "duplicate entry for " + id + " " + role);
        }
    }
}

double FileActuality::lookup(const std::string& id, const std::string& role) const {
    auto it = scores_.find({id, role});
    if (it == scores_.end()) throw ProviderError(source_ + ": no actuality score for " + id + " " + role);
    return it->second;
}

double FileActuality::preferred(const ArticleRecord& record) const { return lookup(record.id, "pref"); }

double FileActuality::candidate(const ArticleRecord& record, std::size_t index) const {
    return lookup(record.id, "cand" + std::to_string(index));
}

ConstantActuality::ConstantActuality(double value) : value_(value) {
    if (!std::isfinite(value) || value < 0.0 || value > 1.0) throw SchemaError("constant actuality must lie in [0, 1]");
}

void attach_actuality(std::span<PreferencePair> pairs, const ArticleRecord& record,
                      const ActualityProvider& provider) {
    const double s_w = std::clamp(provider.preferred(record), 0.0, 1.0);
    for (auto& p : pairs) {
        if (p.article_id != record.id) throw Error("pair " + p.id + " does not belong to record " + record.id);
        p.s_w = s_w;
        p.s_l = std::clamp(provider.candidate(record, static_cast<std::size_t>(p.candidate_index)), 0.0, 1.0);
    }
}

CurriculumDataset bucketize(std::span<const PreferencePair> pairs, CurriculumOrder order) {
    std::map<std::string, std::array<int, 3>> ranks_seen;
    for (const auto& p : pairs) {
        if (p.rank < 0 || p.rank > 2) throw Error("pair " + p.id + " has rank " + std::to_string(p.rank));
        ++ranks_seen[p.article_id][static_cast<std::size_t>(p.rank)];
    }
    for (const auto& [article, seen] : ranks_seen) {
        for (int r = 0; r < 3; ++r) {
            if (seen[static_cast<std::size_t>(r)] != 1) {
                throw Error("article '" + article + "' must contribute exactly one pair of rank " + std::to_string(r) +
                            ", found " + std::to_string(seen[static_cast<std::size_t>(r)]));
            }
        }
    }

    CurriculumDataset ds;
    ds.order = order;
    for (Bucket b : stage_buckets(order)) {
        Stage stage;
        stage.bucket = b;
        for (const auto& p : pairs) {
            if (bucket_for_rank(p.rank) == b) {
                PreferencePair copy = p;
                copy.bucket = b;
                stage.pairs.push_back(std::move(copy));
            }
        }
        std::sort(stage.pairs.begin(), stage.pairs.end(), [](const PreferencePair& a, const PreferencePair& b) {
            return std::tie(a.article_id, a.id) < std::tie(b.article_id, b.id);
        });
        ds.stages.push_back(std::move(stage));
    }
    return ds;
}

void SplitFractions::validate() const {
    if (train < 0.0 || val < 0.0 || test < 0.0) throw SchemaError("split fractions must be non-negative");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw SchemaError("split fractions must sum to 1");
}

CorpusSplit split_articles(std::span<const ArticleRecord> records, const SplitFractions& fractions,
                           std::uint64_t seed) {
    fractions.validate();
    std::vector<const ArticleRecord*> order;
    for (const auto& r : records) order.push_back(&r);
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id < b->id; });
    Rng rng(seed);
    rng.shuffle(order);

    const std::size_t n = order.size();
    const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(fractions.train * n)));
    const auto n_val = std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(fractions.val * n)));

    CorpusSplit split;
    for (std::size_t i = 0; i < n; ++i) {
        auto& part = i < n_train ? split.train : (i < n_train + n_val ? split.val : split.test);
        part.push_back(*order[i]);
    }
    for (auto* part : {&split.train, &split.val, &split.test}) {
        std::sort(part->begin(), part->end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    }
    return split;
}

std::string checksum(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + path.string());
}

} // namespace

std::filesystem::path emit_curriculum(const CurriculumDataset& dataset, const std::filesystem::path& out_dir,
                                      const EmitInfo& info) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw Error("cannot create " + out_dir.string() + ": " + ec.message());

    ojson stages = ojson::array();
    std::size_t total = 0;
    for (std::size_t i = 0; i < dataset.stages.size(); ++i) {
        const auto& stage = dataset.stages[i];
        const std::string file = "stage_" + std::to_string(i) + "_" + std::string(to_string(stage.bucket)) + ".jsonl";
        std::string body;
        for (const auto& p : stage.pairs) body += to_json(p).dump() + "\n";
        write_file(out_dir / file, body);
        stages.push_back({{"bucket", to_string(stage.bucket)}, {"file", file}, {"count", stage.pairs.size()}});
        total += stage.pairs.size();
    }

    ojson manifest;
    manifest["format"] = "hindpo-curriculum";
    manifest["version"] = 1;
    manifest["order"] = to_string(dataset.order);
    manifest["stages"] = std::move(stages);
    manifest["counts"] = {{"pairs", total},
                          {"train_articles", info.train_articles},
                          {"val_articles", info.val_articles},
                          {"test_articles", info.test_articles}};
    manifest["checksum"] = info.corpus_checksum;
    manifest["split"] = {{"train", info.split.train}, {"val", info.split.val}, {"test", info.split.test}};
    manifest["seed"] = info.seed;

    const auto path = out_dir / "manifest.json";
    write_file(path, manifest.dump(2) + "\n");
    return path;
}

std::vector<PreferencePair> read_pairs(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<PreferencePair> pairs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            pairs.push_back(pair_from_json(ojson::parse(line)));
        } catch (const std::exception& e) {
            throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return pairs;
}

CurriculumDataset load_curriculum(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path, std::ios::binary);
    if (!in) throw Error("cannot open manifest " + manifest_path.string());
    ojson manifest;
    try {
        manifest = ojson::parse(in);
        CurriculumDataset ds;
        ds.order = parse_order(manifest.at("order").get<std::string>());
        for (const auto& s : manifest.at("stages")) {
            Stage stage;
            stage.bucket = parse_bucket(s.at("bucket").get<std::string>());
            stage.pairs = read_pairs(manifest_path.parent_path() / s.at("file").get<std::string>());
            if (stage.pairs.size() != s.at("count").get<std::size_t>()) {
                throw SchemaError("stage " + s.at("file").get<std::string>() + " count does not match manifest");
            }
            ds.stages.push_back(std::move(stage));
        }
        return ds;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(manifest_path.string() + ": " + e.what());
    }
}

} // namespace hindpo::dataforge
