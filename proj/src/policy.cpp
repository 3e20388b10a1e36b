#include "hindpo/policy.hpp"

#include "hindpo/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hindpo::policy {

using json = nlohmann::json;

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) {
    tokens_.emplace_back(kBos);
    tokens_.emplace_back(kEos);
    index_.emplace(std::string(kBos), kBosId);
    index_.emplace(std::string(kEos), kEosId);
    for (const auto& t : tokens) {
        if (t.empty()) throw Error("vocabulary: empty token");
        if (index_.contains(t)) {
            if (t == kBos || t == kEos) throw Error("vocabulary: token collides with reserved marker " + t);
            continue;
        }
        index_.emplace(t, static_cast<TokenId>(tokens_.size()));
        tokens_.push_back(t);
    }
    if (tokens_.size() < 3) throw Error("vocabulary: need at least one token besides BOS/EOS");
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

TokenId Vocabulary::id(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) throw VocabularyError("token not in vocabulary: '" + std::string(token) + "'");
    return it->second;
}

TokenIds Vocabulary::encode(const textmetrics::TokenSequence& tokens) const {
    TokenIds ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

TokenIds Vocabulary::encode_response(const textmetrics::TokenSequence& tokens) const {
    TokenIds ids = encode(tokens);
    ids.push_back(kEosId);
    return ids;
}

textmetrics::TokenSequence Vocabulary::decode(std::span<const TokenId> ids) const {
    textmetrics::TokenSequence out;
    for (TokenId id : ids) {
        if (id == kBosId || id == kEosId) continue;
        out.push_back(token(id));
    }
    return out;
}

std::vector<TokenId> GradientTable::touched_rows() const {
    std::vector<TokenId> rows;
    for (std::size_t r = 0; r < n_; ++r) {
        if (touched_[r]) rows.push_back(static_cast<TokenId>(r));
    }
    return rows;
}

void GradientTable::scale(double factor) {
    for (double& v : values_) v *= factor;
}

void GradientTable::add(const GradientTable& other, double factor) {
    if (other.n_ != n_) throw Error("gradient shape mismatch");
    for (std::size_t r = 0; r < n_; ++r) {
        if (!other.touched_[r]) continue;
        touched_[r] = true;
        for (std::size_t c = 0; c < n_; ++c) values_[r * n_ + c] += factor * other.values_[r * n_ + c];
    }
}

PolicyParameters::PolicyParameters(Vocabulary vocab)
    : vocab_(std::move(vocab)), logits_(vocab_.size() * vocab_.size(), 0.0) {}

PolicyParameters::PolicyParameters(Vocabulary vocab, std::vector<double> logits)
    : vocab_(std::move(vocab)), logits_(std::move(logits)) {
    if (logits_.size() != vocab_.size() * vocab_.size()) {
        throw Error("policy: logit table has " + std::to_string(logits_.size()) + " entries, expected " +
                    std::to_string(vocab_.size() * vocab_.size()));
    }
    if (!all_finite()) throw Error("policy: non-finite logit");
}

std::vector<double> PolicyParameters::softmax_row(TokenId prev, double temperature) const {
    const auto r = row(prev);
    std::vector<double> p(r.size());
    const double top = *std::max_element(r.begin(), r.end());
    double total = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        p[i] = std::exp((r[i] - top) / temperature);
        total += p[i];
    }
    for (double& x : p) x /= total;
    return p;
}

std::vector<double> PolicyParameters::log_softmax_row(TokenId prev, double temperature) const {
    const auto r = row(prev);
    std::vector<double> lp(r.size());
    const double top = *std::max_element(r.begin(), r.end());
    double total = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        lp[i] = (r[i] - top) / temperature;
        total += std::exp(lp[i]);
    }
    const double log_total = std::log(total);
    for (double& x : lp) x -= log_total;
    return lp;
}

void PolicyParameters::apply_gradient(const GradientTable& gradient, double step) {
    if (gradient.dim() != dim()) throw Error("gradient shape mismatch");
    for (TokenId r : gradient.touched_rows()) {
        const auto g = gradient.row(r);
        for (std::size_t c = 0; c < dim(); ++c) logits_[r * dim() + c] -= step * g[c];
    }
}

bool PolicyParameters::all_finite() const {
    return std::all_of(logits_.begin(), logits_.end(), [](double x) { return std::isfinite(x); });
}

PolicyParameters new_policy(Vocabulary vocab, std::optional<NoiseInit> noise) {
    PolicyParameters policy(std::move(vocab));
    if (noise) {
        Rng rng(noise->seed);
        for (double& x : policy.logits()) x = noise->stddev * rng.normal();
    }
    return policy;
}

namespace {

void check_ids(const PolicyParameters& policy, std::span<const TokenId> ids) {
    for (TokenId id : ids) {
        if (id >= policy.dim()) throw VocabularyError("token id " + std::to_string(id) + " out of range");
    }
}

void check_response(const PolicyParameters& policy, std::span<const TokenId> prompt,
                    std::span<const TokenId> response) {
    check_ids(policy, prompt);
    check_ids(policy, response);
    if (response.empty() || response.back() != Vocabulary::kEosId) {
        throw Error("response must end with EOS");
    }
}

TokenId context_of(std::span<const TokenId> prompt) {
    return prompt.empty() ? Vocabulary::kBosId : prompt.back();
}

template <class Real>
Real log_prob_as(const PolicyParameters& policy, std::span<const TokenId> prompt, std::span<const TokenId> response,
                 Real temperature) {
    check_response(policy, prompt, response);
    TokenId prev = context_of(prompt);
    Real total = 0;
    for (TokenId next : response) {
        const auto r = policy.row(prev);
        const Real top = *std::max_element(r.begin(), r.end());
        Real z = 0;
        for (double x : r) z += std::exp((x - top) / temperature);
        total += (r[next] - top) / temperature - std::log(z);
        prev = next;
    }
    return total;
}

} // namespace

double sequence_log_prob(const PolicyParameters& policy, std::span<const TokenId> prompt,
                         std::span<const TokenId> response, double temperature) {
    return log_prob_as<double>(policy, prompt, response, temperature);
}

long double sequence_log_prob_extended(const PolicyParameters& policy, std::span<const TokenId> prompt,
                                       std::span<const TokenId> response) {
    return log_prob_as<long double>(policy, prompt, response, 1.0L);
}

double sequence_log_prob(const PolicyParameters& policy, const textmetrics::TokenSequence& prompt,
                         const textmetrics::TokenSequence& response) {
    const auto& vocab = policy.vocab();
    return sequence_log_prob(policy, vocab.encode(prompt), vocab.encode_response(response));
}

void accumulate_sequence_grad(const PolicyParameters& policy, std::span<const TokenId> prompt,
                              std::span<const TokenId> response, double coefficient, GradientTable& gradient) {
    check_response(policy, prompt, response);
    TokenId prev = context_of(prompt);
    for (TokenId next : response) {
        const auto p = policy.softmax_row(prev);
        auto g = gradient.row(prev);
        for (std::size_t c = 0; c < p.size(); ++c) g[c] -= coefficient * p[c];
        g[next] += coefficient;
        prev = next;
    }
}

GradientTable grad_sequence_log_prob(const PolicyParameters& policy, std::span<const TokenId> prompt,
                                     std::span<const TokenId> response) {
    GradientTable g(policy.dim());
    accumulate_sequence_grad(policy, prompt, response, 1.0, g);
    return g;
}

TokenIds sample_response(const PolicyParameters& policy, std::span<const TokenId> prompt, double temperature,
                         std::size_t max_len, Rng& rng) {
    if (!(temperature > 0.0)) throw Error("sampling temperature must be > 0");
    if (max_len < 1) throw Error("max_len must be >= 1");
    check_ids(policy, prompt);
    TokenIds out;
    TokenId prev = context_of(prompt);
    while (out.size() < max_len) {
        const auto p = policy.softmax_row(prev, temperature);
        const double u = rng.uniform();
        double acc = 0.0;
        TokenId next = static_cast<TokenId>(p.size() - 1);
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc += p[i];
            if (u < acc) {
                next = static_cast<TokenId>(i);
                break;
            }
        }
        out.push_back(next);
        if (next == Vocabulary::kEosId) break;
        prev = next;
    }
    return out;
}

TokenIds greedy_response(const PolicyParameters& policy, std::span<const TokenId> prompt, std::size_t max_len) {
    if (max_len < 1) throw Error("max_len must be >= 1");
    check_ids(policy, prompt);
    TokenIds out;
    TokenId prev = context_of(prompt);
    while (out.size() < max_len) {
        const auto r = policy.row(prev);
        const auto next = static_cast<TokenId>(std::max_element(r.begin(), r.end()) - r.begin());
        out.push_back(next);
        if (next == Vocabulary::kEosId) break;
        prev = next;
    }
    return out;
}

std::string checkpoint_to_string(const PolicyParameters& policy) {
    json doc;
    doc["format"] = "hindpo-policy";
    doc["version"] = kCheckpointVersion;
    doc["vocab"] = policy.vocab().tokens();
    doc["dim"] = policy.dim();
    doc["logits"] = std::vector<double>(policy.logits().begin(), policy.logits().end());
    return doc.dump() + "\n";
}

PolicyParameters checkpoint_from_string(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("checkpoint: ") + e.what());
    }
    if (doc.value("format", "") != "hindpo-policy") throw SchemaError("checkpoint: unknown format");
    if (doc.value("version", 0) != kCheckpointVersion) throw SchemaError("checkpoint: unsupported version");
    auto tokens = doc.at("vocab").get<std::vector<std::string>>();
    if (tokens.size() < 2 || tokens[0] != Vocabulary::kBos || tokens[1] != Vocabulary::kEos) {
        throw SchemaError("checkpoint: vocabulary must start with BOS, EOS");
    }
    Vocabulary vocab(std::vector<std::string>(tokens.begin() + 2, tokens.end()));
    if (vocab.size() != tokens.size()) throw SchemaError("checkpoint: duplicate vocabulary entries");
    if (doc.at("dim").get<std::size_t>() != vocab.size()) throw SchemaError("checkpoint: dim mismatch");
    return PolicyParameters(std::move(vocab), doc.at("logits").get<std::vector<double>>());
}

void save_checkpoint(const PolicyParameters& policy, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out << checkpoint_to_string(policy);
    if (!out) throw Error("write failed for " + path.string());
}

PolicyParameters load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read checkpoint " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return checkpoint_from_string(buf.str());
}

} // namespace hindpo::policy
