#include "hindpo/hin_dpo.hpp"

#include "hindpo/error.hpp"
#include "hindpo/welford.hpp"

#include <algorithm>
#include <cmath>

namespace hindpo::dpo {

using policy::PolicyParameters;
using policy::TokenId;

std::string_view to_string(LossMode mode) {
    switch (mode) {
    case LossMode::dpo: return "dpo";
    case LossMode::dpo_act: return "dpo_act";
    case LossMode::dpo_fin: return "dpo_fin";
    case LossMode::hin_dpo: return "hin_dpo";
    }
    return "?";
}

LossMode parse_loss_mode(std::string_view name) {
    for (LossMode m : kAllModes) {
        if (to_string(m) == name) return m;
    }
    throw SchemaError("unknown loss mode '" + std::string(name) + "' (expected dpo|dpo_act|dpo_fin|hin_dpo)");
}

void LossConfig::validate() const {
    if (!(beta > 0.0)) throw SchemaError("loss.beta must be > 0");
    if (!(epsilon > 0.0)) throw SchemaError("loss.epsilon must be > 0");
    if (!(scale_cap > 0.0)) throw SchemaError("loss.scale_cap must be > 0");
    if (finesse_samples < 2) throw SchemaError("loss.finesse_samples must be >= 2");
    if (!(finesse_temperature > 0.0)) throw SchemaError("loss.finesse_temperature must be > 0");
    if (finesse_max_len < 1) throw SchemaError("loss.finesse_max_len must be >= 1");
}

FinesseEstimate finesse_from_variance(double v, const LossConfig& config) {
    FinesseEstimate est;
    est.v = v;
    est.v_effective = config.normalize_variance ? std::clamp(v / 0.25, 0.0, 1.0) : v;
    return est;
}

FinesseEstimate finesse_from_samples(std::span<const double> confidences, const LossConfig& config) {
    return finesse_from_variance(trainer::running_sample_variance(confidences), config);
}

double response_confidence(const PolicyParameters& policy, std::span<const TokenId> prompt,
                           std::span<const TokenId> response, double temperature) {
    if (response.empty()) throw Error("confidence of an empty response");
    TokenId prev = prompt.empty() ? policy::Vocabulary::kBosId : prompt.back();
    double total = 0.0;
    for (TokenId next : response) {
        total += policy.log_softmax_row(prev, temperature)[next];
        prev = next;
    }
    return std::exp(total / static_cast<double>(response.size()));
}

FinesseEstimate compute_finesse(const PolicyParameters& policy, std::span<const TokenId> prompt,
                                const LossConfig& config, Rng& rng) {
    config.validate();
    const TokenId context = prompt.empty() ? policy::Vocabulary::kBosId : prompt.back();
    if (context >= policy.dim()) throw VocabularyError("prompt token out of range");
    const auto first = policy.row(context);
    if (!std::all_of(first.begin(), first.end(), [](double x) { return std::isfinite(x); })) {
        throw Error("finesse: prompt has no valid continuation (non-finite logits)");
    }

    trainer::WelfordState stats;
    for (int k = 0; k < config.finesse_samples; ++k) {
        const auto response =
            policy::sample_response(policy, prompt, config.finesse_temperature, config.finesse_max_len, rng);
        const double conf = response_confidence(policy, prompt, response, config.finesse_temperature);
        if (!std::isfinite(conf)) throw Error("finesse: non-finite response probability");
        stats = trainer::welford_update(stats, conf);
    }
    return finesse_from_variance(trainer::welford_finalize(stats), config);
}

double finesse_scale(double v_effective, const LossConfig& config) {
    return std::min(config.scale_cap, 1.0 / (v_effective + config.epsilon));
}

namespace {

struct Weights {
    double preferred = 1.0;
    double rejected = 1.0;
    double scale = 1.0;
};

Weights weights_for(double s_w, double s_l, double v_effective, const LossConfig& config) {
    Weights w;
    if (uses_actuality(config.mode)) {
        w.preferred = 1.0 + s_w;
        w.rejected = rejected_weight(s_l);
    }
    if (uses_finesse(config.mode)) w.scale = finesse_scale(v_effective, config);
    return w;
}

} // namespace

namespace {

template <class Real>
Real score_as(Real r_w, Real r_l, Real s_w, Real s_l, Real scale, LossMode mode) {
    switch (mode) {
    case LossMode::dpo: return r_w - r_l;
    case LossMode::dpo_act: return (1 + s_w) * r_w - std::max(Real(0.01), s_l) * r_l;
    case LossMode::dpo_fin: return (r_w - r_l) * scale;
    case LossMode::hin_dpo: return ((1 + s_w) * r_w - std::max(Real(0.01), s_l) * r_l) * scale;
    }
    return 0;
}

template <class Real>
Real softplus_as(Real x) {
    return std::max(x, Real(0)) + std::log1p(std::exp(-std::abs(x)));
}

} // namespace

double preference_score(PairLogRatios ratios, double s_w, double s_l, double v_effective, const LossConfig& config) {
    const double scale = uses_finesse(config.mode) ? finesse_scale(v_effective, config) : 1.0;
    return score_as(ratios.r_w, ratios.r_l, s_w, s_l, scale, config.mode);
}

double softplus(double x) { return softplus_as(x); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double hin_dpo_loss(double score, double beta) { return softplus(-beta * score); }

double standard_dpo_loss(PairLogRatios ratios, double beta) { return hin_dpo_loss(ratios.r_w - ratios.r_l, beta); }

PairLogRatios log_ratios(const PolicyParameters& policy, const PolicyParameters& reference, const EncodedPair& pair) {
    return {
        policy::sequence_log_prob(policy, pair.prompt, pair.preferred) -
            policy::sequence_log_prob(reference, pair.prompt, pair.preferred),
        policy::sequence_log_prob(policy, pair.prompt, pair.rejected) -
            policy::sequence_log_prob(reference, pair.prompt, pair.rejected),
    };
}

LossAndGradient loss_gradient(std::span<const EncodedPair> batch, const PolicyParameters& policy,
                              const PolicyParameters& reference, const LossConfig& config) {
    if (batch.empty()) throw Error("loss_gradient: empty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    LossAndGradient out{0.0, policy::GradientTable(policy.dim()), 0.0, 0.0, 0.0};
    for (const auto& pair : batch) {
        const PairLogRatios r = log_ratios(policy, reference, pair);
        const double s = preference_score(r, pair.s_w, pair.s_l, pair.v_effective, config);
        const double u = config.beta * s;
        out.loss += softplus(-u) * inv_n;
        out.mean_margin += config.beta * (r.r_w - r.r_l) * inv_n;
        out.mean_weighted_margin += u * inv_n;
        if (r.r_w > r.r_l) out.accuracy += inv_n;

        // d softplus(-u)/du = -(1 - sigmoid(u)) = -sigmoid(-u)
        const Weights w = weights_for(pair.s_w, pair.s_l, pair.v_effective, config);
        const double c = -sigmoid(-u) * config.beta * w.scale * inv_n;
        policy::accumulate_sequence_grad(policy, pair.prompt, pair.preferred, c * w.preferred, out.gradient);
        policy::accumulate_sequence_grad(policy, pair.prompt, pair.rejected, -c * w.rejected, out.gradient);
    }
    return out;
}

double batch_loss(std::span<const EncodedPair> batch, const PolicyParameters& policy,
                  const PolicyParameters& reference, const LossConfig& config) {
    if (batch.empty()) throw Error("batch_loss: empty batch");
    double total = 0.0;
    for (const auto& pair : batch) {
        const PairLogRatios r = log_ratios(policy, reference, pair);
        total += hin_dpo_loss(preference_score(r, pair.s_w, pair.s_l, pair.v_effective, config), config.beta);
    }
    return total / static_cast<double>(batch.size());
}

long double batch_loss_extended(std::span<const EncodedPair> batch, const PolicyParameters& policy,
                                const PolicyParameters& reference, const LossConfig& config) {
    if (batch.empty()) throw Error("batch_loss: empty batch");
    const auto lp = [](const PolicyParameters& p, const EncodedPair& pair, const policy::TokenIds& response) {
        return policy::sequence_log_prob_extended(p, pair.prompt, response);
    };
    long double total = 0.0L;
    for (const auto& pair : batch) {
        const long double r_w = lp(policy, pair, pair.preferred) - lp(reference, pair, pair.preferred);
        const long double r_l = lp(policy, pair, pair.rejected) - lp(reference, pair, pair.rejected);
        const long double scale =
            uses_finesse(config.mode)
                ? std::min<long double>(config.scale_cap, 1.0L / (static_cast<long double>(pair.v_effective) + config.epsilon))
                : 1.0L;
        const long double s = score_as<long double>(r_w, r_l, pair.s_w, pair.s_l, scale, config.mode);
        total += softplus_as<long double>(-static_cast<long double>(config.beta) * s);
    }
    return total / static_cast<long double>(batch.size());
}

} // namespace hindpo::dpo
