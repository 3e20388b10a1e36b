#pragma once

#include "hindpo/policy.hpp"
#include "hindpo/rng.hpp"

#include <span>
#include <string>
#include <string_view>

namespace hindpo::dpo {

enum class LossMode { dpo, dpo_act, dpo_fin, hin_dpo };

std::string_view to_string(LossMode mode);
/// Throws SchemaError for unknown names.
LossMode parse_loss_mode(std::string_view name);

inline constexpr LossMode kAllModes[] = {LossMode::dpo, LossMode::dpo_act, LossMode::dpo_fin, LossMode::hin_dpo};

inline bool uses_actuality(LossMode m) { return m == LossMode::dpo_act || m == LossMode::hin_dpo; }
inline bool uses_finesse(LossMode m) { return m == LossMode::dpo_fin || m == LossMode::hin_dpo; }

struct LossConfig {
    double beta = 0.6;
    double epsilon = 0.05;
    LossMode mode = LossMode::hin_dpo;
    int finesse_samples = 5;
    double finesse_temperature = 0.9;
    std::size_t finesse_max_len = 32;
    /// Upper bound on the Finesse multiplier 1 / (v_effective + epsilon).
    double scale_cap = 20.0;
    /// Divide raw variance by 0.25, the largest population variance of
    /// values in [0, 1], and clamp to [0, 1].
    bool normalize_variance = true;

    /// Throws SchemaError when beta, epsilon, scale_cap <= 0, K < 2 or the
    /// sampling settings are unusable.
    void validate() const;
};

struct FinesseEstimate {
    double v = 0.0;
    double v_effective = 0.0;
};

struct PairLogRatios {
    double r_w = 0.0;
    double r_l = 0.0;
};

/// Weight on the rejected log-ratio: max(0.01, s_l).
inline double rejected_weight(double s_l) { return s_l > 0.01 ? s_l : 0.01; }

FinesseEstimate finesse_from_variance(double v, const LossConfig& config);

/// Sample variance of per-response confidences, then normalization.
FinesseEstimate finesse_from_samples(std::span<const double> confidences, const LossConfig& config);

/// Geometric-mean token probability of `response` under the policy at
/// `temperature`.
double response_confidence(const policy::PolicyParameters& policy, std::span<const policy::TokenId> prompt,
                           std::span<const policy::TokenId> response, double temperature);

/// Draws K responses at the Finesse temperature and takes the running sample
/// variance of their confidences. Throws hindpo::Error when the prompt has
/// no usable continuation.
FinesseEstimate compute_finesse(const policy::PolicyParameters& policy, std::span<const policy::TokenId> prompt,
                                const LossConfig& config, Rng& rng);

/// min(scale_cap, 1 / (v_effective + epsilon))
double finesse_scale(double v_effective, const LossConfig& config);

/// The sigmoid argument divided by beta, per loss mode:
///   dpo      r_w - r_l
///   dpo_act  (1 + s_w) r_w - max(0.01, s_l) r_l
///   dpo_fin  (r_w - r_l) * scale
///   hin_dpo  ((1 + s_w) r_w - max(0.01, s_l) r_l) * scale
double preference_score(PairLogRatios ratios, double s_w, double s_l, double v_effective, const LossConfig& config);

/// -log sigmoid(beta * S), evaluated as softplus(-beta * S).
double hin_dpo_loss(double score, double beta);

double standard_dpo_loss(PairLogRatios ratios, double beta);

double softplus(double x);
double sigmoid(double x);

/// One preference pair encoded against a policy vocabulary, with its
/// Actuality scores and current Finesse estimate.
struct EncodedPair {
    policy::TokenIds prompt;
    policy::TokenIds preferred;
    policy::TokenIds rejected;
    double s_w = 0.0;
    double s_l = 1.0;
    double v_effective = 0.0;
};

PairLogRatios log_ratios(const policy::PolicyParameters& policy, const policy::PolicyParameters& reference,
                         const EncodedPair& pair);

struct LossAndGradient {
    double loss = 0.0;
    policy::GradientTable gradient;
    /// mean of beta * (r_w - r_l)
    double mean_margin = 0.0;
    /// mean of beta * S
    double mean_weighted_margin = 0.0;
    /// fraction of pairs with r_w > r_l
    double accuracy = 0.0;
};

/// Mean loss over the batch and its gradient with respect to the policy
/// logits. The reference and the Finesse values are constants.
LossAndGradient loss_gradient(std::span<const EncodedPair> batch, const policy::PolicyParameters& policy,
                              const policy::PolicyParameters& reference, const LossConfig& config);

/// Mean loss only.
double batch_loss(std::span<const EncodedPair> batch, const policy::PolicyParameters& policy,
                  const policy::PolicyParameters& reference, const LossConfig& config);

/// batch_loss evaluated in long double throughout, for finite differences.
long double batch_loss_extended(std::span<const EncodedPair> batch, const policy::PolicyParameters& policy,
                                const policy::PolicyParameters& reference, const LossConfig& config);

} // namespace hindpo::dpo
