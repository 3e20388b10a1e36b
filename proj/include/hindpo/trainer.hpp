#pragma once

#include "hindpo/dataforge.hpp"
#include "hindpo/hin_dpo.hpp"
#include "hindpo/policy.hpp"
#include "hindpo/welford.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hindpo::trainer {

struct TrainConfig {
    int epochs_per_stage = 10;
    double learning_rate = 1e-4;
    int batch_size = 2;
    std::uint64_t seed = 0;
    bool refresh_reference_per_stage = true;
    dpo::LossConfig loss;
    /// Write a policy checkpoint every N optimizer steps; 0 disables.
    int checkpoint_every = 0;
    std::filesystem::path checkpoint_dir;

    void validate() const;

    /// Defaults with learning_rate 0.5, usable on a bigram table in a few
    /// epochs.
    static TrainConfig toy_preset();
};

struct StepRecord {
    std::size_t stage_index = 0;
    std::string stage;
    int epoch = 0;
    std::size_t step = 0;
    double loss = 0.0;
    double mean_margin = 0.0;
    double mean_weighted_margin = 0.0;
    double accuracy = 0.0;
};

/// Whole-stage statistics measured after an epoch (or, with epoch 0, at
/// stage start after the Finesse refresh).
struct EpochRecord {
    std::size_t stage_index = 0;
    std::string stage;
    int epoch = 0;
    double loss = 0.0;
    double mean_margin = 0.0;
    double mean_weighted_margin = 0.0;
    double accuracy = 0.0;
    double mean_v_effective = 0.0;
};

struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;

    /// One JSON object per line, steps and epoch summaries interleaved in
    /// execution order.
    std::string to_jsonl() const;
};

struct TrainStage {
    std::string name;
    std::vector<dpo::EncodedPair> pairs;
};

/// Tokenizes and encodes every pair of the stage. Throws VocabularyError
/// on unknown tokens.
TrainStage encode_stage(const dataforge::Stage& stage, const policy::Vocabulary& vocab);
std::vector<TrainStage> encode_curriculum(const dataforge::CurriculumDataset& dataset,
                                          const policy::Vocabulary& vocab);

/// mean_margin is beta * (r_w - r_l); mean_weighted_margin is beta * S,
/// the sigmoid argument of the configured loss mode.
struct PairStats {
    double loss = 0.0;
    double mean_margin = 0.0;
    double mean_weighted_margin = 0.0;
    double accuracy = 0.0;
};

PairStats evaluate_pairs(std::span<const dpo::EncodedPair> pairs, const policy::PolicyParameters& policy,
                         const policy::PolicyParameters& reference, const dpo::LossConfig& config);

/// Refreshes v_effective on every pair of the stage, one Finesse estimate
/// per distinct (prompt, preferred).
void refresh_finesse(std::span<dpo::EncodedPair> pairs, const policy::PolicyParameters& policy,
                     const dpo::LossConfig& config, Rng& rng);

struct TrainResult {
    policy::PolicyParameters policy;
    policy::PolicyParameters reference;
    TrainLog log;
};

/// Runs the curriculum stage by stage with plain gradient descent.
///
/// Each stage starts with a Finesse refresh (for modes that use it), then
/// runs epochs_per_stage passes over a seeded shuffle of its pairs in
/// batches of batch_size. With refresh_reference_per_stage the reference is
/// replaced by a snapshot of the policy at the end of each stage. Throws on
/// an empty stage or a non-finite loss.
TrainResult train(std::span<const TrainStage> stages, policy::PolicyParameters initial, const TrainConfig& config);

struct GradCheckReport {
    double max_relative_error = 0.0;
    double max_absolute_error = 0.0;
    std::size_t parameters_checked = 0;
    policy::TokenId worst_row = 0;
    policy::TokenId worst_col = 0;
};

/// Central-difference check of loss_gradient over every parameter in a row
/// the batch touches, with the perturbed losses taken from
/// batch_loss_extended. Per-entry relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
GradCheckReport gradcheck(const policy::PolicyParameters& policy, const policy::PolicyParameters& reference,
                          std::span<const dpo::EncodedPair> batch, const dpo::LossConfig& config, double h = 1e-5,
                          double floor = 1e-6);

/// Toy corpus with one single-token prompt p<i> per pair; the preferred
/// response is "A </s>" and the rejected "B </s>".
struct SeparableCorpus {
    policy::Vocabulary vocab;
    TrainStage stage;
};

SeparableCorpus make_separable_corpus(std::size_t n_pairs = 50, double s_w = 0.5, double s_l = 0.5);

/// Seed for stream `stream` of a run (shuffling, Finesse sampling per
/// stage).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace hindpo::trainer
