#pragma once

#include "hindpo/dataforge.hpp"
#include "hindpo/evalharness.hpp"
#include "hindpo/hin_dpo.hpp"
#include "hindpo/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hindpo::pipeline {

enum class ActualitySource { embedded, file, constant };

struct ActualityConfig {
    ActualitySource source = ActualitySource::embedded;
    std::filesystem::path file;
    double value = 0.5;
};

struct EvalConfig {
    std::size_t max_len = 48;
    double temperature = 0.0;
};

/// Everything a run needs. Serialized as JSON:
///   {"corpus", "out_dir", "seed", "order",
///    "split": {"train", "val", "test"},
///    "actuality": {"provider": "embedded"|"file"|"constant", "file", "value"},
///    "loss": {"beta", "epsilon", "mode", "finesse_samples", "finesse_temperature",
///             "finesse_max_len", "scale_cap", "normalize_variance"},
///    "train": {"epochs_per_stage", "learning_rate", "batch_size",
///              "refresh_reference_per_stage", "checkpoint_every"},
///    "eval": {"max_len", "temperature"}}
/// Every key is optional; unknown keys are rejected.
struct RunConfig {
    std::filesystem::path corpus;
    std::filesystem::path out_dir = "hindpo_out";
    std::uint64_t seed = 0;
    dataforge::CurriculumOrder order = dataforge::CurriculumOrder::algorithm1;
    dataforge::SplitFractions split;
    ActualityConfig actuality;
    trainer::TrainConfig train;
    EvalConfig eval;

    void validate() const;
};

std::filesystem::path bundled_corpus();
std::filesystem::path bundled_actuality();

/// Relative paths inside the file resolve against the file's directory.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
nlohmann::ordered_json config_to_json(const RunConfig& config);

std::unique_ptr<dataforge::ActualityProvider> make_actuality_provider(const ActualityConfig& config);

struct ForgeOutput {
    std::filesystem::path manifest;
    dataforge::CurriculumDataset dataset;
    dataforge::CorpusSplit split;
};

/// Scores, ranks, bucketizes and splits the configured corpus. Writes into <out_dir>/forge:
/// the stage files and manifest, vocab.json (every corpus token), and the
/// held-out articles as val.jsonl / test.jsonl.
ForgeOutput forge(const RunConfig& config);

policy::Vocabulary load_vocab(const std::filesystem::path& path);

/// Trains from a previous forge into <out_dir>/train/<mode>/:
/// policy.json, trainlog.jsonl and, when enabled, checkpoints/.
trainer::TrainResult train(const RunConfig& config);

/// Generates on the test split with the untrained base policy and every
/// trained mode found under <out_dir>/train, then writes
/// <out_dir>/eval/{report.txt, report.json, generations_<config>.jsonl}.
evalharness::RenderedReport evaluate(const RunConfig& config);

/// forge, train every loss mode, evaluate.
evalharness::RenderedReport demo(const RunConfig& config);

struct GradCheckFixture {
    policy::PolicyParameters policy;
    policy::PolicyParameters reference;
    std::vector<dpo::EncodedPair> batch;
};

/// Random noise-initialized 4x4 policy and reference ({<s>, </s>, a, b}),
/// with a small batch of random pairs carrying random Actuality and Finesse
/// values.
GradCheckFixture make_gradcheck_fixture(std::uint64_t seed, std::size_t batch_size = 3);

inline constexpr double kGradCheckTolerance = 1e-5;

} // namespace hindpo::pipeline
