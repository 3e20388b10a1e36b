#include "hindpo/trainer.hpp"

#include "hindpo/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

namespace hindpo::trainer {

using dpo::EncodedPair;
using policy::PolicyParameters;

void TrainConfig::validate() const {
    if (epochs_per_stage < 1) throw SchemaError("train.epochs_per_stage must be >= 1");
    if (!(learning_rate > 0.0)) throw SchemaError("train.learning_rate must be > 0");
    if (batch_size < 1) throw SchemaError("train.batch_size must be >= 1");
    if (checkpoint_every < 0) throw SchemaError("train.checkpoint_every must be >= 0");
    loss.validate();
}

TrainConfig TrainConfig::toy_preset() {
    TrainConfig c;
    c.learning_rate = 0.5;
    return c;
}

std::string TrainLog::to_jsonl() const {
    std::ostringstream out;
    std::size_t e = 0;
    auto emit_epochs_until = [&](std::size_t stage, int epoch) {
        while (e < epochs.size() &&
               (epochs[e].stage_index < stage || (epochs[e].stage_index == stage && epochs[e].epoch < epoch))) {
            const auto& r = epochs[e++];
            nlohmann::ordered_json j;
            j["type"] = "epoch";
            j["stage_index"] = r.stage_index;
            j["stage"] = r.stage;
            j["epoch"] = r.epoch;
            j["loss"] = r.loss;
            j["mean_margin"] = r.mean_margin;
            j["mean_weighted_margin"] = r.mean_weighted_margin;
            j["accuracy"] = r.accuracy;
            j["mean_v_effective"] = r.mean_v_effective;
            out << j.dump() << '\n';
        }
    };
    for (const auto& s : steps) {
        emit_epochs_until(s.stage_index, s.epoch);
        nlohmann::ordered_json j;
        j["type"] = "step";
        j["stage_index"] = s.stage_index;
        j["stage"] = s.stage;
        j["epoch"] = s.epoch;
        j["step"] = s.step;
        j["loss"] = s.loss;
        j["mean_margin"] = s.mean_margin;
        j["mean_weighted_margin"] = s.mean_weighted_margin;
        j["accuracy"] = s.accuracy;
        out << j.dump() << '\n';
    }
    emit_epochs_until(SIZE_MAX, 0);
    return out.str();
}

TrainStage encode_stage(const dataforge::Stage& stage, const policy::Vocabulary& vocab) {
    TrainStage out;
    out.name = std::string(dataforge::to_string(stage.bucket));
    out.pairs.reserve(stage.pairs.size());
    for (const auto& p : stage.pairs) {
        EncodedPair e;
        e.prompt = vocab.encode(textmetrics::tokenize(p.prompt));
        e.preferred = vocab.encode_response(textmetrics::tokenize(p.preferred));
        e.rejected = vocab.encode_response(textmetrics::tokenize(p.rejected));
        e.s_w = p.s_w;
        e.s_l = p.s_l;
        out.pairs.push_back(std::move(e));
    }
    return out;
}

std::vector<TrainStage> encode_curriculum(const dataforge::CurriculumDataset& dataset,
                                          const policy::Vocabulary& vocab) {
    std::vector<TrainStage> stages;
    for (const auto& s : dataset.stages) stages.push_back(encode_stage(s, vocab));
    return stages;
}

PairStats evaluate_pairs(std::span<const EncodedPair> pairs, const PolicyParameters& policy,
                         const PolicyParameters& reference, const dpo::LossConfig& config) {
    PairStats stats;
    if (pairs.empty()) return stats;
    const double inv_n = 1.0 / static_cast<double>(pairs.size());
    for (const auto& p : pairs) {
        const auto r = dpo::log_ratios(policy, reference, p);
        const double score = dpo::preference_score(r, p.s_w, p.s_l, p.v_effective, config);
        stats.loss += dpo::hin_dpo_loss(score, config.beta) * inv_n;
        stats.mean_margin += config.beta * (r.r_w - r.r_l) * inv_n;
        stats.mean_weighted_margin += config.beta * score * inv_n;
        if (r.r_w > r.r_l) stats.accuracy += inv_n;
    }
    return stats;
}

void refresh_finesse(std::span<EncodedPair> pairs, const PolicyParameters& policy, const dpo::LossConfig& config,
                     Rng& rng) {
    std::map<std::pair<policy::TokenIds, policy::TokenIds>, double> cache;
    for (auto& p : pairs) {
        auto key = std::make_pair(p.prompt, p.preferred);
        auto it = cache.find(key);
        if (it == cache.end()) {
            const double v_eff = dpo::compute_finesse(policy, p.prompt, config, rng).v_effective;
            it = cache.emplace(std::move(key), v_eff).first;
        }
        p.v_effective = it->second;
    }
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    // splitmix64 finalizer over (seed, stream)
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

double mean_v_effective(std::span<const EncodedPair> pairs) {
    if (pairs.empty()) return 0.0;
    double total = 0.0;
    for (const auto& p : pairs) total += p.v_effective;
    return total / static_cast<double>(pairs.size());
}

} // namespace

TrainResult train(std::span<const TrainStage> stages, PolicyParameters initial, const TrainConfig& config) {
    config.validate();
    if (stages.empty()) throw Error("train: curriculum has no stages");
    for (const auto& s : stages) {
        if (s.pairs.empty()) throw Error("train: stage '" + s.name + "' is empty");
    }

    policy::ReferenceSnapshot reference = policy::snapshot_reference(initial);
    TrainResult result{std::move(initial), reference.params(), {}};
    Rng shuffle_rng(derive_seed(config.seed, 0));
    std::size_t step = 0;

    for (std::size_t si = 0; si < stages.size(); ++si) {
        const TrainStage& stage = stages[si];
        std::vector<EncodedPair> pairs = stage.pairs;
        if (dpo::uses_finesse(config.loss.mode)) {
            Rng finesse_rng(derive_seed(config.seed, 1000 + si));
            refresh_finesse(pairs, result.policy, config.loss, finesse_rng);
        }

        auto record_epoch = [&](int epoch) {
            const PairStats s = evaluate_pairs(pairs, result.policy, reference.params(), config.loss);
            result.log.epochs.push_back(
                {si, stage.name, epoch, s.loss, s.mean_margin, s.mean_weighted_margin, s.accuracy, mean_v_effective(pairs)});
        };
        record_epoch(0);

        std::vector<std::size_t> order(pairs.size());
        const auto batch = static_cast<std::size_t>(config.batch_size);
        for (int epoch = 1; epoch <= config.epochs_per_stage; ++epoch) {
            std::iota(order.begin(), order.end(), std::size_t{0});
            shuffle_rng.shuffle(order);
            for (std::size_t start = 0; start < order.size(); start += batch) {
                std::vector<EncodedPair> mb;
                for (std::size_t k = start; k < std::min(order.size(), start + batch); ++k) mb.push_back(pairs[order[k]]);

                auto lg = dpo::loss_gradient(mb, result.policy, reference.params(), config.loss);
                ++step;
                if (!std::isfinite(lg.loss)) {
                    throw Error("train: non-finite loss at stage '" + stage.name + "' epoch " + std::to_string(epoch) +
                                " step " + std::to_string(step) + " (margin " + std::to_string(lg.mean_margin) +
                                "); lower the learning rate");
                }
                result.policy.apply_gradient(lg.gradient, config.learning_rate);
                result.log.steps.push_back(
                    {si, stage.name, epoch, step, lg.loss, lg.mean_margin, lg.mean_weighted_margin, lg.accuracy});

                if (config.checkpoint_every > 0 && step % static_cast<std::size_t>(config.checkpoint_every) == 0) {
                    std::filesystem::create_directories(config.checkpoint_dir);
                    policy::save_checkpoint(result.policy,
                                            config.checkpoint_dir / ("checkpoint_step_" + std::to_string(step) + ".json"));
                }
            }
            record_epoch(epoch);
        }

        if (config.refresh_reference_per_stage) reference = policy::snapshot_reference(result.policy);
    }
    result.reference = reference.params();
    return result;
}

GradCheckReport gradcheck(const PolicyParameters& policy, const PolicyParameters& reference,
                          std::span<const EncodedPair> batch, const dpo::LossConfig& config, double h, double floor) {
    if (batch.empty()) throw Error("gradcheck: empty batch");
    const auto analytic = dpo::loss_gradient(batch, policy, reference, config);
    PolicyParameters probe = policy;
    GradCheckReport report;
    for (policy::TokenId row : analytic.gradient.touched_rows()) {
        for (policy::TokenId col = 0; col < policy.dim(); ++col) {
            double& x = probe.logit(row, col);
            const double saved = x;
            const double x_up = saved + h;
            const double x_down = saved - h;
            x = x_up;
            const long double up = dpo::batch_loss_extended(batch, probe, reference, config);
            x = x_down;
            const long double down = dpo::batch_loss_extended(batch, probe, reference, config);
            x = saved;

            // divide by the step actually taken after rounding
            const auto numeric = static_cast<double>((up - down) / (static_cast<long double>(x_up) - x_down));
            const double a = analytic.gradient.at(row, col);
            const double abs_err = std::abs(a - numeric);
            const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
            report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
            if (rel_err > report.max_relative_error) {
                report.max_relative_error = rel_err;
                report.worst_row = row;
                report.worst_col = col;
            }
            ++report.parameters_checked;
        }
    }
    return report;
}

SeparableCorpus make_separable_corpus(std::size_t n_pairs, double s_w, double s_l) {
    std::vector<std::string> tokens = {"A", "B"};
    for (std::size_t i = 0; i < n_pairs; ++i) tokens.push_back("p" + std::to_string(i));

    SeparableCorpus corpus{policy::Vocabulary(tokens), {}};
    const auto& v = corpus.vocab;
    corpus.stage.name = "separable";
    for (std::size_t i = 0; i < n_pairs; ++i) {
        EncodedPair p;
        p.prompt = {v.id("p" + std::to_string(i))};
        p.preferred = {v.id("A"), policy::Vocabulary::kEosId};
        p.rejected = {v.id("B"), policy::Vocabulary::kEosId};
        p.s_w = s_w;
        p.s_l = s_l;
        corpus.stage.pairs.push_back(std::move(p));
    }
    return corpus;
}

} // namespace hindpo::trainer
