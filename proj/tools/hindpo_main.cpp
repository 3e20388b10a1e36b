// hindpo: preference-dataset forging, Hin-DPO curriculum training and
// evaluation from one command line.
//
//   hindpo forge     --config run.json [--order algorithm1|section4]
//   hindpo train     --config run.json [--mode hin_dpo] [--toy-preset]
//   hindpo eval      --config run.json
//   hindpo gradcheck [--mode hin_dpo] [--seed N]
//   hindpo demo      [--seed 7] [--out demo_out]

#include "hindpo/error.hpp"
#include "hindpo/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

namespace {

using hindpo::pipeline::RunConfig;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string order;
    std::string mode;
    bool toy_preset = false;
};

void add_common(CLI::App* cmd, Flags& flags, bool with_config) {
    if (with_config) cmd->add_option("--config", flags.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", flags.seed, "Seed for splitting, shuffling and sampling");
    cmd->add_option("--out", flags.out, "Output directory");
}

RunConfig resolve(const Flags& flags, bool require_config) {
    RunConfig c;
    if (!flags.config.empty()) {
        c = hindpo::pipeline::load_config(flags.config);
    } else if (require_config) {
        throw hindpo::SchemaError("--config is required");
    }
    if (flags.seed) c.seed = *flags.seed;
    if (!flags.out.empty()) c.out_dir = flags.out;
    if (!flags.order.empty()) c.order = hindpo::dataforge::parse_order(flags.order);
    if (!flags.mode.empty()) c.train.loss.mode = hindpo::dpo::parse_loss_mode(flags.mode);
    if (flags.toy_preset) c.train.learning_rate = hindpo::trainer::TrainConfig::toy_preset().learning_rate;
    c.validate();
    return c;
}

int run_gradcheck(const Flags& flags) {
    auto loss = hindpo::dpo::LossConfig{};
    if (!flags.mode.empty()) loss.mode = hindpo::dpo::parse_loss_mode(flags.mode);
    const auto fixture = hindpo::pipeline::make_gradcheck_fixture(flags.seed.value_or(0));
    const auto report = hindpo::trainer::gradcheck(fixture.policy, fixture.reference, fixture.batch, loss);
    const bool ok = report.max_relative_error < hindpo::pipeline::kGradCheckTolerance;
    std::printf("mode=%s checked=%zu max_rel_error=%.3e max_abs_error=%.3e tolerance=%.0e %s\n",
                std::string(hindpo::dpo::to_string(loss.mode)).c_str(), report.parameters_checked,
                report.max_relative_error, report.max_absolute_error, hindpo::pipeline::kGradCheckTolerance,
                ok ? "PASS" : "FAIL");
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hin-DPO preference alignment engine"};
    app.require_subcommand(1);
    Flags flags;

    auto* forge = app.add_subcommand("forge", "Rank, bucketize and emit the curriculum dataset");
    add_common(forge, flags, true);
    forge->add_option("--order", flags.order, "Stage order")->check(CLI::IsMember({"algorithm1", "section4"}));

    const auto modes = CLI::IsMember({"dpo", "dpo_act", "dpo_fin", "hin_dpo"});
    auto* train = app.add_subcommand("train", "Train a policy on a forged curriculum");
    add_common(train, flags, true);
    train->add_option("--mode", flags.mode, "Loss mode")->check(modes);
    train->add_flag("--toy-preset", flags.toy_preset, "Use learning rate 0.5");

    auto* eval = app.add_subcommand("eval", "Generate on the test split and write the metric report");
    add_common(eval, flags, true);

    auto* gradcheck = app.add_subcommand("gradcheck", "Check the analytic loss gradient by finite differences");
    gradcheck->add_option("--seed", flags.seed, "Fixture seed");
    gradcheck->add_option("--mode", flags.mode, "Loss mode")->check(modes);

    auto* demo = app.add_subcommand("demo", "Full pipeline on the bundled toy corpus");
    add_common(demo, flags, true);
    demo->add_option("--order", flags.order, "Stage order")->check(CLI::IsMember({"algorithm1", "section4"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (forge->parsed()) {
            const auto out = hindpo::pipeline::forge(resolve(flags, true));
            std::cout << out.manifest.string() << '\n';
        } else if (train->parsed()) {
            const auto config = resolve(flags, true);
            const auto result = hindpo::pipeline::train(config);
            const auto& last = result.log.epochs.back();
            std::printf("mode=%s steps=%zu final_accuracy=%.4f final_margin=%.4f\n",
                        std::string(hindpo::dpo::to_string(config.train.loss.mode)).c_str(), result.log.steps.size(),
                        last.accuracy, last.mean_margin);
        } else if (eval->parsed()) {
            std::cout << hindpo::pipeline::evaluate(resolve(flags, true)).table;
        } else if (gradcheck->parsed()) {
            return run_gradcheck(flags);
        } else if (demo->parsed()) {
            RunConfig config = resolve(flags, false);
            if (flags.config.empty()) {
                config.corpus = hindpo::pipeline::bundled_corpus();
                if (flags.out.empty()) config.out_dir = "demo_out";
                config.train.learning_rate = hindpo::trainer::TrainConfig::toy_preset().learning_rate;
                if (!flags.seed) config.seed = 7;
            }
            std::cout << hindpo::pipeline::demo(config).table;
        }
    } catch (const std::exception& e) {
        std::cerr << "hindpo: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
