#include "hindpo/pipeline.hpp"

#include "hindpo/error.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace hindpo::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    out.flush();
    if (!out) throw Error("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> keys, const std::string& where) {
    if (!obj.is_object()) throw SchemaError(where + " must be an object");
    for (const auto& [key, _] : obj.items()) {
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            throw SchemaError("unknown config key '" + where + "." + key + "'");
        }
    }
}

template <typename T>
void read_opt(const json& obj, const char* key, T& target, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        target = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw SchemaError("config key '" + where + "." + key + "' has the wrong type");
    }
}

std::string_view to_string(ActualitySource s) {
    switch (s) {
    case ActualitySource::embedded: return "embedded";
    case ActualitySource::file: return "file";
    case ActualitySource::constant: return "constant";
    }
    return "?";
}

fs::path forge_dir(const RunConfig& c) { return c.out_dir / "forge"; }
fs::path train_dir(const RunConfig& c, dpo::LossMode m) { return c.out_dir / "train" / std::string(dpo::to_string(m)); }

} // namespace

void RunConfig::validate() const {
    split.validate();
    train.validate();
    if (eval.max_len < 1) throw SchemaError("eval.max_len must be >= 1");
    if (actuality.source == ActualitySource::constant && (actuality.value < 0.0 || actuality.value > 1.0)) {
        throw SchemaError("actuality.value must lie in [0, 1]");
    }
    if (actuality.source == ActualitySource::file && actuality.file.empty()) {
        throw SchemaError("actuality.file is required for the file provider");
    }
}

fs::path bundled_corpus() { return fs::path(HINDPO_DATA_DIR) / "toy_corpus.jsonl"; }
fs::path bundled_actuality() { return fs::path(HINDPO_DATA_DIR) / "toy_actuality.txt"; }

RunConfig config_from_json(const json& doc, const fs::path& base_dir) {
    RunConfig c;
    reject_unknown(doc, {"corpus", "out_dir", "seed", "order", "split", "actuality", "loss", "train", "eval"}, "config");
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() || base_dir.empty() ? fs::path(p) : base_dir / p; };

    std::string s;
    if (doc.contains("corpus")) {
        read_opt(doc, "corpus", s, "config");
        c.corpus = resolve(s);
    }
    if (doc.contains("out_dir")) {
        read_opt(doc, "out_dir", s, "config");
        c.out_dir = resolve(s);
    }
    read_opt(doc, "seed", c.seed, "config");
    if (doc.contains("order")) {
        read_opt(doc, "order", s, "config");
        c.order = dataforge::parse_order(s);
    }
    if (doc.contains("split")) {
        const auto& j = doc.at("split");
        reject_unknown(j, {"train", "val", "test"}, "split");
        read_opt(j, "train", c.split.train, "split");
        read_opt(j, "val", c.split.val, "split");
        read_opt(j, "test", c.split.test, "split");
    }
    if (doc.contains("actuality")) {
        const auto& j = doc.at("actuality");
        reject_unknown(j, {"provider", "file", "value"}, "actuality");
        if (j.contains("provider")) {
            read_opt(j, "provider", s, "actuality");
            if (s == "embedded") c.actuality.source = ActualitySource::embedded;
            else if (s == "file") c.actuality.source = ActualitySource::file;
            else if (s == "constant") c.actuality.source = ActualitySource::constant;
            else throw SchemaError("actuality.provider must be embedded|file|constant");
        }
        if (j.contains("file")) {
            read_opt(j, "file", s, "actuality");
            c.actuality.file = resolve(s);
        }
        read_opt(j, "value", c.actuality.value, "actuality");
    }
    if (doc.contains("loss")) {
        const auto& j = doc.at("loss");
        reject_unknown(j, {"beta", "epsilon", "mode", "finesse_samples", "finesse_temperature", "finesse_max_len",
                           "scale_cap", "normalize_variance"},
                       "loss");
        auto& l = c.train.loss;
        read_opt(j, "beta", l.beta, "loss");
        read_opt(j, "epsilon", l.epsilon, "loss");
        if (j.contains("mode")) {
            read_opt(j, "mode", s, "loss");
            l.mode = dpo::parse_loss_mode(s);
        }
        read_opt(j, "finesse_samples", l.finesse_samples, "loss");
        read_opt(j, "finesse_temperature", l.finesse_temperature, "loss");
        read_opt(j, "finesse_max_len", l.finesse_max_len, "loss");
        read_opt(j, "scale_cap", l.scale_cap, "loss");
        read_opt(j, "normalize_variance", l.normalize_variance, "loss");
    }
    if (doc.contains("train")) {
        const auto& j = doc.at("train");
        reject_unknown(j, {"epochs_per_stage", "learning_rate", "batch_size", "refresh_reference_per_stage",
                           "checkpoint_every"},
                       "train");
        read_opt(j, "epochs_per_stage", c.train.epochs_per_stage, "train");
        read_opt(j, "learning_rate", c.train.learning_rate, "train");
        read_opt(j, "batch_size", c.train.batch_size, "train");
        read_opt(j, "refresh_reference_per_stage", c.train.refresh_reference_per_stage, "train");
        read_opt(j, "checkpoint_every", c.train.checkpoint_every, "train");
    }
    if (doc.contains("eval")) {
        const auto& j = doc.at("eval");
        reject_unknown(j, {"max_len", "temperature"}, "eval");
        read_opt(j, "max_len", c.eval.max_len, "eval");
        read_opt(j, "temperature", c.eval.temperature, "eval");
    }
    return c;
}

RunConfig load_config(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
    return config_from_json(doc, path.parent_path());
}

ojson config_to_json(const RunConfig& c) {
    ojson j;
    j["corpus"] = c.corpus.string();
    j["out_dir"] = c.out_dir.string();
    j["seed"] = c.seed;
    j["order"] = dataforge::to_string(c.order);
    j["split"] = {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}};
    j["actuality"] = {{"provider", to_string(c.actuality.source)},
                      {"file", c.actuality.file.string()},
                      {"value", c.actuality.value}};
    const auto& l = c.train.loss;
    j["loss"] = {{"beta", l.beta},
                 {"epsilon", l.epsilon},
                 {"mode", dpo::to_string(l.mode)},
                 {"finesse_samples", l.finesse_samples},
                 {"finesse_temperature", l.finesse_temperature},
                 {"finesse_max_len", l.finesse_max_len},
                 {"scale_cap", l.scale_cap},
                 {"normalize_variance", l.normalize_variance}};
    j["train"] = {{"epochs_per_stage", c.train.epochs_per_stage},
                  {"learning_rate", c.train.learning_rate},
                  {"batch_size", c.train.batch_size},
                  {"refresh_reference_per_stage", c.train.refresh_reference_per_stage},
                  {"checkpoint_every", c.train.checkpoint_every}};
    j["eval"] = {{"max_len", c.eval.max_len}, {"temperature", c.eval.temperature}};
    return j;
}

std::unique_ptr<dataforge::ActualityProvider> make_actuality_provider(const ActualityConfig& config) {
    switch (config.source) {
    case ActualitySource::embedded: return std::make_unique<dataforge::EmbeddedActuality>();
    case ActualitySource::file: return std::make_unique<dataforge::FileActuality>(config.file);
    case ActualitySource::constant: return std::make_unique<dataforge::ConstantActuality>(config.value);
    }
    throw Error("unknown actuality source");
}

ForgeOutput forge(const RunConfig& config) {
    config.validate();
    if (config.corpus.empty()) throw SchemaError("no corpus configured");
    const std::string corpus_bytes = read_file(config.corpus);
    const auto records = dataforge::load_articles(config.corpus);
    const auto provider = make_actuality_provider(config.actuality);

    ForgeOutput out;
    out.split = dataforge::split_articles(records, config.split, config.seed);

    std::vector<dataforge::PreferencePair> pairs;
    for (const auto& record : out.split.train) {
        auto ranked = dataforge::score_and_rank(record);
        dataforge::attach_actuality(ranked, record, *provider);
        pairs.insert(pairs.end(), ranked.begin(), ranked.end());
    }
    out.dataset = dataforge::bucketize(pairs, config.order);

    const fs::path dir = forge_dir(config);
    dataforge::EmitInfo info;
    info.corpus_checksum = dataforge::checksum(corpus_bytes);
    info.split = config.split;
    info.train_articles = out.split.train.size();
    info.val_articles = out.split.val.size();
    info.test_articles = out.split.test.size();
    info.seed = config.seed;
    out.manifest = dataforge::emit_curriculum(out.dataset, dir, info);

    write_file(dir / "val.jsonl", dataforge::articles_to_string(out.split.val));
    write_file(dir / "test.jsonl", dataforge::articles_to_string(out.split.test));

    std::set<std::string> tokens;
    for (const auto& r : records) {
        for (const std::string* text : {&r.news_text, &r.ground_truth_explanation}) {
            for (auto& t : textmetrics::tokenize(*text)) tokens.insert(std::move(t));
        }
        for (const auto& c : r.candidates) {
            for (auto& t : textmetrics::tokenize(c.text)) tokens.insert(std::move(t));
        }
    }
    ojson vocab;
    vocab["format"] = "hindpo-vocab";
    vocab["tokens"] = tokens;
    write_file(dir / "vocab.json", vocab.dump() + "\n");
    return out;
}

policy::Vocabulary load_vocab(const fs::path& path) {
    try {
        const auto doc = json::parse(read_file(path));
        if (doc.value("format", "") != "hindpo-vocab") throw SchemaError("not a vocabulary file");
        return policy::Vocabulary(doc.at("tokens").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
        throw SchemaError(path.string() + ": " + e.what());
    }
}

trainer::TrainResult train(const RunConfig& config) {
    config.validate();
    const auto dataset = dataforge::load_curriculum(forge_dir(config) / "manifest.json");
    const auto vocab = load_vocab(forge_dir(config) / "vocab.json");
    const auto stages = trainer::encode_curriculum(dataset, vocab);

    trainer::TrainConfig tc = config.train;
    tc.seed = config.seed;
    const fs::path dir = train_dir(config, tc.loss.mode);
    tc.checkpoint_dir = dir / "checkpoints";

    auto result = trainer::train(stages, policy::new_policy(vocab), tc);
    write_file(dir / "policy.json", policy::checkpoint_to_string(result.policy));
    write_file(dir / "trainlog.jsonl", result.log.to_jsonl());
    return result;
}

evalharness::RenderedReport evaluate(const RunConfig& config) {
    config.validate();
    const auto vocab = load_vocab(forge_dir(config) / "vocab.json");
    const auto test = dataforge::load_articles(forge_dir(config) / "test.jsonl");
    std::vector<std::string> prompts, references;
    for (const auto& r : test) {
        prompts.push_back(r.news_text);
        references.push_back(r.ground_truth_explanation);
    }

    evalharness::GenerateOptions gen;
    gen.max_len = config.eval.max_len;
    gen.temperature = config.eval.temperature;
    gen.seed = config.seed;

    const fs::path dir = config.out_dir / "eval";
    std::vector<evalharness::MetricReport> reports;
    auto run = [&](const std::string& name, const policy::PolicyParameters& policy) {
        const auto generated = evalharness::generate(policy, prompts, gen);
        reports.push_back(evalharness::evaluate(generated, references, name));
        std::string lines;
        for (std::size_t i = 0; i < generated.size(); ++i) {
            ojson j;
            j["id"] = test[i].id;
            j["generated"] = generated[i];
            j["reference"] = references[i];
            lines += j.dump() + "\n";
        }
        write_file(dir / ("generations_" + name + ".jsonl"), lines);
    };

    run("base", policy::new_policy(vocab));
    for (dpo::LossMode m : dpo::kAllModes) {
        const fs::path ckpt = train_dir(config, m) / "policy.json";
        if (fs::exists(ckpt)) run(std::string(dpo::to_string(m)), policy::load_checkpoint(ckpt));
    }

    auto rendered = evalharness::report_table(reports);
    write_file(dir / "report.txt", rendered.table);
    write_file(dir / "report.json", rendered.data.dump(2) + "\n");
    return rendered;
}

evalharness::RenderedReport demo(const RunConfig& config) {
    forge(config);
    for (dpo::LossMode m : dpo::kAllModes) {
        RunConfig c = config;
        c.train.loss.mode = m;
        train(c);
    }
    return evaluate(config);
}

GradCheckFixture make_gradcheck_fixture(std::uint64_t seed, std::size_t batch_size) {
    const policy::Vocabulary vocab({"a", "b"});
    Rng rng(trainer::derive_seed(seed, 7));
    GradCheckFixture f{
        policy::new_policy(vocab, policy::NoiseInit{0.5, trainer::derive_seed(seed, 1)}),
        policy::new_policy(vocab, policy::NoiseInit{0.5, trainer::derive_seed(seed, 2)}),
        {},
    };
    const policy::TokenId a = vocab.id("a");
    const auto random_tokens = [&](std::size_t min_len, std::size_t max_len) {
        std::vector<policy::TokenId> ids(min_len + rng.index(max_len - min_len + 1));
        for (auto& t : ids) t = a + static_cast<policy::TokenId>(rng.index(2));
        return ids;
    };
    for (std::size_t i = 0; i < batch_size; ++i) {
        dpo::EncodedPair p;
        p.prompt = random_tokens(1, 2);
        p.preferred = random_tokens(1, 3);
        do {
            p.rejected = random_tokens(1, 3);
        } while (p.rejected == p.preferred);
        p.preferred.push_back(policy::Vocabulary::kEosId);
        p.rejected.push_back(policy::Vocabulary::kEosId);
        p.s_w = rng.uniform();
        p.s_l = rng.uniform();
        p.v_effective = rng.uniform();
        f.batch.push_back(std::move(p));
    }
    return f;
}

} // namespace hindpo::pipeline
