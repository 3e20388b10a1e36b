#include "hindpo/pipeline.hpp"

#include <doctest.h>

#include <json.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int status = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string quote(const std::string& s) { return "'" + s + "'"; }

fs::path scratch(const std::string& name) {
    const auto p = fs::path(HINDPO_TEST_SCRATCH) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Runs the CLI with `cwd` as working directory; stdout and stderr are
// captured under <scratch>/io.
Outcome run(const fs::path& cwd, const std::string& args) {
    const auto io = fs::path(HINDPO_TEST_SCRATCH) / "io";
    fs::create_directories(io);
    const auto out = io / "stdout.txt";
    const auto err = io / "stderr.txt";
    const std::string cmd = "cd " + quote(cwd.string()) + " && " + quote(HINDPO_CLI_PATH) + " " + args + " >" +
                            quote(out.string()) + " 2>" + quote(err.string());
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

fs::path write_config(const fs::path& dir, const nlohmann::json& doc) {
    const auto p = dir / "run.json";
    std::ofstream(p) << doc.dump(2);
    return p;
}

nlohmann::json small_config(const fs::path& out_dir) {
    return {{"corpus", hindpo::pipeline::bundled_corpus().string()},
            {"out_dir", out_dir.string()},
            {"seed", 3},
            {"train", {{"epochs_per_stage", 2}, {"learning_rate", 0.5}}}};
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    if (!fs::exists(root)) return files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return files;
}

std::vector<std::string> manifest_buckets(const fs::path& manifest) {
    const auto j = nlohmann::json::parse(slurp(manifest));
    std::vector<std::string> out;
    for (const auto& s : j["stages"]) out.push_back(s["bucket"].get<std::string>());
    return out;
}

} // namespace

TEST_SUITE("cli") {
    TEST_CASE("usage errors exit nonzero with a message") {
        const auto cwd = scratch("usage");
        auto r = run(cwd, "");
        CHECK(r.status != 0);
        CHECK_FALSE(r.err.empty());
        r = run(cwd, "gradcheck --bogus");
        CHECK(r.status != 0);
        CHECK_FALSE(r.err.empty());
        r = run(cwd, "forge");
        CHECK(r.status != 0);
        CHECK(r.err.find("--config") != std::string::npos);
        r = run(cwd, "train --config missing.json");
        CHECK(r.status != 0);
        r = run(cwd, "gradcheck --mode ipo");
        CHECK(r.status != 0);
        CHECK(fs::is_empty(cwd));
    }

    TEST_CASE("gradcheck passes in every mode") {
        const auto cwd = scratch("gradcheck");
        for (const char* m : {"dpo", "dpo_act", "dpo_fin", "hin_dpo"}) {
            const auto r = run(cwd, std::string("gradcheck --mode ") + m);
            CHECK(r.status == 0);
            CHECK(r.out.find("PASS") != std::string::npos);
            CHECK(r.out.find(std::string("mode=") + m) != std::string::npos);
        }
        CHECK(fs::is_empty(cwd));
    }

    TEST_CASE("forge writes the stage manifest in the requested order") {
        const auto dir = scratch("forge");
        const auto out = dir / "out";
        write_config(dir, small_config(out));
        auto r = run(dir, "forge --config run.json --order algorithm1");
        REQUIRE(r.status == 0);
        CHECK(manifest_buckets(out / "forge" / "manifest.json") == std::vector<std::string>{"B_L", "B_M", "B_H"});
        CHECK(r.out.find("manifest.json") != std::string::npos);

        r = run(dir, "forge --config run.json --order section4");
        REQUIRE(r.status == 0);
        std::vector<std::string> want;
        for (auto b : hindpo::dataforge::stage_buckets(hindpo::dataforge::CurriculumOrder::section4)) {
            want.emplace_back(hindpo::dataforge::to_string(b));
        }
        CHECK(manifest_buckets(out / "forge" / "manifest.json") == want);
    }

    TEST_CASE("flags override file values") {
        const auto dir = scratch("override");
        write_config(dir, small_config(dir / "out"));
        REQUIRE(run(dir, "forge --config run.json --seed 11").status == 0);
        CHECK(nlohmann::json::parse(slurp(dir / "out" / "forge" / "manifest.json"))["seed"] == 11);
        REQUIRE(run(dir, "forge --config run.json --out other").status == 0);
        CHECK(fs::exists(dir / "other" / "forge" / "manifest.json"));
    }

    TEST_CASE("unknown or invalid config entries are rejected") {
        const auto dir = scratch("strict");
        auto doc = small_config(dir / "out");
        doc["learning_rate"] = 0.1;
        write_config(dir, doc);
        auto r = run(dir, "forge --config run.json");
        CHECK(r.status != 0);
        CHECK(r.err.find("learning_rate") != std::string::npos);

        doc = small_config(dir / "out");
        doc["train"]["lr"] = 0.1;
        write_config(dir, doc);
        CHECK(run(dir, "forge --config run.json").status != 0);

        doc = small_config(dir / "out");
        doc["split"] = {{"train", 0.7}, {"val", 0.1}, {"test", 0.1}};
        write_config(dir, doc);
        CHECK(run(dir, "forge --config run.json").status != 0);

        doc = small_config(dir / "out");
        doc["loss"] = {{"mode", "ipo"}};
        write_config(dir, doc);
        CHECK(run(dir, "forge --config run.json").status != 0);

        std::ofstream(dir / "run.json") << "{ not json";
        CHECK(run(dir, "forge --config run.json").status != 0);
        CHECK_FALSE(fs::exists(dir / "out"));
    }

    TEST_CASE("forge, train and eval are idempotent and stay inside out_dir") {
        const auto root = scratch("pipeline");
        const auto cwd = root / "cwd";
        const auto cfg_dir = root / "cfg";
        const auto out = root / "out";
        fs::create_directories(cwd);
        fs::create_directories(cfg_dir);
        write_config(cfg_dir, small_config(out));
        const std::string config = "--config " + quote((cfg_dir / "run.json").string());

        std::map<std::string, std::string> first;
        for (int pass = 0; pass < 2; ++pass) {
            REQUIRE(run(cwd, "forge " + config).status == 0);
            for (const char* m : {"dpo", "hin_dpo"}) {
                const auto r = run(cwd, "train " + config + " --mode " + m);
                REQUIRE(r.status == 0);
                CHECK(r.out.find(std::string("mode=") + m) != std::string::npos);
            }
            const auto r = run(cwd, "eval " + config);
            REQUIRE(r.status == 0);
            CHECK(r.out.find("hin_dpo") != std::string::npos);
            const auto tree = snapshot_tree(out);
            if (pass == 0) {
                first = tree;
            } else {
                CHECK(tree == first);
            }
        }
        CHECK(first.count("forge/manifest.json") == 1);
        CHECK(first.count("train/hin_dpo/policy.json") == 1);
        CHECK(first.count("train/hin_dpo/trainlog.jsonl") == 1);
        CHECK(first.count("eval/report.txt") == 1);
        CHECK(first.count("eval/report.json") == 1);
        CHECK(fs::is_empty(cwd));
        CHECK(snapshot_tree(cfg_dir).size() == 1);
        std::vector<std::string> top;
        for (const auto& e : fs::directory_iterator(root)) top.push_back(e.path().filename().string());
        std::sort(top.begin(), top.end());
        CHECK(top == std::vector<std::string>{"cfg", "cwd", "out"});
    }

    TEST_CASE("train before forge fails cleanly") {
        const auto dir = scratch("noforge");
        write_config(dir, small_config(dir / "out"));
        const auto r = run(dir, "train --config run.json");
        CHECK(r.status != 0);
        CHECK_FALSE(r.err.empty());
    }

    TEST_CASE("demo with the same seed reproduces every artifact") {
        const auto cwd = scratch("demo");
        REQUIRE(run(cwd, "demo --seed 7 --out a").status == 0);
        const auto a = snapshot_tree(cwd / "a");
        const auto first_table = run(cwd, "demo --seed 7 --out b");
        REQUIRE(first_table.status == 0);
        const auto b = snapshot_tree(cwd / "b");
        CHECK(a == b);
        CHECK(a.count("train/hin_dpo/policy.json") == 1);
        CHECK(a.at("eval/report.txt") == first_table.out);
        std::vector<std::string> top;
        for (const auto& e : fs::directory_iterator(cwd)) top.push_back(e.path().filename().string());
        std::sort(top.begin(), top.end());
        CHECK(top == std::vector<std::string>{"a", "b"});
    }
}
