#include "hindpo/error.hpp"
#include "hindpo/evalharness.hpp"
#include "hindpo/trainer.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

using namespace hindpo;
using namespace hindpo::evalharness;

namespace {

std::vector<std::string> separable_prompts(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("p" + std::to_string(i));
    return out;
}

trainer::TrainResult train_separable(dpo::LossMode mode, int epochs = 10) {
    auto corpus = trainer::make_separable_corpus(50, 1.0, 0.01);
    auto c = trainer::TrainConfig::toy_preset();
    c.loss.mode = mode;
    c.seed = 5;
    c.epochs_per_stage = epochs;
    const std::vector<trainer::TrainStage> st = {corpus.stage};
    return trainer::train(st, policy::new_policy(corpus.vocab), c);
}

MetricReport make_report(std::string name, double r1, double r2, double rl, double mt, double sem) {
    MetricReport r;
    r.config_name = std::move(name);
    r.r1 = r1;
    r.r2 = r2;
    r.rl = rl;
    r.meteor = mt;
    r.semantic = sem;
    return r;
}

std::size_t count_stars(const std::string& line) { return static_cast<std::size_t>(std::count(line.begin(), line.end(), '*')); }

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start < text.size()) {
        const auto end = text.find('\n', start);
        out.push_back(text.substr(start, end - start));
        start = end == std::string::npos ? text.size() : end + 1;
    }
    return out;
}

} // namespace

TEST_SUITE("generate") {
    TEST_CASE("trained separable policy continues with A") {
        const auto r = train_separable(dpo::LossMode::dpo);
        const auto prompts = separable_prompts(50);
        const auto out = generate(r.policy, prompts, {.max_len = 4});
        std::size_t hits = 0;
        for (const auto& text : out) hits += text.rfind("A", 0) == 0;
        CHECK(hits >= 48);
    }

    TEST_CASE("empty prompt list") {
        const auto p = policy::new_policy(policy::Vocabulary({"A"}));
        CHECK(generate(p, std::vector<std::string>{}).empty());
    }

    TEST_CASE("seeded sampling is repeatable") {
        const auto r = train_separable(dpo::LossMode::dpo, 1);
        const auto prompts = separable_prompts(20);
        const GenerateOptions o{.max_len = 6, .temperature = 1.0, .seed = 42};
        CHECK(generate(r.policy, prompts, o) == generate(r.policy, prompts, o));
        CHECK(generate(r.policy, prompts) == generate(r.policy, prompts));
    }

    TEST_CASE("unknown prompt tokens are rejected") {
        const auto p = policy::new_policy(policy::Vocabulary({"A"}));
        CHECK_THROWS_AS(generate(p, std::vector<std::string>{"zzz"}), VocabularyError);
    }

    TEST_CASE("output has no sequence markers") {
        const auto p = policy::new_policy(policy::Vocabulary({"a", "b"}), policy::NoiseInit{1.0, 3});
        const auto out = generate(p, std::vector<std::string>(10, "a b"), {.max_len = 8, .temperature = 1.0, .seed = 1});
        for (const auto& t : out) {
            CHECK(t.find("<s>") == std::string::npos);
            CHECK(t.find("</s>") == std::string::npos);
        }
    }
}

TEST_SUITE("evaluate") {
    TEST_CASE("identity") {
        const std::vector<std::string> refs = {"यह दावा झूठा है ।", "the claim is false", "एक दो तीन चार"};
        const auto r = evaluate(refs, refs, "id");
        CHECK(r.r1 == 1.0);
        CHECK(r.r2 == 1.0);
        CHECK(r.rl == 1.0);
        CHECK(r.semantic == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(r.meteor > 0.9);
        CHECK(r.pairs == 3);
        CHECK(r.config_name == "id");
    }

    TEST_CASE("disjoint tokens") {
        const std::vector<std::string> gen = {"aaa bbb", "सच खबर"};
        const std::vector<std::string> ref = {"xyz qrs", "झूठा दावा"};
        const auto r = evaluate(gen, ref);
        CHECK(r.r1 == 0.0);
        CHECK(r.r2 == 0.0);
        CHECK(r.rl == 0.0);
        CHECK(r.meteor == 0.0);
    }

    TEST_CASE("three-pair ROUGE-L mean") {
        // LCS 3 of 4/3 -> F1 6/7; LCS 2 of 2/3 -> F1 4/5; nothing shared -> 0
        const std::vector<std::string> gen = {"a b c d", "x y", "p q"};
        const std::vector<std::string> ref = {"a c d", "x z y", "r s"};
        const auto r = evaluate(gen, ref);
        CHECK(r.rl == doctest::Approx((6.0 / 7.0 + 0.8 + 0.0) / 3.0).epsilon(1e-15));
        CHECK(r.r1 == doctest::Approx((6.0 / 7.0 + 0.8 + 0.0) / 3.0).epsilon(1e-15));
    }

    TEST_CASE("means of per-pair scores") {
        const std::vector<std::string> gen = {"यह खबर सच है", "दावा गलत है और भ्रामक", "कुछ नहीं"};
        const std::vector<std::string> ref = {"यह खबर सही है", "यह दावा झूठा है", "सब कुछ ठीक"};
        const auto all = evaluate(gen, ref);
        double r1 = 0, r2 = 0, rl = 0, mt = 0, sem = 0;
        for (std::size_t i = 0; i < gen.size(); ++i) {
            const auto one = evaluate(std::span(&gen[i], 1), std::span(&ref[i], 1));
            r1 += one.r1;
            r2 += one.r2;
            rl += one.rl;
            mt += one.meteor;
            sem += one.semantic;
        }
        CHECK(all.r1 == doctest::Approx(r1 / 3).epsilon(1e-15));
        CHECK(all.r2 == doctest::Approx(r2 / 3).epsilon(1e-15));
        CHECK(all.rl == doctest::Approx(rl / 3).epsilon(1e-15));
        CHECK(all.meteor == doctest::Approx(mt / 3).epsilon(1e-15));
        CHECK(all.semantic == doctest::Approx(sem / 3).epsilon(1e-15));
    }

    TEST_CASE("permutation invariance") {
        const std::vector<std::string> words = {"यह", "दावा", "खबर", "सच", "झूठा", "है", "नहीं", "the", "claim", "।"};
        std::mt19937_64 gen(8);
        for (int trial = 0; trial < 20; ++trial) {
            std::vector<std::string> g, r;
            for (int i = 0; i < 8; ++i) {
                std::string a, b;
                for (int k = 0; k < 1 + static_cast<int>(gen() % 6); ++k) a += words[gen() % words.size()] + " ";
                for (int k = 0; k < 1 + static_cast<int>(gen() % 6); ++k) b += words[gen() % words.size()] + " ";
                g.push_back(a);
                r.push_back(b);
            }
            const auto base = evaluate(g, r);
            std::vector<std::size_t> idx(g.size());
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            std::shuffle(idx.begin(), idx.end(), gen);
            std::vector<std::string> g2, r2;
            for (auto i : idx) {
                g2.push_back(g[i]);
                r2.push_back(r[i]);
            }
            const auto perm = evaluate(g2, r2);
            CHECK(perm.r1 == doctest::Approx(base.r1).epsilon(1e-14));
            CHECK(perm.r2 == doctest::Approx(base.r2).epsilon(1e-14));
            CHECK(perm.rl == doctest::Approx(base.rl).epsilon(1e-14));
            CHECK(perm.meteor == doctest::Approx(base.meteor).epsilon(1e-14));
            CHECK(perm.semantic == doctest::Approx(base.semantic).epsilon(1e-14));
        }
    }

    TEST_CASE("length mismatch") {
        const std::vector<std::string> a = {"x"}, b = {"x", "y"};
        CHECK_THROWS_AS(evaluate(a, b), Error);
    }
}

TEST_SUITE("report table") {
    TEST_CASE("single row marks every cell") {
        const std::vector<MetricReport> rs = {make_report("dpo", 0.1, 0.2, 0.3, 0.4, 0.5)};
        const auto out = report_table(rs);
        const auto lines = lines_of(out.table);
        REQUIRE(lines.size() == 2);
        CHECK(count_stars(lines[1]) == 5);
        CHECK(lines[1].find("10.00*") != std::string::npos);
        CHECK(out.data["dpo"]["r1"].get<double>() == 0.1);
    }

    TEST_CASE("per-column best marking") {
        const std::vector<MetricReport> rs = {make_report("hin_dpo", 0.30, 0.10, 0.50, 0.20, 0.90),
                                              make_report("base", 0.20, 0.40, 0.50, 0.10, 0.95)};
        const auto lines = lines_of(report_table(rs).table);
        REQUIRE(lines.size() == 3);
        CHECK(lines[1].rfind("base", 0) == 0);
        CHECK(lines[2].rfind("hin_dpo", 0) == 0);
        CHECK(lines[1].find("40.00*") != std::string::npos);
        CHECK(lines[1].find("95.00*") != std::string::npos);
        CHECK(lines[1].find("20.00 ") != std::string::npos);
        CHECK(lines[2].find("30.00*") != std::string::npos);
        CHECK(lines[2].find("20.00*") != std::string::npos);
        // tie on R-L: both marked
        CHECK(lines[1].find("50.00*") != std::string::npos);
        CHECK(lines[2].find("50.00*") != std::string::npos);
        CHECK(count_stars(lines[1]) == 3);
        CHECK(count_stars(lines[2]) == 3);
    }

    TEST_CASE("rendered table parses back") {
        std::mt19937_64 gen(12);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int trial = 0; trial < 50; ++trial) {
            std::vector<MetricReport> rs;
            for (const char* name : {"base", "dpo", "dpo_act", "dpo_fin", "hin_dpo", "custom"}) {
                rs.push_back(make_report(name, u(gen), u(gen), u(gen), u(gen), u(gen)));
            }
            const auto parsed = parse_table(report_table(rs).table);
            REQUIRE(parsed.size() == rs.size());
            for (std::size_t i = 0; i < rs.size(); ++i) {
                CHECK(parsed[i].config_name == rs[i].config_name);
                CHECK(std::abs(parsed[i].r1 - rs[i].r1) <= 5e-5 + 1e-12);
                CHECK(std::abs(parsed[i].r2 - rs[i].r2) <= 5e-5 + 1e-12);
                CHECK(std::abs(parsed[i].rl - rs[i].rl) <= 5e-5 + 1e-12);
                CHECK(std::abs(parsed[i].meteor - rs[i].meteor) <= 5e-5 + 1e-12);
                CHECK(std::abs(parsed[i].semantic - rs[i].semantic) <= 5e-5 + 1e-12);
            }
            // a rendered, parsed and rendered again table is unchanged
            CHECK(report_table(parsed).table == report_table(rs).table);
        }
    }

    TEST_CASE("malformed tables") {
        CHECK_THROWS_AS(parse_table("Config R-1\nbase 1.0 2.0\n"), SchemaError);
        CHECK_THROWS_AS(parse_table("Config\nbase x y z w v\n"), SchemaError);
        CHECK_THROWS_AS(report_table(std::vector<MetricReport>{}), Error);
    }

    TEST_CASE("five-mode run yields the canonical row taxonomy") {
        const auto prompts = separable_prompts(10);
        const std::vector<std::string> refs(prompts.size(), "A");
        std::vector<MetricReport> rs;
        for (dpo::LossMode m : {dpo::LossMode::hin_dpo, dpo::LossMode::dpo_fin, dpo::LossMode::dpo,
                                dpo::LossMode::dpo_act}) {
            const auto r = train_separable(m, 3);
            rs.push_back(evaluate(generate(r.policy, prompts, {.max_len = 4}), refs, std::string(dpo::to_string(m))));
        }
        const auto base = policy::new_policy(trainer::make_separable_corpus(50).vocab, policy::NoiseInit{0.01, 0});
        rs.push_back(evaluate(generate(base, prompts, {.max_len = 4}), refs, "base"));

        const auto out = report_table(rs);
        const auto parsed = parse_table(out.table);
        std::vector<std::string> names;
        for (const auto& r : parsed) names.push_back(r.config_name);
        CHECK(names == std::vector<std::string>{"base", "dpo", "dpo_act", "dpo_fin", "hin_dpo"});
        std::vector<std::string> keys;
        for (const auto& [k, _] : out.data.items()) keys.push_back(k);
        CHECK(keys == names);
        CHECK(lines_of(out.table)[0].find("METEOR") != std::string::npos);
    }
}
