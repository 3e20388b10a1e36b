#include "hindpo/error.hpp"
#include "hindpo/hin_dpo.hpp"
#include "hindpo/pipeline.hpp"
#include "hindpo/trainer.hpp"
#include "hindpo/welford.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace hindpo;
using namespace hindpo::dpo;

namespace {

LossConfig with_mode(LossMode m) {
    LossConfig c;
    c.mode = m;
    return c;
}

// softplus(-beta * s) in long double
long double loss_oracle(long double s, long double beta) { return std::log1p(std::exp(-beta * s)); }

long double two_pass_variance(std::span<const double> xs) {
    long double mean = 0.0L;
    for (double x : xs) mean += x;
    mean /= xs.size();
    long double ss = 0.0L;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return ss / (xs.size() - 1);
}

struct Draw {
    PairLogRatios r;
    double s_w, s_l, v_eff;
};

Draw random_draw(std::mt19937_64& gen) {
    std::uniform_real_distribution<double> ratio(-3.0, 3.0), unit(0.0, 1.0);
    return {{ratio(gen), ratio(gen)}, unit(gen), unit(gen), unit(gen)};
}

} // namespace

TEST_SUITE("score and loss") {
    TEST_CASE("mode names round trip") {
        for (LossMode m : kAllModes) CHECK(parse_loss_mode(to_string(m)) == m);
        CHECK_THROWS_AS(parse_loss_mode("ipo"), SchemaError);
    }

    TEST_CASE("worked score example") {
        const auto c = with_mode(LossMode::hin_dpo);
        const double v_eff = 1.0 - c.epsilon;
        const double s = preference_score({0.5, -0.5}, 0.5, 0.2, v_eff, c);
        CHECK(s == doctest::Approx(0.85).epsilon(1e-15));
        const long double want = loss_oracle(0.85L, 0.6L);
        CHECK(std::abs(hin_dpo_loss(s, c.beta) - static_cast<double>(want)) < 1e-15);
        CHECK(hin_dpo_loss(s, c.beta) == doctest::Approx(0.4703).epsilon(1e-4));
    }

    TEST_CASE("per-mode score formulas") {
        std::mt19937_64 gen(3);
        for (int i = 0; i < 200; ++i) {
            const auto d = random_draw(gen);
            const double scale = std::min(20.0, 1.0 / (d.v_eff + 0.05));
            const double wl = std::max(0.01, d.s_l);
            const double act = (1 + d.s_w) * d.r.r_w - wl * d.r.r_l;
            CHECK(preference_score(d.r, d.s_w, d.s_l, d.v_eff, with_mode(LossMode::dpo)) == d.r.r_w - d.r.r_l);
            CHECK(preference_score(d.r, d.s_w, d.s_l, d.v_eff, with_mode(LossMode::dpo_act)) ==
                  doctest::Approx(act).epsilon(1e-14));
            CHECK(preference_score(d.r, d.s_w, d.s_l, d.v_eff, with_mode(LossMode::dpo_fin)) ==
                  doctest::Approx((d.r.r_w - d.r.r_l) * scale).epsilon(1e-14));
            CHECK(preference_score(d.r, d.s_w, d.s_l, d.v_eff, with_mode(LossMode::hin_dpo)) ==
                  doctest::Approx(act * scale).epsilon(1e-14));
        }
    }

    TEST_CASE("reduces to standard DPO at s_w = 0, s_l = 1, v_eff + eps = 1") {
        std::mt19937_64 gen(11);
        std::uniform_real_distribution<double> ratio(-5.0, 5.0);
        const auto c = with_mode(LossMode::hin_dpo);
        for (int i = 0; i < 100; ++i) {
            const PairLogRatios r{ratio(gen), ratio(gen)};
            const double s = preference_score(r, 0.0, 1.0, 1.0 - c.epsilon, c);
            CHECK(hin_dpo_loss(s, c.beta) == standard_dpo_loss(r, c.beta));
        }
    }

    TEST_CASE("rejected weight floor") {
        CHECK(rejected_weight(0.001) == 0.01);
        CHECK(rejected_weight(0.0) == 0.01);
        CHECK(rejected_weight(0.3) == 0.3);
        const auto c = with_mode(LossMode::dpo_act);
        CHECK(preference_score({0.0, -1.0}, 0.0, 0.001, 0.0, c) == doctest::Approx(0.01));
    }

    TEST_CASE("reference loss values") {
        CHECK(hin_dpo_loss(0.0, 0.6) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
        CHECK(standard_dpo_loss({1.0, 0.0}, 0.6) == doctest::Approx(0.4375).epsilon(1e-4));
        CHECK(std::abs(standard_dpo_loss({1.0, 0.0}, 0.6) - static_cast<double>(loss_oracle(1.0L, 0.6L))) < 1e-15);
    }

    TEST_CASE("asymptotics") {
        CHECK(hin_dpo_loss(50.0, 1.0) == doctest::Approx(std::exp(-50.0)).epsilon(1e-12));
        CHECK(hin_dpo_loss(-50.0, 1.0) == doctest::Approx(50.0).epsilon(1e-15));
        CHECK(sigmoid(-800.0) == 0.0);
        CHECK(sigmoid(800.0) == 1.0);
        CHECK(softplus(800.0) == 800.0);
    }

    TEST_CASE("finite and positive over the working range") {
        for (double x = -700.0; x <= 700.0; x += 0.25) {
            const double l = hin_dpo_loss(x, 1.0);
            CHECK_FALSE(std::isnan(l));
            CHECK(l > 0.0);
            CHECK(std::isfinite(l));
        }
    }
}

TEST_SUITE("loss properties") {
    TEST_CASE("loss falls with r_w and rises with r_l in every mode") {
        std::mt19937_64 gen(19);
        std::uniform_real_distribution<double> step(0.01, 1.0);
        for (LossMode m : kAllModes) {
            const auto c = with_mode(m);
            for (int i = 0; i < 200; ++i) {
                const auto d = random_draw(gen);
                const double base = hin_dpo_loss(preference_score(d.r, d.s_w, d.s_l, d.v_eff, c), c.beta);
                const double up_w =
                    hin_dpo_loss(preference_score({d.r.r_w + step(gen), d.r.r_l}, d.s_w, d.s_l, d.v_eff, c), c.beta);
                const double up_l =
                    hin_dpo_loss(preference_score({d.r.r_w, d.r.r_l + step(gen)}, d.s_w, d.s_l, d.v_eff, c), c.beta);
                CHECK(up_w < base);
                CHECK(up_l > base);
            }
        }
    }

    TEST_CASE("with a positive weighted margin, higher variance never lowers the loss") {
        std::mt19937_64 gen(29);
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        for (LossMode m : {LossMode::dpo_fin, LossMode::hin_dpo}) {
            const auto c = with_mode(m);
            for (int i = 0; i < 500; ++i) {
                const auto d = random_draw(gen);
                const double act = uses_actuality(m) ? (1 + d.s_w) * d.r.r_w - rejected_weight(d.s_l) * d.r.r_l
                                                     : d.r.r_w - d.r.r_l;
                if (act <= 0) continue;
                const double v1 = unit(gen), v2 = unit(gen);
                const double lo = std::min(v1, v2), hi = std::max(v1, v2);
                const double at_lo = hin_dpo_loss(preference_score(d.r, d.s_w, d.s_l, lo, c), c.beta);
                const double at_hi = hin_dpo_loss(preference_score(d.r, d.s_w, d.s_l, hi, c), c.beta);
                CHECK(at_hi >= at_lo);
            }
        }
    }

    TEST_CASE("finesse scale is capped") {
        const LossConfig c;
        CHECK(finesse_scale(0.0, c) == 20.0);
        CHECK(finesse_scale(0.95, c) == doctest::Approx(1.0));
        CHECK(finesse_scale(0.2, c) == doctest::Approx(4.0));
    }

    TEST_CASE("config validation") {
        LossConfig c;
        CHECK_NOTHROW(c.validate());
        c.beta = 0.0;
        CHECK_THROWS_AS(c.validate(), SchemaError);
        c = {};
        c.epsilon = -1.0;
        CHECK_THROWS_AS(c.validate(), SchemaError);
        c = {};
        c.finesse_samples = 1;
        CHECK_THROWS_AS(c.validate(), SchemaError);
        c = {};
        c.scale_cap = 0.0;
        CHECK_THROWS_AS(c.validate(), SchemaError);
    }
}

TEST_SUITE("gradient") {
    TEST_CASE("coefficient is beta / 2 when the policy equals the reference") {
        using policy::Vocabulary;
        const auto vocab = Vocabulary({"A", "B"});
        const auto p = policy::new_policy(vocab);
        const EncodedPair pair{{2}, {2, Vocabulary::kEosId}, {3, Vocabulary::kEosId}, 0.0, 1.0, 0.95};
        const auto c = with_mode(LossMode::dpo);
        const auto out = loss_gradient(std::span(&pair, 1), p, p, c);
        CHECK(out.loss == doctest::Approx(std::log(2.0)));
        auto want = policy::grad_sequence_log_prob(p, pair.prompt, pair.preferred);
        want.add(policy::grad_sequence_log_prob(p, pair.prompt, pair.rejected), -1.0);
        for (policy::TokenId r = 0; r < 4; ++r) {
            for (policy::TokenId col = 0; col < 4; ++col) {
                CHECK(out.gradient.at(r, col) == doctest::Approx(-c.beta / 2 * want.at(r, col)).epsilon(1e-14));
            }
        }
    }

    TEST_CASE("matches finite differences in every mode") {
        for (LossMode m : kAllModes) {
            const auto c = with_mode(m);
            for (std::uint64_t seed = 0; seed < 10; ++seed) {
                const auto f = pipeline::make_gradcheck_fixture(seed);
                const auto report = trainer::gradcheck(f.policy, f.reference, f.batch, c);
                CHECK(report.parameters_checked > 0);
                CHECK(report.max_relative_error < pipeline::kGradCheckTolerance);
            }
        }
    }

    TEST_CASE("loss, margins and accuracy agree with per-pair evaluation") {
        const auto f = pipeline::make_gradcheck_fixture(4, 5);
        const auto c = with_mode(LossMode::hin_dpo);
        const auto out = loss_gradient(f.batch, f.policy, f.reference, c);
        double loss = 0, margin = 0, weighted = 0, acc = 0;
        for (const auto& p : f.batch) {
            const auto r = log_ratios(f.policy, f.reference, p);
            const double s = preference_score(r, p.s_w, p.s_l, p.v_effective, c);
            loss += hin_dpo_loss(s, c.beta);
            margin += c.beta * (r.r_w - r.r_l);
            weighted += c.beta * s;
            acc += r.r_w > r.r_l;
        }
        const double n = static_cast<double>(f.batch.size());
        CHECK(out.loss == doctest::Approx(loss / n).epsilon(1e-14));
        CHECK(out.mean_margin == doctest::Approx(margin / n).epsilon(1e-14));
        CHECK(out.mean_weighted_margin == doctest::Approx(weighted / n).epsilon(1e-14));
        CHECK(out.accuracy == doctest::Approx(acc / n));
        CHECK(batch_loss(f.batch, f.policy, f.reference, c) == doctest::Approx(out.loss).epsilon(1e-14));
    }

    TEST_CASE("a small step against the gradient lowers the loss") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto f = pipeline::make_gradcheck_fixture(100 + seed, 4);
            for (LossMode m : kAllModes) {
                const auto c = with_mode(m);
                const auto out = loss_gradient(f.batch, f.policy, f.reference, c);
                auto moved = f.policy;
                moved.apply_gradient(out.gradient, 1e-3);
                CHECK(batch_loss(f.batch, moved, f.reference, c) < out.loss);
            }
        }
    }

    TEST_CASE("empty batch is rejected") {
        const auto f = pipeline::make_gradcheck_fixture(1);
        CHECK_THROWS_AS(loss_gradient(std::span<const EncodedPair>{}, f.policy, f.reference, LossConfig{}), Error);
    }
}

TEST_SUITE("finesse") {
    TEST_CASE("sample variance of a small set") {
        const std::vector<double> xs = {0.1, 0.2, 0.3, 0.4, 0.5};
        CHECK(trainer::running_sample_variance(xs) == doctest::Approx(0.025).epsilon(1e-14));
        const std::vector<double> same(7, 0.37);
        CHECK(trainer::running_sample_variance(same) == 0.0);
        CHECK_THROWS_AS(trainer::welford_finalize(trainer::welford_update({}, 1.0)), Error);
    }

    TEST_CASE("stable for large offsets") {
        std::mt19937_64 gen(5);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        std::vector<double> xs(1000000);
        for (double& x : xs) x = 1e8 + u(gen);
        const long double want = two_pass_variance(xs);
        CHECK(std::abs(trainer::running_sample_variance(xs) - static_cast<double>(want)) / static_cast<double>(want) <
              1e-9);
    }

    TEST_CASE("K = 5 agrees with two-pass") {
        std::mt19937_64 gen(6);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int i = 0; i < 1000; ++i) {
            std::vector<double> xs(5);
            for (double& x : xs) x = u(gen);
            CHECK(std::abs(trainer::running_sample_variance(xs) - static_cast<double>(two_pass_variance(xs))) < 1e-12);
        }
    }

    TEST_CASE("normalization") {
        LossConfig c;
        CHECK(finesse_from_variance(0.025, c).v_effective == doctest::Approx(0.1));
        CHECK(finesse_from_variance(0.4, c).v_effective == 1.0);
        CHECK(finesse_from_variance(0.4, c).v == 0.4);
        c.normalize_variance = false;
        CHECK(finesse_from_variance(0.025, c).v_effective == 0.025);
    }

    TEST_CASE("near-zero temperature collapses the variance") {
        LossConfig c;
        c.finesse_temperature = 1e-6;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto f = pipeline::make_gradcheck_fixture(seed);
            Rng rng(seed);
            const auto est = compute_finesse(f.policy, f.batch[0].prompt, c, rng);
            CHECK(est.v == 0.0);
            CHECK(finesse_scale(est.v_effective, c) == doctest::Approx(1.0 / c.epsilon));
        }
    }

    TEST_CASE("uniform policy gives zero variance at any temperature") {
        const auto p = policy::new_policy(policy::Vocabulary({"A", "B"}));
        LossConfig c;
        Rng rng(3);
        const auto est = compute_finesse(p, policy::TokenIds{2}, c, rng);
        CHECK(est.v < 1e-30);
    }

    TEST_CASE("confidence is the geometric-mean token probability") {
        const auto p = policy::new_policy(policy::Vocabulary({"A", "B"}));
        const policy::TokenIds response = {2, 3, policy::Vocabulary::kEosId};
        CHECK(response_confidence(p, policy::TokenIds{}, response, 1.0) == doctest::Approx(0.25).epsilon(1e-15));
        CHECK_THROWS_AS(response_confidence(p, policy::TokenIds{}, policy::TokenIds{}, 1.0), Error);
    }
}
