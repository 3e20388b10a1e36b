#include "hindpo/error.hpp"
#include "hindpo/evalharness.hpp"
#include "hindpo/hin_dpo.hpp"
#include "hindpo/pipeline.hpp"
#include "hindpo/textmetrics.hpp"
#include "hindpo/trainer.hpp"
#include "hindpo/welford.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace hindpo;

namespace {

py::dict epoch_dict(const trainer::EpochRecord& e) {
    py::dict d;
    d["stage_index"] = e.stage_index;
    d["stage"] = e.stage;
    d["epoch"] = e.epoch;
    d["loss"] = e.loss;
    d["mean_margin"] = e.mean_margin;
    d["mean_weighted_margin"] = e.mean_weighted_margin;
    d["accuracy"] = e.accuracy;
    d["mean_v_effective"] = e.mean_v_effective;
    return d;
}

py::dict report_dict(const evalharness::MetricReport& r) {
    py::dict d;
    d["config_name"] = r.config_name;
    d["r1"] = r.r1;
    d["r2"] = r.r2;
    d["rl"] = r.rl;
    d["meteor"] = r.meteor;
    d["semantic"] = r.semantic;
    d["pairs"] = r.pairs;
    return d;
}

dpo::LossConfig loss_config(const std::string& mode, double beta, double epsilon) {
    dpo::LossConfig c;
    c.mode = dpo::parse_loss_mode(mode);
    c.beta = beta;
    c.epsilon = epsilon;
    c.validate();
    return c;
}

} // namespace

PYBIND11_MODULE(_hindpo, m) {
    m.doc() = "Hin-DPO preference alignment engine";

    auto base = py::register_exception<Error>(m, "HindpoError", PyExc_RuntimeError);
    py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
    py::register_exception<VocabularyError>(m, "VocabularyError", base.ptr());
    py::register_exception<ProviderError>(m, "ProviderError", base.ptr());

    // text metrics
    m.def("tokenize", [](const std::string& text) { return textmetrics::tokenize(text); }, py::arg("text"));
    m.def(
        "rouge_n",
        [](const textmetrics::TokenSequence& c, const textmetrics::TokenSequence& r, int n) {
            const auto s = textmetrics::rouge_n(c, r, n);
            return py::make_tuple(s.precision, s.recall, s.f1);
        },
        py::arg("candidate"), py::arg("reference"), py::arg("n"), "(precision, recall, f1)");
    m.def(
        "rouge_l",
        [](const textmetrics::TokenSequence& c, const textmetrics::TokenSequence& r) {
            const auto s = textmetrics::rouge_l(c, r);
            return py::make_tuple(s.precision, s.recall, s.f1);
        },
        py::arg("candidate"), py::arg("reference"), "(precision, recall, f1)");
    m.def("lcs_length", &textmetrics::lcs_length, py::arg("a"), py::arg("b"));
    m.def("meteor", &textmetrics::meteor, py::arg("candidate"), py::arg("reference"));
    m.def(
        "semantic_score",
        [](const std::string& c, const std::string& r) { return textmetrics::semantic_score(c, r); },
        py::arg("candidate"), py::arg("reference"));
    m.def("final_score", &textmetrics::final_score, py::arg("semantic"), py::arg("rouge_l_f1"),
          py::arg("meteor"));

    // loss
    m.def(
        "preference_score",
        [](double r_w, double r_l, double s_w, double s_l, double v_effective, const std::string& mode, double beta,
           double epsilon) {
            return dpo::preference_score({r_w, r_l}, s_w, s_l, v_effective, loss_config(mode, beta, epsilon));
        },
        py::arg("r_w"), py::arg("r_l"), py::arg("s_w"), py::arg("s_l"), py::arg("v_effective"),
        py::arg("mode") = "hin_dpo", py::arg("beta") = 0.6, py::arg("epsilon") = 0.05);
    m.def("hin_dpo_loss", &dpo::hin_dpo_loss, py::arg("score"), py::arg("beta") = 0.6);
    m.def(
        "standard_dpo_loss", [](double r_w, double r_l, double beta) { return dpo::standard_dpo_loss({r_w, r_l}, beta); },
        py::arg("r_w"), py::arg("r_l"), py::arg("beta") = 0.6);
    m.def(
        "finesse_scale",
        [](double v_effective, double epsilon) { return dpo::finesse_scale(v_effective, loss_config("hin_dpo", 0.6, epsilon)); },
        py::arg("v_effective"), py::arg("epsilon") = 0.05);
    m.def(
        "sample_variance", [](const std::vector<double>& xs) { return trainer::running_sample_variance(xs); },
        py::arg("values"), "Single-pass sample variance (K - 1 denominator).");

    // policy
    py::class_<policy::PolicyParameters>(m, "Policy")
        .def(py::init([](const std::vector<std::string>& tokens, double noise_std, std::uint64_t seed) {
                 std::optional<policy::NoiseInit> noise;
                 if (noise_std > 0.0) noise = policy::NoiseInit{noise_std, seed};
                 return policy::new_policy(policy::Vocabulary(tokens), noise);
             }),
             py::arg("tokens"), py::arg("noise_std") = 0.0, py::arg("seed") = 0)
        .def_property_readonly("vocab", [](const policy::PolicyParameters& p) { return p.vocab().tokens(); })
        .def_property_readonly("dim", &policy::PolicyParameters::dim)
        .def("logits",
             [](const policy::PolicyParameters& p) {
                 return std::vector<double>(p.logits().begin(), p.logits().end());
             })
        .def("softmax_row", &policy::PolicyParameters::softmax_row, py::arg("prev"), py::arg("temperature") = 1.0)
        .def(
            "sequence_log_prob",
            [](const policy::PolicyParameters& p, const std::string& prompt, const std::string& response) {
                const auto& v = p.vocab();
                return policy::sequence_log_prob(p, v.encode(textmetrics::tokenize(prompt)),
                                                 v.encode_response(textmetrics::tokenize(response)));
            },
            py::arg("prompt"), py::arg("response"), "Response gets </s> appended.")
        .def(
            "generate",
            [](const policy::PolicyParameters& p, const std::vector<std::string>& prompts, std::size_t max_len,
               double temperature, std::uint64_t seed) {
                return evalharness::generate(p, prompts, {max_len, temperature, seed});
            },
            py::arg("prompts"), py::arg("max_len") = 48, py::arg("temperature") = 0.0, py::arg("seed") = 0)
        .def("to_json", [](const policy::PolicyParameters& p) { return policy::checkpoint_to_string(p); })
        .def_static("from_json", [](const std::string& s) { return policy::checkpoint_from_string(s); });

    // training and checks
    m.def(
        "gradcheck",
        [](const std::string& mode, std::uint64_t seed) {
            const auto f = pipeline::make_gradcheck_fixture(seed);
            const auto r = trainer::gradcheck(f.policy, f.reference, f.batch, loss_config(mode, 0.6, 0.05));
            py::dict d;
            d["max_relative_error"] = r.max_relative_error;
            d["max_absolute_error"] = r.max_absolute_error;
            d["parameters_checked"] = r.parameters_checked;
            d["passed"] = r.max_relative_error < pipeline::kGradCheckTolerance;
            return d;
        },
        py::arg("mode") = "hin_dpo", py::arg("seed") = 0);
    m.def(
        "train_separable",
        [](const std::string& mode, std::size_t n_pairs, double s_w, double s_l, int epochs, std::uint64_t seed) {
            auto corpus = trainer::make_separable_corpus(n_pairs, s_w, s_l);
            auto c = trainer::TrainConfig::toy_preset();
            c.loss = loss_config(mode, c.loss.beta, c.loss.epsilon);
            c.epochs_per_stage = epochs;
            c.seed = seed;
            const std::vector<trainer::TrainStage> stages = {corpus.stage};
            auto result = trainer::train(stages, policy::new_policy(corpus.vocab), c);
            py::list epochs_out;
            for (const auto& e : result.log.epochs) epochs_out.append(epoch_dict(e));
            return py::make_tuple(std::move(result.policy), epochs_out);
        },
        py::arg("mode") = "hin_dpo", py::arg("n_pairs") = 50, py::arg("s_w") = 1.0, py::arg("s_l") = 0.01,
        py::arg("epochs") = 10, py::arg("seed") = 5, "Returns (policy, epoch records).");

    // evaluation and pipeline
    m.def(
        "evaluate",
        [](const std::vector<std::string>& generated, const std::vector<std::string>& references,
           const std::string& name) { return report_dict(evalharness::evaluate(generated, references, name)); },
        py::arg("generated"), py::arg("references"), py::arg("config_name") = "");
    m.def(
        "demo",
        [](std::uint64_t seed, const std::filesystem::path& out_dir) {
            pipeline::RunConfig c;
            c.corpus = pipeline::bundled_corpus();
            c.out_dir = out_dir;
            c.seed = seed;
            c.train.learning_rate = trainer::TrainConfig::toy_preset().learning_rate;
            c.validate();
            py::gil_scoped_release release;
            return pipeline::demo(c).table;
        },
        py::arg("seed"), py::arg("out_dir"), "Full pipeline on the bundled corpus; returns the report table.");
    m.def("bundled_corpus", &pipeline::bundled_corpus);
}
