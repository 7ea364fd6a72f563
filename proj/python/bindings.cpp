#include "sluekit/adapter.hpp"
#include "sluekit/classifier.hpp"
#include "sluekit/mel.hpp"
#include "sluekit/metrics.hpp"
#include "sluekit/nertag.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace sluekit;

namespace {

// Pair multisets cross the boundary as {(tag, phrase): count} dicts.
PairCounts pairs_from_dict(const py::dict& d) {
    PairCounts out;
    for (const auto& item : d) {
        const auto key = item.first.cast<py::tuple>();
        out[{tag_from_name(key[0].cast<std::string>()), key[1].cast<std::string>()}] =
            item.second.cast<int>();
    }
    return out;
}

py::dict pairs_to_dict(const PairCounts& counts) {
    py::dict out;
    for (const auto& [key, n] : counts) {
        out[py::make_tuple(tag_name(key.first), key.second)] = n;
    }
    return out;
}

std::vector<PairCounts> corpus_from_list(const py::list& corpus) {
    std::vector<PairCounts> out;
    for (const auto& item : corpus) out.push_back(pairs_from_dict(item.cast<py::dict>()));
    return out;
}

py::dict prf_to_dict(const PRF& prf) {
    py::dict out;
    out["precision"] = prf.precision;
    out["recall"] = prf.recall;
    out["f1"] = prf.f1;
    return out;
}

std::vector<Sentiment> sentiments_from_list(const py::list& names) {
    std::vector<Sentiment> out;
    for (const auto& n : names) out.push_back(sentiment_from_name(n.cast<std::string>()));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "speech-LLM toolkit core operations";

    // --- tagged-transcript codec ---
    py::class_<EntitySpan>(m, "EntitySpan")
        .def(py::init([](const std::string& tag, const std::string& phrase, int order) {
                 return EntitySpan{tag_from_name(tag), phrase, order};
             }),
             py::arg("tag"), py::arg("phrase"), py::arg("order_index") = 0)
        .def_property_readonly("tag", [](const EntitySpan& s) { return tag_name(s.tag); })
        .def_readonly("phrase", &EntitySpan::phrase)
        .def_readonly("order_index", &EntitySpan::order_index)
        .def("__repr__", [](const EntitySpan& s) {
            return "EntitySpan(" + tag_name(s.tag) + ", '" + s.phrase + "')";
        });

    py::class_<TaggedTranscript>(m, "TaggedTranscript")
        .def(py::init<>())
        .def(py::init([](const std::string& text, const std::vector<EntitySpan>& spans) {
                 return TaggedTranscript{text, spans};
             }),
             py::arg("plain_text"), py::arg("spans") = std::vector<EntitySpan>{})
        .def_readwrite("plain_text", &TaggedTranscript::plain_text)
        .def_readwrite("spans", &TaggedTranscript::spans)
        .def("__eq__", [](const TaggedTranscript& a, const TaggedTranscript& b) { return a == b; });

    m.def("encode_tagged", &encode_tagged, py::arg("transcript"));
    m.def(
        "decode_tagged",
        [](const std::string& s, const std::string& mode) {
            return decode_tagged(s, mode == "strict" ? DecodeMode::Strict : DecodeMode::Lenient);
        },
        py::arg("text"), py::arg("mode") = "strict");
    m.def(
        "extract_pairs", [](const TaggedTranscript& t) { return pairs_to_dict(extract_pairs(t)); },
        py::arg("transcript"));
    m.def("entity_tags", [] {
        std::vector<std::string> names;
        for (EntityTag t : all_entity_tags()) names.push_back(tag_name(t));
        return names;
    });
    m.def("open_marker", [](const std::string& tag) { return open_marker(tag_from_name(tag)); });
    m.def("close_marker", [] { return close_marker(); });

    // --- metrics ---
    m.def("normalize_text", &normalize_text, py::arg("text"));
    m.def("wer", &wer, py::arg("ref"), py::arg("hyp"));
    m.def(
        "ner_micro_f1",
        [](const py::list& gold, const py::list& pred) {
            return prf_to_dict(ner_micro_f1(corpus_from_list(gold), corpus_from_list(pred)));
        },
        py::arg("gold"), py::arg("pred"));
    m.def(
        "ner_label_f1",
        [](const py::list& gold, const py::list& pred) {
            return prf_to_dict(ner_label_f1(corpus_from_list(gold), corpus_from_list(pred)));
        },
        py::arg("gold"), py::arg("pred"));
    m.def(
        "sa_macro_f1",
        [](const py::list& gold, const py::list& pred) {
            return sa_macro_f1(sentiments_from_list(gold), sentiments_from_list(pred));
        },
        py::arg("gold"), py::arg("pred"));
    m.def(
        "slue_score",
        [](double wer_vp, double wer_vc, double f1_ner, double f1_sa) {
            return slue_score({wer_vp, wer_vc, f1_ner, f1_sa});
        },
        py::arg("wer_asr_vp"), py::arg("wer_asr_vc"), py::arg("f1_ner_vp"), py::arg("f1_sa_vc"));

    // --- features ---
    py::class_<PseudoMelConfig>(m, "PseudoMelConfig")
        .def(py::init<>())
        .def_readwrite("bands", &PseudoMelConfig::bands)
        .def_readwrite("max_frames", &PseudoMelConfig::max_frames)
        .def_readwrite("upsample", &PseudoMelConfig::upsample)
        .def_readwrite("jitter", &PseudoMelConfig::jitter)
        .def_readwrite("char_seed", &PseudoMelConfig::char_seed);

    m.def(
        "text_to_pseudo_mel",
        [](const std::string& text, uint64_t seed, const PseudoMelConfig& cfg) {
            return text_to_pseudo_mel(text, seed, cfg).frames;
        },
        py::arg("transcript"), py::arg("seed"), py::arg("config") = PseudoMelConfig{});
    m.def(
        "speed_perturb",
        [](const Mat& frames, double factor) {
            MelFeature x;
            x.frames = frames;
            return speed_perturb(x, factor).frames;
        },
        py::arg("frames"), py::arg("factor"));
    m.def(
        "spec_augment",
        [](const Mat& frames, uint64_t seed, int num_freq_masks, int freq_mask_width,
           int num_time_masks, int time_mask_width) {
            MelFeature x;
            x.frames = frames;
            Rng rng(seed);
            return spec_augment(x, rng,
                                SpecAugmentConfig{num_freq_masks, freq_mask_width, num_time_masks,
                                                  time_mask_width})
                .frames;
        },
        py::arg("frames"), py::arg("seed"), py::arg("num_freq_masks") = 1,
        py::arg("freq_mask_width") = 4, py::arg("num_time_masks") = 1,
        py::arg("time_mask_width") = 6);

    // --- adapter and loss mixing ---
    m.def(
        "adaptive_avg_pool",
        [](const Mat& x, int out_len) {
            return adaptive_avg_pool_rows(Tensor::constant(x), out_len).value();
        },
        py::arg("x"), py::arg("out_len"));
    m.def(
        "adapter_forward",
        [](const Mat& x, int pool_len, int out_dim, uint64_t seed) {
            AdapterConfig cfg{pool_len, static_cast<int>(x.cols()), out_dim, 1e-5};
            const auto params = AdapterParams::init(cfg, seed);
            return adapter_forward(Tensor::constant(x), params, cfg).value();
        },
        py::arg("x"), py::arg("pool_len") = 32, py::arg("out_dim") = 128, py::arg("seed") = 1);
    m.def(
        "pos_weights",
        [](const py::dict& counts) {
            std::map<EntityTag, long long> by_tag;
            for (const auto& item : counts) {
                by_tag[tag_from_name(item.first.cast<std::string>())] =
                    item.second.cast<long long>();
            }
            const Mat w = pos_weights(by_tag);
            py::dict out;
            for (EntityTag t : all_entity_tags()) {
                out[py::str(tag_name(t))] = w(0, static_cast<int>(t));
            }
            return out;
        },
        py::arg("train_counts"));
    m.def(
        "mix_loss",
        [](double l_llm, double l_cls, double alpha) {
            return mix_loss(Tensor::scalar(l_llm), Tensor::scalar(l_cls), LossMixConfig{alpha})
                .item();
        },
        py::arg("l_llm"), py::arg("l_cls"), py::arg("alpha") = 0.2);
}
