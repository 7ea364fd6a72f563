#include "sluekit/model.hpp"

#include "helpers.hpp"
#include "sluekit/mel.hpp"

#include <doctest.h>

#include <cmath>

using namespace sluekit;
using sluekit::testing::grad_check;
using sluekit::testing::random_mat;

namespace {

// A small model config that keeps the tests quick.
ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.encoder = {1, 16, 2, 8};
    cfg.adapter = {6, 16, 24, 1e-5};
    cfg.decoder = {1, 24, 2, 160};
    cfg.lora = {false, 2, 2.0};
    cfg.mel.bands = 8;
    cfg.mel.max_frames = 32;
    cfg.mel.upsample = 2;
    return cfg;
}

}  // namespace

TEST_SUITE("tokenizer") {

TEST_CASE("markers and the sentiment separator are single tokens") {
    CharTokenizer tok;
    for (const auto& marker : all_markers()) {
        const auto ids = tok.encode(marker);
        REQUIRE(ids.size() == 1);
        CHECK(tok.piece(ids[0]) == marker);
    }
    CHECK(tok.encode(CharTokenizer::sentiment_sep()).size() == 1);
    CHECK(tok.piece_id("<pad>") == tok.pad_id());
    CHECK(tok.piece_id("<eos>") == tok.eos_id());
}

TEST_CASE("round trip through encode/decode") {
    CharTokenizer tok;
    const std::string text = "USER: Transcribe the speech. §P john §E!";
    CHECK(tok.decode(tok.encode(text)) == text);
    // Unknown bytes fall to <unk> and vanish on decode.
    const auto ids = tok.encode("a\tb");
    CHECK(tok.decode(ids) == "ab");
}

}  // TEST_SUITE

TEST_SUITE("model") {

TEST_CASE("encoder keeps T and is position sensitive") {
    SpeechLlm model(tiny_config(), 5);
    Rng rng(5);
    Mat mel = random_mat(12, 8, rng);
    Tensor out = model.encode_speech(mel);
    CHECK(out.rows() == 12);
    CHECK(out.cols() == 16);

    // Swap two frames: positional encoding must make the outputs differ
    // even at the untouched positions' values overall.
    Mat permuted = mel;
    permuted.row(0).swap(permuted.row(7));
    Tensor out2 = model.encode_speech(permuted);
    CHECK((out.value() - out2.value()).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("assemble: lengths, mask arithmetic, overflow") {
    SpeechLlm model(tiny_config(), 6);
    Rng rng(6);
    Tensor speech = Tensor::constant(random_mat(6, 24, rng));

    const auto inference = model.assemble(speech, "do it", std::nullopt, "u0");
    CHECK(inference.prefix_len == inference.embeddings.rows());
    for (int id : inference.next_ids) CHECK(id == -1);

    const std::string target = "hello";
    const auto training = model.assemble(speech, "do it", target, "u0");
    // USER: (6) + speech (6) + " do it ASSISTANT: " (18) + target+eos
    const int role_tokens = 6 + 1 + 5 + 12;
    CHECK(training.prefix_len == 6 + role_tokens);
    CHECK(training.embeddings.rows() == training.prefix_len + 5 + 1);
    int masked = 0;
    for (int id : training.next_ids) masked += (id >= 0);
    CHECK(masked == 5 + 1);  // k target tokens plus EOS
    CHECK(training.target_len == 5);

    const std::string long_target(400, 'a');
    CHECK_THROWS_WITH_AS(model.assemble(speech, "do it", long_target, "utt-long"),
                         doctest::Contains("utt-long"), std::invalid_argument);
}

TEST_CASE("lm loss closed forms") {
    const int v = 11;
    // Uniform logits: loss is ln V at every masked position.
    Tensor logits = Tensor::param(Mat::Zero(3, v));
    CHECK(lm_loss(logits, {4, -1, 7}).item() == doctest::Approx(std::log(static_cast<double>(v))));

    // One-hot with a 30 gap: essentially zero.
    Mat confident = Mat::Zero(2, v);
    confident(0, 3) = 30.0;
    confident(1, 5) = 30.0;
    CHECK(lm_loss(Tensor::param(confident), {3, 5}).item() <= 1e-8);

    // Duplicating the batch leaves the mean unchanged.
    Rng rng(9);
    Mat r = random_mat(2, v, rng, 2.0);
    Mat doubled(4, v);
    doubled << r, r;
    const double single = lm_loss(Tensor::param(r), {1, 2}).item();
    const double both = lm_loss(Tensor::param(doubled), {1, 2, 1, 2}).item();
    CHECK(std::abs(single - both) < 1e-12);
}

TEST_CASE("gradients flow through one encoder plus decoder layer") {
    ModelConfig cfg = tiny_config();
    SpeechLlm model(cfg, 7);
    Rng rng(7);
    const Mat mel = random_mat(10, 8, rng);

    auto fwd = [&] {
        Tensor enc = model.encode_speech(mel);
        Tensor ad = model.adapt(enc);
        auto assembled = model.assemble(ad, "go", std::string("abc"), "u1");
        Tensor logits = model.decode_logits(assembled.embeddings);
        return lm_loss(logits, assembled.next_ids);
    };
    std::vector<Tensor> checked = {
        model.params().at("encoder.l0.attn.wq"), model.params().at("encoder.l0.mlp.w1"),
        model.params().at("encoder.in.w"),       model.params().at("adapter.proj.w"),
        model.params().at("decoder.l0.attn.wv"), model.params().at("decoder.l0.mlp.w2"),
        model.params().at("decoder.embed"),      model.params().at("decoder.head.w"),
        model.params().at("encoder.l0.ln1.g"),   model.params().at("decoder.l0.ln2.b"),
    };
    auto res = grad_check(checked, fwd, 11, rng);
    CHECK(res.checked >= 100);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("plain inference forward matches the autodiff path") {
    ModelConfig cfg = tiny_config();
    SpeechLlm model(cfg, 8);
    Rng rng(8);
    const Mat mel = random_mat(14, 8, rng);
    const Mat plain = model.encode_adapt_infer(mel);
    const Tensor graph = model.adapt(model.encode_speech(mel));
    CHECK((plain - graph.value()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("transcribe respects the new-token budget") {
    ModelConfig cfg = tiny_config();
    SpeechLlm model(cfg, 9);
    MelFeature mel;
    Rng rng(9);
    mel.frames = random_mat(10, 8, rng);
    DecodeConfig decode;
    decode.beam = 1;
    decode.repetition_penalty = 1.0;
    decode.length_penalty = 0.0;
    decode.max_new_tokens = 4;
    const auto out = model.transcribe(mel, "go", decode);
    // At most 4 pieces; the longest piece is 6 bytes.
    CHECK(out.text.size() <= 24);
}

}  // TEST_SUITE

TEST_SUITE("lora") {

TEST_CASE("zero-init B makes LoRA a no-op") {
    ModelConfig cfg = tiny_config();
    cfg.lora.enabled = true;
    SpeechLlm with(cfg, 11);
    ModelConfig base_cfg = tiny_config();
    SpeechLlm without(base_cfg, 11);

    Rng rng(11);
    const Mat mel = random_mat(10, 8, rng);
    auto logits_for = [&](SpeechLlm& m) {
        Tensor enc = m.encode_speech(mel);
        Tensor ad = m.adapt(enc);
        auto assembled = m.assemble(ad, "go", std::string("ab"), "u");
        return m.decode_logits(assembled.embeddings).value();
    };
    CHECK((logits_for(with) - logits_for(without)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("merged and unmerged forwards agree once B is nonzero") {
    ModelConfig cfg = tiny_config();
    cfg.lora.enabled = true;
    SpeechLlm model(cfg, 12);
    Rng rng(12);
    // Perturb the LoRA halves, then compare the graph path (unmerged, W and
    // BA kept separate) with the inference path (weights folded).
    for (const auto& [name, t] : model.params().items()) {
        if (name.rfind("lora.", 0) == 0) {
            const_cast<Tensor&>(t).value() += random_mat(t.rows(), t.cols(), rng, 0.05);
        }
    }
    MelFeature mel;
    mel.frames = random_mat(10, 8, rng);

    Tensor enc = model.encode_speech(mel.frames);
    Tensor ad = model.adapt(enc);
    auto assembled = model.assemble(ad, "go", std::nullopt, "u");
    const Mat graph_logits = model.decode_logits(assembled.embeddings).value();
    const Mat folded_logits = model.decode_logits_infer(assembled.embeddings.value());
    CHECK((graph_logits - folded_logits).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("rank-saturated LoRA can represent an arbitrary perturbation") {
    // With rank = min(dims), solve BA = dW * rank / scale_alpha for a 4x4 case.
    Rng rng(13);
    const int d = 4;
    LoraConfig cfg{true, d, 8.0};
    Mat base = random_mat(d, d, rng);
    Mat dw = random_mat(d, d, rng);
    Mat a_val = random_mat(d, d, rng);  // invertible with probability 1
    Mat b_val = (dw * static_cast<double>(cfg.rank) / cfg.scale_alpha) * a_val.inverse();
    Tensor w = Tensor::constant(base);
    Tensor a = Tensor::constant(a_val);
    Tensor b = Tensor::constant(b_val);
    const Mat effective = lora_apply(w, a, b, cfg).value();
    CHECK((effective - (base + dw)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("rank larger than the base dimensions is rejected") {
    Rng rng(14);
    LoraConfig cfg{true, 5, 5.0};
    Tensor w = Tensor::constant(random_mat(4, 4, rng));
    Tensor a = Tensor::constant(random_mat(5, 4, rng));
    Tensor b = Tensor::constant(random_mat(4, 5, rng));
    CHECK_THROWS(lora_apply(w, a, b, cfg));
}

}  // TEST_SUITE
