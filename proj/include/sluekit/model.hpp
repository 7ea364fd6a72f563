#pragma once

#include "sluekit/adapter.hpp"
#include "sluekit/classifier.hpp"
#include "sluekit/generate.hpp"
#include "sluekit/mel.hpp"
#include "sluekit/rng.hpp"
#include "sluekit/tensor.hpp"
#include "sluekit/tokenizer.hpp"

#include <array>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace sluekit {

enum class Task { Asr, Ner, Sa };
const std::string& task_name(Task t);       // "ASR", "NER", "SA"
Task task_from_name(const std::string& s);  // throws on unknown name

struct EncoderConfig {
    int layers = 2;
    int width = 64;
    int heads = 2;
    int feat_dim = 40;  // mel bands
};

struct DecoderConfig {
    int layers = 2;
    int width = 128;
    int heads = 4;
    int max_seq = 256;
};

struct LoraConfig {
    bool enabled = false;
    int rank = 4;              // paper-scale value is 32
    double scale_alpha = 4.0;  // effective scale is scale_alpha / rank
};

struct ModelConfig {
    EncoderConfig encoder;
    AdapterConfig adapter;
    DecoderConfig decoder;
    LoraConfig lora;
    PseudoMelConfig mel;
    std::string prompt_asr = "Transcribe the speech.";
    std::string prompt_ner = "Transcribe the speech and mark named entities.";
    std::string prompt_sa = "Transcribe the speech and state the sentiment.";

    const std::string& prompt_for(Task t) const;
    void validate() const;  // throws on inconsistent dimensions
};

// Named, insertion-ordered collection of trainable tensors.
class ParamRegistry {
public:
    void add(const std::string& name, const Tensor& t);
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;
    void zero_grads();

private:
    std::vector<std::pair<std::string, Tensor>> items_;
    std::map<std::string, size_t> index_;
};

// W + (scale_alpha / rank) * (B * A); A is rank x d (seeded), B is d x rank
// (zero at init so the adaptation starts as a no-op).
Tensor lora_apply(const Tensor& base_w, const Tensor& a, const Tensor& b, const LoraConfig& cfg);

// Mean token-level cross-entropy over the masked positions; next_ids[p] holds
// the token the logits at row p must predict, or -1 outside the mask.
Tensor lm_loss(const Tensor& logits, const std::vector<int>& next_ids);

Mat sinusoidal_positional_encoding(int len, int dim);

struct AttentionParams {
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct TransformerLayerParams {
    Tensor ln1_g, ln1_b;
    AttentionParams attn;
    Tensor ln2_g, ln2_b;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct LoraTriple {
    Tensor q_a, q_b, k_a, k_b, v_a, v_b;
};

// Decoder input: [USER: | speech | prompt ASSISTANT: | target+EOS] with
// positional encoding applied; next_ids marks the supervised positions.
struct AssembledInput {
    Tensor embeddings;         // L x decoder width
    std::vector<int> next_ids; // length L, -1 outside the loss mask
    int prefix_len = 0;        // length of the inference-form prefix
    int target_len = 0;        // ground-truth tokens, excluding EOS
};

struct Transcription {
    std::string text;
    bool truncated = false;
    double score = 0.0;
};

class SpeechLlm {
public:
    SpeechLlm(const ModelConfig& cfg, uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    const CharTokenizer& tokenizer() const { return tokenizer_; }
    ParamRegistry& params() { return registry_; }
    const ParamRegistry& params() const { return registry_; }

    // Autodiff forward path (training).
    Tensor encode_speech(const Mat& mel) const;
    Tensor adapt(const Tensor& encoded) const;
    AssembledInput assemble(const Tensor& speech_emb, const std::string& prompt,
                            const std::optional<std::string>& target,
                            const std::string& utt_id) const;
    Tensor decode_logits(const Tensor& embeddings) const;
    Tensor classify(const Tensor& adapter_out, ClassifierTask task) const;

    // Plain inference path (no graph, LoRA folded, KV-cached generation).
    Mat encode_adapt_infer(const Mat& mel) const;
    Mat decode_logits_infer(const Mat& embeddings) const;  // full causal forward
    Transcription transcribe(const MelFeature& mel, const std::string& prompt,
                             const DecodeConfig& cfg) const;

    const AdapterParams& adapter_params() const { return adapter_; }
    const ClassifierParams& classifier_params(ClassifierTask task) const {
        return task == ClassifierTask::Ner ? classifier_ner_ : classifier_sa_;
    }

private:
    ModelConfig cfg_;
    CharTokenizer tokenizer_;
    ParamRegistry registry_;

    Tensor enc_in_w_, enc_in_b_;
    std::vector<TransformerLayerParams> enc_layers_;
    Tensor enc_final_g_, enc_final_b_;

    AdapterParams adapter_;

    Tensor embed_;
    std::vector<TransformerLayerParams> dec_layers_;
    std::vector<LoraTriple> lora_;
    Tensor dec_final_g_, dec_final_b_;
    Tensor head_w_, head_b_;

    ClassifierParams classifier_ner_;
    ClassifierParams classifier_sa_;

    Mat enc_pe_;  // positional tables
    Mat dec_pe_;

    friend class DecoderInference;
};

}  // namespace sluekit
