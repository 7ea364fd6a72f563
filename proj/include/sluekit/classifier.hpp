#pragma once

#include "sluekit/metrics.hpp"
#include "sluekit/nertag.hpp"
#include "sluekit/rng.hpp"
#include "sluekit/tensor.hpp"

#include <array>
#include <map>
#include <optional>

namespace sluekit {

enum class ClassifierTask { Ner, Sa };

inline int classifier_n_classes(ClassifierTask task) {
    return task == ClassifierTask::Ner ? kNumEntityTags : kNumSentiments;
}

// Regularizer head: a fixed three-layer 2D CNN over the adapter output
// (treated as a one-channel pool_len x out_dim map), global average pooling,
// then a linear layer to the task classes.
struct ClassifierConfig {
    ClassifierTask task = ClassifierTask::Ner;
    int in_h = 32;   // adapter pool_len
    int in_w = 128;  // adapter out_dim

    static constexpr int kConvLayers = 3;
    static constexpr int kKernel = 3;
    static constexpr int kStride = 2;
    static constexpr int kPad = 1;
    static constexpr std::array<int, kConvLayers> kChannels = {8, 16, 32};
};

struct ClassifierParams {
    struct Conv {
        Tensor w;  // c_out x (c_in*3*3)
        Tensor b;  // 1 x c_out
    };
    std::array<Conv, ClassifierConfig::kConvLayers> conv;
    Tensor head_w;  // 32 x n_classes
    Tensor head_b;  // 1 x n_classes

    static ClassifierParams init(const ClassifierConfig& cfg, uint64_t seed);
};

// Per-utterance classification targets.
struct ClassTargets {
    ClassifierTask task;
    Mat ner_presence;   // 1 x 7 in {0,1} when task == Ner
    int sa_class = -1;  // class index when task == Sa
};

// Entry k is 1 iff any span with tag k exists.
ClassTargets ner_targets(const TaggedTranscript& t);
ClassTargets sa_targets(Sentiment s);

// w_k = (sum of all counts) / count_k; throws on a zero count.
Mat pos_weights(const std::map<EntityTag, long long>& train_counts);

Tensor classifier_forward(const Tensor& adapter_out, const ClassifierParams& params,
                          const ClassifierConfig& cfg);

// NER: mean over classes of weighted BCE-with-logits (weights required).
// SA: softmax cross-entropy against the one-hot class (weights forbidden).
Tensor classifier_loss(const Tensor& logits, const ClassTargets& targets,
                       const std::optional<Mat>& weights);

struct LossMixConfig {
    double alpha = 0.2;  // 0 = LM loss only, 1 = classifier loss only
};

// (1 - alpha) * l_llm + alpha * l_cls, exactly.
Tensor mix_loss(const Tensor& l_llm, const Tensor& l_cls, const LossMixConfig& mix);

}  // namespace sluekit
