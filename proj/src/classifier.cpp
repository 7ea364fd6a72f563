#include "sluekit/classifier.hpp"

#include <cmath>
#include <stdexcept>

namespace sluekit {

namespace {

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    }
    return m;
}

}  // namespace

ClassifierParams ClassifierParams::init(const ClassifierConfig& cfg, uint64_t seed) {
    ClassifierParams p;
    int c_in = 1;
    for (int l = 0; l < ClassifierConfig::kConvLayers; ++l) {
        const int c_out = ClassifierConfig::kChannels[static_cast<size_t>(l)];
        const int fan_in = c_in * ClassifierConfig::kKernel * ClassifierConfig::kKernel;
        Rng rng(mix_seed(seed, "classifier.conv" + std::to_string(l)));
        p.conv[static_cast<size_t>(l)].w =
            Tensor::param(uniform_init(c_out, fan_in, 1.0 / std::sqrt(fan_in), rng));
        p.conv[static_cast<size_t>(l)].b = Tensor::param(Mat::Zero(1, c_out));
        c_in = c_out;
    }
    const int n = classifier_n_classes(cfg.task);
    Rng rng(mix_seed(seed, "classifier.head"));
    p.head_w = Tensor::param(uniform_init(c_in, n, 1.0 / std::sqrt(c_in), rng));
    p.head_b = Tensor::param(Mat::Zero(1, n));
    return p;
}

ClassTargets ner_targets(const TaggedTranscript& t) {
    ClassTargets out;
    out.task = ClassifierTask::Ner;
    out.ner_presence = Mat::Zero(1, kNumEntityTags);
    for (const auto& span : t.spans) {
        out.ner_presence(0, static_cast<int>(span.tag)) = 1.0;
    }
    return out;
}

ClassTargets sa_targets(Sentiment s) {
    ClassTargets out;
    out.task = ClassifierTask::Sa;
    out.sa_class = static_cast<int>(s);
    return out;
}

Mat pos_weights(const std::map<EntityTag, long long>& train_counts) {
    long long total = 0;
    for (EntityTag tag : all_entity_tags()) {
        auto it = train_counts.find(tag);
        const long long n = it == train_counts.end() ? 0 : it->second;
        if (n <= 0) {
            throw std::invalid_argument("classifier: zero train count for tag " + tag_name(tag));
        }
        total += n;
    }
    Mat w(1, kNumEntityTags);
    for (EntityTag tag : all_entity_tags()) {
        w(0, static_cast<int>(tag)) =
            static_cast<double>(total) / static_cast<double>(train_counts.at(tag));
    }
    return w;
}

Tensor classifier_forward(const Tensor& adapter_out, const ClassifierParams& params,
                          const ClassifierConfig& cfg) {
    if (adapter_out.rows() != cfg.in_h || adapter_out.cols() != cfg.in_w) {
        throw std::invalid_argument("classifier: input is " + std::to_string(adapter_out.rows()) +
                                    "x" + std::to_string(adapter_out.cols()) + ", expected " +
                                    std::to_string(cfg.in_h) + "x" + std::to_string(cfg.in_w));
    }
    Tensor x = adapter_out;
    int c_in = 1, h = cfg.in_h, w = cfg.in_w;
    for (int l = 0; l < ClassifierConfig::kConvLayers; ++l) {
        const int c_out = ClassifierConfig::kChannels[static_cast<size_t>(l)];
        x = relu(conv2d(x, c_in, h, w, params.conv[static_cast<size_t>(l)].w,
                        params.conv[static_cast<size_t>(l)].b, c_out, ClassifierConfig::kKernel,
                        ClassifierConfig::kKernel, ClassifierConfig::kStride,
                        ClassifierConfig::kPad));
        h = (h + 2 * ClassifierConfig::kPad - ClassifierConfig::kKernel) / ClassifierConfig::kStride + 1;
        w = (w + 2 * ClassifierConfig::kPad - ClassifierConfig::kKernel) / ClassifierConfig::kStride + 1;
        c_in = c_out;
    }
    Tensor pooled = global_avg_pool_2d(x, c_in, h, w);
    return add_rowvec(matmul(pooled, params.head_w), params.head_b);
}

Tensor classifier_loss(const Tensor& logits, const ClassTargets& targets,
                       const std::optional<Mat>& weights) {
    if (!logits.value().allFinite()) {
        throw std::invalid_argument("classifier: non-finite logits");
    }
    if (targets.task == ClassifierTask::Ner) {
        if (!weights) throw std::invalid_argument("classifier: NER loss requires pos weights");
        return bce_with_logits(logits, targets.ner_presence, *weights);
    }
    if (weights) throw std::invalid_argument("classifier: SA loss takes no weights");
    return softmax_cross_entropy(logits, targets.sa_class);
}

Tensor mix_loss(const Tensor& l_llm, const Tensor& l_cls, const LossMixConfig& mix) {
    if (mix.alpha < 0.0 || mix.alpha > 1.0) {
        throw std::invalid_argument("classifier: alpha must lie in [0, 1]");
    }
    if (!std::isfinite(l_llm.item()) || !std::isfinite(l_cls.item())) {
        throw std::invalid_argument("classifier: non-finite loss input");
    }
    return add_scaled(l_llm, 1.0 - mix.alpha, l_cls, mix.alpha);
}

}  // namespace sluekit
