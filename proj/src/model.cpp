#include "sluekit/model.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace sluekit {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kNegInf = -1e9;
const std::string kUserPrefix = "USER: ";
const std::string kAssistantInfix = " ASSISTANT: ";

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
    }
    return m;
}

Tensor linear_param(uint64_t seed, const std::string& name, int in, int out) {
    Rng rng(mix_seed(seed, name));
    return Tensor::param(uniform_init(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng));
}

Mat causal_mask(Eigen::Index len) {
    Mat m = Mat::Zero(len, len);
    for (Eigen::Index i = 0; i < len; ++i) {
        for (Eigen::Index j = i + 1; j < len; ++j) m(i, j) = kNegInf;
    }
    return m;
}

// Pre-norm multi-head self-attention block with optional LoRA on q/k/v.
Tensor mha(const Tensor& x, const AttentionParams& p, int heads, bool causal,
           const LoraTriple* lora, const LoraConfig& lora_cfg) {
    const int width = static_cast<int>(x.cols());
    const int hd = width / heads;

    Tensor wq = p.wq, wk = p.wk, wv = p.wv;
    if (lora) {
        wq = lora_apply(p.wq, lora->q_a, lora->q_b, lora_cfg);
        wk = lora_apply(p.wk, lora->k_a, lora->k_b, lora_cfg);
        wv = lora_apply(p.wv, lora->v_a, lora->v_b, lora_cfg);
    }
    Tensor q = add_rowvec(matmul(x, wq), p.bq);
    Tensor k = add_rowvec(matmul(x, wk), p.bk);
    Tensor v = add_rowvec(matmul(x, wv), p.bv);

    const double inv = 1.0 / std::sqrt(static_cast<double>(hd));
    const Mat mask = causal ? causal_mask(x.rows()) : Mat();
    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(q, h * hd, hd);
        Tensor kh = slice_cols(k, h * hd, hd);
        Tensor vh = slice_cols(v, h * hd, hd);
        Tensor scores = scale(matmul_nt(qh, kh), inv);
        if (causal) scores = add_const(scores, mask);
        head_outs.push_back(matmul(softmax_rows(scores), vh));
    }
    Tensor o = concat_cols(head_outs);
    return add_rowvec(matmul(o, p.wo), p.bo);
}

Tensor transformer_layer(const Tensor& x_in, const TransformerLayerParams& lp, int heads,
                         bool causal, const LoraTriple* lora, const LoraConfig& lora_cfg) {
    Tensor h = layer_norm_rows(x_in, lp.ln1_g, lp.ln1_b, kLnEps);
    Tensor x = add(x_in, mha(h, lp.attn, heads, causal, lora, lora_cfg));
    Tensor h2 = layer_norm_rows(x, lp.ln2_g, lp.ln2_b, kLnEps);
    Tensor m = relu(add_rowvec(matmul(h2, lp.mlp_w1), lp.mlp_b1));
    m = add_rowvec(matmul(m, lp.mlp_w2), lp.mlp_b2);
    return add(x, m);
}

TransformerLayerParams make_layer(uint64_t seed, const std::string& prefix, int width) {
    TransformerLayerParams lp;
    lp.ln1_g = Tensor::param(Mat::Ones(1, width));
    lp.ln1_b = Tensor::param(Mat::Zero(1, width));
    lp.ln2_g = Tensor::param(Mat::Ones(1, width));
    lp.ln2_b = Tensor::param(Mat::Zero(1, width));
    lp.attn.wq = linear_param(seed, prefix + ".attn.wq", width, width);
    lp.attn.wk = linear_param(seed, prefix + ".attn.wk", width, width);
    lp.attn.wv = linear_param(seed, prefix + ".attn.wv", width, width);
    lp.attn.wo = linear_param(seed, prefix + ".attn.wo", width, width);
    lp.attn.bq = Tensor::param(Mat::Zero(1, width));
    lp.attn.bk = Tensor::param(Mat::Zero(1, width));
    lp.attn.bv = Tensor::param(Mat::Zero(1, width));
    lp.attn.bo = Tensor::param(Mat::Zero(1, width));
    lp.mlp_w1 = linear_param(seed, prefix + ".mlp.w1", width, 4 * width);
    lp.mlp_b1 = Tensor::param(Mat::Zero(1, 4 * width));
    lp.mlp_w2 = linear_param(seed, prefix + ".mlp.w2", 4 * width, width);
    lp.mlp_b2 = Tensor::param(Mat::Zero(1, width));
    return lp;
}

void register_layer(ParamRegistry& reg, const std::string& prefix, const TransformerLayerParams& lp) {
    reg.add(prefix + ".ln1.g", lp.ln1_g);
    reg.add(prefix + ".ln1.b", lp.ln1_b);
    reg.add(prefix + ".attn.wq", lp.attn.wq);
    reg.add(prefix + ".attn.bq", lp.attn.bq);
    reg.add(prefix + ".attn.wk", lp.attn.wk);
    reg.add(prefix + ".attn.bk", lp.attn.bk);
    reg.add(prefix + ".attn.wv", lp.attn.wv);
    reg.add(prefix + ".attn.bv", lp.attn.bv);
    reg.add(prefix + ".attn.wo", lp.attn.wo);
    reg.add(prefix + ".attn.bo", lp.attn.bo);
    reg.add(prefix + ".ln2.g", lp.ln2_g);
    reg.add(prefix + ".ln2.b", lp.ln2_b);
    reg.add(prefix + ".mlp.w1", lp.mlp_w1);
    reg.add(prefix + ".mlp.b1", lp.mlp_b1);
    reg.add(prefix + ".mlp.w2", lp.mlp_w2);
    reg.add(prefix + ".mlp.b2", lp.mlp_b2);
}

}  // namespace

const std::string& task_name(Task t) {
    static const std::array<std::string, 3> names = {"ASR", "NER", "SA"};
    return names[static_cast<size_t>(t)];
}

Task task_from_name(const std::string& s) {
    if (s == "ASR") return Task::Asr;
    if (s == "NER") return Task::Ner;
    if (s == "SA") return Task::Sa;
    throw std::invalid_argument("model: unknown task name: " + s);
}

const std::string& ModelConfig::prompt_for(Task t) const {
    switch (t) {
        case Task::Asr: return prompt_asr;
        case Task::Ner: return prompt_ner;
        default: return prompt_sa;
    }
}

void ModelConfig::validate() const {
    if (encoder.width % encoder.heads != 0) {
        throw std::invalid_argument("model: encoder width not divisible by heads");
    }
    if (decoder.width % decoder.heads != 0) {
        throw std::invalid_argument("model: decoder width not divisible by heads");
    }
    if (adapter.in_dim != encoder.width) {
        throw std::invalid_argument("model: adapter in_dim must equal encoder width");
    }
    if (adapter.out_dim != decoder.width) {
        throw std::invalid_argument("model: adapter out_dim must equal decoder width");
    }
    if (mel.bands != encoder.feat_dim) {
        throw std::invalid_argument("model: mel bands must equal encoder feat_dim");
    }
    if (lora.rank < 1) throw std::invalid_argument("model: lora rank must be >= 1");
    if (lora.enabled && lora.rank > decoder.width) {
        throw std::invalid_argument("model: lora rank exceeds attention width");
    }
}

void ParamRegistry::add(const std::string& name, const Tensor& t) {
    if (index_.count(name)) throw std::logic_error("registry: duplicate parameter " + name);
    index_[name] = items_.size();
    items_.emplace_back(name, t);
}

const Tensor& ParamRegistry::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("registry: no parameter " + name);
    return items_[it->second].second;
}

bool ParamRegistry::has(const std::string& name) const { return index_.count(name) != 0; }

void ParamRegistry::zero_grads() {
    for (auto& [name, t] : items_) t.zero_grad();
}

Tensor lora_apply(const Tensor& base_w, const Tensor& a, const Tensor& b, const LoraConfig& cfg) {
    const auto rank = a.rows();
    if (b.cols() != rank) throw std::invalid_argument("lora: A/B rank mismatch");
    if (b.rows() != base_w.rows() || a.cols() != base_w.cols()) {
        throw std::invalid_argument("lora: A/B shapes do not match the base matrix");
    }
    if (rank > std::min(base_w.rows(), base_w.cols())) {
        throw std::invalid_argument("lora: rank exceeds base matrix dimensions");
    }
    return add(base_w, scale(matmul(b, a), cfg.scale_alpha / static_cast<double>(cfg.rank)));
}

Tensor lm_loss(const Tensor& logits, const std::vector<int>& next_ids) {
    return masked_cross_entropy(logits, next_ids);
}

Mat sinusoidal_positional_encoding(int len, int dim) {
    Mat pe(len, dim);
    const int half = dim / 2;
    for (int pos = 0; pos < len; ++pos) {
        for (int i = 0; i < half; ++i) {
            const double div = std::exp(-std::log(10000.0) * (2.0 * i) / dim);
            pe(pos, 2 * i) = std::sin(pos * div);
            pe(pos, 2 * i + 1) = std::cos(pos * div);
        }
        if (dim % 2 == 1) pe(pos, dim - 1) = 0.0;
    }
    return pe;
}

SpeechLlm::SpeechLlm(const ModelConfig& cfg, uint64_t seed)
    : cfg_(cfg),
      adapter_(AdapterParams::init(cfg.adapter, mix_seed(seed, "adapter"))),
      classifier_ner_(ClassifierParams::init(
          ClassifierConfig{ClassifierTask::Ner, cfg.adapter.pool_len, cfg.adapter.out_dim},
          mix_seed(seed, "classifier_ner"))),
      classifier_sa_(ClassifierParams::init(
          ClassifierConfig{ClassifierTask::Sa, cfg.adapter.pool_len, cfg.adapter.out_dim},
          mix_seed(seed, "classifier_sa"))) {
    cfg_.validate();

    enc_in_w_ = linear_param(seed, "encoder.in.w", cfg_.encoder.feat_dim, cfg_.encoder.width);
    enc_in_b_ = Tensor::param(Mat::Zero(1, cfg_.encoder.width));
    for (int l = 0; l < cfg_.encoder.layers; ++l) {
        enc_layers_.push_back(make_layer(seed, "encoder.l" + std::to_string(l), cfg_.encoder.width));
    }
    enc_final_g_ = Tensor::param(Mat::Ones(1, cfg_.encoder.width));
    enc_final_b_ = Tensor::param(Mat::Zero(1, cfg_.encoder.width));

    {
        Rng rng(mix_seed(seed, "decoder.embed"));
        embed_ = Tensor::param(
            uniform_init(tokenizer_.vocab_size(), cfg_.decoder.width, 0.1, rng));
    }
    for (int l = 0; l < cfg_.decoder.layers; ++l) {
        dec_layers_.push_back(make_layer(seed, "decoder.l" + std::to_string(l), cfg_.decoder.width));
    }
    dec_final_g_ = Tensor::param(Mat::Ones(1, cfg_.decoder.width));
    dec_final_b_ = Tensor::param(Mat::Zero(1, cfg_.decoder.width));
    head_w_ = linear_param(seed, "decoder.head.w", cfg_.decoder.width, tokenizer_.vocab_size());
    head_b_ = Tensor::param(Mat::Zero(1, tokenizer_.vocab_size()));

    if (cfg_.lora.enabled) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.decoder.width));
        for (int l = 0; l < cfg_.decoder.layers; ++l) {
            LoraTriple t;
            const std::string prefix = "lora.l" + std::to_string(l);
            Rng rng(mix_seed(seed, prefix));
            auto make_pair = [&](Tensor& a, Tensor& b) {
                a = Tensor::param(uniform_init(cfg_.lora.rank, cfg_.decoder.width, bound, rng));
                b = Tensor::param(Mat::Zero(cfg_.decoder.width, cfg_.lora.rank));
            };
            make_pair(t.q_a, t.q_b);
            make_pair(t.k_a, t.k_b);
            make_pair(t.v_a, t.v_b);
            lora_.push_back(t);
        }
    }

    // Registration order fixes the checkpoint tensor order.
    registry_.add("encoder.in.w", enc_in_w_);
    registry_.add("encoder.in.b", enc_in_b_);
    for (int l = 0; l < cfg_.encoder.layers; ++l) {
        register_layer(registry_, "encoder.l" + std::to_string(l), enc_layers_[static_cast<size_t>(l)]);
    }
    registry_.add("encoder.final_ln.g", enc_final_g_);
    registry_.add("encoder.final_ln.b", enc_final_b_);

    registry_.add("adapter.ln.g", adapter_.ln_gain);
    registry_.add("adapter.ln.b", adapter_.ln_bias);
    registry_.add("adapter.proj.w", adapter_.proj_w);
    registry_.add("adapter.proj.b", adapter_.proj_b);

    registry_.add("decoder.embed", embed_);
    for (int l = 0; l < cfg_.decoder.layers; ++l) {
        register_layer(registry_, "decoder.l" + std::to_string(l), dec_layers_[static_cast<size_t>(l)]);
    }
    registry_.add("decoder.final_ln.g", dec_final_g_);
    registry_.add("decoder.final_ln.b", dec_final_b_);
    registry_.add("decoder.head.w", head_w_);
    registry_.add("decoder.head.b", head_b_);

    for (size_t l = 0; l < lora_.size(); ++l) {
        const std::string prefix = "lora.l" + std::to_string(l);
        registry_.add(prefix + ".q.a", lora_[l].q_a);
        registry_.add(prefix + ".q.b", lora_[l].q_b);
        registry_.add(prefix + ".k.a", lora_[l].k_a);
        registry_.add(prefix + ".k.b", lora_[l].k_b);
        registry_.add(prefix + ".v.a", lora_[l].v_a);
        registry_.add(prefix + ".v.b", lora_[l].v_b);
    }

    for (int c = 0; c < ClassifierConfig::kConvLayers; ++c) {
        registry_.add("classifier_ner.conv" + std::to_string(c) + ".w",
                      classifier_ner_.conv[static_cast<size_t>(c)].w);
        registry_.add("classifier_ner.conv" + std::to_string(c) + ".b",
                      classifier_ner_.conv[static_cast<size_t>(c)].b);
    }
    registry_.add("classifier_ner.head.w", classifier_ner_.head_w);
    registry_.add("classifier_ner.head.b", classifier_ner_.head_b);
    for (int c = 0; c < ClassifierConfig::kConvLayers; ++c) {
        registry_.add("classifier_sa.conv" + std::to_string(c) + ".w",
                      classifier_sa_.conv[static_cast<size_t>(c)].w);
        registry_.add("classifier_sa.conv" + std::to_string(c) + ".b",
                      classifier_sa_.conv[static_cast<size_t>(c)].b);
    }
    registry_.add("classifier_sa.head.w", classifier_sa_.head_w);
    registry_.add("classifier_sa.head.b", classifier_sa_.head_b);

    enc_pe_ = sinusoidal_positional_encoding(cfg_.mel.max_frames, cfg_.encoder.width);
    dec_pe_ = sinusoidal_positional_encoding(cfg_.decoder.max_seq, cfg_.decoder.width);
}

Tensor SpeechLlm::encode_speech(const Mat& mel) const {
    if (mel.cols() != cfg_.encoder.feat_dim) {
        throw std::invalid_argument("model: mel width does not match encoder feat_dim");
    }
    if (mel.rows() > enc_pe_.rows()) {
        throw std::invalid_argument("model: mel longer than max_frames");
    }
    Tensor x = add_rowvec(matmul(Tensor::constant(mel), enc_in_w_), enc_in_b_);
    x = add_const(x, enc_pe_.topRows(mel.rows()));
    for (const auto& lp : enc_layers_) {
        x = transformer_layer(x, lp, cfg_.encoder.heads, false, nullptr, cfg_.lora);
    }
    return layer_norm_rows(x, enc_final_g_, enc_final_b_, kLnEps);
}

Tensor SpeechLlm::adapt(const Tensor& encoded) const {
    return adapter_forward(encoded, adapter_, cfg_.adapter);
}

AssembledInput SpeechLlm::assemble(const Tensor& speech_emb, const std::string& prompt,
                                   const std::optional<std::string>& target,
                                   const std::string& utt_id) const {
    const auto pre_ids = tokenizer_.encode(kUserPrefix);
    const auto mid_ids = tokenizer_.encode(" " + prompt + kAssistantInfix);
    std::vector<int> tgt_ids;
    if (target) {
        tgt_ids = tokenizer_.encode(*target);
        tgt_ids.push_back(tokenizer_.eos_id());
    }

    const int prefix_len = static_cast<int>(pre_ids.size()) + static_cast<int>(speech_emb.rows()) +
                           static_cast<int>(mid_ids.size());
    const int total = prefix_len + static_cast<int>(tgt_ids.size());
    if (total > cfg_.decoder.max_seq) {
        throw std::invalid_argument("model: assembled input for utterance \"" + utt_id +
                                    "\" is " + std::to_string(total) + " tokens, max_seq is " +
                                    std::to_string(cfg_.decoder.max_seq));
    }

    std::vector<Tensor> parts;
    parts.push_back(rows_gather(embed_, pre_ids));
    parts.push_back(speech_emb);
    parts.push_back(rows_gather(embed_, mid_ids));
    if (!tgt_ids.empty()) parts.push_back(rows_gather(embed_, tgt_ids));

    AssembledInput out;
    out.embeddings = add_const(concat_rows(parts), dec_pe_.topRows(total));
    out.prefix_len = prefix_len;
    out.target_len = target ? static_cast<int>(tgt_ids.size()) - 1 : 0;
    out.next_ids.assign(static_cast<size_t>(total), -1);
    for (size_t j = 0; j < tgt_ids.size(); ++j) {
        out.next_ids[static_cast<size_t>(prefix_len) - 1 + j] = tgt_ids[j];
    }
    return out;
}

Tensor SpeechLlm::decode_logits(const Tensor& embeddings) const {
    if (embeddings.cols() != cfg_.decoder.width) {
        throw std::invalid_argument("model: embedding width does not match decoder width");
    }
    Tensor x = embeddings;
    for (size_t l = 0; l < dec_layers_.size(); ++l) {
        const LoraTriple* lora = cfg_.lora.enabled ? &lora_[l] : nullptr;
        x = transformer_layer(x, dec_layers_[l], cfg_.decoder.heads, true, lora, cfg_.lora);
    }
    x = layer_norm_rows(x, dec_final_g_, dec_final_b_, kLnEps);
    return add_rowvec(matmul(x, head_w_), head_b_);
}

Tensor SpeechLlm::classify(const Tensor& adapter_out, ClassifierTask task) const {
    const ClassifierConfig ccfg{task, cfg_.adapter.pool_len, cfg_.adapter.out_dim};
    return classifier_forward(adapter_out, classifier_params(task), ccfg);
}

// ---------------------------------------------------------------------------
// Plain inference path. LoRA is folded into effective weights once; decoding
// keeps per-layer K/V caches so each new token costs one row of work.
// ---------------------------------------------------------------------------

namespace {

Mat layer_norm_mat(const Mat& x, const Mat& g, const Mat& b, double eps) {
    Mat out(x.rows(), x.cols());
    const double d = static_cast<double>(x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mu = x.row(i).mean();
        Eigen::RowVectorXd c = x.row(i).array() - mu;
        const double var = c.squaredNorm() / d;
        out.row(i) = ((c.array() / std::sqrt(var + eps)) * g.row(0).array()) + b.row(0).array();
    }
    return out;
}

Eigen::RowVectorXd softmax_row(const Eigen::RowVectorXd& x) {
    const double m = x.maxCoeff();
    Eigen::RowVectorXd e = (x.array() - m).exp();
    return e / e.sum();
}

struct PlainLayer {
    Mat ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    Mat ln2_g, ln2_b, w1, b1, w2, b2;
};

}  // namespace

struct DecoderKvCache {
    std::vector<Mat> k, v;  // per layer, len x width
    Eigen::Index len = 0;
};

class DecoderInference {
public:
    explicit DecoderInference(const SpeechLlm& m) : heads_(m.cfg_.decoder.heads) {
        const double s = m.cfg_.lora.scale_alpha / static_cast<double>(m.cfg_.lora.rank);
        for (size_t l = 0; l < m.dec_layers_.size(); ++l) {
            const auto& lp = m.dec_layers_[l];
            PlainLayer pl;
            pl.ln1_g = lp.ln1_g.value();
            pl.ln1_b = lp.ln1_b.value();
            pl.wq = lp.attn.wq.value();
            pl.wk = lp.attn.wk.value();
            pl.wv = lp.attn.wv.value();
            if (m.cfg_.lora.enabled) {
                const auto& lt = m.lora_[l];
                pl.wq += s * (lt.q_b.value() * lt.q_a.value());
                pl.wk += s * (lt.k_b.value() * lt.k_a.value());
                pl.wv += s * (lt.v_b.value() * lt.v_a.value());
            }
            pl.bq = lp.attn.bq.value();
            pl.bk = lp.attn.bk.value();
            pl.bv = lp.attn.bv.value();
            pl.wo = lp.attn.wo.value();
            pl.bo = lp.attn.bo.value();
            pl.ln2_g = lp.ln2_g.value();
            pl.ln2_b = lp.ln2_b.value();
            pl.w1 = lp.mlp_w1.value();
            pl.b1 = lp.mlp_b1.value();
            pl.w2 = lp.mlp_w2.value();
            pl.b2 = lp.mlp_b2.value();
            layers_.push_back(std::move(pl));
        }
        final_g_ = m.dec_final_g_.value();
        final_b_ = m.dec_final_b_.value();
        head_w_ = m.head_w_.value();
        head_b_ = m.head_b_.value();
        width_ = m.cfg_.decoder.width;
    }

    // Full causal forward; fills the cache and returns all logits rows.
    Mat prefill(const Mat& emb, DecoderKvCache& cache) const {
        const Eigen::Index L = emb.rows();
        const int hd = width_ / heads_;
        const double inv = 1.0 / std::sqrt(static_cast<double>(hd));
        cache.k.assign(layers_.size(), Mat());
        cache.v.assign(layers_.size(), Mat());
        cache.len = L;

        Mat x = emb;
        for (size_t l = 0; l < layers_.size(); ++l) {
            const auto& pl = layers_[l];
            Mat h = layer_norm_mat(x, pl.ln1_g, pl.ln1_b, kLnEps);
            Mat q = (h * pl.wq).rowwise() + Eigen::RowVectorXd(pl.bq.row(0));
            Mat k = (h * pl.wk).rowwise() + Eigen::RowVectorXd(pl.bk.row(0));
            Mat v = (h * pl.wv).rowwise() + Eigen::RowVectorXd(pl.bv.row(0));
            cache.k[l] = k;
            cache.v[l] = v;

            Mat attn_out(L, width_);
            for (int hh = 0; hh < heads_; ++hh) {
                const auto qh = q.middleCols(hh * hd, hd);
                const auto kh = k.middleCols(hh * hd, hd);
                const auto vh = v.middleCols(hh * hd, hd);
                for (Eigen::Index i = 0; i < L; ++i) {
                    Eigen::RowVectorXd scores =
                        (qh.row(i) * kh.topRows(i + 1).transpose()) * inv;
                    attn_out.block(i, hh * hd, 1, hd) = softmax_row(scores) * vh.topRows(i + 1);
                }
            }
            x += ((attn_out * pl.wo).rowwise() + Eigen::RowVectorXd(pl.bo.row(0)));
            Mat h2 = layer_norm_mat(x, pl.ln2_g, pl.ln2_b, kLnEps);
            Mat mid = ((h2 * pl.w1).rowwise() + Eigen::RowVectorXd(pl.b1.row(0))).cwiseMax(0.0);
            x += ((mid * pl.w2).rowwise() + Eigen::RowVectorXd(pl.b2.row(0)));
        }
        Mat out = layer_norm_mat(x, final_g_, final_b_, kLnEps);
        return (out * head_w_).rowwise() + Eigen::RowVectorXd(head_b_.row(0));
    }

    // One token step against the cache; returns the logits row.
    Eigen::RowVectorXd step(const Eigen::RowVectorXd& emb_row, DecoderKvCache& cache) const {
        const int hd = width_ / heads_;
        const double inv = 1.0 / std::sqrt(static_cast<double>(hd));
        Eigen::RowVectorXd x = emb_row;
        for (size_t l = 0; l < layers_.size(); ++l) {
            const auto& pl = layers_[l];
            Mat xm = x;
            Eigen::RowVectorXd h = layer_norm_mat(xm, pl.ln1_g, pl.ln1_b, kLnEps).row(0);
            Eigen::RowVectorXd q = h * pl.wq + Eigen::RowVectorXd(pl.bq.row(0));
            Eigen::RowVectorXd k = h * pl.wk + Eigen::RowVectorXd(pl.bk.row(0));
            Eigen::RowVectorXd v = h * pl.wv + Eigen::RowVectorXd(pl.bv.row(0));
            cache.k[l].conservativeResize(cache.len + 1, width_);
            cache.v[l].conservativeResize(cache.len + 1, width_);
            cache.k[l].row(cache.len) = k;
            cache.v[l].row(cache.len) = v;

            Eigen::RowVectorXd attn_out(width_);
            for (int hh = 0; hh < heads_; ++hh) {
                const auto kh = cache.k[l].middleCols(hh * hd, hd);
                const auto vh = cache.v[l].middleCols(hh * hd, hd);
                Eigen::RowVectorXd scores =
                    (q.middleCols(hh * hd, hd) * kh.topRows(cache.len + 1).transpose()) * inv;
                attn_out.middleCols(hh * hd, hd) = softmax_row(scores) * vh.topRows(cache.len + 1);
            }
            x += attn_out * pl.wo + Eigen::RowVectorXd(pl.bo.row(0));
            Mat xm2 = x;
            Eigen::RowVectorXd h2 = layer_norm_mat(xm2, pl.ln2_g, pl.ln2_b, kLnEps).row(0);
            Eigen::RowVectorXd mid =
                (h2 * pl.w1 + Eigen::RowVectorXd(pl.b1.row(0))).cwiseMax(0.0);
            x += mid * pl.w2 + Eigen::RowVectorXd(pl.b2.row(0));
        }
        cache.len += 1;
        Mat xm = x;
        Eigen::RowVectorXd out = layer_norm_mat(xm, final_g_, final_b_, kLnEps).row(0);
        return out * head_w_ + Eigen::RowVectorXd(head_b_.row(0));
    }

private:
    std::vector<PlainLayer> layers_;
    Mat final_g_, final_b_, head_w_, head_b_;
    int heads_;
    int width_;
};

Mat SpeechLlm::encode_adapt_infer(const Mat& mel) const {
    if (mel.cols() != cfg_.encoder.feat_dim) {
        throw std::invalid_argument("model: mel width does not match encoder feat_dim");
    }
    const int heads = cfg_.encoder.heads;
    const int hd = cfg_.encoder.width / heads;
    const double inv = 1.0 / std::sqrt(static_cast<double>(hd));

    Mat x = (mel * enc_in_w_.value()).rowwise() + Eigen::RowVectorXd(enc_in_b_.value().row(0));
    x += enc_pe_.topRows(mel.rows());
    for (const auto& lp : enc_layers_) {
        Mat h = layer_norm_mat(x, lp.ln1_g.value(), lp.ln1_b.value(), kLnEps);
        Mat q = (h * lp.attn.wq.value()).rowwise() + Eigen::RowVectorXd(lp.attn.bq.value().row(0));
        Mat k = (h * lp.attn.wk.value()).rowwise() + Eigen::RowVectorXd(lp.attn.bk.value().row(0));
        Mat v = (h * lp.attn.wv.value()).rowwise() + Eigen::RowVectorXd(lp.attn.bv.value().row(0));
        Mat attn_out(x.rows(), cfg_.encoder.width);
        for (int hh = 0; hh < heads; ++hh) {
            Mat scores = (q.middleCols(hh * hd, hd) * k.middleCols(hh * hd, hd).transpose()) * inv;
            for (Eigen::Index i = 0; i < scores.rows(); ++i) {
                attn_out.block(i, hh * hd, 1, hd) =
                    softmax_row(scores.row(i)) * v.middleCols(hh * hd, hd);
            }
        }
        x += (attn_out * lp.attn.wo.value()).rowwise() +
             Eigen::RowVectorXd(lp.attn.bo.value().row(0));
        Mat h2 = layer_norm_mat(x, lp.ln2_g.value(), lp.ln2_b.value(), kLnEps);
        Mat mid = ((h2 * lp.mlp_w1.value()).rowwise() +
                   Eigen::RowVectorXd(lp.mlp_b1.value().row(0)))
                      .cwiseMax(0.0);
        x += (mid * lp.mlp_w2.value()).rowwise() + Eigen::RowVectorXd(lp.mlp_b2.value().row(0));
    }
    x = layer_norm_mat(x, enc_final_g_.value(), enc_final_b_.value(), kLnEps);

    // Adapter: pool, normalize, project.
    Mat pooled(cfg_.adapter.pool_len, cfg_.adapter.in_dim);
    for (int i = 0; i < cfg_.adapter.pool_len; ++i) {
        Eigen::Index lo, hi;
        adaptive_pool_window(x.rows(), cfg_.adapter.pool_len, i, lo, hi);
        pooled.row(i) = x.middleRows(lo, hi - lo).colwise().mean();
    }
    Mat normed = layer_norm_mat(pooled, adapter_.ln_gain.value(), adapter_.ln_bias.value(),
                                cfg_.adapter.ln_eps);
    return (normed * adapter_.proj_w.value()).rowwise() +
           Eigen::RowVectorXd(adapter_.proj_b.value().row(0));
}

namespace {

// ScoringModel over the KV-cached decoder; caches per-hypothesis state so a
// beam step costs one incremental decode per live hypothesis.
class LmScorer : public ScoringModel {
public:
    LmScorer(const SpeechLlm& model, const Mat& prefix_emb, const Mat& embed_table, const Mat& pe)
        : model_(model),
          inf_(model),
          embed_(embed_table),
          pe_(pe),
          prefix_len_(static_cast<int>(prefix_emb.rows())) {
        base_logits_ = inf_.prefill(prefix_emb, base_).bottomRows(1).row(0);
    }

    int vocab_size() const override { return model_.tokenizer().vocab_size(); }
    int eos_id() const override { return model_.tokenizer().eos_id(); }

    Eigen::RowVectorXd next_logits(const std::vector<int>& generated) override {
        if (generated.empty()) return base_logits_;
        const int n = static_cast<int>(generated.size());
        if (n != cur_len_) {
            prev_ = std::move(cur_);
            cur_.clear();
            cur_len_ = n;
        }
        const int abs_pos = prefix_len_ + n - 1;
        if (abs_pos >= pe_.rows()) {
            throw std::runtime_error("decode: sequence exceeded max_seq during generation");
        }
        std::vector<int> parent(generated.begin(), generated.end() - 1);
        DecoderKvCache cache;
        auto it = prev_.find(parent);
        if (it != prev_.end()) {
            cache = it->second;
        } else {
            cache = base_;
            for (size_t j = 0; j + 1 < generated.size(); ++j) {
                inf_.step(embed_.row(generated[j]) + pe_.row(prefix_len_ + static_cast<int>(j)),
                          cache);
            }
        }
        Eigen::RowVectorXd logits =
            inf_.step(embed_.row(generated.back()) + pe_.row(abs_pos), cache);
        cur_[generated] = std::move(cache);
        return logits;
    }

private:
    const SpeechLlm& model_;
    DecoderInference inf_;
    Mat embed_;
    Mat pe_;
    int prefix_len_;
    DecoderKvCache base_;
    Eigen::RowVectorXd base_logits_;
    std::map<std::vector<int>, DecoderKvCache> prev_, cur_;
    int cur_len_ = -1;
};

}  // namespace

Mat SpeechLlm::decode_logits_infer(const Mat& embeddings) const {
    DecoderInference inf(*this);
    DecoderKvCache cache;
    return inf.prefill(embeddings, cache);
}

Transcription SpeechLlm::transcribe(const MelFeature& mel, const std::string& prompt,
                                    const DecodeConfig& cfg) const {
    const Mat adapter_out = encode_adapt_infer(mel.frames);

    const auto pre_ids = tokenizer_.encode(kUserPrefix);
    const auto mid_ids = tokenizer_.encode(" " + prompt + kAssistantInfix);
    const int prefix_len = static_cast<int>(pre_ids.size()) +
                           static_cast<int>(adapter_out.rows()) +
                           static_cast<int>(mid_ids.size());
    if (prefix_len >= cfg_.decoder.max_seq) {
        throw std::invalid_argument("model: prompt prefix alone exceeds max_seq");
    }
    Mat prefix(prefix_len, cfg_.decoder.width);
    Eigen::Index at = 0;
    for (int id : pre_ids) prefix.row(at++) = embed_.value().row(id);
    prefix.middleRows(at, adapter_out.rows()) = adapter_out;
    at += adapter_out.rows();
    for (int id : mid_ids) prefix.row(at++) = embed_.value().row(id);
    prefix += dec_pe_.topRows(prefix_len);

    DecodeConfig effective = cfg;
    effective.max_new_tokens =
        std::min(effective.max_new_tokens, cfg_.decoder.max_seq - prefix_len);

    LmScorer scorer(*this, prefix, embed_.value(), dec_pe_);
    const GenerationResult res = generate(scorer, effective);

    Transcription out;
    out.text = tokenizer_.decode(res.tokens);
    out.truncated = res.truncated;
    out.score = res.score;
    return out;
}

}  // namespace sluekit
