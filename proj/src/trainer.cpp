#include "sluekit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace sluekit {

namespace {

std::string dir_of(const std::string& path) {
    return std::filesystem::path(path).parent_path().string();
}

Tensor average(const std::vector<Tensor>& xs) {
    Tensor acc = xs.front();
    for (size_t i = 1; i < xs.size(); ++i) acc = add(acc, xs[i]);
    return scale(acc, 1.0 / static_cast<double>(xs.size()));
}

MelFeature eval_feature(const SpeechLlm& model, const Utterance& utt, const std::string& base_dir) {
    return pad_or_trim(utterance_feature(utt, model.config().mel, base_dir),
                       model.config().mel.max_frames);
}

// Corpus WER: total edit distance over total reference length.
double corpus_wer(const SpeechLlm& model, const std::vector<Utterance>& utts,
                  const DecodeConfig& decode, const std::string& base_dir) {
    long long dist = 0, ref_len = 0;
    for (const auto& utt : utts) {
        const auto ref = normalize_text(utt.transcript);
        if (ref.empty()) continue;
        const auto hyp = model.transcribe(eval_feature(model, utt, base_dir),
                                          model.config().prompt_for(Task::Asr), decode);
        dist += edit_distance(ref, normalize_text(hyp.text));
        ref_len += static_cast<long long>(ref.size());
    }
    if (ref_len == 0) throw std::runtime_error("trainer: empty reference corpus for WER");
    return 100.0 * static_cast<double>(dist) / static_cast<double>(ref_len);
}

void ner_decode_corpus(const SpeechLlm& model, const std::vector<Utterance>& utts,
                       const DecodeConfig& decode, const std::string& base_dir,
                       std::vector<PairCounts>& gold, std::vector<PairCounts>& pred) {
    for (const auto& utt : utts) {
        if (!utt.tagged) continue;
        const auto hyp = model.transcribe(eval_feature(model, utt, base_dir),
                                          model.config().prompt_for(Task::Ner), decode);
        gold.push_back(extract_pairs(*utt.tagged));
        pred.push_back(extract_pairs(decode_tagged(hyp.text, DecodeMode::Lenient)));
    }
}

void sa_decode_corpus(const SpeechLlm& model, const std::vector<Utterance>& utts,
                      const DecodeConfig& decode, const std::string& base_dir,
                      std::vector<Sentiment>& gold, std::vector<Sentiment>& pred) {
    for (const auto& utt : utts) {
        if (!utt.sentiment) continue;
        const auto hyp = model.transcribe(eval_feature(model, utt, base_dir),
                                          model.config().prompt_for(Task::Sa), decode);
        gold.push_back(*utt.sentiment);
        pred.push_back(parse_sentiment_output(hyp.text));
    }
}

}  // namespace

const std::string& selection_metric_name(SelectionMetric m) {
    static const std::array<std::string, 3> names = {"WER", "micro_f1", "macro_f1"};
    return names[static_cast<size_t>(m)];
}

SelectionMetric selection_metric_from_name(const std::string& s) {
    if (s == "WER") return SelectionMetric::Wer;
    if (s == "micro_f1") return SelectionMetric::MicroF1;
    if (s == "macro_f1") return SelectionMetric::MacroF1;
    throw std::invalid_argument("trainer: unknown selection metric: " + s);
}

void StageConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("stage " + name + ": epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("stage " + name + ": batch_size must be >= 1");
    if (lr <= 0.0) throw std::invalid_argument("stage " + name + ": lr must be > 0");
    if (warmup_steps < 0) throw std::invalid_argument("stage " + name + ": warmup_steps < 0");
    if (tasks.empty()) throw std::invalid_argument("stage " + name + ": no tasks");
    if (regularizer.alpha < 0.0 || regularizer.alpha > 1.0) {
        throw std::invalid_argument("stage " + name + ": alpha must lie in [0, 1]");
    }
    auto has = [&](Task t) { return std::find(tasks.begin(), tasks.end(), t) != tasks.end(); };
    switch (selection_metric) {
        case SelectionMetric::Wer:
            if (!has(Task::Asr)) {
                throw std::invalid_argument("stage " + name + ": WER selection needs the ASR task");
            }
            break;
        case SelectionMetric::MicroF1:
            if (!has(Task::Ner)) {
                throw std::invalid_argument("stage " + name + ": micro_f1 selection needs the NER task");
            }
            break;
        case SelectionMetric::MacroF1:
            if (!has(Task::Sa)) {
                throw std::invalid_argument("stage " + name + ": macro_f1 selection needs the SA task");
            }
            break;
    }
}

double lr_at_step(double base_lr, long long step, long long warmup, long long total) {
    if (total < 1) throw std::invalid_argument("trainer: schedule needs total >= 1");
    step = std::clamp<long long>(step, 1, total);
    if (warmup > 0 && step <= warmup) {
        return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    if (total <= warmup) return base_lr;
    return base_lr * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

void AdaptiveOptimizer::step(const ParamRegistry& params, const std::set<std::string>& trainable,
                             double lr) {
    ++t_;
    const double corr = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& [name, p] : params.items()) {
        if (!trainable.count(name)) continue;
        auto it = v_.find(name);
        if (it == v_.end()) it = v_.emplace(name, Mat::Zero(p.rows(), p.cols())).first;
        const Mat& g = p.grad();
        if (g.rows() != p.rows() || g.cols() != p.cols()) continue;  // never touched this run
        Mat& v = it->second;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        const_cast<Tensor&>(p).value().array() -=
            lr * g.array() / ((v.array() / corr).sqrt() + eps_);
    }
}

std::set<std::string> trainable_params(const SpeechLlm& model, const StageConfig& stage) {
    if (stage.lora && !model.config().lora.enabled) {
        throw std::invalid_argument("stage " + stage.name +
                                    " trains LoRA but the model was built without it");
    }
    auto starts = [](const std::string& s, const char* p) { return s.rfind(p, 0) == 0; };
    std::set<std::string> out;
    for (const auto& [name, t] : model.params().items()) {
        if (starts(name, "encoder.") && stage.freeze_encoder) continue;
        if (starts(name, "decoder.") && stage.freeze_decoder) continue;
        if (starts(name, "lora.") && !stage.lora) continue;
        if (starts(name, "classifier_ner.") &&
            !(stage.regularizer.enabled && stage.regularizer.task == ClassifierTask::Ner)) {
            continue;
        }
        if (starts(name, "classifier_sa.") &&
            !(stage.regularizer.enabled && stage.regularizer.task == ClassifierTask::Sa)) {
            continue;
        }
        out.insert(name);
    }
    return out;
}

std::string sa_target_text(const Utterance& utt) {
    if (!utt.sentiment) throw std::invalid_argument("trainer: utterance " + utt.id + " has no sentiment");
    return utt.transcript + " " + CharTokenizer::sentiment_sep() + " " + sentiment_name(*utt.sentiment);
}

Sentiment parse_sentiment_output(const std::string& text) {
    const std::string& sep = CharTokenizer::sentiment_sep();
    const size_t pos = text.rfind(sep);
    if (pos != std::string::npos) {
        const auto toks = normalize_text(text.substr(pos + sep.size()));
        if (!toks.empty()) {
            for (int c = 0; c < kNumSentiments; ++c) {
                if (toks.front() == sentiment_name(static_cast<Sentiment>(c))) {
                    return static_cast<Sentiment>(c);
                }
            }
        }
    }
    return Sentiment::Neutral;
}

std::map<EntityTag, long long> tag_counts(const std::vector<Utterance>& utts) {
    std::map<EntityTag, long long> out;
    for (EntityTag t : all_entity_tags()) out[t] = 0;
    for (const auto& utt : utts) {
        if (!utt.tagged) continue;
        for (const auto& span : utt.tagged->spans) out[span.tag] += 1;
    }
    return out;
}

LossBreakdown train_step(SpeechLlm& model, const std::vector<TrainItem>& batch,
                         const StageConfig& stage, const std::optional<Mat>& ner_weights,
                         AdaptiveOptimizer& opt, double lr, Rng& aug_rng,
                         const std::string& base_dir, long long step_index) {
    if (batch.empty()) throw std::invalid_argument("trainer: empty batch");
    model.params().zero_grads();

    std::vector<Tensor> llm_losses, cls_losses;
    for (const auto& item : batch) {
        const Utterance& utt = *item.utt;
        MelFeature mel = utterance_feature(utt, model.config().mel, base_dir);
        if (stage.augmentation.enabled) {
            const auto& factors = stage.augmentation.speed_factors;
            if (!factors.empty()) {
                mel = speed_perturb(
                    mel, factors[static_cast<size_t>(
                             aug_rng.uniform_int(0, static_cast<int64_t>(factors.size()) - 1))]);
            }
            mel = spec_augment(mel, aug_rng, stage.augmentation.spec);
        }
        mel = pad_or_trim(mel, model.config().mel.max_frames);

        // Fall back to plain transcription when the annotation is missing.
        Task task = item.task;
        if (task == Task::Ner && !utt.tagged) task = Task::Asr;
        if (task == Task::Sa && !utt.sentiment) task = Task::Asr;
        std::string target;
        switch (task) {
            case Task::Asr: target = utt.transcript; break;
            case Task::Ner: target = encode_tagged(*utt.tagged); break;
            case Task::Sa: target = sa_target_text(utt); break;
        }

        Tensor encoded = model.encode_speech(mel.frames);
        Tensor adapted = model.adapt(encoded);
        AssembledInput assembled =
            model.assemble(adapted, model.config().prompt_for(task), target, utt.id);
        Tensor logits = model.decode_logits(assembled.embeddings);
        llm_losses.push_back(lm_loss(logits, assembled.next_ids));

        if (stage.regularizer.enabled) {
            if (stage.regularizer.task == ClassifierTask::Ner && utt.tagged) {
                Tensor cls_logits = model.classify(adapted, ClassifierTask::Ner);
                cls_losses.push_back(
                    classifier_loss(cls_logits, ner_targets(*utt.tagged), ner_weights));
            } else if (stage.regularizer.task == ClassifierTask::Sa && utt.sentiment) {
                Tensor cls_logits = model.classify(adapted, ClassifierTask::Sa);
                cls_losses.push_back(
                    classifier_loss(cls_logits, sa_targets(*utt.sentiment), std::nullopt));
            }
        }
    }

    Tensor l_llm = average(llm_losses);
    Tensor total = l_llm;
    std::optional<Tensor> l_cls;
    if (!cls_losses.empty()) {
        l_cls = average(cls_losses);
        total = mix_loss(l_llm, *l_cls, LossMixConfig{stage.regularizer.alpha});
    }

    if (!std::isfinite(total.item())) {
        std::ostringstream ids;
        for (const auto& item : batch) ids << " " << item.utt->id;
        throw std::runtime_error("trainer: non-finite loss at step " + std::to_string(step_index) +
                                 ", batch ids:" + ids.str());
    }

    backward(total);
    opt.step(model.params(), trainable_params(model, stage), lr);

    LossBreakdown out;
    out.total = total.item();
    out.llm = l_llm.item();
    if (l_cls) out.cls = l_cls->item();
    return out;
}

double eval_selection_metric(const SpeechLlm& model, const std::vector<Utterance>& utts,
                             SelectionMetric metric, const DecodeConfig& decode,
                             const std::string& base_dir) {
    switch (metric) {
        case SelectionMetric::Wer:
            return corpus_wer(model, utts, decode, base_dir);
        case SelectionMetric::MicroF1: {
            std::vector<PairCounts> gold, pred;
            ner_decode_corpus(model, utts, decode, base_dir, gold, pred);
            if (gold.empty()) throw std::runtime_error("trainer: no tagged utterances in dev set");
            return ner_micro_f1(gold, pred).f1;
        }
        case SelectionMetric::MacroF1: {
            std::vector<Sentiment> gold, pred;
            sa_decode_corpus(model, utts, decode, base_dir, gold, pred);
            if (gold.empty()) throw std::runtime_error("trainer: no sentiment labels in dev set");
            return sa_macro_f1(gold, pred);
        }
    }
    throw std::logic_error("trainer: unreachable");
}

MetricsReport evaluate_manifest(const SpeechLlm& model, const std::vector<Utterance>& utts,
                                const DecodeConfig& decode, const std::string& base_dir) {
    MetricsReport report;
    report.wer = corpus_wer(model, utts, decode, base_dir);

    std::vector<PairCounts> ner_gold, ner_pred;
    ner_decode_corpus(model, utts, decode, base_dir, ner_gold, ner_pred);
    if (!ner_gold.empty()) {
        report.ner = ner_micro_f1(ner_gold, ner_pred);
        report.ner_label = ner_label_f1(ner_gold, ner_pred);
        for (const auto& [tag, prf] : ner_per_tag_prf(ner_gold, ner_pred)) {
            report.per_class[tag_name(tag)] = prf;
        }
    }

    std::vector<Sentiment> sa_gold, sa_pred;
    sa_decode_corpus(model, utts, decode, base_dir, sa_gold, sa_pred);
    if (!sa_gold.empty()) {
        report.sa_macro_f1 = sa_macro_f1(sa_gold, sa_pred);
        for (const auto& [cls, prf] : sa_per_class_prf(sa_gold, sa_pred)) {
            report.per_class[sentiment_name(cls)] = prf;
        }
    }
    return report;
}

StageResult run_stage(SpeechLlm& model, const StageConfig& stage, const std::string& run_dir,
                      const DecodeConfig& dev_decode, std::ostream* train_log) {
    stage.validate();
    const auto train = load_manifest(stage.train_manifest);
    const auto dev = load_manifest(stage.dev_manifest);
    if (train.empty()) throw std::runtime_error("stage " + stage.name + ": empty train set");
    if (dev.empty()) throw std::runtime_error("stage " + stage.name + ": empty dev set");
    const std::string train_dir = dir_of(stage.train_manifest);
    const std::string dev_dir = dir_of(stage.dev_manifest);

    std::optional<Mat> ner_weights;
    if (stage.regularizer.enabled && stage.regularizer.task == ClassifierTask::Ner) {
        ner_weights = pos_weights(tag_counts(train));
    }

    const long long steps_per_epoch =
        (static_cast<long long>(train.size()) + stage.batch_size - 1) / stage.batch_size;
    const long long total_steps = steps_per_epoch * stage.epochs;

    const uint64_t seed = stage.seed;
    Rng shuffle_rng(mix_seed(seed, "shuffle"));
    Rng aug_rng(mix_seed(seed, "augment"));
    AdaptiveOptimizer opt;

    std::filesystem::create_directories(run_dir);
    const std::string ckpt_path =
        (std::filesystem::path(run_dir) / ("stage_" + stage.name + ".ckpt")).string();

    const bool minimize = stage.selection_metric == SelectionMetric::Wer;
    CheckpointMeta best;
    best.stage = stage.name;
    best.epoch = -1;
    best.metric_name = selection_metric_name(stage.selection_metric);

    std::vector<double> history;
    long long step = 0;
    long long item_counter = 0;
    std::vector<size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= stage.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        for (size_t at = 0; at < order.size(); at += static_cast<size_t>(stage.batch_size)) {
            std::vector<TrainItem> batch;
            const size_t end = std::min(order.size(), at + static_cast<size_t>(stage.batch_size));
            for (size_t k = at; k < end; ++k) {
                TrainItem item;
                item.utt = &train[order[k]];
                item.task = stage.tasks[static_cast<size_t>(item_counter) % stage.tasks.size()];
                ++item_counter;
                batch.push_back(item);
            }
            ++step;
            const double lr = lr_at_step(stage.lr, step, stage.warmup_steps, total_steps);
            const LossBreakdown lb =
                train_step(model, batch, stage, ner_weights, opt, lr, aug_rng, train_dir, step);
            if (train_log) {
                nlohmann::ordered_json line = {{"stage", stage.name}, {"epoch", epoch},
                                               {"step", step},        {"lr", lr},
                                               {"loss", lb.total},    {"llm", lb.llm}};
                if (lb.cls) line["cls"] = *lb.cls;
                (*train_log) << line.dump() << "\n";
            }
        }

        const double m = eval_selection_metric(model, dev, stage.selection_metric, dev_decode, dev_dir);
        history.push_back(m);
        if (train_log) {
            nlohmann::ordered_json line = {{"stage", stage.name},
                                           {"epoch", epoch},
                                           {"dev_metric", best.metric_name},
                                           {"dev_value", m}};
            (*train_log) << line.dump() << "\n";
        }
        const bool better = best.epoch < 0 || (minimize ? m < best.metric_value : m > best.metric_value);
        if (better) {
            best.epoch = epoch;
            best.metric_value = m;
            best.digest = param_digest(model.params());
            best.rng_state = shuffle_rng.state();
            save_checkpoint(ckpt_path, model, best);
        }
    }

    // Leave the model holding the selected epoch's parameters.
    load_checkpoint_into(ckpt_path, model);

    StageResult out;
    out.best = best;
    out.checkpoint_path = ckpt_path;
    out.dev_history = history;
    return out;
}

std::vector<StageConfig> CurriculumConfig::stages() const {
    auto fill = [&](StageConfig s, const std::string& role) {
        if (s.train_manifest.empty()) {
            auto it = manifests.find(role);
            if (it != manifests.end()) s.train_manifest = it->second;
        }
        if (s.dev_manifest.empty()) {
            auto it = manifests.find("dev");
            if (it != manifests.end()) s.dev_manifest = it->second;
        }
        if (s.train_manifest.empty()) {
            throw std::invalid_argument("config: manifests." + role + " is required for stage " +
                                        s.name);
        }
        if (s.dev_manifest.empty()) {
            throw std::invalid_argument("config: manifests.dev is required for stage " + s.name);
        }
        if (s.seed == 0) s.seed = mix_seed(seed, s.name);
        return s;
    };
    if (preset == "random") {
        return {fill(stage_finetune, "finetune")};
    }
    if (preset == "ls-asr") {
        return {fill(stage_asr_pretrain, "pretrain"), fill(stage_finetune, "finetune")};
    }
    if (preset == "ls-asr+ner") {
        return {fill(stage_asr_pretrain, "pretrain"), fill(stage_synthetic, "synthetic"),
                fill(stage_finetune, "finetune")};
    }
    throw std::invalid_argument("trainer: unknown preset \"" + preset + "\"");
}

CurriculumConfig desk_curriculum_defaults() {
    CurriculumConfig cfg;
    cfg.seed = 1;
    cfg.preset = "ls-asr+ner";

    cfg.model.encoder = {2, 64, 2, 40};
    cfg.model.adapter = {32, 64, 128, 1e-5};
    cfg.model.decoder = {2, 128, 4, 256};
    cfg.model.lora = {false, 4, 4.0};
    cfg.model.mel.bands = 40;
    cfg.model.mel.max_frames = 128;  // 32 pool windows of exactly one character
    cfg.model.mel.upsample = 4;
    cfg.model.mel.jitter = 0.02;

    cfg.stage_asr_pretrain.name = "asr_pretrain";
    cfg.stage_asr_pretrain.tasks = {Task::Asr};
    cfg.stage_asr_pretrain.epochs = 5;
    cfg.stage_asr_pretrain.lr = 3e-3;
    cfg.stage_asr_pretrain.batch_size = 4;
    cfg.stage_asr_pretrain.warmup_steps = 20;
    cfg.stage_asr_pretrain.selection_metric = SelectionMetric::Wer;

    cfg.stage_synthetic.name = "synthetic_asr_ner";
    cfg.stage_synthetic.tasks = {Task::Asr, Task::Ner};
    cfg.stage_synthetic.epochs = 4;
    cfg.stage_synthetic.lr = 3e-3;
    cfg.stage_synthetic.batch_size = 4;
    cfg.stage_synthetic.warmup_steps = 20;
    cfg.stage_synthetic.selection_metric = SelectionMetric::MicroF1;

    cfg.stage_finetune.name = "finetune";
    cfg.stage_finetune.tasks = {Task::Asr, Task::Ner};
    cfg.stage_finetune.epochs = 8;
    cfg.stage_finetune.lr = 2e-3;
    cfg.stage_finetune.batch_size = 4;
    cfg.stage_finetune.warmup_steps = 20;
    cfg.stage_finetune.selection_metric = SelectionMetric::MicroF1;
    cfg.stage_finetune.regularizer = {true, 0.2, ClassifierTask::Ner};

    cfg.dev_decode.beam = 1;
    cfg.dev_decode.repetition_penalty = 1.0;
    cfg.dev_decode.length_penalty = 0.0;
    cfg.dev_decode.max_new_tokens = 96;

    cfg.test_decode.beam = 5;
    cfg.test_decode.temperature = 1.0;
    cfg.test_decode.repetition_penalty = 2.0;
    cfg.test_decode.length_penalty = 0.5;
    cfg.test_decode.max_new_tokens = 96;
    return cfg;
}

CurriculumConfig paper_scale_curriculum() {
    CurriculumConfig cfg = desk_curriculum_defaults();
    cfg.preset = "ls-asr+ner";

    cfg.model.encoder = {12, 768, 12, 80};
    cfg.model.adapter = {250, 768, 2048, 1e-5};
    cfg.model.decoder = {22, 2048, 32, 4096};
    cfg.model.lora = {true, 32, 32.0};
    cfg.model.mel.bands = 80;
    cfg.model.mel.max_frames = 3000;

    cfg.stage_asr_pretrain.epochs = 20;
    cfg.stage_asr_pretrain.lr = 1e-4;
    cfg.stage_asr_pretrain.batch_size = 4;
    cfg.stage_asr_pretrain.warmup_steps = 1000;
    cfg.stage_asr_pretrain.freeze_encoder = true;
    cfg.stage_asr_pretrain.freeze_decoder = true;

    cfg.stage_synthetic.epochs = 10;
    cfg.stage_synthetic.lr = 1e-4;
    cfg.stage_synthetic.batch_size = 48;
    cfg.stage_synthetic.warmup_steps = 1000;
    cfg.stage_synthetic.freeze_encoder = true;
    cfg.stage_synthetic.freeze_decoder = true;

    cfg.stage_finetune.epochs = 200;
    cfg.stage_finetune.lr = 1e-3;
    cfg.stage_finetune.batch_size = 16;
    cfg.stage_finetune.warmup_steps = 2000;
    cfg.stage_finetune.freeze_encoder = true;
    cfg.stage_finetune.freeze_decoder = true;
    cfg.stage_finetune.lora = true;
    return cfg;
}

CurriculumResult run_curriculum(const CurriculumConfig& cfg, const std::string& run_dir,
                                std::ostream* train_log) {
    const auto stage_list = cfg.stages();
    SpeechLlm model(cfg.model, cfg.seed);

    CurriculumResult out;
    for (const auto& stage : stage_list) {
        const StageResult res = run_stage(model, stage, run_dir, cfg.dev_decode, train_log);
        out.stages.push_back(res.best);
        out.final_checkpoint = res.checkpoint_path;
    }

    std::string eval_manifest;
    auto it = cfg.manifests.find("test");
    if (it != cfg.manifests.end()) {
        eval_manifest = it->second;
    } else {
        it = cfg.manifests.find("dev");
        if (it == cfg.manifests.end()) {
            throw std::runtime_error("trainer: curriculum needs a test or dev manifest");
        }
        eval_manifest = it->second;
    }
    const auto test = load_manifest(eval_manifest);
    out.final_report = evaluate_manifest(model, test, cfg.test_decode, dir_of(eval_manifest));
    return out;
}

}  // namespace sluekit
