#pragma once

#include "sluekit/checkpoint.hpp"
#include "sluekit/manifest.hpp"
#include "sluekit/metrics.hpp"
#include "sluekit/model.hpp"

#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

namespace sluekit {

struct AugmentationConfig {
    bool enabled = true;
    std::vector<double> speed_factors = {0.9, 1.0, 1.1};
    SpecAugmentConfig spec{1, 4, 1, 6};
};

struct RegularizerConfig {
    bool enabled = false;
    double alpha = 0.2;
    ClassifierTask task = ClassifierTask::Ner;
};

enum class SelectionMetric { Wer, MicroF1, MacroF1 };
const std::string& selection_metric_name(SelectionMetric m);
SelectionMetric selection_metric_from_name(const std::string& s);

struct StageConfig {
    std::string name;
    std::string train_manifest;
    std::string dev_manifest;
    std::vector<Task> tasks = {Task::Asr};
    int epochs = 1;
    double lr = 1e-3;
    int batch_size = 8;
    int warmup_steps = 20;
    RegularizerConfig regularizer;
    bool lora = false;  // train the LoRA adapters this stage
    bool freeze_encoder = false;
    bool freeze_decoder = false;
    AugmentationConfig augmentation;
    SelectionMetric selection_metric = SelectionMetric::Wer;
    uint64_t seed = 0;  // 0 = derive from curriculum seed and stage name

    void validate() const;
};

struct CurriculumConfig {
    uint64_t seed = 1;
    ModelConfig model;
    std::string preset = "ls-asr+ner";  // "random" | "ls-asr" | "ls-asr+ner"
    std::map<std::string, std::string> manifests;  // pretrain/synthetic/finetune/dev/test
    StageConfig stage_asr_pretrain;
    StageConfig stage_synthetic;
    StageConfig stage_finetune;
    DecodeConfig dev_decode;   // per-epoch selection decoding (beam 1 default)
    DecodeConfig test_decode;  // final report decoding (paper-style beam 5)

    // Stage list implied by the preset, with manifests filled in.
    std::vector<StageConfig> stages() const;
};

// Desk-scale defaults that train in minutes on a CPU.
CurriculumConfig desk_curriculum_defaults();
// The paper-scale hyperparameters, kept for documentation and config export.
CurriculumConfig paper_scale_curriculum();

// Linear warmup to base_lr over warmup steps, then linear decay to zero at
// total steps. `step` is 1-based.
double lr_at_step(double base_lr, long long step, long long warmup, long long total);

// Second-moment-only adaptive update (no momentum term), bias-corrected.
class AdaptiveOptimizer {
public:
    explicit AdaptiveOptimizer(double beta2 = 0.999, double eps = 1e-8)
        : beta2_(beta2), eps_(eps) {}

    void step(const ParamRegistry& params, const std::set<std::string>& trainable, double lr);
    long long steps_taken() const { return t_; }

private:
    double beta2_, eps_;
    long long t_ = 0;
    std::map<std::string, Mat> v_;
};

// Names of the parameters a stage is allowed to update.
std::set<std::string> trainable_params(const SpeechLlm& model, const StageConfig& stage);

struct LossBreakdown {
    double total = 0.0;
    double llm = 0.0;
    std::optional<double> cls;
};

struct TrainItem {
    const Utterance* utt = nullptr;
    Task task = Task::Asr;
};

// One optimizer update over a batch: forward, mixed loss, backward, update.
// Throws with the batch ids on a non-finite loss.
LossBreakdown train_step(SpeechLlm& model, const std::vector<TrainItem>& batch,
                         const StageConfig& stage, const std::optional<Mat>& ner_weights,
                         AdaptiveOptimizer& opt, double lr, Rng& aug_rng,
                         const std::string& base_dir, long long step_index);

// Selection-metric evaluation over a manifest slice (no augmentation).
double eval_selection_metric(const SpeechLlm& model, const std::vector<Utterance>& utts,
                             SelectionMetric metric, const DecodeConfig& decode,
                             const std::string& base_dir);

// Full metric report: WER always, NER F1s when tagged fields exist,
// SA macro-F1 when sentiment fields exist.
MetricsReport evaluate_manifest(const SpeechLlm& model, const std::vector<Utterance>& utts,
                                const DecodeConfig& decode, const std::string& base_dir);

struct StageResult {
    CheckpointMeta best;
    std::string checkpoint_path;
    std::vector<double> dev_history;  // selection metric per epoch
};

// Trains one stage, evaluating dev each epoch; the model is left holding the
// selected (best-epoch) parameters. Throws on an empty dev set.
StageResult run_stage(SpeechLlm& model, const StageConfig& stage, const std::string& run_dir,
                      const DecodeConfig& dev_decode, std::ostream* train_log);

struct CurriculumResult {
    std::vector<CheckpointMeta> stages;
    MetricsReport final_report;
    std::string final_checkpoint;
};

// Chains the preset's stages, then evaluates the test manifest.
CurriculumResult run_curriculum(const CurriculumConfig& cfg, const std::string& run_dir,
                                std::ostream* train_log);

// Sentiment parsed from a generated "<transcript> <sep> <class>" string;
// an unparseable class falls back to Neutral so scoring stays total.
Sentiment parse_sentiment_output(const std::string& text);
std::string sa_target_text(const Utterance& utt);

// Per-split span counts (used by pos_weights and the stats command).
std::map<EntityTag, long long> tag_counts(const std::vector<Utterance>& utts);

}  // namespace sluekit
