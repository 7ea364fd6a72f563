#include "sluekit/config.hpp"

#include <stdexcept>

namespace sluekit {

using nlohmann::json;
using nlohmann::ordered_json;

void expect_keys(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const auto& a : allowed) {
            if (key == a) {
                ok = true;
                break;
            }
        }
        if (!ok) throw std::invalid_argument("config: unknown key \"" + key + "\" in " + where);
    }
}

ordered_json model_config_to_json(const ModelConfig& cfg) {
    ordered_json j;
    j["encoder"] = {{"layers", cfg.encoder.layers},
                    {"width", cfg.encoder.width},
                    {"heads", cfg.encoder.heads},
                    {"feat_dim", cfg.encoder.feat_dim}};
    j["adapter"] = {{"pool_len", cfg.adapter.pool_len},
                    {"in_dim", cfg.adapter.in_dim},
                    {"out_dim", cfg.adapter.out_dim},
                    {"ln_eps", cfg.adapter.ln_eps}};
    j["decoder"] = {{"layers", cfg.decoder.layers},
                    {"width", cfg.decoder.width},
                    {"heads", cfg.decoder.heads},
                    {"max_seq", cfg.decoder.max_seq}};
    j["lora"] = {{"enabled", cfg.lora.enabled},
                 {"rank", cfg.lora.rank},
                 {"scale_alpha", cfg.lora.scale_alpha}};
    j["mel"] = {{"bands", cfg.mel.bands},
                {"max_frames", cfg.mel.max_frames},
                {"upsample", cfg.mel.upsample},
                {"jitter", cfg.mel.jitter},
                {"char_seed", cfg.mel.char_seed}};
    j["prompts"] = {{"asr", cfg.prompt_asr}, {"ner", cfg.prompt_ner}, {"sa", cfg.prompt_sa}};
    return j;
}

ModelConfig model_config_from_json(const json& j) {
    expect_keys(j, {"encoder", "adapter", "decoder", "lora", "mel", "prompts"}, "model");
    ModelConfig cfg;
    if (j.contains("encoder")) {
        const auto& e = j["encoder"];
        expect_keys(e, {"layers", "width", "heads", "feat_dim"}, "model.encoder");
        cfg.encoder.layers = e.value("layers", cfg.encoder.layers);
        cfg.encoder.width = e.value("width", cfg.encoder.width);
        cfg.encoder.heads = e.value("heads", cfg.encoder.heads);
        cfg.encoder.feat_dim = e.value("feat_dim", cfg.encoder.feat_dim);
    }
    if (j.contains("adapter")) {
        const auto& a = j["adapter"];
        expect_keys(a, {"pool_len", "in_dim", "out_dim", "ln_eps"}, "model.adapter");
        cfg.adapter.pool_len = a.value("pool_len", cfg.adapter.pool_len);
        cfg.adapter.in_dim = a.value("in_dim", cfg.adapter.in_dim);
        cfg.adapter.out_dim = a.value("out_dim", cfg.adapter.out_dim);
        cfg.adapter.ln_eps = a.value("ln_eps", cfg.adapter.ln_eps);
    }
    if (j.contains("decoder")) {
        const auto& d = j["decoder"];
        expect_keys(d, {"layers", "width", "heads", "max_seq"}, "model.decoder");
        cfg.decoder.layers = d.value("layers", cfg.decoder.layers);
        cfg.decoder.width = d.value("width", cfg.decoder.width);
        cfg.decoder.heads = d.value("heads", cfg.decoder.heads);
        cfg.decoder.max_seq = d.value("max_seq", cfg.decoder.max_seq);
    }
    if (j.contains("lora")) {
        const auto& l = j["lora"];
        expect_keys(l, {"enabled", "rank", "scale_alpha"}, "model.lora");
        cfg.lora.enabled = l.value("enabled", cfg.lora.enabled);
        cfg.lora.rank = l.value("rank", cfg.lora.rank);
        cfg.lora.scale_alpha = l.value("scale_alpha", cfg.lora.scale_alpha);
    }
    if (j.contains("mel")) {
        const auto& m = j["mel"];
        expect_keys(m, {"bands", "max_frames", "upsample", "jitter", "char_seed"}, "model.mel");
        cfg.mel.bands = m.value("bands", cfg.mel.bands);
        cfg.mel.max_frames = m.value("max_frames", cfg.mel.max_frames);
        cfg.mel.upsample = m.value("upsample", cfg.mel.upsample);
        cfg.mel.jitter = m.value("jitter", cfg.mel.jitter);
        cfg.mel.char_seed = m.value("char_seed", cfg.mel.char_seed);
    }
    if (j.contains("prompts")) {
        const auto& p = j["prompts"];
        expect_keys(p, {"asr", "ner", "sa"}, "model.prompts");
        cfg.prompt_asr = p.value("asr", cfg.prompt_asr);
        cfg.prompt_ner = p.value("ner", cfg.prompt_ner);
        cfg.prompt_sa = p.value("sa", cfg.prompt_sa);
    }
    cfg.validate();
    return cfg;
}

ordered_json decode_config_to_json(const DecodeConfig& cfg) {
    return {{"beam", cfg.beam},
            {"temperature", cfg.temperature},
            {"repetition_penalty", cfg.repetition_penalty},
            {"length_penalty", cfg.length_penalty},
            {"max_new_tokens", cfg.max_new_tokens}};
}

DecodeConfig decode_config_from_json(const json& j) {
    expect_keys(j, {"beam", "temperature", "repetition_penalty", "length_penalty", "max_new_tokens"},
                "decode");
    DecodeConfig cfg;
    cfg.beam = j.value("beam", cfg.beam);
    cfg.temperature = j.value("temperature", cfg.temperature);
    cfg.repetition_penalty = j.value("repetition_penalty", cfg.repetition_penalty);
    cfg.length_penalty = j.value("length_penalty", cfg.length_penalty);
    cfg.max_new_tokens = j.value("max_new_tokens", cfg.max_new_tokens);
    cfg.validate();
    return cfg;
}

ordered_json stage_config_to_json(const StageConfig& cfg) {
    ordered_json j;
    j["name"] = cfg.name;
    j["train_manifest"] = cfg.train_manifest;
    j["dev_manifest"] = cfg.dev_manifest;
    ordered_json tasks = ordered_json::array();
    for (Task t : cfg.tasks) tasks.push_back(task_name(t));
    j["tasks"] = tasks;
    j["epochs"] = cfg.epochs;
    j["lr"] = cfg.lr;
    j["batch_size"] = cfg.batch_size;
    j["warmup_steps"] = cfg.warmup_steps;
    j["regularizer"] = {{"enabled", cfg.regularizer.enabled},
                        {"alpha", cfg.regularizer.alpha},
                        {"task", cfg.regularizer.task == ClassifierTask::Ner ? "NER" : "SA"}};
    j["lora"] = cfg.lora;
    j["freeze_encoder"] = cfg.freeze_encoder;
    j["freeze_decoder"] = cfg.freeze_decoder;
    j["augmentation"] = {{"enabled", cfg.augmentation.enabled},
                         {"speed_factors", cfg.augmentation.speed_factors},
                         {"num_freq_masks", cfg.augmentation.spec.num_freq_masks},
                         {"freq_mask_width", cfg.augmentation.spec.freq_mask_width},
                         {"num_time_masks", cfg.augmentation.spec.num_time_masks},
                         {"time_mask_width", cfg.augmentation.spec.time_mask_width}};
    j["selection_metric"] = selection_metric_name(cfg.selection_metric);
    j["seed"] = cfg.seed;
    return j;
}

StageConfig stage_config_from_json(const json& j, const StageConfig& defaults) {
    expect_keys(j,
                {"name", "train_manifest", "dev_manifest", "tasks", "epochs", "lr", "batch_size",
                 "warmup_steps", "regularizer", "lora", "freeze_encoder", "freeze_decoder",
                 "augmentation", "selection_metric", "seed"},
                "stage");
    StageConfig cfg = defaults;
    cfg.name = j.value("name", cfg.name);
    cfg.train_manifest = j.value("train_manifest", cfg.train_manifest);
    cfg.dev_manifest = j.value("dev_manifest", cfg.dev_manifest);
    if (j.contains("tasks")) {
        cfg.tasks.clear();
        for (const auto& t : j["tasks"]) cfg.tasks.push_back(task_from_name(t.get<std::string>()));
    }
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.warmup_steps = j.value("warmup_steps", cfg.warmup_steps);
    if (j.contains("regularizer")) {
        const auto& r = j["regularizer"];
        expect_keys(r, {"enabled", "alpha", "task"}, "stage.regularizer");
        cfg.regularizer.enabled = r.value("enabled", cfg.regularizer.enabled);
        cfg.regularizer.alpha = r.value("alpha", cfg.regularizer.alpha);
        if (r.contains("task")) {
            const std::string t = r["task"].get<std::string>();
            if (t == "NER") {
                cfg.regularizer.task = ClassifierTask::Ner;
            } else if (t == "SA") {
                cfg.regularizer.task = ClassifierTask::Sa;
            } else {
                throw std::invalid_argument("config: regularizer task must be NER or SA");
            }
        }
    }
    cfg.lora = j.value("lora", cfg.lora);
    cfg.freeze_encoder = j.value("freeze_encoder", cfg.freeze_encoder);
    cfg.freeze_decoder = j.value("freeze_decoder", cfg.freeze_decoder);
    if (j.contains("augmentation")) {
        const auto& a = j["augmentation"];
        expect_keys(a,
                    {"enabled", "speed_factors", "num_freq_masks", "freq_mask_width",
                     "num_time_masks", "time_mask_width"},
                    "stage.augmentation");
        cfg.augmentation.enabled = a.value("enabled", cfg.augmentation.enabled);
        if (a.contains("speed_factors")) {
            cfg.augmentation.speed_factors = a["speed_factors"].get<std::vector<double>>();
        }
        cfg.augmentation.spec.num_freq_masks =
            a.value("num_freq_masks", cfg.augmentation.spec.num_freq_masks);
        cfg.augmentation.spec.freq_mask_width =
            a.value("freq_mask_width", cfg.augmentation.spec.freq_mask_width);
        cfg.augmentation.spec.num_time_masks =
            a.value("num_time_masks", cfg.augmentation.spec.num_time_masks);
        cfg.augmentation.spec.time_mask_width =
            a.value("time_mask_width", cfg.augmentation.spec.time_mask_width);
    }
    if (j.contains("selection_metric")) {
        cfg.selection_metric = selection_metric_from_name(j["selection_metric"].get<std::string>());
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.validate();
    return cfg;
}

ordered_json curriculum_config_to_json(const CurriculumConfig& cfg) {
    ordered_json j;
    j["seed"] = cfg.seed;
    j["preset"] = cfg.preset;
    j["model"] = model_config_to_json(cfg.model);
    ordered_json manifests;
    for (const auto& [k, v] : cfg.manifests) manifests[k] = v;
    j["manifests"] = manifests;
    j["stage_asr_pretrain"] = stage_config_to_json(cfg.stage_asr_pretrain);
    j["stage_synthetic"] = stage_config_to_json(cfg.stage_synthetic);
    j["stage_finetune"] = stage_config_to_json(cfg.stage_finetune);
    j["dev_decode"] = decode_config_to_json(cfg.dev_decode);
    j["test_decode"] = decode_config_to_json(cfg.test_decode);
    return j;
}

CurriculumConfig curriculum_config_from_json(const json& j) {
    expect_keys(j,
                {"seed", "preset", "model", "manifests", "stage_asr_pretrain", "stage_synthetic",
                 "stage_finetune", "dev_decode", "test_decode"},
                "curriculum");
    CurriculumConfig cfg = desk_curriculum_defaults();
    cfg.seed = j.value("seed", cfg.seed);
    cfg.preset = j.value("preset", cfg.preset);
    if (j.contains("model")) cfg.model = model_config_from_json(j["model"]);
    if (j.contains("manifests")) {
        for (const auto& [k, v] : j["manifests"].items()) {
            if (k != "pretrain" && k != "synthetic" && k != "finetune" && k != "dev" && k != "test") {
                throw std::invalid_argument("config: unknown manifest role \"" + k + "\"");
            }
            cfg.manifests[k] = v.get<std::string>();
        }
    }
    if (j.contains("stage_asr_pretrain")) {
        cfg.stage_asr_pretrain = stage_config_from_json(j["stage_asr_pretrain"], cfg.stage_asr_pretrain);
    }
    if (j.contains("stage_synthetic")) {
        cfg.stage_synthetic = stage_config_from_json(j["stage_synthetic"], cfg.stage_synthetic);
    }
    if (j.contains("stage_finetune")) {
        cfg.stage_finetune = stage_config_from_json(j["stage_finetune"], cfg.stage_finetune);
    }
    if (j.contains("dev_decode")) cfg.dev_decode = decode_config_from_json(j["dev_decode"]);
    if (j.contains("test_decode")) cfg.test_decode = decode_config_from_json(j["test_decode"]);
    return cfg;
}

}  // namespace sluekit
