#include "sluekit/annotate.hpp"
#include "sluekit/checkpoint.hpp"
#include "sluekit/config.hpp"
#include "sluekit/manifest.hpp"
#include "sluekit/metrics.hpp"
#include "sluekit/model.hpp"
#include "sluekit/synth.hpp"
#include "sluekit/trainer.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << content;
    if (!os) throw std::runtime_error("short write to " + path.string());
}

void write_run_manifest(const fs::path& out_dir, const std::string& command,
                        const std::vector<std::string>& files) {
    ordered_json j;
    j["command"] = command;
    j["files"] = files;
    write_text(out_dir / "run_manifest.json", j.dump(2) + "\n");
}

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : fallback;
}

// Plain text of a hypothesis: markers stripped, sentiment suffix cut.
std::string hypothesis_plain(const std::string& hyp) {
    std::string text = hyp;
    const auto at = text.rfind(sluekit::CharTokenizer::sentiment_sep());
    if (at != std::string::npos) text = text.substr(0, at);
    return sluekit::decode_tagged(text, sluekit::DecodeMode::Lenient).plain_text;
}

int cmd_train(const std::string& config_path, const std::string& preset_override,
              int64_t seed_override, const std::string& out_dir) {
    std::ifstream is(config_path);
    if (!is) throw std::runtime_error("cannot open config " + config_path);
    sluekit::CurriculumConfig cfg = sluekit::curriculum_config_from_json(nlohmann::json::parse(is));
    if (!preset_override.empty()) cfg.preset = preset_override;
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);

    // Relative manifest paths resolve against the config file location.
    const fs::path cfg_dir = fs::path(config_path).parent_path();
    auto resolve = [&](std::string& p) {
        if (!p.empty() && fs::path(p).is_relative()) p = (cfg_dir / p).string();
    };
    for (auto& [role, path] : cfg.manifests) resolve(path);
    for (auto* stage : {&cfg.stage_asr_pretrain, &cfg.stage_synthetic, &cfg.stage_finetune}) {
        resolve(stage->train_manifest);
        resolve(stage->dev_manifest);
    }

    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "effective_config.json",
               sluekit::curriculum_config_to_json(cfg).dump(2) + "\n");

    std::ofstream log(fs::path(out_dir) / "training_log.jsonl");
    const auto result = sluekit::run_curriculum(cfg, out_dir, &log);

    write_text(fs::path(out_dir) / "metrics_report.json", result.final_report.to_json() + "\n");
    ordered_json stages = ordered_json::array();
    for (const auto& meta : result.stages) {
        stages.push_back({{"stage", meta.stage},
                          {"epoch", meta.epoch},
                          {"metric_name", meta.metric_name},
                          {"metric_value", meta.metric_value},
                          {"digest", meta.digest}});
    }
    ordered_json summary = {{"stages", stages}, {"final_checkpoint", result.final_checkpoint}};
    write_text(fs::path(out_dir) / "curriculum_result.json", summary.dump(2) + "\n");

    std::vector<std::string> files = {"effective_config.json", "training_log.jsonl",
                                      "metrics_report.json", "curriculum_result.json"};
    for (const auto& meta : result.stages) files.push_back("stage_" + meta.stage + ".ckpt");
    write_run_manifest(out_dir, "train", files);
    std::cout << result.final_report.to_json() << std::endl;
    return 0;
}

int cmd_decode(const std::string& ckpt_path, const std::string& manifest_path,
               const std::string& out_dir, const std::string& task_name_str,
               const sluekit::DecodeConfig& decode) {
    decode.validate();
    const auto loaded = sluekit::load_checkpoint(ckpt_path);
    const auto utts = sluekit::load_manifest(manifest_path);
    const sluekit::Task task = sluekit::task_from_name(task_name_str);
    const std::string base_dir = fs::path(manifest_path).parent_path().string();

    fs::create_directories(out_dir);
    ordered_json echo = {{"checkpoint", ckpt_path},
                         {"manifest", manifest_path},
                         {"task", task_name_str},
                         {"decode", sluekit::decode_config_to_json(decode)}};
    write_text(fs::path(out_dir) / "effective_config.json", echo.dump(2) + "\n");

    std::ofstream os(fs::path(out_dir) / "predictions.jsonl");
    for (const auto& utt : utts) {
        auto mel = sluekit::pad_or_trim(
            sluekit::utterance_feature(utt, loaded.model->config().mel, base_dir),
            loaded.model->config().mel.max_frames);
        const auto hyp =
            loaded.model->transcribe(mel, loaded.model->config().prompt_for(task), decode);
        ordered_json line = {{"id", utt.id}, {"hypothesis", hyp.text}, {"truncated", hyp.truncated}};
        os << line.dump() << "\n";
    }
    if (!os) throw std::runtime_error("short write to predictions.jsonl");
    os.close();
    write_run_manifest(out_dir, "decode", {"effective_config.json", "predictions.jsonl"});
    return 0;
}

int cmd_score(const std::string& gold_path, const std::string& pred_path,
              const std::string& slue_fixture, const std::string& out_dir) {
    fs::create_directories(out_dir);
    sluekit::MetricsReport report;

    if (!slue_fixture.empty()) {
        std::ifstream is(slue_fixture);
        if (!is) throw std::runtime_error("cannot open " + slue_fixture);
        const auto j = nlohmann::json::parse(is);
        sluekit::expect_keys(j, {"wer_asr_vp", "wer_asr_vc", "f1_ner_vp", "f1_sa_vc"}, "slue fixture");
        sluekit::SlueInputs in;
        in.wer_asr_vp = j.at("wer_asr_vp").get<double>();
        in.wer_asr_vc = j.at("wer_asr_vc").get<double>();
        in.f1_ner_vp = j.at("f1_ner_vp").get<double>();
        in.f1_sa_vc = j.at("f1_sa_vc").get<double>();
        report.slue = sluekit::slue_score(in);
    } else {
        const auto gold = sluekit::load_manifest(gold_path);
        std::ifstream is(pred_path);
        if (!is) throw std::runtime_error("cannot open predictions " + pred_path);
        std::map<std::string, std::string> hyp_by_id;
        std::string line;
        size_t line_no = 0;
        while (std::getline(is, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            hyp_by_id[j.at("id").get<std::string>()] = j.at("hypothesis").get<std::string>();
        }
        std::vector<std::string> missing;
        for (const auto& utt : gold) {
            if (!hyp_by_id.count(utt.id)) missing.push_back(utt.id);
        }
        if (!missing.empty()) {
            std::string msg = "predictions missing ids:";
            for (const auto& id : missing) msg += " " + id;
            throw std::runtime_error(msg);
        }

        long long dist = 0, ref_len = 0;
        std::vector<sluekit::PairCounts> ner_gold, ner_pred;
        std::vector<sluekit::Sentiment> sa_gold, sa_pred;
        for (const auto& utt : gold) {
            const std::string& hyp = hyp_by_id[utt.id];
            const auto ref = sluekit::normalize_text(utt.transcript);
            if (!ref.empty()) {
                dist += sluekit::edit_distance(ref, sluekit::normalize_text(hypothesis_plain(hyp)));
                ref_len += static_cast<long long>(ref.size());
            }
            if (utt.tagged) {
                ner_gold.push_back(sluekit::extract_pairs(*utt.tagged));
                ner_pred.push_back(sluekit::extract_pairs(
                    sluekit::decode_tagged(hyp, sluekit::DecodeMode::Lenient)));
            }
            if (utt.sentiment) {
                sa_gold.push_back(*utt.sentiment);
                sa_pred.push_back(sluekit::parse_sentiment_output(hyp));
            }
        }
        if (ref_len == 0) throw std::runtime_error("gold manifest has an empty reference corpus");
        report.wer = 100.0 * static_cast<double>(dist) / static_cast<double>(ref_len);
        if (!ner_gold.empty()) {
            report.ner = sluekit::ner_micro_f1(ner_gold, ner_pred);
            report.ner_label = sluekit::ner_label_f1(ner_gold, ner_pred);
            for (const auto& [tag, prf] : sluekit::ner_per_tag_prf(ner_gold, ner_pred)) {
                report.per_class[sluekit::tag_name(tag)] = prf;
            }
        }
        if (!sa_gold.empty()) {
            report.sa_macro_f1 = sluekit::sa_macro_f1(sa_gold, sa_pred);
            for (const auto& [cls, prf] : sluekit::sa_per_class_prf(sa_gold, sa_pred)) {
                report.per_class[sluekit::sentiment_name(cls)] = prf;
            }
        }
    }

    write_text(fs::path(out_dir) / "metrics_report.json", report.to_json() + "\n");
    write_run_manifest(out_dir, "score", {"metrics_report.json"});
    std::cout << report.to_json() << std::endl;
    return 0;
}

int cmd_annotate(const std::string& manifest_path, const std::string& client_spec,
                 const std::string& pool_path, int shots, uint64_t seed,
                 const std::string& lexicon_path, sluekit::AnnotateOptions opts,
                 const std::string& out_dir) {
    const auto utts = sluekit::load_manifest(manifest_path);

    std::unique_ptr<sluekit::AnnotatorClient> client;
    if (client_spec == "mock:echo") {
        std::map<std::string, std::string> gold;
        for (const auto& utt : utts) {
            gold[utt.transcript] = utt.tagged ? sluekit::encode_tagged(*utt.tagged) : utt.transcript;
        }
        client = std::make_unique<sluekit::EchoAnnotator>(std::move(gold));
    } else if (client_spec == "mock:rule") {
        std::map<std::string, sluekit::EntityTag> lexicon = sluekit::synth_lexicon();
        if (!lexicon_path.empty()) {
            std::ifstream is(lexicon_path);
            if (!is) throw std::runtime_error("cannot open lexicon " + lexicon_path);
            lexicon.clear();
            for (const auto& [word, tag] : nlohmann::json::parse(is).items()) {
                lexicon[word] = sluekit::tag_from_name(tag.get<std::string>());
            }
        }
        client = std::make_unique<sluekit::RuleAnnotator>(std::move(lexicon));
    } else {
        const std::string endpoint =
            client_spec.empty() ? env_or("SLUEKIT_ANNOTATOR_ENDPOINT", "") : client_spec;
        if (endpoint.empty()) {
            throw std::runtime_error("no annotator endpoint (flag or SLUEKIT_ANNOTATOR_ENDPOINT)");
        }
        client = std::make_unique<sluekit::HttpAnnotator>(endpoint,
                                                          env_or("SLUEKIT_ANNOTATOR_TOKEN", ""));
    }

    sluekit::PromptSpec spec;
    if (!pool_path.empty() && shots > 0) {
        std::vector<sluekit::TaggedTranscript> pool;
        for (const auto& utt : sluekit::load_manifest(pool_path)) {
            if (utt.tagged) pool.push_back(*utt.tagged);
        }
        for (const auto& ex : sluekit::balanced_fewshot(pool, shots, seed)) {
            spec.fewshot.emplace_back(ex.plain_text, sluekit::encode_tagged(ex));
        }
    }

    fs::create_directories(out_dir);
    ordered_json echo = {{"manifest", manifest_path}, {"client", client_spec},
                         {"fewshot_pool", pool_path}, {"shots", shots},
                         {"seed", seed},              {"attempts", opts.attempts},
                         {"parallelism", opts.parallelism}};
    write_text(fs::path(out_dir) / "effective_config.json", echo.dump(2) + "\n");

    const auto items = sluekit::annotate_corpus(utts, *client, spec, opts);
    auto [kept1, report1] = sluekit::hallucination_filter(items, opts.hallucination_threshold);
    auto [kept2, report2] = sluekit::reverify_entities(kept1, *client, opts);

    sluekit::write_manifest(sluekit::apply_annotations(utts, kept2),
                            (fs::path(out_dir) / "annotated.jsonl").string());
    ordered_json reports = {{"hallucination", nlohmann::json::parse(report1.to_json())},
                            {"reverify", nlohmann::json::parse(report2.to_json())}};
    write_text(fs::path(out_dir) / "filter_report.json", reports.dump(2) + "\n");
    write_run_manifest(out_dir, "annotate",
                       {"effective_config.json", "annotated.jsonl", "filter_report.json"});

    long long failed = 0;
    for (const auto& item : items) failed += item.failed ? 1 : 0;
    std::cout << "annotated " << items.size() << " items, " << failed << " failed, kept "
              << kept2.size() << std::endl;
    if (failed > 0) {
        std::cerr << "error: " << failed << " items failed after retries, outputs preserved"
                  << std::endl;
        return 3;
    }
    return 0;
}

int cmd_stats(const std::vector<std::string>& split_specs, const std::string& out_dir) {
    std::map<std::string, std::vector<sluekit::Utterance>> splits;
    for (const auto& spec : split_specs) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("expected name=path, got " + spec);
        }
        splits[spec.substr(0, eq)] = sluekit::load_manifest(spec.substr(eq + 1));
    }
    const auto stats = sluekit::dataset_stats(splits);

    ordered_json j;
    for (const auto& [split, counts] : stats) {
        ordered_json row;
        for (const auto& [tag, n] : counts) row[sluekit::tag_name(tag)] = n;
        j[split] = row;
        std::cout << split << ":";
        for (const auto& [tag, n] : counts) std::cout << " " << sluekit::tag_name(tag) << "=" << n;
        std::cout << "\n";
    }
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "stats.json", j.dump(2) + "\n");
    write_run_manifest(out_dir, "stats", {"stats.json"});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"speech-LLM multi-task toolkit"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "run a training curriculum");
    std::string train_config, train_preset, train_out;
    int64_t train_seed = -1;
    train->add_option("--config", train_config, "curriculum config JSON")->required();
    train->add_option("--preset", train_preset, "random | ls-asr | ls-asr+ner");
    train->add_option("--seed", train_seed, "override the curriculum seed");
    train->add_option("--out", train_out, "output directory")->required();

    // decode
    auto* decode = app.add_subcommand("decode", "decode a manifest with a checkpoint");
    std::string dec_ckpt, dec_manifest, dec_out, dec_task = "ASR";
    sluekit::DecodeConfig dec_cfg;
    decode->add_option("--checkpoint", dec_ckpt)->required();
    decode->add_option("--manifest", dec_manifest)->required();
    decode->add_option("--out", dec_out, "output directory")->required();
    decode->add_option("--task", dec_task, "ASR | NER | SA");
    decode->add_option("--beam", dec_cfg.beam);
    decode->add_option("--temperature", dec_cfg.temperature);
    decode->add_option("--repetition-penalty", dec_cfg.repetition_penalty);
    decode->add_option("--length-penalty", dec_cfg.length_penalty);
    decode->add_option("--max-new-tokens", dec_cfg.max_new_tokens);

    // score
    auto* score = app.add_subcommand("score", "score predictions against a gold manifest");
    std::string score_gold, score_pred, score_slue, score_out;
    score->add_option("--gold", score_gold, "gold manifest JSONL");
    score->add_option("--pred", score_pred, "predictions JSONL");
    score->add_option("--slue-only", score_slue, "JSON with the four SLUE inputs");
    score->add_option("--out", score_out, "output directory")->required();

    // annotate
    auto* annotate = app.add_subcommand("annotate", "synthetic NER annotation pipeline");
    std::string ann_manifest, ann_client = "mock:rule", ann_pool, ann_lexicon, ann_out;
    int ann_shots = 0;
    uint64_t ann_seed = 1;
    sluekit::AnnotateOptions ann_opts;
    annotate->add_option("--manifest", ann_manifest)->required();
    annotate->add_option("--client", ann_client, "mock:echo | mock:rule | http endpoint");
    annotate->add_option("--fewshot-pool", ann_pool, "manifest of tagged examples");
    annotate->add_option("--shots", ann_shots, "few-shot example count");
    annotate->add_option("--seed", ann_seed);
    annotate->add_option("--lexicon", ann_lexicon, "word->tag JSON for mock:rule");
    annotate->add_option("--attempts", ann_opts.attempts);
    annotate->add_option("--backoff-ms", ann_opts.backoff_ms);
    annotate->add_option("--parallelism", ann_opts.parallelism);
    annotate->add_option("--threshold", ann_opts.hallucination_threshold);
    annotate->add_option("--out", ann_out, "output directory")->required();

    // stats
    auto* stats = app.add_subcommand("stats", "per-split entity tag counts");
    std::vector<std::string> stats_splits;
    std::string stats_out;
    stats->add_option("--manifest", stats_splits, "name=path (repeatable)")->required();
    stats->add_option("--out", stats_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(train_config, train_preset, train_seed, train_out);
        if (decode->parsed()) return cmd_decode(dec_ckpt, dec_manifest, dec_out, dec_task, dec_cfg);
        if (score->parsed()) return cmd_score(score_gold, score_pred, score_slue, score_out);
        if (annotate->parsed()) {
            return cmd_annotate(ann_manifest, ann_client, ann_pool, ann_shots, ann_seed,
                                ann_lexicon, ann_opts, ann_out);
        }
        if (stats->parsed()) return cmd_stats(stats_splits, stats_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 1;
}
