#include "sluekit/config.hpp"
#include "sluekit/manifest.hpp"
#include "sluekit/synth.hpp"
#include "sluekit/trainer.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;

// Generates the desk-scale pseudo-speech corpus: an untagged ASR pretrain
// split, a tagged split standing in for LLM-annotated data, a tagged+sentiment
// fine-tune split, dev and test splits, plus a ready-to-run train config.
int main(int argc, char** argv) {
    CLI::App app{"synthetic corpus generator"};
    std::string out_dir;
    int n_pretrain = 400, n_synthetic = 250, n_finetune = 200, n_dev = 50, n_test = 50;
    uint64_t seed = 1;
    app.add_option("--out", out_dir, "output directory")->required();
    app.add_option("--pretrain", n_pretrain);
    app.add_option("--synthetic", n_synthetic);
    app.add_option("--finetune", n_finetune);
    app.add_option("--dev", n_dev);
    app.add_option("--test", n_test);
    app.add_option("--seed", seed);
    CLI11_PARSE(app, argc, argv);

    try {
        fs::create_directories(out_dir);
        auto emit = [&](const std::string& name, int count, uint64_t salt, bool tags, bool senti) {
            sluekit::SynthConfig cfg;
            cfg.count = count;
            cfg.seed = sluekit::mix_seed(seed, salt);
            cfg.id_prefix = name;
            cfg.with_tags = tags;
            cfg.with_sentiment = senti;
            sluekit::write_manifest(sluekit::synth_corpus(cfg),
                                    (fs::path(out_dir) / (name + ".jsonl")).string());
        };
        emit("pretrain", n_pretrain, 11, false, false);
        emit("synthetic", n_synthetic, 22, true, false);
        emit("finetune", n_finetune, 33, true, true);
        emit("dev", n_dev, 44, true, true);
        emit("test", n_test, 55, true, true);

        sluekit::CurriculumConfig cfg = sluekit::desk_curriculum_defaults();
        cfg.seed = seed;
        cfg.manifests["pretrain"] = "pretrain.jsonl";
        cfg.manifests["synthetic"] = "synthetic.jsonl";
        cfg.manifests["finetune"] = "finetune.jsonl";
        cfg.manifests["dev"] = "dev.jsonl";
        cfg.manifests["test"] = "test.jsonl";
        std::ofstream os(fs::path(out_dir) / "train_config.json");
        os << sluekit::curriculum_config_to_json(cfg).dump(2) << "\n";
        std::cout << "wrote corpus and train_config.json to " << out_dir << std::endl;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
