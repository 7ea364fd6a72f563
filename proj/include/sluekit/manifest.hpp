#pragma once

#include "sluekit/mel.hpp"
#include "sluekit/metrics.hpp"
#include "sluekit/nertag.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sluekit {

struct Utterance {
    std::string id;
    std::string transcript;
    std::optional<TaggedTranscript> tagged;
    std::optional<Sentiment> sentiment;
    std::optional<uint64_t> feature_seed;
    std::optional<std::string> feature_path;
};

// JSONL manifests, one utterance per line. Fields: id, transcript,
// tagged (codec markup), sentiment, feature_seed, feature_path.
// Parse errors name the offending line.
std::vector<Utterance> load_manifest(const std::string& path);
void write_manifest(const std::vector<Utterance>& utts, const std::string& path);

// Feature for an utterance: feature_path wins (resolved against base_dir),
// then feature_seed-driven synthesis, then synthesis seeded from the id.
MelFeature utterance_feature(const Utterance& utt, const PseudoMelConfig& cfg,
                             const std::string& base_dir = "");

}  // namespace sluekit
