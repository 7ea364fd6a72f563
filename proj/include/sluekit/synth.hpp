#pragma once

#include "sluekit/manifest.hpp"
#include "sluekit/nertag.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace sluekit {

// Synthetic desk corpus: short sentences over a small closed vocabulary in
// which every entity word always carries the same tag, and sentiment is
// keyword-driven. Separable by construction, so a desk-scale model can learn
// it in minutes.
struct SynthConfig {
    int count = 200;
    uint64_t seed = 1;
    std::string id_prefix = "utt";
    bool with_tags = true;       // emit tagged markup
    bool with_sentiment = true;  // emit sentiment labels (and keywords)
};

std::vector<Utterance> synth_corpus(const SynthConfig& cfg);

// The word -> tag lexicon behind synth_corpus; also drives the rule-based
// mock annotator.
const std::map<std::string, EntityTag>& synth_lexicon();

}  // namespace sluekit
