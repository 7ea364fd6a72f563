#include "sluekit/synth.hpp"

#include "sluekit/rng.hpp"

#include <array>

namespace sluekit {

namespace {

const std::array<std::vector<std::string>, kNumEntityTags> kEntityWords = {{
    {"john", "mary", "omar"},    // PERSON
    {"paris", "oslo", "lima"},   // PLACE
    {"june", "noon", "may"},     // WHEN
    {"dutch", "greek", "thai"},  // NORP
    {"acme", "nasa", "ibm"},     // ORG
    {"seven", "nine", "dozen"},  // QUANT
    {"gdpr", "sox", "hipaa"},    // LAW
}};

const std::vector<std::string> kFillers = {"we", "saw", "met", "in", "at", "the", "near"};

}  // namespace

const std::map<std::string, EntityTag>& synth_lexicon() {
    static const std::map<std::string, EntityTag> lex = [] {
        std::map<std::string, EntityTag> m;
        for (int t = 0; t < kNumEntityTags; ++t) {
            for (const auto& w : kEntityWords[static_cast<size_t>(t)]) {
                m[w] = static_cast<EntityTag>(t);
            }
        }
        return m;
    }();
    return lex;
}

std::vector<Utterance> synth_corpus(const SynthConfig& cfg) {
    Rng rng(mix_seed(cfg.seed, "synth"));
    std::vector<Utterance> out;
    out.reserve(static_cast<size_t>(cfg.count));

    for (int i = 0; i < cfg.count; ++i) {
        const int n_words = static_cast<int>(rng.uniform_int(3, 4));
        std::vector<std::string> words;
        std::vector<EntitySpan> spans;
        bool has_entity = false;
        for (int w = 0; w < n_words; ++w) {
            const bool entity = rng.uniform() < 0.55 || (w == n_words - 1 && !has_entity);
            if (entity) {
                const auto tag = static_cast<EntityTag>(rng.uniform_int(0, kNumEntityTags - 1));
                const auto& choices = kEntityWords[static_cast<size_t>(tag)];
                const auto& word =
                    choices[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(choices.size()) - 1))];
                spans.push_back({tag, word, static_cast<int>(spans.size())});
                words.push_back(word);
                has_entity = true;
            } else {
                words.push_back(
                    kFillers[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(kFillers.size()) - 1))]);
            }
        }

        Sentiment sentiment = Sentiment::Neutral;
        const double roll = rng.uniform();
        if (roll < 1.0 / 3.0) {
            words.push_back("good");
            sentiment = Sentiment::Positive;
        } else if (roll < 2.0 / 3.0) {
            words.push_back("bad");
            sentiment = Sentiment::Negative;
        }

        std::string text;
        for (size_t w = 0; w < words.size(); ++w) {
            if (w) text += ' ';
            text += words[w];
        }

        Utterance utt;
        utt.id = cfg.id_prefix + "-" + std::to_string(i);
        utt.transcript = text;
        if (cfg.with_tags) utt.tagged = TaggedTranscript{text, spans};
        if (cfg.with_sentiment) utt.sentiment = sentiment;
        utt.feature_seed = rng.next_u64();
        out.push_back(std::move(utt));
    }
    return out;
}

}  // namespace sluekit
