#pragma once

#include "sluekit/nertag.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sluekit {

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

PRF prf_from_counts(long long tp, long long pred_total, long long gold_total);

enum class Sentiment { Positive = 0, Negative, Neutral };
inline constexpr int kNumSentiments = 3;
const std::string& sentiment_name(Sentiment s);       // "positive", ...
Sentiment sentiment_from_name(const std::string& s);  // throws on unknown label

// Lowercase, strip punctuation characters, split on whitespace.
std::vector<std::string> normalize_text(const std::string& s);

// Unit-cost Levenshtein distance over tokens.
long long edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b);

// distance / max(|a|, |b|); 0 for two empty sequences.
double normalized_edit_distance(const std::vector<std::string>& a,
                                const std::vector<std::string>& b);

// Word error rate in percent. Throws on an empty reference.
double wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

// Micro-aggregated F1 over (tag, phrase) pairs, per-utterance aligned.
PRF ner_micro_f1(const std::vector<PairCounts>& gold, const std::vector<PairCounts>& pred);

// Same aggregation with pairs reduced to tag multisets.
PRF ner_label_f1(const std::vector<PairCounts>& gold, const std::vector<PairCounts>& pred);

// Per-tag PRF breakdown (micro counts restricted to one tag at a time).
std::map<EntityTag, PRF> ner_per_tag_prf(const std::vector<PairCounts>& gold,
                                         const std::vector<PairCounts>& pred);

// Unweighted mean of the three per-class F1 scores. A class absent from both
// gold and pred contributes 0 so the denominator stays fixed at 3.
double sa_macro_f1(const std::vector<Sentiment>& gold, const std::vector<Sentiment>& pred);
std::map<Sentiment, PRF> sa_per_class_prf(const std::vector<Sentiment>& gold,
                                          const std::vector<Sentiment>& pred);

struct SlueInputs {
    double wer_asr_vp = 0.0;  // percent
    double wer_asr_vc = 0.0;  // percent
    double f1_ner_vp = 0.0;   // percent
    double f1_sa_vc = 0.0;    // percent
};

// (1/3) * ((100 - (WER_VP + WER_VC)/2) + F1_NER + F1_SA), unrounded.
double slue_score(const SlueInputs& x);

struct MetricsReport {
    std::optional<double> wer;
    std::optional<PRF> ner;
    std::optional<PRF> ner_label;
    std::optional<double> sa_macro_f1;
    std::map<std::string, PRF> per_class;
    std::optional<double> slue;

    // JSON with every number fixed to 4 decimals; key order is stable.
    std::string to_json() const;
};

}  // namespace sluekit
