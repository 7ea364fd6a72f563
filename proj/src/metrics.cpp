#include "sluekit/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace sluekit {

namespace {

const std::array<std::string, kNumSentiments> kSentimentNames = {"positive", "negative", "neutral"};

long long pair_total(const PairCounts& c) {
    long long n = 0;
    for (const auto& [k, v] : c) n += v;
    return n;
}

long long pair_overlap(const PairCounts& a, const PairCounts& b) {
    long long n = 0;
    for (const auto& [k, v] : a) {
        auto it = b.find(k);
        if (it != b.end()) n += std::min(v, it->second);
    }
    return n;
}

std::map<EntityTag, int> to_label_counts(const PairCounts& c) {
    std::map<EntityTag, int> out;
    for (const auto& [k, v] : c) out[k.first] += v;
    return out;
}

double round4(double x) {
    double r = std::round(x * 10000.0) / 10000.0;
    return r == 0.0 ? 0.0 : r;  // avoid "-0.0"
}

nlohmann::ordered_json prf_json(const PRF& p) {
    return {{"precision", round4(p.precision)},
            {"recall", round4(p.recall)},
            {"f1", round4(p.f1)}};
}

}  // namespace

PRF prf_from_counts(long long tp, long long pred_total, long long gold_total) {
    PRF out;
    out.precision = pred_total > 0 ? static_cast<double>(tp) / pred_total : 0.0;
    out.recall = gold_total > 0 ? static_cast<double>(tp) / gold_total : 0.0;
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

const std::string& sentiment_name(Sentiment s) { return kSentimentNames[static_cast<size_t>(s)]; }

Sentiment sentiment_from_name(const std::string& s) {
    for (int i = 0; i < kNumSentiments; ++i) {
        if (s == kSentimentNames[static_cast<size_t>(i)]) return static_cast<Sentiment>(i);
    }
    throw std::invalid_argument("metrics: unknown sentiment class: " + s);
}

std::vector<std::string> normalize_text(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else if (c < 128 && std::ispunct(c)) {
            // stripped in place, not replaced by a separator
        } else {
            cur += static_cast<char>(std::tolower(c));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

long long edit_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    const size_t n = a.size(), m = b.size();
    std::vector<long long> prev(m + 1), cur(m + 1);
    for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<long long>(j);
    for (size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<long long>(i);
        for (size_t j = 1; j <= m; ++j) {
            const long long sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

double normalized_edit_distance(const std::vector<std::string>& a,
                                const std::vector<std::string>& b) {
    const size_t denom = std::max(a.size(), b.size());
    if (denom == 0) return 0.0;
    return static_cast<double>(edit_distance(a, b)) / static_cast<double>(denom);
}

double wer(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
    if (ref.empty()) throw std::invalid_argument("metrics: wer needs a non-empty reference");
    return 100.0 * static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

PRF ner_micro_f1(const std::vector<PairCounts>& gold, const std::vector<PairCounts>& pred) {
    if (gold.size() != pred.size()) {
        throw std::invalid_argument("metrics: gold/pred utterance counts differ");
    }
    long long tp = 0, p_total = 0, g_total = 0;
    for (size_t i = 0; i < gold.size(); ++i) {
        tp += pair_overlap(gold[i], pred[i]);
        p_total += pair_total(pred[i]);
        g_total += pair_total(gold[i]);
    }
    return prf_from_counts(tp, p_total, g_total);
}

PRF ner_label_f1(const std::vector<PairCounts>& gold, const std::vector<PairCounts>& pred) {
    if (gold.size() != pred.size()) {
        throw std::invalid_argument("metrics: gold/pred utterance counts differ");
    }
    long long tp = 0, p_total = 0, g_total = 0;
    for (size_t i = 0; i < gold.size(); ++i) {
        const auto g = to_label_counts(gold[i]);
        const auto p = to_label_counts(pred[i]);
        for (const auto& [tag, n] : g) {
            g_total += n;
            auto it = p.find(tag);
            if (it != p.end()) tp += std::min(n, it->second);
        }
        for (const auto& [tag, n] : p) p_total += n;
    }
    return prf_from_counts(tp, p_total, g_total);
}

std::map<EntityTag, PRF> ner_per_tag_prf(const std::vector<PairCounts>& gold,
                                         const std::vector<PairCounts>& pred) {
    if (gold.size() != pred.size()) {
        throw std::invalid_argument("metrics: gold/pred utterance counts differ");
    }
    std::map<EntityTag, PRF> out;
    for (EntityTag tag : all_entity_tags()) {
        long long tp = 0, p_total = 0, g_total = 0;
        for (size_t i = 0; i < gold.size(); ++i) {
            PairCounts g, p;
            for (const auto& [k, v] : gold[i]) {
                if (k.first == tag) g[k] = v;
            }
            for (const auto& [k, v] : pred[i]) {
                if (k.first == tag) p[k] = v;
            }
            tp += pair_overlap(g, p);
            p_total += pair_total(p);
            g_total += pair_total(g);
        }
        out[tag] = prf_from_counts(tp, p_total, g_total);
    }
    return out;
}

std::map<Sentiment, PRF> sa_per_class_prf(const std::vector<Sentiment>& gold,
                                          const std::vector<Sentiment>& pred) {
    if (gold.size() != pred.size()) {
        throw std::invalid_argument("metrics: gold/pred class counts differ");
    }
    std::map<Sentiment, PRF> out;
    for (int c = 0; c < kNumSentiments; ++c) {
        const auto s = static_cast<Sentiment>(c);
        long long tp = 0, p_total = 0, g_total = 0;
        for (size_t i = 0; i < gold.size(); ++i) {
            if (gold[i] == s) ++g_total;
            if (pred[i] == s) ++p_total;
            if (gold[i] == s && pred[i] == s) ++tp;
        }
        out[s] = prf_from_counts(tp, p_total, g_total);
    }
    return out;
}

double sa_macro_f1(const std::vector<Sentiment>& gold, const std::vector<Sentiment>& pred) {
    const auto per_class = sa_per_class_prf(gold, pred);
    double sum = 0.0;
    for (const auto& [s, prf] : per_class) sum += prf.f1;
    return sum / kNumSentiments;
}

double slue_score(const SlueInputs& x) {
    return ((100.0 - (x.wer_asr_vp + x.wer_asr_vc) / 2.0) + x.f1_ner_vp + x.f1_sa_vc) / 3.0;
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    if (wer) j["wer"] = round4(*wer);
    if (ner) j["ner"] = prf_json(*ner);
    if (ner_label) j["ner_label"] = prf_json(*ner_label);
    if (sa_macro_f1) j["sa_macro_f1"] = round4(*sa_macro_f1);
    if (!per_class.empty()) {
        nlohmann::ordered_json pc;
        for (const auto& [name, prf] : per_class) pc[name] = prf_json(prf);
        j["per_class"] = pc;
    }
    if (slue) j["slue"] = round4(*slue);
    return j.dump(2);
}

}  // namespace sluekit
