#include "sluekit/metrics.hpp"

#include "helpers.hpp"

#include <doctest.h>

#include <algorithm>
#include <list>

using namespace sluekit;

namespace {

// Exponential-time edit distance over all alignments; the oracle for wer().
long long brute_edit(const std::vector<std::string>& a, const std::vector<std::string>& b,
                     size_t i, size_t j) {
    if (i == a.size()) return static_cast<long long>(b.size() - j);
    if (j == b.size()) return static_cast<long long>(a.size() - i);
    long long best = brute_edit(a, b, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, brute_edit(a, b, i + 1, j) + 1);
    best = std::min(best, brute_edit(a, b, i, j + 1) + 1);
    return best;
}

std::vector<std::string> random_tokens(Rng& rng, int max_len, int vocab) {
    const int n = static_cast<int>(rng.uniform_int(0, max_len));
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) {
        out.push_back("w" + std::to_string(rng.uniform_int(0, vocab - 1)));
    }
    return out;
}

PairCounts random_pairs(Rng& rng) {
    static const std::vector<std::string> phrases = {"john", "paris", "june", "acme", "nine"};
    PairCounts out;
    const int n = static_cast<int>(rng.uniform_int(0, 4));
    for (int i = 0; i < n; ++i) {
        const auto tag = static_cast<EntityTag>(rng.uniform_int(0, kNumEntityTags - 1));
        const auto& phrase =
            phrases[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(phrases.size()) - 1))];
        out[{tag, phrase}] += 1;
    }
    return out;
}

// Independent TP oracle: expand multisets to flat lists and match greedily by
// erasing, instead of min-of-counts arithmetic.
long long list_match_tp(const PairCounts& gold, const PairCounts& pred) {
    std::list<std::pair<EntityTag, std::string>> g;
    for (const auto& [k, v] : gold) {
        for (int i = 0; i < v; ++i) g.push_back(k);
    }
    long long tp = 0;
    for (const auto& [k, v] : pred) {
        for (int i = 0; i < v; ++i) {
            auto it = std::find(g.begin(), g.end(), k);
            if (it != g.end()) {
                g.erase(it);
                ++tp;
            }
        }
    }
    return tp;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("normalize_text examples") {
    CHECK(normalize_text("Hello, World!") == std::vector<std::string>{"hello", "world"});
    CHECK(normalize_text("").empty());
    CHECK(normalize_text("it's  A--test") == std::vector<std::string>{"its", "atest"});
}

TEST_CASE("wer basics") {
    const std::vector<std::string> abc = {"the", "cat", "sat"};
    CHECK(wer(abc, abc) == doctest::Approx(0.0));
    CHECK(wer(abc, {"the", "cat"}) == doctest::Approx(100.0 / 3.0));
    CHECK_THROWS(wer({}, abc));
}

TEST_CASE("wer matches the brute-force alignment oracle on 1000 random pairs") {
    Rng rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
        auto ref = random_tokens(rng, 8, 10);
        if (ref.empty()) ref.push_back("w0");
        const auto hyp = random_tokens(rng, 8, 10);
        const long long oracle = brute_edit(ref, hyp, 0, 0);
        CHECK(wer(ref, hyp) == doctest::Approx(100.0 * oracle / static_cast<double>(ref.size())));
    }
}

TEST_CASE("edit distance triangle consistency on random triples") {
    Rng rng(43);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = random_tokens(rng, 6, 5);
        const auto b = random_tokens(rng, 6, 5);
        const auto c = random_tokens(rng, 6, 5);
        CHECK(edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c));
        CHECK(edit_distance(a, a) == 0);
    }
}

TEST_CASE("ner micro F1: transcription errors are pair-incorrect") {
    std::vector<PairCounts> gold(1), pred(1);
    gold[0][{EntityTag::Person, "john"}] = 1;
    pred[0][{EntityTag::Person, "jon"}] = 1;
    const PRF prf = ner_micro_f1(gold, pred);
    CHECK(prf.f1 == doctest::Approx(0.0));
    // ... but label F1 only checks the tag.
    const PRF label = ner_label_f1(gold, pred);
    CHECK(label.f1 == doctest::Approx(1.0));
}

TEST_CASE("ner micro F1 hand-counted example") {
    std::vector<PairCounts> gold(1), pred(1);
    gold[0][{EntityTag::Person, "john"}] = 1;
    gold[0][{EntityTag::Place, "paris"}] = 1;
    pred[0][{EntityTag::Person, "john"}] = 1;
    const PRF prf = ner_micro_f1(gold, pred);
    CHECK(prf.precision == doctest::Approx(1.0));
    CHECK(prf.recall == doctest::Approx(0.5));
    CHECK(prf.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("exact match gives PRF(1,1,1); mismatch errors") {
    Rng rng(44);
    std::vector<PairCounts> corpus;
    for (int i = 0; i < 10; ++i) corpus.push_back(random_pairs(rng));
    bool any = false;
    for (const auto& c : corpus) any = any || !c.empty();
    REQUIRE(any);
    const PRF prf = ner_micro_f1(corpus, corpus);
    CHECK(prf.precision == doctest::Approx(1.0));
    CHECK(prf.recall == doctest::Approx(1.0));
    CHECK(prf.f1 == doctest::Approx(1.0));
    CHECK_THROWS(ner_micro_f1(corpus, std::vector<PairCounts>(corpus.size() + 1)));
}

TEST_CASE("micro and label F1 match the list-matching oracle on 500 random corpora") {
    Rng rng(45);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(1, 6));
        std::vector<PairCounts> gold, pred;
        long long tp = 0, label_tp = 0, p_total = 0, g_total = 0;
        for (int i = 0; i < n; ++i) {
            gold.push_back(random_pairs(rng));
            pred.push_back(random_pairs(rng));
            tp += list_match_tp(gold.back(), pred.back());
            // tag-only oracle: erase phrases then list-match
            PairCounts g_tags, p_tags;
            for (const auto& [k, v] : gold.back()) g_tags[{k.first, ""}] += v;
            for (const auto& [k, v] : pred.back()) p_tags[{k.first, ""}] += v;
            label_tp += list_match_tp(g_tags, p_tags);
            for (const auto& [k, v] : gold.back()) g_total += v;
            for (const auto& [k, v] : pred.back()) p_total += v;
        }
        const PRF micro = ner_micro_f1(gold, pred);
        const PRF expect = prf_from_counts(tp, p_total, g_total);
        CHECK(micro.f1 == doctest::Approx(expect.f1));
        CHECK(micro.precision == doctest::Approx(expect.precision));
        const PRF label = ner_label_f1(gold, pred);
        const PRF label_expect = prf_from_counts(label_tp, p_total, g_total);
        CHECK(label.f1 == doctest::Approx(label_expect.f1));
        // Tag match is implied by pair match.
        CHECK(label.f1 >= micro.f1 - 1e-12);
    }
}

TEST_CASE("removing a true positive never increases micro F1") {
    Rng rng(46);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<PairCounts> gold, pred;
        const int n = static_cast<int>(rng.uniform_int(1, 5));
        for (int i = 0; i < n; ++i) {
            gold.push_back(random_pairs(rng));
            pred.push_back(gold.back());
        }
        // Find a true positive to remove.
        int utt = -1;
        for (int i = 0; i < n; ++i) {
            if (!pred[static_cast<size_t>(i)].empty()) {
                utt = i;
                break;
            }
        }
        if (utt < 0) continue;
        const double before = ner_micro_f1(gold, pred).f1;
        auto& counts = pred[static_cast<size_t>(utt)];
        auto it = counts.begin();
        if (--it->second == 0) counts.erase(it);
        const double after = ner_micro_f1(gold, pred).f1;
        CHECK(after <= before + 1e-12);
    }
}

TEST_CASE("sa macro F1 examples") {
    using S = Sentiment;
    const std::vector<S> gold = {S::Positive, S::Negative, S::Neutral};
    CHECK(sa_macro_f1(gold, gold) == doctest::Approx(1.0));
    const std::vector<S> all_pos = {S::Positive, S::Positive, S::Positive};
    CHECK(sa_macro_f1(gold, all_pos) == doctest::Approx((0.5 + 0.0 + 0.0) / 3.0));
    CHECK_THROWS(sa_macro_f1(gold, {S::Positive}));
    CHECK_THROWS(sentiment_from_name("angry"));
}

TEST_CASE("sa macro F1 matches a brute-force confusion matrix, absent classes score 0") {
    Rng rng(47);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = static_cast<int>(rng.uniform_int(1, 12));
        std::vector<Sentiment> gold, pred;
        for (int i = 0; i < n; ++i) {
            gold.push_back(static_cast<Sentiment>(rng.uniform_int(0, 2)));
            pred.push_back(static_cast<Sentiment>(rng.uniform_int(0, 2)));
        }
        double sum = 0.0;
        for (int c = 0; c < 3; ++c) {
            long long tp = 0, fp = 0, fn = 0;
            for (int i = 0; i < n; ++i) {
                const bool g = gold[static_cast<size_t>(i)] == static_cast<Sentiment>(c);
                const bool p = pred[static_cast<size_t>(i)] == static_cast<Sentiment>(c);
                tp += (g && p);
                fp += (!g && p);
                fn += (g && !p);
            }
            if (tp + fp + fn > 0 && tp > 0) {
                const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
                const double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
                sum += 2.0 * prec * rec / (prec + rec);
            }
        }
        CHECK(sa_macro_f1(gold, pred) == doctest::Approx(sum / 3.0));
    }
    // One-class corpus: the two absent classes pin the score at 1/3.
    const std::vector<Sentiment> ones(5, Sentiment::Positive);
    CHECK(sa_macro_f1(ones, ones) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("slue score matches the published rows") {
    CHECK(slue_score({10.6, 11.5, 68.9, 65.9}) == doctest::Approx(74.58).epsilon(1e-3));
    CHECK(slue_score({14.7, 16.0, 59.3, 60.9}) == doctest::Approx(68.28).epsilon(1e-3));
    CHECK(slue_score({0, 0, 100, 100}) == doctest::Approx(100.0));
}

TEST_CASE("slue score is affine: +delta WER costs delta/6") {
    Rng rng(48);
    for (int trial = 0; trial < 50; ++trial) {
        SlueInputs x{rng.uniform(0, 50), rng.uniform(0, 50), rng.uniform(0, 100), rng.uniform(0, 100)};
        const double base = slue_score(x);
        const double delta = rng.uniform(0.1, 5.0);
        SlueInputs y = x;
        y.wer_asr_vp += delta;
        CHECK(slue_score(y) == doctest::Approx(base - delta / 6.0));
        SlueInputs z = x;
        z.f1_sa_vc += delta;
        CHECK(slue_score(z) == doctest::Approx(base + delta / 3.0));
    }
}

TEST_CASE("report JSON uses 4-decimal fixed values and stable keys") {
    MetricsReport r;
    r.wer = 12.345678;
    r.ner = PRF{1.0 / 3.0, 2.0 / 3.0, 0.44449999};
    r.slue = 74.5833333;
    const std::string j = r.to_json();
    CHECK(j.find("12.3457") != std::string::npos);
    CHECK(j.find("0.3333") != std::string::npos);
    CHECK(j.find("0.4445") != std::string::npos);
    CHECK(j.find("74.5833") != std::string::npos);
}

}  // TEST_SUITE
