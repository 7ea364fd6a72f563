#include "sluekit/annotate.hpp"

#include "sluekit/rng.hpp"
#include "sluekit/synth.hpp"

#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <json.hpp>

using namespace sluekit;

namespace {

// Client wrapper that fails on chosen ids/attempts; for fault injection.
class FlakyAnnotator : public AnnotatorClient {
public:
    FlakyAnnotator(AnnotatorClient& inner, std::set<std::string> fail_transcripts)
        : inner_(inner), fail_(std::move(fail_transcripts)) {}
    AnnotationResult annotate(const std::string& prompt, const std::string& transcript) override {
        if (fail_.count(transcript)) return {false, "", "injected failure"};
        return inner_.annotate(prompt, transcript);
    }
    VerifyResult verify(const std::string& prompt,
                        const std::vector<std::pair<std::string, EntityTag>>& pairs) override {
        return inner_.verify(prompt, pairs);
    }

private:
    AnnotatorClient& inner_;
    std::set<std::string> fail_;
};

// Drops pairs whose phrase length is at most `max_len`.
class ShortPhraseDropper : public AnnotatorClient {
public:
    explicit ShortPhraseDropper(size_t max_len) : max_len_(max_len) {}
    AnnotationResult annotate(const std::string&, const std::string& t) override {
        return {true, t, ""};
    }
    VerifyResult verify(const std::string&,
                        const std::vector<std::pair<std::string, EntityTag>>& pairs) override {
        VerifyResult res;
        res.ok = true;
        for (const auto& [phrase, tag] : pairs) res.keep.push_back(phrase.size() > max_len_);
        return res;
    }

private:
    size_t max_len_;
};

std::vector<Utterance> small_corpus(int n, uint64_t seed) {
    SynthConfig cfg;
    cfg.count = n;
    cfg.seed = seed;
    return synth_corpus(cfg);
}

PromptSpec echo_spec() { return PromptSpec{}; }

}  // namespace

TEST_SUITE("annotate") {

TEST_CASE("balanced fewshot: forced and empty selections") {
    std::vector<TaggedTranscript> pool;
    for (int t = 0; t < kNumEntityTags; ++t) {
        const std::string word = "w" + std::to_string(t);
        pool.push_back({word, {{static_cast<EntityTag>(t), word, 0}}});
    }
    const auto all = balanced_fewshot(pool, 7, 3);
    CHECK(all.size() == 7);
    std::set<EntityTag> seen;
    for (const auto& ex : all) seen.insert(ex.spans[0].tag);
    CHECK(seen.size() == 7);

    CHECK(balanced_fewshot(pool, 0, 3).empty());
    CHECK_THROWS(balanced_fewshot(pool, 8, 3));
}

TEST_CASE("balanced fewshot beats uniform random min-coverage over 100 trials") {
    Rng meta(77);
    for (int trial = 0; trial < 100; ++trial) {
        // Random pool with a skewed tag distribution but full coverage.
        std::vector<TaggedTranscript> pool;
        for (int t = 0; t < kNumEntityTags; ++t) {
            const std::string word = "base" + std::to_string(t);
            pool.push_back({word, {{static_cast<EntityTag>(t), word, 0}}});
        }
        Rng rng(meta.next_u64());
        for (int i = 0; i < 40; ++i) {
            const auto tag = static_cast<EntityTag>(rng.uniform_int(0, 2));  // skew to 3 tags
            const std::string word = "w" + std::to_string(i);
            pool.push_back({word, {{tag, word, 0}}});
        }
        const int n = 14;
        const uint64_t seed = meta.next_u64();

        auto min_coverage = [](const std::vector<TaggedTranscript>& chosen) {
            std::array<long long, kNumEntityTags> cov{};
            for (const auto& ex : chosen) {
                for (const auto& span : ex.spans) cov[static_cast<size_t>(span.tag)] += 1;
            }
            long long mn = cov[0];
            for (long long c : cov) mn = std::min(mn, c);
            return mn;
        };

        const auto balanced = balanced_fewshot(pool, n, seed);

        // Uniform random baseline with the same seed.
        std::vector<size_t> order(pool.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle(seed);
        for (size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1],
                      order[static_cast<size_t>(shuffle.uniform_int(0, static_cast<int64_t>(i) - 1))]);
        }
        std::vector<TaggedTranscript> random_pick;
        for (int i = 0; i < n; ++i) random_pick.push_back(pool[order[static_cast<size_t>(i)]]);

        CHECK(min_coverage(balanced) >= min_coverage(random_pick));
    }
}

TEST_CASE("annotate corpus with an echoing client reproduces gold") {
    const auto corpus = small_corpus(12, 5);
    std::map<std::string, std::string> gold;
    for (const auto& utt : corpus) gold[utt.transcript] = encode_tagged(*utt.tagged);
    EchoAnnotator client(gold);
    AnnotateOptions opts;
    opts.backoff_ms = 0;
    const auto items = annotate_corpus(corpus, client, echo_spec(), opts);
    REQUIRE(items.size() == corpus.size());
    for (size_t i = 0; i < items.size(); ++i) {
        CHECK_FALSE(items[i].failed);
        CHECK(items[i].decoded == *corpus[i].tagged);
    }
    CHECK(eval_annotator(items, corpus).f1 == doctest::Approx(1.0));
}

TEST_CASE("garbage responses keep the item with zero spans") {
    const auto corpus = small_corpus(3, 6);
    class Garbage : public AnnotatorClient {
    public:
        AnnotationResult annotate(const std::string&, const std::string&) override {
            return {true, "§E §E ???", ""};
        }
        VerifyResult verify(const std::string&,
                            const std::vector<std::pair<std::string, EntityTag>>&) override {
            return {true, {}, ""};
        }
    } client;
    AnnotateOptions opts;
    opts.backoff_ms = 0;
    const auto items = annotate_corpus(corpus, client, echo_spec(), opts);
    for (const auto& item : items) {
        CHECK_FALSE(item.failed);
        CHECK(item.decoded.spans.empty());
    }
}

TEST_CASE("injected failures are flagged, not dropped") {
    const auto corpus = small_corpus(100, 7);
    std::map<std::string, std::string> gold;
    for (const auto& utt : corpus) gold[utt.transcript] = encode_tagged(*utt.tagged);
    EchoAnnotator inner(gold);
    std::set<std::string> to_fail;
    for (size_t i = 0; i < corpus.size(); i += 10) to_fail.insert(corpus[i].transcript);
    FlakyAnnotator client(inner, to_fail);
    AnnotateOptions opts;
    opts.backoff_ms = 0;
    const auto items = annotate_corpus(corpus, client, echo_spec(), opts);
    size_t failed = 0;
    for (size_t i = 0; i < items.size(); ++i) {
        if (items[i].failed) {
            ++failed;
            CHECK(to_fail.count(corpus[i].transcript) == 1);
        }
    }
    CHECK(failed == to_fail.size());
    CHECK(items.size() == corpus.size());
}

TEST_CASE("parallel annotation matches sequential output") {
    const auto corpus = small_corpus(40, 8);
    std::map<std::string, std::string> gold;
    for (const auto& utt : corpus) gold[utt.transcript] = encode_tagged(*utt.tagged);
    EchoAnnotator c1(gold), c2(gold);
    AnnotateOptions seq;
    seq.backoff_ms = 0;
    AnnotateOptions par = seq;
    par.parallelism = 4;
    const auto a = annotate_corpus(corpus, c1, echo_spec(), seq);
    const auto b = annotate_corpus(corpus, c2, echo_spec(), par);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].raw_response == b[i].raw_response);
    }
}

TEST_CASE("hallucination filter: substring rule, drift rule, exact keeps") {
    std::vector<AnnotatedItem> items(3);
    // (a) span not in the transcript
    items[0].id = "a";
    items[0].transcript = "we saw john";
    items[0].decoded = {"we saw john", {{EntityTag::Place, "paris", 0}}};
    // clean: annotation round-trips the transcript
    items[1].id = "b";
    items[1].transcript = "we saw john";
    items[1].decoded = {"we saw john", {{EntityTag::Person, "john", 0}}};
    // (b) one changed word out of ten
    items[2].id = "c";
    items[2].transcript = "w1 w2 w3 w4 w5 w6 w7 w8 w9 w10";
    items[2].decoded = {"w1 w2 w3 w4 w5 w6 w7 w8 w9 CHANGED", {}};

    const auto [kept, report] = hallucination_filter(items, 0.05);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].id == "b");
    CHECK(report.input_count == 3);
    CHECK(report.output_count == 1);
    REQUIRE(report.dropped_hallucination_ids.size() == 2);
    CHECK(report.dropped_hallucination_ids[0] == "a");
    CHECK(report.dropped_hallucination_ids[1] == "c");

    // Idempotent: a second pass changes nothing.
    const auto [kept2, report2] = hallucination_filter(kept, 0.05);
    CHECK(kept2.size() == kept.size());
    CHECK(report2.dropped_hallucination_ids.empty());
}

TEST_CASE("reverify prunes exactly the dropped pairs and is idempotent") {
    std::vector<AnnotatedItem> items(2);
    items[0].id = "a";
    items[0].transcript = "the acme office";
    items[0].decoded = {"the acme office",
                        {{EntityTag::Quant, "the", 0}, {EntityTag::Org, "acme", 1}}};
    items[1].id = "b";
    items[1].transcript = "the thing";
    items[1].decoded = {"the thing", {{EntityTag::Quant, "the", 0}}};

    ShortPhraseDropper client(3);  // drops phrases with <= 3 characters
    AnnotateOptions opts;
    const auto [kept, report] = reverify_entities(items, client, opts);
    REQUIRE(kept.size() == 2);
    REQUIRE(kept[0].decoded.spans.size() == 1);
    CHECK(kept[0].decoded.spans[0].phrase == "acme");
    CHECK(kept[1].decoded.spans.empty());
    REQUIRE(report.dropped_pairs.size() == 1);
    CHECK(report.dropped_pairs[0].first == "the");
    CHECK(report.output_count == report.input_count);

    const auto [again, report2] = reverify_entities(kept, client, opts);
    CHECK(report2.dropped_pairs.empty());
    for (size_t i = 0; i < kept.size(); ++i) CHECK(again[i].decoded.spans == kept[i].decoded.spans);

    // Span counts never grow through either filter.
    for (size_t i = 0; i < items.size(); ++i) {
        CHECK(kept[i].decoded.spans.size() <= items[i].decoded.spans.size());
    }
}

TEST_CASE("verifier failure defaults to keep") {
    std::vector<AnnotatedItem> items(1);
    items[0].id = "a";
    items[0].transcript = "the acme office";
    items[0].decoded = {"the acme office", {{EntityTag::Org, "acme", 0}}};
    class FailingVerifier : public AnnotatorClient {
    public:
        AnnotationResult annotate(const std::string&, const std::string& t) override {
            return {true, t, ""};
        }
        VerifyResult verify(const std::string&,
                            const std::vector<std::pair<std::string, EntityTag>>&) override {
            return {false, {}, "down"};
        }
    } client;
    const auto [kept, report] = reverify_entities(items, client, {});
    CHECK(kept[0].decoded.spans.size() == 1);
    CHECK(report.dropped_pairs.empty());
}

TEST_CASE("eval on a controlled half-corrupted corpus") {
    // Two utterances, one span each; corrupt one prediction.
    std::vector<Utterance> gold(2);
    gold[0].id = "a";
    gold[0].transcript = "we saw john";
    gold[0].tagged = TaggedTranscript{"we saw john", {{EntityTag::Person, "john", 0}}};
    gold[1].id = "b";
    gold[1].transcript = "we saw paris";
    gold[1].tagged = TaggedTranscript{"we saw paris", {{EntityTag::Place, "paris", 0}}};

    std::vector<AnnotatedItem> pred(2);
    pred[0].decoded = *gold[0].tagged;
    pred[1].decoded = TaggedTranscript{"we saw paris", {{EntityTag::Person, "paris", 0}}};

    const PRF prf = eval_annotator(pred, gold);
    // TP=1 of 2 predictions and 2 golds: P=R=F1=0.5.
    CHECK(prf.precision == doctest::Approx(0.5));
    CHECK(prf.recall == doctest::Approx(0.5));
    CHECK(prf.f1 == doctest::Approx(0.5));
}

TEST_CASE("dataset stats count spans per split and feed pos_weights") {
    std::vector<Utterance> split(2);
    split[0].id = "a";
    split[0].transcript = "john met john";
    split[0].tagged = TaggedTranscript{
        "john met john",
        {{EntityTag::Person, "john", 0}, {EntityTag::Person, "john", 1}}};
    split[1].id = "b";
    split[1].transcript = "gdpr rules";
    split[1].tagged = TaggedTranscript{"gdpr rules", {{EntityTag::Law, "gdpr", 0}}};

    const auto stats = dataset_stats({{"train", split}, {"empty", {}}});
    CHECK(stats.at("train").at(EntityTag::Person) == 2);
    CHECK(stats.at("train").at(EntityTag::Law) == 1);
    CHECK(stats.at("train").at(EntityTag::Org) == 0);
    for (const auto& [tag, n] : stats.at("empty")) CHECK(n == 0);
}

TEST_CASE("http client round trip against a local server with retry") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/annotate", [&](const httplib::Request& req, httplib::Response& res) {
        const int n = ++hits;
        if (n == 1) {
            res.status = 500;  // first call fails, the retry succeeds
            return;
        }
        const auto body = nlohmann::json::parse(req.body);
        CHECK(body.contains("prompt"));
        const std::string transcript = body.at("transcript").get<std::string>();
        nlohmann::json out;
        if (transcript.find('\t') != std::string::npos) {
            // verification shape: one verdict per line
            std::string verdicts;
            size_t lines = std::count(transcript.begin(), transcript.end(), '\n');
            for (size_t i = 0; i < lines; ++i) verdicts += (i % 2 == 0 ? "keep\n" : "drop\n");
            out["tagged"] = verdicts;
        } else {
            out["tagged"] = "§P " + transcript + " §E";
        }
        res.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    while (!server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(5));

    HttpAnnotator client("http://127.0.0.1:" + std::to_string(port) + "/annotate");

    Utterance utt;
    utt.id = "u";
    utt.transcript = "john";
    AnnotateOptions opts;
    opts.backoff_ms = 0;
    const auto items = annotate_corpus({utt}, client, echo_spec(), opts);
    REQUIRE(items.size() == 1);
    CHECK_FALSE(items[0].failed);
    CHECK(items[0].decoded.spans.size() == 1);
    CHECK(items[0].decoded.spans[0].phrase == "john");

    const auto verdicts = client.verify("judge", {{"john", EntityTag::Person},
                                                  {"the", EntityTag::Quant}});
    REQUIRE(verdicts.ok);
    REQUIRE(verdicts.keep.size() == 2);
    CHECK(verdicts.keep[0]);
    CHECK_FALSE(verdicts.keep[1]);

    server.stop();
    server_thread.join();
}

TEST_CASE("apply_annotations carries original fields and new markup") {
    const auto corpus = small_corpus(5, 9);
    std::map<std::string, std::string> gold;
    for (const auto& utt : corpus) gold[utt.transcript] = encode_tagged(*utt.tagged);
    EchoAnnotator client(gold);
    AnnotateOptions opts;
    opts.backoff_ms = 0;
    const auto items = annotate_corpus(corpus, client, echo_spec(), opts);
    const auto rebuilt = apply_annotations(corpus, items);
    REQUIRE(rebuilt.size() == corpus.size());
    for (size_t i = 0; i < rebuilt.size(); ++i) {
        CHECK(rebuilt[i].id == corpus[i].id);
        CHECK(rebuilt[i].feature_seed == corpus[i].feature_seed);
        CHECK(*rebuilt[i].tagged == *corpus[i].tagged);
    }
}

}  // TEST_SUITE
