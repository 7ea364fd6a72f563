#pragma once

#include "sluekit/manifest.hpp"
#include "sluekit/metrics.hpp"
#include "sluekit/nertag.hpp"

#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace sluekit {

// Few-shot annotation prompt: an instruction restricted to the seven tag
// categories plus (transcript, tagged) example pairs.
struct PromptSpec {
    std::string instruction =
        "Mark the named entities in the transcript using the inline markers. "
        "Only use the seven categories listed below; leave everything else untouched.";
    std::vector<std::pair<std::string, std::string>> fewshot;  // (transcript, tagged)

    // Throws if an example does not strict-decode.
    void validate() const;
    std::string build(const std::string& transcript) const;
};

struct AnnotationResult {
    bool ok = false;
    std::string tagged;
    std::string error;
};

struct VerifyResult {
    bool ok = false;
    std::vector<bool> keep;
    std::string error;
};

// The annotator boundary: a remote LLM endpoint in production, deterministic
// mocks in tests. Implementations must be safe for concurrent calls.
class AnnotatorClient {
public:
    virtual ~AnnotatorClient() = default;
    virtual AnnotationResult annotate(const std::string& prompt, const std::string& transcript) = 0;
    virtual VerifyResult verify(const std::string& prompt,
                                const std::vector<std::pair<std::string, EntityTag>>& pairs) = 0;
};

// Returns the gold markup recorded for a transcript; transcripts without an
// entry come back untagged.
class EchoAnnotator : public AnnotatorClient {
public:
    explicit EchoAnnotator(std::map<std::string, std::string> gold_by_transcript)
        : gold_(std::move(gold_by_transcript)) {}
    AnnotationResult annotate(const std::string& prompt, const std::string& transcript) override;
    VerifyResult verify(const std::string& prompt,
                        const std::vector<std::pair<std::string, EntityTag>>& pairs) override;

private:
    std::map<std::string, std::string> gold_;
};

// Tags whitespace-delimited words through a fixed word -> tag lexicon and, on
// verify, keeps exactly the pairs whose phrase the lexicon knows.
class RuleAnnotator : public AnnotatorClient {
public:
    explicit RuleAnnotator(std::map<std::string, EntityTag> lexicon) : lexicon_(std::move(lexicon)) {}
    AnnotationResult annotate(const std::string& prompt, const std::string& transcript) override;
    VerifyResult verify(const std::string& prompt,
                        const std::vector<std::pair<std::string, EntityTag>>& pairs) override;

private:
    std::map<std::string, EntityTag> lexicon_;
};

// HTTP JSON client: POST {prompt, transcript} -> {tagged}. Verification goes
// through the same wire shape with one "phrase<TAB>TAG" pair per transcript
// line and one keep/drop verdict per response line.
class HttpAnnotator : public AnnotatorClient {
public:
    HttpAnnotator(std::string endpoint, std::string auth_token = "", int timeout_sec = 30);
    AnnotationResult annotate(const std::string& prompt, const std::string& transcript) override;
    VerifyResult verify(const std::string& prompt,
                        const std::vector<std::pair<std::string, EntityTag>>& pairs) override;

private:
    std::string post_tagged(const std::string& prompt, const std::string& transcript,
                            std::string& error);
    std::string host_;
    std::string path_;
    std::string token_;
    int timeout_sec_;
};

struct AnnotatedItem {
    std::string id;
    std::string transcript;
    std::string raw_response;
    TaggedTranscript decoded;  // lenient decode of the response
    bool failed = false;
};

struct FilterReport {
    long long input_count = 0;
    std::vector<std::string> dropped_hallucination_ids;
    std::vector<std::pair<std::string, EntityTag>> dropped_pairs;
    long long output_count = 0;

    std::string to_json() const;
};

// Greedy max-min selection: repeatedly take the example that most increases
// the currently least-covered tag's span count, ties broken by a seed-shuffled
// pool order. Throws when n exceeds the pool size.
std::vector<TaggedTranscript> balanced_fewshot(const std::vector<TaggedTranscript>& pool, int n,
                                               uint64_t seed);

struct AnnotateOptions {
    int attempts = 3;
    int backoff_ms = 250;  // doubles per retry
    int parallelism = 1;   // bounded in-flight requests
    double hallucination_threshold = 0.05;
    int verify_batch_size = 32;
};

// One client call per transcript (with retries); failures are flagged on the
// item, never dropped. Output order matches input order.
std::vector<AnnotatedItem> annotate_corpus(const std::vector<Utterance>& transcripts,
                                           AnnotatorClient& client, const PromptSpec& spec,
                                           const AnnotateOptions& opts = {});

// Drops items whose spans are not substrings of the source transcript or
// whose marker-stripped text drifts beyond the edit-distance threshold.
std::pair<std::vector<AnnotatedItem>, FilterReport> hallucination_filter(
    const std::vector<AnnotatedItem>& items, double threshold = 0.05);

// Collects unique (normalized phrase, tag) pairs, asks the client to judge
// them in batches and prunes dropped pairs from every item. Failed batches
// default to keep.
std::pair<std::vector<AnnotatedItem>, FilterReport> reverify_entities(
    const std::vector<AnnotatedItem>& items, AnnotatorClient& client,
    const AnnotateOptions& opts = {});

// Micro-F1 of the annotations against gold markup, aligned by position.
PRF eval_annotator(const std::vector<AnnotatedItem>& pred, const std::vector<Utterance>& gold);

// Span counts per tag for each named split.
std::map<std::string, std::map<EntityTag, long long>> dataset_stats(
    const std::map<std::string, std::vector<Utterance>>& splits);

// Rebuilds manifest rows for the surviving items: every original field is
// kept, the tagged markup comes from the filtered annotation.
std::vector<Utterance> apply_annotations(const std::vector<Utterance>& original,
                                         const std::vector<AnnotatedItem>& kept);

}  // namespace sluekit
