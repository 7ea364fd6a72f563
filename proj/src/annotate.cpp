#include "sluekit/annotate.hpp"

#include "sluekit/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace sluekit {

namespace {

std::string to_lower_copy(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

bool contains_ci(const std::string& haystack, const std::string& needle) {
    return to_lower_copy(haystack).find(to_lower_copy(needle)) != std::string::npos;
}

std::string normalized_phrase(const std::string& phrase) {
    const auto toks = normalize_text(phrase);
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) out += ' ';
        out += toks[i];
    }
    return out;
}

}  // namespace

void PromptSpec::validate() const {
    for (const auto& [transcript, tagged] : fewshot) {
        decode_tagged(tagged, DecodeMode::Strict);  // throws CodecError when malformed
        if (transcript.empty()) throw std::invalid_argument("annotate: empty few-shot transcript");
    }
}

std::string PromptSpec::build(const std::string& transcript) const {
    std::ostringstream os;
    os << instruction << "\n" << "Categories:";
    for (EntityTag tag : all_entity_tags()) {
        os << " " << tag_name(tag) << "=" << open_marker(tag);
    }
    os << " close=" << close_marker() << "\n";
    for (const auto& [text, tagged] : fewshot) {
        os << "Transcript: " << text << "\n" << "Tagged: " << tagged << "\n";
    }
    os << "Transcript: " << transcript << "\n" << "Tagged:";
    return os.str();
}

AnnotationResult EchoAnnotator::annotate(const std::string&, const std::string& transcript) {
    auto it = gold_.find(transcript);
    return {true, it == gold_.end() ? transcript : it->second, ""};
}

VerifyResult EchoAnnotator::verify(const std::string&,
                                   const std::vector<std::pair<std::string, EntityTag>>& pairs) {
    return {true, std::vector<bool>(pairs.size(), true), ""};
}

AnnotationResult RuleAnnotator::annotate(const std::string&, const std::string& transcript) {
    std::istringstream is(transcript);
    std::string word, out;
    while (is >> word) {
        if (!out.empty()) out += ' ';
        auto it = lexicon_.find(to_lower_copy(word));
        if (it != lexicon_.end()) {
            out += open_marker(it->second) + " " + word + " " + close_marker();
        } else {
            out += word;
        }
    }
    return {true, out, ""};
}

VerifyResult RuleAnnotator::verify(const std::string&,
                                   const std::vector<std::pair<std::string, EntityTag>>& pairs) {
    VerifyResult res;
    res.ok = true;
    for (const auto& [phrase, tag] : pairs) {
        auto it = lexicon_.find(to_lower_copy(phrase));
        res.keep.push_back(it != lexicon_.end() && it->second == tag);
    }
    return res;
}

HttpAnnotator::HttpAnnotator(std::string endpoint, std::string auth_token, int timeout_sec)
    : token_(std::move(auth_token)), timeout_sec_(timeout_sec) {
    std::string rest = endpoint;
    const auto scheme = rest.find("://");
    if (scheme != std::string::npos) rest = rest.substr(scheme + 3);
    const auto slash = rest.find('/');
    if (slash == std::string::npos) {
        host_ = rest;
        path_ = "/annotate";
    } else {
        host_ = rest.substr(0, slash);
        path_ = rest.substr(slash);
    }
    if (host_.empty()) throw std::invalid_argument("annotate: empty endpoint host");
}

std::string HttpAnnotator::post_tagged(const std::string& prompt, const std::string& transcript,
                                       std::string& error) {
    httplib::Client cli(("http://" + host_).c_str());
    cli.set_connection_timeout(timeout_sec_);
    cli.set_read_timeout(timeout_sec_);
    httplib::Headers headers;
    if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);

    nlohmann::ordered_json body = {{"prompt", prompt}, {"transcript", transcript}};
    auto res = cli.Post(path_.c_str(), headers, body.dump(), "application/json");
    if (!res) {
        error = "connection failed";
        return "";
    }
    if (res->status != 200) {
        error = "http status " + std::to_string(res->status);
        return "";
    }
    try {
        const auto j = nlohmann::json::parse(res->body);
        if (!j.contains("tagged") || !j["tagged"].is_string()) {
            error = "response missing \"tagged\"";
            return "";
        }
        return j["tagged"].get<std::string>();
    } catch (const nlohmann::json::parse_error& e) {
        error = std::string("bad JSON: ") + e.what();
        return "";
    }
}

AnnotationResult HttpAnnotator::annotate(const std::string& prompt, const std::string& transcript) {
    AnnotationResult out;
    out.tagged = post_tagged(prompt, transcript, out.error);
    out.ok = out.error.empty();
    return out;
}

VerifyResult HttpAnnotator::verify(const std::string& prompt,
                                   const std::vector<std::pair<std::string, EntityTag>>& pairs) {
    std::ostringstream lines;
    for (const auto& [phrase, tag] : pairs) lines << phrase << "\t" << tag_name(tag) << "\n";
    VerifyResult res;
    const std::string body = post_tagged(prompt, lines.str(), res.error);
    if (!res.error.empty()) return res;

    std::istringstream is(body);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        res.keep.push_back(to_lower_copy(line).find("drop") == std::string::npos);
    }
    if (res.keep.size() != pairs.size()) {
        res.error = "verdict count mismatch";
        return res;
    }
    res.ok = true;
    return res;
}

std::vector<TaggedTranscript> balanced_fewshot(const std::vector<TaggedTranscript>& pool, int n,
                                               uint64_t seed) {
    if (n < 0 || static_cast<size_t>(n) > pool.size()) {
        throw std::invalid_argument("annotate: requested " + std::to_string(n) +
                                    " few-shot examples from a pool of " +
                                    std::to_string(pool.size()));
    }
    std::vector<size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1))]);
    }

    // Per-example span counts by tag.
    std::vector<std::array<int, kNumEntityTags>> gains(pool.size());
    for (size_t i = 0; i < pool.size(); ++i) {
        gains[i].fill(0);
        for (const auto& span : pool[i].spans) gains[i][static_cast<size_t>(span.tag)] += 1;
    }

    std::array<long long, kNumEntityTags> coverage{};
    std::vector<bool> used(pool.size(), false);
    std::vector<TaggedTranscript> out;
    for (int pick = 0; pick < n; ++pick) {
        // Tags by current coverage, least first.
        std::array<int, kNumEntityTags> tags_by_need;
        std::iota(tags_by_need.begin(), tags_by_need.end(), 0);
        std::sort(tags_by_need.begin(), tags_by_need.end(), [&](int a, int b) {
            if (coverage[static_cast<size_t>(a)] != coverage[static_cast<size_t>(b)]) {
                return coverage[static_cast<size_t>(a)] < coverage[static_cast<size_t>(b)];
            }
            return a < b;
        });

        size_t chosen = pool.size();
        for (int tag : tags_by_need) {
            int best_gain = 0;
            for (size_t oi : order) {
                if (used[oi]) continue;
                const int g = gains[oi][static_cast<size_t>(tag)];
                if (g > best_gain) {
                    best_gain = g;
                    chosen = oi;
                }
            }
            if (best_gain > 0) break;
        }
        if (chosen == pool.size()) {
            for (size_t oi : order) {
                if (!used[oi]) {
                    chosen = oi;
                    break;
                }
            }
        }
        used[chosen] = true;
        for (int t = 0; t < kNumEntityTags; ++t) {
            coverage[static_cast<size_t>(t)] += gains[chosen][static_cast<size_t>(t)];
        }
        out.push_back(pool[chosen]);
    }
    return out;
}

std::vector<AnnotatedItem> annotate_corpus(const std::vector<Utterance>& transcripts,
                                           AnnotatorClient& client, const PromptSpec& spec,
                                           const AnnotateOptions& opts) {
    spec.validate();
    std::vector<AnnotatedItem> items(transcripts.size());

    auto process = [&](size_t i) {
        const Utterance& utt = transcripts[i];
        AnnotatedItem item;
        item.id = utt.id;
        item.transcript = utt.transcript;
        const std::string prompt = spec.build(utt.transcript);
        AnnotationResult res;
        for (int attempt = 0; attempt < std::max(1, opts.attempts); ++attempt) {
            if (attempt > 0 && opts.backoff_ms > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(opts.backoff_ms * (1 << (attempt - 1))));
            }
            res = client.annotate(prompt, utt.transcript);
            if (res.ok) break;
        }
        if (res.ok) {
            item.raw_response = res.tagged;
            item.decoded = decode_tagged(res.tagged, DecodeMode::Lenient);
        } else {
            item.failed = true;
        }
        items[i] = std::move(item);
    };

    const int workers = std::max(1, opts.parallelism);
    if (workers == 1) {
        for (size_t i = 0; i < transcripts.size(); ++i) process(i);
    } else {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (size_t i = next.fetch_add(1); i < transcripts.size(); i = next.fetch_add(1)) {
                    process(i);
                }
            });
        }
        for (auto& t : pool) t.join();
    }
    return items;
}

std::pair<std::vector<AnnotatedItem>, FilterReport> hallucination_filter(
    const std::vector<AnnotatedItem>& items, double threshold) {
    FilterReport report;
    report.input_count = static_cast<long long>(items.size());
    std::vector<AnnotatedItem> kept;
    for (const auto& item : items) {
        bool drop = item.failed;
        if (!drop) {
            for (const auto& span : item.decoded.spans) {
                if (!contains_ci(item.transcript, span.phrase)) {
                    drop = true;
                    break;
                }
            }
        }
        if (!drop) {
            const double dist = normalized_edit_distance(normalize_text(item.decoded.plain_text),
                                                         normalize_text(item.transcript));
            drop = dist > threshold;
        }
        if (drop) {
            report.dropped_hallucination_ids.push_back(item.id);
        } else {
            kept.push_back(item);
        }
    }
    report.output_count = static_cast<long long>(kept.size());
    return {std::move(kept), report};
}

std::pair<std::vector<AnnotatedItem>, FilterReport> reverify_entities(
    const std::vector<AnnotatedItem>& items, AnnotatorClient& client, const AnnotateOptions& opts) {
    FilterReport report;
    report.input_count = static_cast<long long>(items.size());

    std::set<std::pair<std::string, EntityTag>> unique_pairs;
    for (const auto& item : items) {
        for (const auto& span : item.decoded.spans) {
            unique_pairs.insert({normalized_phrase(span.phrase), span.tag});
        }
    }
    const std::vector<std::pair<std::string, EntityTag>> ordered(unique_pairs.begin(),
                                                                 unique_pairs.end());

    const std::string prompt =
        "Judge each entity/tag pair below. Answer one line per pair: keep when it is a "
        "meaningful named entity of that category, drop otherwise.";
    std::set<std::pair<std::string, EntityTag>> dropped;
    const size_t batch = static_cast<size_t>(std::max(1, opts.verify_batch_size));
    for (size_t at = 0; at < ordered.size(); at += batch) {
        const size_t end = std::min(ordered.size(), at + batch);
        const std::vector<std::pair<std::string, EntityTag>> chunk(ordered.begin() + at,
                                                                   ordered.begin() + end);
        const VerifyResult res = client.verify(prompt, chunk);
        if (!res.ok) continue;  // failed batches default to keep
        for (size_t k = 0; k < chunk.size(); ++k) {
            if (!res.keep[k]) dropped.insert(chunk[k]);
        }
    }

    std::vector<AnnotatedItem> kept;
    kept.reserve(items.size());
    for (const auto& item : items) {
        AnnotatedItem pruned = item;
        pruned.decoded.spans.clear();
        int order = 0;
        for (const auto& span : item.decoded.spans) {
            if (dropped.count({normalized_phrase(span.phrase), span.tag})) {
                continue;
            }
            EntitySpan s = span;
            s.order_index = order++;
            pruned.decoded.spans.push_back(std::move(s));
        }
        kept.push_back(std::move(pruned));
    }
    report.dropped_pairs.assign(dropped.begin(), dropped.end());
    report.output_count = static_cast<long long>(kept.size());
    return {std::move(kept), report};
}

PRF eval_annotator(const std::vector<AnnotatedItem>& pred, const std::vector<Utterance>& gold) {
    if (pred.size() != gold.size()) {
        throw std::invalid_argument("annotate: pred/gold corpora are not aligned");
    }
    std::vector<PairCounts> g, p;
    for (size_t i = 0; i < gold.size(); ++i) {
        g.push_back(gold[i].tagged ? extract_pairs(*gold[i].tagged) : PairCounts{});
        p.push_back(extract_pairs(pred[i].decoded));
    }
    return ner_micro_f1(g, p);
}

std::map<std::string, std::map<EntityTag, long long>> dataset_stats(
    const std::map<std::string, std::vector<Utterance>>& splits) {
    std::map<std::string, std::map<EntityTag, long long>> out;
    for (const auto& [split, utts] : splits) {
        auto& counts = out[split];
        for (EntityTag t : all_entity_tags()) counts[t] = 0;
        for (const auto& utt : utts) {
            if (!utt.tagged) continue;
            for (const auto& span : utt.tagged->spans) counts[span.tag] += 1;
        }
    }
    return out;
}

std::vector<Utterance> apply_annotations(const std::vector<Utterance>& original,
                                         const std::vector<AnnotatedItem>& kept) {
    std::map<std::string, const Utterance*> by_id;
    for (const auto& utt : original) by_id[utt.id] = &utt;
    std::vector<Utterance> out;
    for (const auto& item : kept) {
        auto it = by_id.find(item.id);
        if (it == by_id.end()) {
            throw std::invalid_argument("annotate: item id not in the source manifest: " + item.id);
        }
        Utterance utt = *it->second;
        utt.tagged = item.decoded;
        out.push_back(std::move(utt));
    }
    return out;
}

std::string FilterReport::to_json() const {
    nlohmann::ordered_json j;
    j["input_count"] = input_count;
    j["dropped_hallucination"] = {{"count", dropped_hallucination_ids.size()},
                                  {"ids", dropped_hallucination_ids}};
    nlohmann::ordered_json pairs = nlohmann::ordered_json::array();
    for (const auto& [phrase, tag] : dropped_pairs) {
        pairs.push_back({{"phrase", phrase}, {"tag", tag_name(tag)}});
    }
    j["dropped_reverify"] = {{"count", dropped_pairs.size()}, {"pairs", pairs}};
    j["output_count"] = output_count;
    return j.dump(2);
}

}  // namespace sluekit
