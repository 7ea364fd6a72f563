#include "sluekit/nertag.hpp"

#include "sluekit/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <sstream>

namespace sluekit {

namespace {

const std::array<std::string, kNumEntityTags> kTagNames = {
    "PERSON", "PLACE", "WHEN", "NORP", "ORG", "QUANT", "LAW"};

const std::array<std::string, kNumEntityTags> kOpenMarkers = {
    "§P", "§L", "§W", "§N", "§O", "§Q", "§X"};

const std::string kCloseMarker = "§E";

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// Case-insensitive substring search from `from`; npos when absent.
size_t find_ci(const std::string& haystack, const std::string& needle, size_t from) {
    const std::string h = to_lower(haystack);
    const std::string n = to_lower(needle);
    return h.find(n, from);
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

std::optional<EntityTag> marker_tag(const std::string& tok) {
    for (int i = 0; i < kNumEntityTags; ++i) {
        if (tok == kOpenMarkers[static_cast<size_t>(i)]) return static_cast<EntityTag>(i);
    }
    return std::nullopt;
}

std::string join(const std::vector<std::string>& toks) {
    std::string out;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) out += ' ';
        out += toks[i];
    }
    return out;
}

}  // namespace

const std::array<EntityTag, kNumEntityTags>& all_entity_tags() {
    static const std::array<EntityTag, kNumEntityTags> tags = {
        EntityTag::Person, EntityTag::Place, EntityTag::When, EntityTag::Norp,
        EntityTag::Org,    EntityTag::Quant, EntityTag::Law};
    return tags;
}

const std::string& tag_name(EntityTag tag) { return kTagNames[static_cast<size_t>(tag)]; }

EntityTag tag_from_name(const std::string& name) {
    for (int i = 0; i < kNumEntityTags; ++i) {
        if (name == kTagNames[static_cast<size_t>(i)]) return static_cast<EntityTag>(i);
    }
    throw CodecError("unknown entity tag name: " + name);
}

const std::string& open_marker(EntityTag tag) { return kOpenMarkers[static_cast<size_t>(tag)]; }

const std::string& close_marker() { return kCloseMarker; }

const std::vector<std::string>& all_markers() {
    static const std::vector<std::string> markers = [] {
        std::vector<std::string> m(kOpenMarkers.begin(), kOpenMarkers.end());
        m.push_back(kCloseMarker);
        return m;
    }();
    return markers;
}

std::string encode_tagged(const TaggedTranscript& t) {
    std::string out;
    size_t cursor = 0;
    for (const auto& span : t.spans) {
        if (span.phrase.empty()) throw CodecError("empty span phrase");
        if (span.phrase.find("§") != std::string::npos) {
            throw CodecError("span phrase contains a reserved marker symbol: " + span.phrase);
        }
        const size_t pos = find_ci(t.plain_text, span.phrase, cursor);
        if (pos == std::string::npos) {
            throw CodecError("span phrase not found in plain text: " + span.phrase);
        }
        out += t.plain_text.substr(cursor, pos - cursor);
        if (!out.empty() && out.back() != ' ') out += ' ';
        out += open_marker(span.tag);
        out += ' ';
        out += t.plain_text.substr(pos, span.phrase.size());
        out += ' ';
        out += kCloseMarker;
        cursor = pos + span.phrase.size();
        if (cursor < t.plain_text.size() && t.plain_text[cursor] != ' ') out += ' ';
    }
    out += t.plain_text.substr(cursor);
    return out;
}

TaggedTranscript decode_tagged(const std::string& s, DecodeMode mode) {
    const bool strict = (mode == DecodeMode::Strict);
    const auto tokens = split_ws(s);

    TaggedTranscript result;
    std::vector<std::string> plain_tokens;
    int open = -1;  // tag index of the pending open marker, -1 when none
    std::vector<std::string> phrase_tokens;
    int order = 0;

    for (const auto& tok : tokens) {
        if (auto tag = marker_tag(tok)) {
            if (open >= 0) {
                if (strict) throw CodecError("nested open marker " + tok);
                // lenient: the earlier open marker is unmatched and dropped
                phrase_tokens.clear();
            }
            open = static_cast<int>(*tag);
            phrase_tokens.clear();
            continue;
        }
        if (tok == kCloseMarker) {
            if (open < 0) {
                if (strict) throw CodecError("close marker without open");
                continue;
            }
            if (phrase_tokens.empty()) {
                if (strict) throw CodecError("empty span");
            } else {
                result.spans.push_back({static_cast<EntityTag>(open), join(phrase_tokens), order++});
            }
            open = -1;
            phrase_tokens.clear();
            continue;
        }
        plain_tokens.push_back(tok);
        if (open >= 0) phrase_tokens.push_back(tok);
    }
    if (open >= 0 && strict) throw CodecError("unbalanced open marker at end of text");

    result.plain_text = join(plain_tokens);
    return result;
}

PairCounts extract_pairs(const TaggedTranscript& t) {
    PairCounts counts;
    for (const auto& span : t.spans) {
        const auto toks = normalize_text(span.phrase);
        counts[{span.tag, join(toks)}] += 1;
    }
    return counts;
}

}  // namespace sluekit
