#pragma once

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sluekit {

// The seven entity categories, in the fixed reporting order.
enum class EntityTag { Person = 0, Place, When, Norp, Org, Quant, Law };

inline constexpr int kNumEntityTags = 7;

const std::array<EntityTag, kNumEntityTags>& all_entity_tags();
const std::string& tag_name(EntityTag tag);       // "PERSON", "PLACE", ...
EntityTag tag_from_name(const std::string& name); // throws on unknown name

// Inline markup alphabet: one open symbol per tag plus a shared close symbol,
// each standing alone between single spaces. Exported so manifests, model
// targets and reports share the exact same byte sequences.
const std::string& open_marker(EntityTag tag);    // "§P", "§L", "§W", "§N", "§O", "§Q", "§X"
const std::string& close_marker();                // "§E"
const std::vector<std::string>& all_markers();    // every open symbol plus the close symbol

struct EntitySpan {
    EntityTag tag;
    std::string phrase;
    int order_index = 0;

    bool operator==(const EntitySpan& o) const {
        return tag == o.tag && phrase == o.phrase && order_index == o.order_index;
    }
};

struct TaggedTranscript {
    std::string plain_text;
    std::vector<EntitySpan> spans;

    bool operator==(const TaggedTranscript& o) const {
        return plain_text == o.plain_text && spans == o.spans;
    }
};

class CodecError : public std::runtime_error {
public:
    explicit CodecError(const std::string& msg) : std::runtime_error("nertag: " + msg) {}
};

enum class DecodeMode { Strict, Lenient };

// Wraps each span phrase as "<open> phrase §E" inside the plain text.
// Throws CodecError if a phrase carries a marker symbol or cannot be located
// in the plain text (case-insensitive, left to right).
std::string encode_tagged(const TaggedTranscript& t);

// Inverse of encode_tagged. Strict mode throws CodecError on unbalanced or
// nested markers; lenient mode drops offending markers and never throws.
TaggedTranscript decode_tagged(const std::string& s, DecodeMode mode);

// Multiset of (tag, normalized phrase) pairs; phrases run through
// normalize_text so scoring matches at the token level.
using PairCounts = std::map<std::pair<EntityTag, std::string>, int>;
PairCounts extract_pairs(const TaggedTranscript& t);

}  // namespace sluekit
