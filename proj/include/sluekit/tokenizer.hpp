#pragma once

#include <map>
#include <string>
#include <vector>

namespace sluekit {

// Character-level tokenizer with a fixed inventory. Entity markers and the
// sentiment separator are single tokens; everything else is one character.
class CharTokenizer {
public:
    CharTokenizer();

    int pad_id() const { return 0; }
    int eos_id() const { return 1; }
    int unk_id() const { return 2; }
    int vocab_size() const { return static_cast<int>(pieces_.size()); }

    // Longest-match over the special symbols, then single characters.
    // Unknown bytes map to <unk>.
    std::vector<int> encode(const std::string& text) const;

    // Concatenation of pieces; <pad>/<eos>/<unk> render as nothing.
    std::string decode(const std::vector<int>& ids) const;

    const std::string& piece(int id) const { return pieces_[static_cast<size_t>(id)]; }
    int piece_id(const std::string& piece) const;  // -1 when absent

    // The "<transcript> <sep> <class>" separator used for sentiment targets.
    static const std::string& sentiment_sep();

private:
    std::vector<std::string> pieces_;
    std::map<std::string, int> ids_;
    std::vector<std::string> specials_;  // multi-byte pieces, longest first
};

}  // namespace sluekit
