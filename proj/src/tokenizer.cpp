#include "sluekit/tokenizer.hpp"

#include "sluekit/nertag.hpp"

#include <algorithm>
#include <stdexcept>

namespace sluekit {

const std::string& CharTokenizer::sentiment_sep() {
    static const std::string sep = "§SENT";
    return sep;
}

CharTokenizer::CharTokenizer() {
    auto push = [this](const std::string& piece) {
        ids_[piece] = static_cast<int>(pieces_.size());
        pieces_.push_back(piece);
    };
    push("<pad>");
    push("<eos>");
    push("<unk>");
    for (const auto& marker : all_markers()) push(marker);
    push(sentiment_sep());

    std::string chars = " ";
    for (char c = 'a'; c <= 'z'; ++c) chars += c;
    for (char c = 'A'; c <= 'Z'; ++c) chars += c;
    for (char c = '0'; c <= '9'; ++c) chars += c;
    chars += ".,:;!?'-\"()";
    for (char c : chars) push(std::string(1, c));

    for (const auto& [piece, id] : ids_) {
        if (piece.size() > 1 && piece[0] != '<') specials_.push_back(piece);
    }
    std::sort(specials_.begin(), specials_.end(),
              [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
}

std::vector<int> CharTokenizer::encode(const std::string& text) const {
    std::vector<int> out;
    size_t i = 0;
    while (i < text.size()) {
        bool matched = false;
        for (const auto& sp : specials_) {
            if (text.compare(i, sp.size(), sp) == 0) {
                out.push_back(ids_.at(sp));
                i += sp.size();
                matched = true;
                break;
            }
        }
        if (matched) continue;
        auto it = ids_.find(std::string(1, text[i]));
        out.push_back(it == ids_.end() ? unk_id() : it->second);
        ++i;
    }
    return out;
}

std::string CharTokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= vocab_size()) {
            throw std::out_of_range("tokenizer: id out of range: " + std::to_string(id));
        }
        if (id == pad_id() || id == eos_id() || id == unk_id()) continue;
        out += pieces_[static_cast<size_t>(id)];
    }
    return out;
}

int CharTokenizer::piece_id(const std::string& piece) const {
    auto it = ids_.find(piece);
    return it == ids_.end() ? -1 : it->second;
}

}  // namespace sluekit
