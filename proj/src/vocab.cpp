#include "scale/vocab.hpp"

#include "scale/error.hpp"

#include <array>
#include <cctype>

namespace scale {
namespace {

constexpr std::array<std::string_view, 7> kReserved = {
    kPadToken, kBosToken, kEosToken, kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose};

constexpr std::array<std::string_view, 4> kTags = {kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose};

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c == '_'; }

std::size_t utf8_length(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xE) return 3;
    if ((lead >> 3) == 0x1E) return 4;
    return 1;
}

std::vector<std::string> builtin_words() {
    std::vector<std::string> words;
    for (int n = 0; n < 100; ++n) words.push_back(std::to_string(n));
    // default instruction
    for (const char* w : {"First", "think", "about", "the", "reasoning", "process", "then", "provide",
                          "answer", "The", "and", "are", "enclosed", "within", "tags"})
        words.emplace_back(w);
    // task families
    for (const char* w : {"count", "fruits", "add", "total", "is", "so"})
        words.emplace_back(w);
    for (const char* w : {"apple", "pear", "plum", "fig", "lime", "kiwi", "peach", "grape"})
        words.emplace_back(w);
    for (const char* w : {"Final", "Answer"})
        words.emplace_back(w);
    for (const char* w : {".", ",", ":", "?", "+", "=", "|"})
        words.emplace_back(w);
    return words;
}

} // namespace

Vocabulary::Vocabulary(std::span<const std::string> words) {
    for (auto r : kReserved) tokens_.emplace_back(r);
    for (const auto& w : words) {
        for (auto r : kReserved)
            if (w == r) throw ConfigError("vocabulary word '" + w + "' is reserved");
        tokens_.push_back(w);
    }
    index();
}

Vocabulary Vocabulary::from_tokens(std::span<const std::string> tokens) {
    if (tokens.size() < kReserved.size())
        throw ValidationError("token list is shorter than the reserved prefix");
    for (std::size_t i = 0; i < kReserved.size(); ++i)
        if (tokens[i] != kReserved[i])
            throw ValidationError("token " + std::to_string(i) + " must be '" + std::string(kReserved[i]) + "'");
    return Vocabulary(tokens.subspan(kReserved.size()));
}

const Vocabulary& Vocabulary::builtin() {
    static const Vocabulary vocab = [] {
        auto words = builtin_words();
        return Vocabulary(words);
    }();
    return vocab;
}

void Vocabulary::index() {
    ids_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        const auto& t = tokens_[i];
        if (t.empty()) throw ConfigError("empty vocabulary entry");
        if (!ids_.emplace(t, static_cast<TokenId>(i)).second)
            throw ConfigError("duplicate vocabulary entry '" + t + "'");
    }
}

const std::string& Vocabulary::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw ContractViolation("token id " + std::to_string(id) + " outside vocabulary");
    return tokens_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

std::vector<TokenId> Vocabulary::tokenize(std::string_view text) const {
    std::vector<TokenId> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c) != 0) {
            ++i;
            continue;
        }
        bool matched_tag = false;
        for (std::size_t t = 0; t < kTags.size(); ++t) {
            if (text.substr(i, kTags[t].size()) == kTags[t]) {
                out.push_back(kThinkOpenId + static_cast<TokenId>(t));
                i += kTags[t].size();
                matched_tag = true;
                break;
            }
        }
        if (matched_tag) continue;

        std::size_t len = 1;
        if (is_word_char(c)) {
            while (i + len < n && is_word_char(static_cast<unsigned char>(text[i + len]))) ++len;
        } else {
            len = std::min(utf8_length(c), n - i);
        }
        const auto piece = text.substr(i, len);
        auto id = find(piece);
        if (!id)
            throw EncodingError("unknown token '" + std::string(piece) + "' at offset " + std::to_string(i));
        out.push_back(*id);
        i += len;
    }
    return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
    std::string out;
    for (TokenId id : ids) {
        if (id == kEos) break;
        if (id == kBos || id == kPad) continue;
        if (!out.empty()) out.push_back(' ');
        out += token(id);
    }
    return out;
}

} // namespace scale
