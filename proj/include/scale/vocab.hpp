#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace scale {

using TokenId = std::int32_t;

inline constexpr std::string_view kThinkOpen = "<think>";
inline constexpr std::string_view kThinkClose = "</think>";
inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";

// Closed word-level vocabulary. Ids are dense in [0, size()); the first seven
// ids are fixed: pad, bos, eos, then the four tags. Tags are always single
// atomic tokens.
//
// Tokenization rules, applied left to right:
//   - whitespace separates tokens and is otherwise dropped;
//   - a tag string is one token;
//   - a run of [A-Za-z0-9_] is one token;
//   - any other character (a full UTF-8 sequence) is one token.
// decode() joins tokens with a single space, so text written in that canonical
// form survives tokenize/decode unchanged.
class Vocabulary {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kBos = 1;
    static constexpr TokenId kEos = 2;
    static constexpr TokenId kThinkOpenId = 3;
    static constexpr TokenId kThinkCloseId = 4;
    static constexpr TokenId kAnswerOpenId = 5;
    static constexpr TokenId kAnswerCloseId = 6;
    static constexpr TokenId kFirstWordId = 7;

    // Specials and tags are prepended; duplicates or reserved strings in
    // `words` are a ConfigError.
    explicit Vocabulary(std::span<const std::string> words);

    // Built-in vocabulary covering the default prompt template, the
    // synthetic task families, the numbers 0..99 and the "Final Answer" prefix.
    static const Vocabulary& builtin();

    // Rebuild from a full token list as stored in a checkpoint.
    static Vocabulary from_tokens(std::span<const std::string> tokens);

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::string& token(TokenId id) const;
    std::optional<TokenId> find(std::string_view token) const;
    bool is_tag(TokenId id) const noexcept { return id >= kThinkOpenId && id <= kAnswerCloseId; }

    // Throws EncodingError naming the offending word or character.
    std::vector<TokenId> tokenize(std::string_view text) const;
    std::size_t count_tokens(std::string_view text) const { return tokenize(text).size(); }

    // Stops at the first EOS; BOS and PAD are skipped.
    std::string decode(std::span<const TokenId> ids) const;

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

private:
    Vocabulary() = default;
    void index();

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> ids_;
};

} // namespace scale
