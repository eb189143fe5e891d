#pragma once

#include "scale/corpus.hpp"
#include "scale/vocab.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scale {

enum class SegmentLabel : std::uint8_t { Prompt, Think, Answer };

std::string_view to_string(SegmentLabel label);

// Prompt text wrapper. `{question}` is replaced by the sample prompt.
class PromptTemplate {
public:
    static constexpr std::string_view kPlaceholder = "{question}";

    PromptTemplate();  // default instruction followed by the question
    explicit PromptTemplate(std::string text);

    const std::string& text() const noexcept { return text_; }
    std::string apply(std::string_view question) const;

private:
    std::string text_;
};

// target_ids = <think> think </think> <answer> answer </answer> <eos>.
// </think> belongs to the answer segment; everything before it in the target
// (including <think>) is THINK.
struct EncodedSample {
    std::vector<TokenId> prompt_ids;
    std::vector<TokenId> target_ids;
    std::vector<SegmentLabel> labels;

    std::size_t count(SegmentLabel label) const;
    // Length of the model input: <bos> + prompt + target minus the last target token.
    std::size_t input_length() const { return 1 + prompt_ids.size() + target_ids.size() - 1; }
    // <bos> + prompt + target.
    std::vector<TokenId> full_sequence() const;
};

EncodedSample encode(const Sample& sample, const Vocabulary& vocab, const PromptTemplate& tmpl);

// Prompt token ids (template applied) for generation.
std::vector<TokenId> encode_prompt(std::string_view question, const Vocabulary& vocab, const PromptTemplate& tmpl);

// Interior of the first <answer> ... next </answer> pair, whitespace-trimmed.
std::optional<std::string> extract_answer(std::string_view completion);

// Shared exact-match normalization: trim, drop an optional "Final Answer:"
// prefix, trim again, ASCII case-fold.
std::string normalize_answer(std::string_view text);

// False when the answer is absent.
bool answers_match(const std::optional<std::string>& extracted, std::string_view gold);

struct TagPlacement {
    bool think_open_ok = false;
    bool think_close_ok = false;
    bool answer_open_ok = false;
    bool answer_close_ok = false;

    int n_correct() const noexcept {
        return int(think_open_ok) + int(think_close_ok) + int(answer_open_ok) + int(answer_close_ok);
    }
};

// A tag is correctly placed when it occurs exactly once and after every
// occurrence of the tag that precedes it in the canonical layout (vacuously
// true when that tag is absent). Additionally <think> must be the first
// non-whitespace content and </answer> must be followed only by whitespace.
TagPlacement score_tags(std::string_view completion);
TagPlacement score_tags(std::span<const TokenId> completion, const Vocabulary& vocab);

bool is_valid_output(std::string_view completion);

} // namespace scale
