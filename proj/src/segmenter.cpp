#include "scale/segmenter.hpp"

#include "scale/error.hpp"

#include <algorithm>
#include <cctype>

namespace scale {
namespace {

constexpr std::string_view kDefaultInstruction =
    "First think about the reasoning process, then provide the answer. The reasoning process and answer "
    "are enclosed within <think>...</think> and <answer>...</answer> tags.";

std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r\n\f\v";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

bool only_whitespace(std::string_view s) { return trim(s).empty(); }

std::vector<std::size_t> occurrences(std::string_view text, std::string_view needle) {
    std::vector<std::size_t> out;
    for (auto p = text.find(needle); p != std::string_view::npos; p = text.find(needle, p + needle.size()))
        out.push_back(p);
    return out;
}

// Exactly one occurrence that comes after every occurrence of `predecessor`.
std::optional<std::size_t> placed_once_after(const std::vector<std::size_t>& self,
                                             const std::vector<std::size_t>& predecessor) {
    if (self.size() != 1) return std::nullopt;
    if (!predecessor.empty() && predecessor.back() > self.front()) return std::nullopt;
    return self.front();
}

} // namespace

std::string_view to_string(SegmentLabel label) {
    switch (label) {
    case SegmentLabel::Prompt: return "prompt";
    case SegmentLabel::Think: return "think";
    case SegmentLabel::Answer: return "answer";
    }
    return "?";
}

PromptTemplate::PromptTemplate() : PromptTemplate(std::string(kDefaultInstruction) + " {question}") {}

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
    if (text_.find(kPlaceholder) == std::string::npos)
        throw ConfigError("prompt template lacks the {question} placeholder");
}

std::string PromptTemplate::apply(std::string_view question) const {
    std::string out = text_;
    for (auto p = out.find(kPlaceholder); p != std::string::npos; p = out.find(kPlaceholder, p + question.size()))
        out.replace(p, kPlaceholder.size(), question);
    return out;
}

std::size_t EncodedSample::count(SegmentLabel label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::vector<TokenId> EncodedSample::full_sequence() const {
    std::vector<TokenId> seq;
    seq.reserve(1 + prompt_ids.size() + target_ids.size());
    seq.push_back(Vocabulary::kBos);
    seq.insert(seq.end(), prompt_ids.begin(), prompt_ids.end());
    seq.insert(seq.end(), target_ids.begin(), target_ids.end());
    return seq;
}

std::vector<TokenId> encode_prompt(std::string_view question, const Vocabulary& vocab, const PromptTemplate& tmpl) {
    return vocab.tokenize(tmpl.apply(question));
}

EncodedSample encode(const Sample& sample, const Vocabulary& vocab, const PromptTemplate& tmpl) {
    validate_sample(sample);
    EncodedSample out;
    out.prompt_ids = encode_prompt(sample.prompt, vocab, tmpl);

    const auto think = vocab.tokenize(sample.think);
    const auto answer = vocab.tokenize(sample.answer);

    auto& t = out.target_ids;
    t.reserve(think.size() + answer.size() + 5);
    t.push_back(Vocabulary::kThinkOpenId);
    t.insert(t.end(), think.begin(), think.end());
    t.push_back(Vocabulary::kThinkCloseId);
    t.push_back(Vocabulary::kAnswerOpenId);
    t.insert(t.end(), answer.begin(), answer.end());
    t.push_back(Vocabulary::kAnswerCloseId);
    t.push_back(Vocabulary::kEos);

    const std::size_t n_think = 1 + think.size();
    out.labels.assign(n_think, SegmentLabel::Think);
    out.labels.resize(t.size(), SegmentLabel::Answer);
    return out;
}

std::optional<std::string> extract_answer(std::string_view completion) {
    const auto open = completion.find(kAnswerOpen);
    if (open == std::string_view::npos) return std::nullopt;
    const auto start = open + kAnswerOpen.size();
    const auto close = completion.find(kAnswerClose, start);
    if (close == std::string_view::npos) return std::nullopt;
    return std::string(trim(completion.substr(start, close - start)));
}

std::string normalize_answer(std::string_view text) {
    auto s = trim(text);
    constexpr std::string_view prefix = "final answer";
    if (s.size() >= prefix.size()) {
        bool same = true;
        for (std::size_t i = 0; i < prefix.size() && same; ++i)
            same = std::tolower(static_cast<unsigned char>(s[i])) == prefix[i];
        if (same) {
            auto rest = trim(s.substr(prefix.size()));
            if (!rest.empty() && rest.front() == ':') s = trim(rest.substr(1));
        }
    }
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

bool answers_match(const std::optional<std::string>& extracted, std::string_view gold) {
    return extracted.has_value() && normalize_answer(*extracted) == normalize_answer(gold);
}

TagPlacement score_tags(std::string_view completion) {
    const auto think_open = occurrences(completion, kThinkOpen);
    const auto think_close = occurrences(completion, kThinkClose);
    const auto answer_open = occurrences(completion, kAnswerOpen);
    const auto answer_close = occurrences(completion, kAnswerClose);

    TagPlacement p;
    p.think_open_ok = think_open.size() == 1 && only_whitespace(completion.substr(0, think_open.front()));
    p.think_close_ok = placed_once_after(think_close, think_open).has_value();
    p.answer_open_ok = placed_once_after(answer_open, think_close).has_value();
    if (auto pos = placed_once_after(answer_close, answer_open))
        p.answer_close_ok = only_whitespace(completion.substr(*pos + kAnswerClose.size()));
    return p;
}

TagPlacement score_tags(std::span<const TokenId> completion, const Vocabulary& vocab) {
    return score_tags(vocab.decode(completion));
}

bool is_valid_output(std::string_view completion) { return extract_answer(completion).has_value(); }

} // namespace scale
