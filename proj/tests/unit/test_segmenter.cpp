#include "doctest.h"

#include "oracles.hpp"

#include "scale/corpus.hpp"
#include "scale/error.hpp"
#include "scale/segmenter.hpp"

#include <random>

using namespace scale;

namespace {

const Sample kSample{"count the fruits : apple apple pear pear pear", "apple 2 . pear 3 . 2 + 3 = 5 .", "5", "5"};

} // namespace

TEST_CASE("encode layout and labels") {
    const auto& v = Vocabulary::builtin();
    const PromptTemplate tmpl("{question}");
    const auto e = encode(kSample, v, tmpl);
    CHECK(e.prompt_ids == v.tokenize(kSample.prompt));
    CHECK(v.decode(e.target_ids) == "<think> apple 2 . pear 3 . 2 + 3 = 5 . </think> <answer> 5 </answer>");
    REQUIRE(e.target_ids.back() == Vocabulary::kEos);
    REQUIRE(e.labels.size() == e.target_ids.size());
    const std::size_t think_tokens = 1 + v.count_tokens(kSample.think);
    for (std::size_t i = 0; i < e.labels.size(); ++i)
        CHECK(e.labels[i] == (i < think_tokens ? SegmentLabel::Think : SegmentLabel::Answer));
    CHECK(e.target_ids[think_tokens] == Vocabulary::kThinkCloseId);
    CHECK(e.count(SegmentLabel::Think) == think_tokens);
    CHECK(e.count(SegmentLabel::Answer) == 5);  // </think> <answer> 5 </answer> <eos>
    CHECK(e.count(SegmentLabel::Prompt) == 0);
    const auto full = e.full_sequence();
    CHECK(full.front() == Vocabulary::kBos);
    CHECK(e.input_length() == full.size() - 1);
}

TEST_CASE("default template wraps the question") {
    const PromptTemplate tmpl;
    const auto text = tmpl.apply("add : 1 + 2");
    CHECK(text.rfind("First", 0) == 0);
    CHECK(text.size() > 20);
    CHECK(text.substr(text.size() - 11) == "add : 1 + 2");
    CHECK_NOTHROW(Vocabulary::builtin().tokenize(text));
    CHECK_THROWS_AS(PromptTemplate("no placeholder"), ConfigError);
    CHECK(PromptTemplate("Q {question} ?").apply("x") == "Q x ?");
}

TEST_CASE("segments never come out empty") {
    const auto& v = Vocabulary::builtin();
    Sample s = kSample;
    s.think = "  ";
    const auto e = encode(s, v, PromptTemplate{});
    CHECK(e.count(SegmentLabel::Think) == 1);  // the opening tag alone
    s.answer = "";
    CHECK(encode(s, v, PromptTemplate{}).count(SegmentLabel::Answer) == 4);
    s = kSample;
    s.prompt = "count banana";
    CHECK_THROWS_AS(encode(s, v, PromptTemplate{}), EncodingError);
}

TEST_CASE("extract_answer takes the first closed block") {
    CHECK(extract_answer("<think> x </think> <answer> 5 </answer>") == std::optional<std::string>("5"));
    CHECK(extract_answer("<answer> 1 </answer> <answer> 2 </answer>") == std::optional<std::string>("1"));
    CHECK(extract_answer("<answer>  </answer>") == std::optional<std::string>(""));
    CHECK_FALSE(extract_answer("<think> x </think> 5").has_value());
    CHECK_FALSE(extract_answer("<answer> 5").has_value());
    CHECK_FALSE(extract_answer("</answer> 5 <answer>").has_value());
}

TEST_CASE("normalization") {
    CHECK(normalize_answer("  Final Answer: 12 ") == "12");
    CHECK(normalize_answer("final answer :B") == "b");
    CHECK(normalize_answer("FINAL ANSWER 3") == "final answer 3");
    CHECK(normalize_answer("Apple") == "apple");
    CHECK(answers_match(std::optional<std::string>("Final Answer: 7"), "7"));
    CHECK_FALSE(answers_match(std::nullopt, "7"));
    CHECK_FALSE(answers_match(std::optional<std::string>("07"), "7"));
}

TEST_CASE("canonical completion scores four tags") {
    const std::string c = "<think> a </think> <answer> 5 </answer>";
    CHECK(score_tags(c).n_correct() == 4);
    CHECK(is_valid_output(c));
    CHECK(score_tags("junk <think> a </think> <answer> 5 </answer>").n_correct() == 3);
    CHECK(score_tags("<think> a </think> <answer> 5 </answer> junk").n_correct() == 3);
    CHECK(score_tags("<think> <think> a </think> <answer> 5 </answer>").n_correct() == 3);
    CHECK(score_tags("<think> a </think> </think> <answer> 5 </answer>").n_correct() == 3);
    CHECK(score_tags("<answer> 5 </answer> <think> a </think>").n_correct() == 1);
    CHECK(score_tags("").n_correct() == 0);
}

TEST_CASE("removing any single tag costs exactly one credit") {
    const std::vector<std::string> tags{"<think>", "</think>", "<answer>", "</answer>"};
    for (std::size_t drop = 0; drop < tags.size(); ++drop) {
        std::string c;
        for (std::size_t i = 0; i < tags.size(); ++i)
            if (i != drop) c += tags[i] + (i == 1 ? " x " : " ");
        CHECK(score_tags(c).n_correct() == 3);
    }
}

TEST_CASE("score_tags agrees with the substring oracle on random strings") {
    const std::vector<std::string> pieces{"<think>", "</think>", "<answer>", "</answer>", " ", "5", " x ", "\n"};
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> len(0, 9), pick(0, static_cast<int>(pieces.size()) - 1);
    for (int trial = 0; trial < 5000; ++trial) {
        std::string c;
        for (int k = len(rng); k > 0; --k) c += pieces[static_cast<std::size_t>(pick(rng))];
        CHECK(score_tags(c).n_correct() == oracle::tags_correct(c));
        CHECK(extract_answer(c) == oracle::extract(c));
    }
}

TEST_CASE("token-level scoring matches text scoring") {
    const auto& v = Vocabulary::builtin();
    const std::string c = "<think> apple 2 . </think> <answer> 2 </answer>";
    CHECK(score_tags(v.tokenize(c), v).n_correct() == score_tags(c).n_correct());
}
