#include "doctest.h"

#include "scratch.hpp"

#include "scale/corpus.hpp"
#include "scale/error.hpp"
#include "scale/vocab.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <string>

using namespace scale;

namespace {

int sum_of_numbers(const std::string& text) {
    // Adds every standalone integer in a space separated prompt.
    std::istringstream in(text);
    std::string w;
    int s = 0;
    while (in >> w)
        if (std::isdigit(static_cast<unsigned char>(w[0]))) s += std::stoi(w);
    return s;
}

} // namespace

TEST_CASE("counting sample layout") {
    const std::vector<int> groups{2, 3};
    const std::vector<std::string> nouns{"apple", "pear"};
    const auto s = counting_sample(groups, nouns);
    CHECK(s.prompt == "count the fruits : apple apple pear pear pear");
    CHECK(s.think == "apple 2 . pear 3 . 2 + 3 = 5 .");
    CHECK(s.answer == "5");
    CHECK(s.gold == "5");
}

TEST_CASE("addition chain sample layout") {
    const std::vector<int> ops{1, 2, 4};
    const auto s = addition_chain_sample(ops);
    CHECK(s.prompt == "add : 1 + 2 + 4");
    CHECK(s.think == "1 + 2 = 3 . 3 + 4 = 7 .");
    CHECK(s.answer == "7");
}

TEST_CASE("builders reject out of range values") {
    const std::vector<std::string> nouns{"apple", "pear"};
    CHECK_THROWS_AS(counting_sample(std::vector<int>{0, 2}, nouns), ConfigError);
    CHECK_THROWS_AS(counting_sample(std::vector<int>{10, 2}, nouns), ConfigError);
    CHECK_THROWS_AS(counting_sample(std::vector<int>{1, 2, 3}, nouns), ConfigError);
    CHECK_THROWS_AS(addition_chain_sample(std::vector<int>{}), ConfigError);
}

TEST_CASE("generated samples are valid, tokenizable and correct") {
    const auto& vocab = Vocabulary::builtin();
    for (auto kind : {TaskKind::Counting, TaskKind::AdditionChain}) {
        const int max_d = kind == TaskKind::Counting ? 8 : 11;
        for (int d = 2; d <= max_d; ++d) {
            const auto samples = generate({kind, d, static_cast<std::uint64_t>(d * 31), 40});
            REQUIRE(samples.size() == 40);
            for (const auto& s : samples) {
                validate_sample(s);
                CHECK_NOTHROW(vocab.tokenize(s.prompt));
                CHECK_NOTHROW(vocab.tokenize(s.think));
                CHECK_NOTHROW(vocab.tokenize(s.answer));
                CHECK(s.answer == s.gold);
                if (kind == TaskKind::AdditionChain) {
                    CHECK(std::stoi(s.gold) == sum_of_numbers(s.prompt));
                } else {
                    // prompt holds d distinct nouns; word count after ":" equals the total
                    const auto words = vocab.tokenize(s.prompt);
                    CHECK(static_cast<int>(words.size()) - 4 == std::stoi(s.gold));
                    std::set<TokenId> distinct(words.begin() + 4, words.end());
                    CHECK(static_cast<int>(distinct.size()) == d);
                }
            }
        }
    }
}

TEST_CASE("generation is deterministic in the spec") {
    const TaskSpec spec{TaskKind::Counting, 4, 99, 50};
    CHECK(generate(spec) == generate(spec));
    TaskSpec other = spec;
    other.seed = 100;
    CHECK(generate(spec) != generate(other));
}

TEST_CASE("generate rejects bad specs") {
    CHECK_THROWS_AS(generate({TaskKind::Counting, 1, 0, 10}), ConfigError);
    CHECK_THROWS_AS(generate({TaskKind::Counting, 9, 0, 10}), ConfigError);
    CHECK_THROWS_AS(generate({TaskKind::AdditionChain, 12, 0, 10}), ConfigError);
    CHECK_THROWS_AS(generate({TaskKind::Counting, 3, 0, 0}), ConfigError);
    CHECK_THROWS_AS(parse_task_kind("sorting"), ConfigError);
    CHECK(parse_task_kind(to_string(TaskKind::AdditionChain)) == TaskKind::AdditionChain);
}

TEST_CASE("validate_sample rejects tags and empty gold") {
    Sample s{"add : 1 + 2", "1 + 2 = 3 .", "3", "3"};
    CHECK_NOTHROW(validate_sample(s));
    s.think = "1 + 2 </think> 3";
    CHECK_THROWS_AS(validate_sample(s), ValidationError);
    s.think = "ok";
    s.answer = "<answer> 3";
    CHECK_THROWS_AS(validate_sample(s), ValidationError);
    s.answer = "3";
    s.gold = "";
    CHECK_THROWS_AS(validate_sample(s), ValidationError);
}

TEST_CASE("jsonl round trip and line-numbered errors") {
    ScratchDir dir("corpus");
    const auto samples = generate({TaskKind::AdditionChain, 3, 5, 25});
    save_jsonl(dir / "d.jsonl", samples);
    CHECK(load_jsonl(dir / "d.jsonl") == samples);
    CHECK(parse_jsonl(to_jsonl(samples)) == samples);

    const std::string good = to_jsonl(std::span(samples).first(1));
    try {
        parse_jsonl(good + "\n{\"prompt\": \"x\"}\n");
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_jsonl("{not json}\n"), ParseError);
    CHECK_THROWS_AS(parse_jsonl("{\"prompt\":1,\"think\":\"a\",\"answer\":\"b\",\"gold\":\"b\"}\n"), ParseError);
    CHECK_THROWS_AS(load_jsonl(dir / "missing.jsonl"), IoError);
}

TEST_CASE("split partitions the input") {
    const auto samples = generate({TaskKind::Counting, 3, 1, 100});
    const auto parts = split(samples, 0.8, 3);
    CHECK(parts.train.size() == 80);
    CHECK(parts.test.size() == 20);
    std::multiset<std::string> all, joined;
    for (const auto& s : samples) all.insert(s.prompt + "|" + s.think);
    for (const auto& s : parts.train) joined.insert(s.prompt + "|" + s.think);
    for (const auto& s : parts.test) joined.insert(s.prompt + "|" + s.think);
    CHECK(all == joined);
    CHECK(split(samples, 0.001, 3).train.size() == 1);
    CHECK(split(samples, 0.999, 3).test.size() == 1);
    CHECK_THROWS_AS(split(samples, 1.0, 3), ConfigError);
}
