#pragma once

#include "scale/corpus.hpp"
#include "scale/model.hpp"
#include "scale/segmenter.hpp"

#include "json.hpp"

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace scale {

struct ExampleRecord {
    std::size_t prompt_id = 0;  // index in the test set
    std::string prompt;
    std::string completion;
    std::optional<std::string> extracted;
    std::string gold;
    bool match = false;
    bool valid = false;
};

struct EvalReport {
    std::size_t n_examples = 0;
    double exact_match = 0.0;
    double invalid_rate = 0.0;
    std::vector<ExampleRecord> per_example;
};

// Scores given completions against the test set (completion i belongs to sample i).
EvalReport build_report(std::span<const Sample> test_samples, std::span<const std::string> completions);

// Greedy decoding of every test prompt. The sampler must have temperature 0.
EvalReport evaluate(const ModelParams& params, std::span<const Sample> test_samples, const SamplerConfig& sampler,
                    const Vocabulary& vocab, const PromptTemplate& tmpl);

struct CompareReport {
    std::size_t n_examples = 0;
    double exact_match_a = 0.0, exact_match_b = 0.0;
    double invalid_rate_a = 0.0, invalid_rate_b = 0.0;
    double delta_exact_match = 0.0;   // b - a
    double delta_invalid_rate = 0.0;  // b - a
    std::vector<std::size_t> match_to_miss;  // prompt ids matched in a, missed in b
    std::vector<std::size_t> miss_to_match;
};

// Throws ContractViolation unless both reports cover the same prompts.
CompareReport compare(const EvalReport& a, const EvalReport& b);

nlohmann::json summary_json(const EvalReport& report);
nlohmann::json to_json(const ExampleRecord& record);
nlohmann::json to_json(const CompareReport& report);

// <stem>.json (summary) and <stem>.jsonl (per example) next to each other.
void write_report(const std::filesystem::path& summary_path, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& summary_path);
std::filesystem::path per_example_path(const std::filesystem::path& summary_path);

} // namespace scale
