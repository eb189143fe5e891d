#include "scale/eval.hpp"

#include "scale/error.hpp"

#include <fstream>
#include <sstream>

namespace scale {

EvalReport build_report(std::span<const Sample> test_samples, std::span<const std::string> completions) {
    if (test_samples.empty()) throw ConfigError("evaluation needs a non-empty test set");
    if (completions.size() != test_samples.size())
        throw ContractViolation("completion count does not match test set size");
    EvalReport r;
    r.n_examples = test_samples.size();
    std::size_t matches = 0, invalid = 0;
    for (std::size_t i = 0; i < test_samples.size(); ++i) {
        ExampleRecord e;
        e.prompt_id = i;
        e.prompt = test_samples[i].prompt;
        e.completion = completions[i];
        e.extracted = extract_answer(e.completion);
        e.gold = test_samples[i].gold;
        e.valid = e.extracted.has_value();
        e.match = answers_match(e.extracted, e.gold);
        matches += e.match ? 1 : 0;
        invalid += e.valid ? 0 : 1;
        r.per_example.push_back(std::move(e));
    }
    r.exact_match = double(matches) / double(r.n_examples);
    r.invalid_rate = double(invalid) / double(r.n_examples);
    return r;
}

EvalReport evaluate(const ModelParams& params, std::span<const Sample> test_samples, const SamplerConfig& sampler,
                    const Vocabulary& vocab, const PromptTemplate& tmpl) {
    if (sampler.temperature != 0.0) throw ConfigError("evaluation requires greedy decoding (temperature 0)");
    if (test_samples.empty()) throw ConfigError("evaluation needs a non-empty test set");
    std::vector<std::string> completions;
    completions.reserve(test_samples.size());
    for (const auto& s : test_samples) {
        const auto prompt = encode_prompt(s.prompt, vocab, tmpl);
        completions.push_back(sample(params, prompt, sampler, vocab).text);
    }
    return build_report(test_samples, completions);
}

CompareReport compare(const EvalReport& a, const EvalReport& b) {
    if (a.n_examples != b.n_examples || a.per_example.size() != b.per_example.size())
        throw ContractViolation("reports cover different numbers of examples");
    CompareReport c;
    c.n_examples = a.n_examples;
    for (std::size_t i = 0; i < a.per_example.size(); ++i) {
        const auto& x = a.per_example[i];
        const auto& y = b.per_example[i];
        if (x.prompt_id != y.prompt_id || x.prompt != y.prompt || x.gold != y.gold)
            throw ContractViolation("reports disagree on example " + std::to_string(i));
        if (x.match && !y.match) c.match_to_miss.push_back(x.prompt_id);
        if (!x.match && y.match) c.miss_to_match.push_back(x.prompt_id);
    }
    c.exact_match_a = a.exact_match;
    c.exact_match_b = b.exact_match;
    c.invalid_rate_a = a.invalid_rate;
    c.invalid_rate_b = b.invalid_rate;
    c.delta_exact_match = b.exact_match - a.exact_match;
    c.delta_invalid_rate = b.invalid_rate - a.invalid_rate;
    return c;
}

nlohmann::json summary_json(const EvalReport& r) {
    return {{"n_examples", r.n_examples}, {"exact_match", r.exact_match}, {"invalid_rate", r.invalid_rate}};
}

nlohmann::json to_json(const ExampleRecord& e) {
    nlohmann::json j = {{"prompt_id", e.prompt_id}, {"prompt", e.prompt}, {"completion", e.completion},
                        {"gold", e.gold},           {"match", e.match},   {"valid", e.valid}};
    j["extracted"] = e.extracted ? nlohmann::json(*e.extracted) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const CompareReport& c) {
    return {{"n_examples", c.n_examples},
            {"exact_match_a", c.exact_match_a},
            {"exact_match_b", c.exact_match_b},
            {"invalid_rate_a", c.invalid_rate_a},
            {"invalid_rate_b", c.invalid_rate_b},
            {"delta_exact_match", c.delta_exact_match},
            {"delta_invalid_rate", c.delta_invalid_rate},
            {"match_to_miss", c.match_to_miss},
            {"miss_to_match", c.miss_to_match}};
}

std::filesystem::path per_example_path(const std::filesystem::path& summary_path) {
    auto p = summary_path;
    p.replace_extension(".jsonl");
    return p;
}

void write_report(const std::filesystem::path& summary_path, const EvalReport& report) {
    if (summary_path.has_parent_path()) std::filesystem::create_directories(summary_path.parent_path());
    {
        std::ofstream out(summary_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + summary_path.string());
        out << summary_json(report).dump(2) << '\n';
    }
    const auto detail = per_example_path(summary_path);
    std::ofstream out(detail, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + detail.string());
    for (const auto& e : report.per_example) out << to_json(e).dump() << '\n';
}

EvalReport read_report(const std::filesystem::path& summary_path) {
    EvalReport r;
    try {
        std::ifstream in(summary_path);
        if (!in) throw IoError("cannot open " + summary_path.string());
        const auto summary = nlohmann::json::parse(in);
        r.n_examples = summary.at("n_examples").get<std::size_t>();
        r.exact_match = summary.at("exact_match").get<double>();
        r.invalid_rate = summary.at("invalid_rate").get<double>();

        const auto detail = per_example_path(summary_path);
        std::ifstream lines(detail);
        if (!lines) throw IoError("cannot open " + detail.string());
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(lines, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto j = nlohmann::json::parse(line);
            ExampleRecord e;
            e.prompt_id = j.at("prompt_id").get<std::size_t>();
            e.prompt = j.at("prompt").get<std::string>();
            e.completion = j.at("completion").get<std::string>();
            e.gold = j.at("gold").get<std::string>();
            e.match = j.at("match").get<bool>();
            e.valid = j.at("valid").get<bool>();
            if (!j.at("extracted").is_null()) e.extracted = j.at("extracted").get<std::string>();
            r.per_example.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(summary_path.string() + ": malformed report (" + e.what() + ")");
    }
    if (r.per_example.size() != r.n_examples)
        throw ParseError(summary_path.string() + ": per-example record count disagrees with summary");
    return r;
}

} // namespace scale
