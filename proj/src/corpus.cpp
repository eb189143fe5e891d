#include "scale/corpus.hpp"

#include "scale/error.hpp"
#include "scale/vocab.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace scale {
namespace {

constexpr std::array<std::string_view, 4> kTags = {kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose};

const std::vector<std::string>& fruit_nouns() {
    static const std::vector<std::string> nouns = {"apple", "pear", "plum", "fig",
                                                   "lime",  "kiwi", "peach", "grape"};
    return nouns;
}

constexpr int kMaxValue = 9;
constexpr int kMaxTotal = 99;

void check_values(std::span<const int> values, std::string_view what) {
    if (values.size() < 2) throw ConfigError(std::string(what) + ": need at least 2 values");
    int total = 0;
    for (int v : values) {
        if (v < 1 || v > kMaxValue)
            throw ConfigError(std::string(what) + ": value " + std::to_string(v) + " outside [1, 9]");
        total += v;
    }
    if (total > kMaxTotal) throw ConfigError(std::string(what) + ": total exceeds 99");
}

// "a + b = s ." for each running step, starting from values[0].
void append_running_sums(std::string& think, std::span<const int> values) {
    int acc = values[0];
    for (std::size_t i = 1; i < values.size(); ++i) {
        const int next = acc + values[i];
        if (!think.empty()) think += ' ';
        think += std::to_string(acc) + " + " + std::to_string(values[i]) + " = " + std::to_string(next) + " .";
        acc = next;
    }
}

int draw(std::mt19937_64& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

} // namespace

TaskKind parse_task_kind(std::string_view name) {
    if (name == "counting") return TaskKind::Counting;
    if (name == "addition_chain" || name == "addition-chain") return TaskKind::AdditionChain;
    throw ConfigError("unknown task '" + std::string(name) + "' (expected counting or addition_chain)");
}

std::string_view to_string(TaskKind kind) {
    return kind == TaskKind::Counting ? "counting" : "addition_chain";
}

void validate_sample(const Sample& sample) {
    for (const auto* field : {&sample.think, &sample.answer}) {
        for (auto tag : kTags) {
            if (field->find(tag) != std::string::npos) {
                const char* name = field == &sample.think ? "think" : "answer";
                throw ValidationError(std::string(name) + " contains reserved tag " + std::string(tag));
            }
        }
    }
    if (sample.gold.empty()) throw ValidationError("gold is empty");
}

Sample counting_sample(std::span<const int> group_sizes, std::span<const std::string> nouns) {
    check_values(group_sizes, "counting");
    if (nouns.size() < group_sizes.size()) throw ConfigError("counting: fewer nouns than groups");

    Sample s;
    s.prompt = "count the fruits :";
    for (std::size_t g = 0; g < group_sizes.size(); ++g)
        for (int k = 0; k < group_sizes[g]; ++k) s.prompt += " " + nouns[g];

    for (std::size_t g = 0; g < group_sizes.size(); ++g) {
        if (!s.think.empty()) s.think += ' ';
        s.think += nouns[g] + " " + std::to_string(group_sizes[g]) + " .";
    }
    append_running_sums(s.think, group_sizes);

    const int total = std::accumulate(group_sizes.begin(), group_sizes.end(), 0);
    s.answer = std::to_string(total);
    s.gold = s.answer;
    return s;
}

Sample addition_chain_sample(std::span<const int> operands) {
    check_values(operands, "addition chain");
    Sample s;
    s.prompt = "add :";
    for (std::size_t i = 0; i < operands.size(); ++i)
        s.prompt += (i == 0 ? " " : " + ") + std::to_string(operands[i]);
    append_running_sums(s.think, operands);
    s.answer = std::to_string(std::accumulate(operands.begin(), operands.end(), 0));
    s.gold = s.answer;
    return s;
}

std::vector<Sample> generate(const TaskSpec& spec) {
    if (spec.size == 0) throw ConfigError("dataset size must be at least 1");
    const int max_difficulty = spec.kind == TaskKind::Counting ? static_cast<int>(fruit_nouns().size()) : 11;
    if (spec.difficulty < 2 || spec.difficulty > max_difficulty)
        throw ConfigError("difficulty must be in [2, " + std::to_string(max_difficulty) + "] for " +
                          std::string(to_string(spec.kind)));

    std::mt19937_64 rng(spec.seed);
    const auto& vocab = Vocabulary::builtin();
    std::vector<Sample> out;
    out.reserve(spec.size);
    std::vector<int> values(static_cast<std::size_t>(spec.difficulty));

    while (out.size() < spec.size) {
        Sample s;
        if (spec.kind == TaskKind::Counting) {
            // Group sizes 1..5 keep the prompt short; nouns are distinct per sample.
            for (auto& v : values) v = draw(rng, 1, 5);
            std::vector<std::string> nouns = fruit_nouns();
            std::shuffle(nouns.begin(), nouns.end(), rng);
            s = counting_sample(values, nouns);
        } else {
            for (auto& v : values) v = draw(rng, 1, kMaxValue);
            s = addition_chain_sample(values);
        }
        if (vocab.count_tokens(s.think) <= vocab.count_tokens(s.answer))
            throw std::logic_error("generated think trace is not longer than its answer");
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> parse_jsonl(std::string_view text) {
    std::vector<Sample> out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

        const std::string where = "line " + std::to_string(line_no) + ": ";
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(where + "malformed JSON (" + e.what() + ")");
        }
        if (!obj.is_object()) throw ParseError(where + "expected a JSON object");
        Sample s;
        for (auto [key, field] : {std::pair{"prompt", &s.prompt}, std::pair{"think", &s.think},
                                  std::pair{"answer", &s.answer}, std::pair{"gold", &s.gold}}) {
            auto it = obj.find(key);
            if (it == obj.end() || !it->is_string())
                throw ParseError(where + "missing or non-string field '" + key + "'");
            *field = it->get<std::string>();
        }
        try {
            validate_sample(s);
        } catch (const ValidationError& e) {
            throw ValidationError(where + e.what());
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Sample> load_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_jsonl(buf.str());
}

std::string to_jsonl(std::span<const Sample> samples) {
    std::string out;
    for (const auto& s : samples) {
        nlohmann::json obj = {{"prompt", s.prompt}, {"think", s.think}, {"answer", s.answer}, {"gold", s.gold}};
        out += obj.dump();
        out += '\n';
    }
    return out;
}

void save_jsonl(const std::filesystem::path& path, std::span<const Sample> samples) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_jsonl(samples);
    if (!out) throw IoError("write failed for " + path.string());
}

Split split(std::span<const Sample> samples, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train fraction must be inside (0, 1)");
    if (samples.size() < 2) throw ConfigError("split needs at least 2 samples");

    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    const auto n = static_cast<long long>(samples.size());
    const long long cut = std::clamp(std::llround(train_fraction * static_cast<double>(n)), 1LL, n - 1);
    Split out;
    for (long long i = 0; i < n; ++i)
        (i < cut ? out.train : out.test).push_back(samples[order[static_cast<std::size_t>(i)]]);
    return out;
}

} // namespace scale
