#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scale {

// One supervised example. think and answer hold the segment contents without
// the surrounding tags; gold is the reference used for reward and evaluation.
struct Sample {
    std::string prompt;
    std::string think;
    std::string answer;
    std::string gold;

    friend bool operator==(const Sample&, const Sample&) = default;
};

enum class TaskKind { Counting, AdditionChain };

struct TaskSpec {
    TaskKind kind = TaskKind::Counting;
    int difficulty = 2;       // number of groups / operands
    std::uint64_t seed = 0;
    std::size_t size = 1;
};

TaskKind parse_task_kind(std::string_view name);
std::string_view to_string(TaskKind kind);

// Throws ValidationError when a reserved tag appears in think/answer or gold is empty.
void validate_sample(const Sample& sample);

// Builders for single samples. Group/operand values must be in [1, 9] and
// their sum below 100.
Sample counting_sample(std::span<const int> group_sizes, std::span<const std::string> nouns);
Sample addition_chain_sample(std::span<const int> operands);

// Deterministic in `spec`. Throws ConfigError on size 0 or difficulty outside
// the task family's range (counting: 2..8, addition chain: 2..11).
std::vector<Sample> generate(const TaskSpec& spec);

// One JSON object per line with string keys prompt/think/answer/gold. Blank
// lines are skipped. Errors name the 1-based line number.
std::vector<Sample> load_jsonl(const std::filesystem::path& path);
std::vector<Sample> parse_jsonl(std::string_view text);
std::string to_jsonl(std::span<const Sample> samples);
void save_jsonl(const std::filesystem::path& path, std::span<const Sample> samples);

struct Split {
    std::vector<Sample> train;
    std::vector<Sample> test;
};

// Seeded shuffle then cut at round(train_fraction * n), kept inside [1, n-1].
Split split(std::span<const Sample> samples, double train_fraction, std::uint64_t seed);

} // namespace scale
