#pragma once

#include "scale/grpo.hpp"
#include "scale/loss.hpp"
#include "scale/model.hpp"
#include "scale/optimizer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace scale {

enum class RunMode { SftVanilla, SftScale, SftFw, Grpo };

RunMode parse_run_mode(std::string_view name);
std::string_view to_string(RunMode mode);
inline bool is_sft(RunMode mode) { return mode != RunMode::Grpo; }

struct ScheduleConfig {
    double think_start = 1.0;
    double think_end = 0.5;
    double answer_start = 1.0;
    double answer_end = 1.0;

    WeightSchedule think(std::int64_t horizon) const { return {think_start, think_end, horizon}; }
    WeightSchedule answer(std::int64_t horizon) const { return {answer_start, answer_end, horizon}; }
    friend bool operator==(const ScheduleConfig&, const ScheduleConfig&) = default;
};

struct SeedConfig {
    std::uint64_t data = 1;
    std::uint64_t init = 2;
    std::uint64_t sampling = 3;
    friend bool operator==(const SeedConfig&, const SeedConfig&) = default;
};

struct ModelShape {
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int max_seq_len = 128;
    friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 3e-3;
    int batch_size = 16;
    int epochs = 1;
    double clip_norm = 1.0;
    std::int64_t max_steps = 0;       // 0: run the full horizon
    std::int64_t checkpoint_every = 0; // 0: final checkpoint only
    friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

struct GrpoSection {
    int steps = 200;
    int group_size = 8;
    int prompts_per_step = 2;
    double lambda_tag = 1.0;
    double lambda_ans = 1.0;
    double temperature = 1.0;
    double top_p = 1.0;
    double kl_coeff = 0.0;
    int max_new_tokens = 64;
    friend bool operator==(const GrpoSection&, const GrpoSection&) = default;
};

// One experiment. Text form is INI-like:
//
//   [run]       mode, output_dir, train_data, test_data, init_checkpoint,
//               resume_from, record_wall_clock
//   [seeds]     data, init, sampling
//   [model]     d_model, n_layers, n_heads, max_seq_len
//   [schedule]  think_start, think_end, answer_start, answer_end
//   [optimizer] kind, lr, batch_size, epochs, clip_norm, max_steps, checkpoint_every
//   [grpo]      steps, group_size, prompts_per_step, lambda_tag, lambda_ans,
//               temperature, top_p, kl_coeff, max_new_tokens
//   [eval]      max_new_tokens
//   [prompt]    template
//
// Unknown sections or keys are rejected. Schedule defaults depend on the
// mode: sft_scale anneals think 1.0 -> 0.5 with answer fixed at 1.0, sft_fw
// holds every weight at 1.0. The optimizer lr defaults to 3e-3 for SFT modes
// and 2e-4 for grpo.
struct RunConfig {
    RunMode mode = RunMode::SftScale;
    std::filesystem::path output_dir;
    std::filesystem::path train_data;
    std::filesystem::path test_data;
    std::filesystem::path init_checkpoint;
    std::filesystem::path resume_from;
    bool record_wall_clock = true;
    SeedConfig seeds;
    ModelShape model;
    ScheduleConfig schedule;
    OptimizerConfig optimizer;
    GrpoSection grpo;
    int eval_max_new_tokens = 64;
    std::string prompt_template;  // empty: built-in instruction

    // Throws ConfigError when an invariant is broken.
    void validate() const;
    PromptTemplate make_template() const;
    GrpoConfig grpo_config() const;
    SamplerConfig eval_sampler() const;

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

RunConfig default_run_config(RunMode mode);
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
std::string serialize(const RunConfig& config);

} // namespace scale
