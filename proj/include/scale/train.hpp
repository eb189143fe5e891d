#pragma once

#include "scale/config.hpp"
#include "scale/eval.hpp"
#include "scale/grpo.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace scale {

// Optimizer steps for one SFT run: epochs * ceil(n_samples / batch_size).
std::int64_t sft_total_steps(std::size_t n_samples, int batch_size, int epochs);
// Schedule horizon T so the last step evaluates at tau = T.
std::int64_t schedule_horizon(std::int64_t total_steps);

// Output directory layout (all runs):
//   config.ini      the config text, verbatim when supplied
//   run_log.jsonl   header + one record per optimizer step
//   model.ckpt      final checkpoint
//   .lock           present while the run owns the directory
struct SftResult {
    std::filesystem::path checkpoint;
    std::filesystem::path log;
    std::int64_t steps = 0;
    std::int64_t total_steps = 0;
};

// Supervised fine-tuning in sft_vanilla / sft_scale / sft_fw mode.
SftResult train_sft(const RunConfig& config, std::string_view config_text = {});

struct GrpoResult {
    std::filesystem::path checkpoint;
    std::filesystem::path log;
    std::vector<GrpoStepRecord> records;
};

// GRPO-lite starting from config.init_checkpoint.
GrpoResult train_grpo(const RunConfig& config, std::string_view config_text = {});

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                               const PromptTemplate& tmpl, int max_new_tokens);

struct PipelineResult {
    SftResult sft;
    std::optional<GrpoResult> grpo;  // absent when grpo.steps == 0
    std::optional<EvalReport> sft_report;
    std::optional<EvalReport> grpo_report;
    std::filesystem::path final_checkpoint;
    std::filesystem::path report_path;
    nlohmann::json report;
};

// SFT, then GRPO from the SFT checkpoint (skipped when grpo.steps == 0), then
// evaluation of each stage on sft.test_data. Prior eval summaries (e.g. a
// base model) are folded into the combined report under their names.
PipelineResult run_pipeline(const RunConfig& sft, RunConfig grpo, std::string_view sft_text = {},
                            std::string_view grpo_text = {},
                            const std::map<std::string, std::filesystem::path>& prior_reports = {});

} // namespace scale
