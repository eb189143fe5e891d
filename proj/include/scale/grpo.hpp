#pragma once

#include "scale/model.hpp"
#include "scale/optimizer.hpp"
#include "scale/segmenter.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scale {

struct RewardWeights {
    double tag = 1.0;
    double ans = 1.0;
};

// r = lambda_tag * r_tag + lambda_ans * r_ans with r_tag = 0.25 * n_correct.
struct RewardBreakdown {
    double r_tag = 0.0;
    double r_ans = 0.0;
    double lambda_tag = 1.0;
    double lambda_ans = 1.0;
    double r = 0.0;
    int n_correct = 0;
};

RewardBreakdown reward(std::string_view completion, std::string_view gold, RewardWeights lambdas = {});

inline constexpr double kAdvantageEpsilon = 1e-4;

// (r_i - mean) / (population std + epsilon); all zeros when every reward is equal.
// Throws ContractViolation for fewer than two rewards.
std::vector<double> group_advantages(std::span<const double> rewards, double epsilon = kAdvantageEpsilon);

struct CompletionGroup {
    std::vector<TokenId> prompt_ids;
    std::vector<Completion> completions;
    std::vector<RewardBreakdown> rewards;
    std::vector<double> advantages;
};

// Surrogate minimized by the policy update:
//   -(1/G) sum_i a_i * mean_t log p(y_it | prefix)
//   + kl_coeff * (1/G) sum_i mean_t KL(p(.|prefix) || p_ref(.|prefix)).
// The KL term needs `reference`; it is skipped when kl_coeff == 0.
double policy_surrogate(const ModelParams& params, const CompletionGroup& group, double kl_coeff = 0.0,
                        const ModelParams* reference = nullptr);

// Adds scale * d(surrogate)/d(params) into grads. Completions with zero
// advantage are skipped when kl_coeff == 0. Throws NumericError on a
// non-finite log-probability.
void accumulate_policy_gradient(const ModelParams& params, const CompletionGroup& group, double scale,
                                ModelParams& grads, double kl_coeff = 0.0, const ModelParams* reference = nullptr);
ModelParams policy_gradient(const ModelParams& params, const CompletionGroup& group, double kl_coeff = 0.0,
                            const ModelParams* reference = nullptr);

// Mean per-token log-likelihood of one completion under params.
double mean_log_likelihood(const ModelParams& params, const Completion& completion);

struct GrpoPrompt {
    std::vector<TokenId> prompt_ids;
    std::string gold;
};

struct GrpoConfig {
    int steps = 200;
    int group_size = 8;
    int prompts_per_step = 2;
    RewardWeights lambdas;
    SamplerConfig sampler{1.0, 1.0, 64, 0};  // sampler.seed is the base sampling seed
    double kl_coeff = 0.0;
    double epsilon = kAdvantageEpsilon;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 1e-4;
    double clip_norm = 1.0;

    void validate() const;
};

struct GrpoStepRecord {
    int step = 0;
    double mean_reward = 0.0;
    double mean_r_tag = 0.0;
    double mean_r_ans = 0.0;
    double invalid_rate = 0.0;
    double mean_length = 0.0;
    double grad_norm = 0.0;
    std::uint64_t seed_digest = 0;
};

// Samples a group per prompt from the current params, scores it, and applies
// one optimizer update per step. Prompts are visited round-robin in a seeded
// order; sampling seeds depend only on (seed, step, prompt index, member).
std::vector<GrpoStepRecord> grpo_train(ModelParams& params, std::span<const GrpoPrompt> prompts,
                                       const GrpoConfig& config, const Vocabulary& vocab,
                                       const std::function<void(const GrpoStepRecord&)>& on_step = {});

// Builds the scored group for one prompt (used by grpo_train and tests).
CompletionGroup make_group(const ModelParams& params, const GrpoPrompt& prompt, const GrpoConfig& config,
                           std::span<const std::uint64_t> seeds, const Vocabulary& vocab);

} // namespace scale
