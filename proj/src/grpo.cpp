#include "scale/grpo.hpp"

#include "scale/error.hpp"
#include "scale/loss.hpp"
#include "scale/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace scale {
namespace {

// <bos> + prompt + completion minus its last token.
std::vector<TokenId> policy_input(const Completion& c) {
    std::vector<TokenId> seq;
    seq.reserve(c.prompt_ids.size() + c.token_ids.size());
    seq.push_back(Vocabulary::kBos);
    seq.insert(seq.end(), c.prompt_ids.begin(), c.prompt_ids.end());
    seq.insert(seq.end(), c.token_ids.begin(), c.token_ids.end() - 1);
    return seq;
}

void check_group(const CompletionGroup& g) {
    if (g.completions.size() != g.advantages.size())
        throw ContractViolation("group has " + std::to_string(g.completions.size()) + " completions but " +
                                std::to_string(g.advantages.size()) + " advantages");
}

double kl_row(const RowVector& logp, const RowVector& ref_logp) {
    return (logp.array().exp() * (logp - ref_logp).array()).sum();
}

} // namespace

RewardBreakdown reward(std::string_view completion, std::string_view gold, RewardWeights lambdas) {
    RewardBreakdown b;
    b.n_correct = score_tags(completion).n_correct();
    b.r_tag = 0.25 * b.n_correct;
    b.r_ans = answers_match(extract_answer(completion), gold) ? 1.0 : 0.0;
    b.lambda_tag = lambdas.tag;
    b.lambda_ans = lambdas.ans;
    b.r = b.lambda_tag * b.r_tag + b.lambda_ans * b.r_ans;
    return b;
}

std::vector<double> group_advantages(std::span<const double> rewards, double epsilon) {
    if (rewards.size() < 2) throw ContractViolation("advantages need a group of at least 2");
    if (!(epsilon >= 0.0)) throw ContractViolation("epsilon must be non-negative");
    std::vector<double> out(rewards.size(), 0.0);
    if (std::all_of(rewards.begin(), rewards.end(), [&](double r) { return r == rewards.front(); })) return out;

    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double std_dev = std::sqrt(var / n);
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (std_dev + epsilon);
    return out;
}

double mean_log_likelihood(const ModelParams& params, const Completion& c) {
    if (c.token_ids.empty()) throw ContractViolation("completion has no tokens");
    const auto input = policy_input(c);
    const Matrix logp = log_softmax_rows(forward(params, input));
    const auto offset = static_cast<Eigen::Index>(c.prompt_ids.size());
    double sum = 0.0;
    for (std::size_t t = 0; t < c.token_ids.size(); ++t) sum += logp(offset + static_cast<Eigen::Index>(t), c.token_ids[t]);
    return sum / static_cast<double>(c.token_ids.size());
}

double policy_surrogate(const ModelParams& params, const CompletionGroup& group, double kl_coeff,
                        const ModelParams* reference) {
    check_group(group);
    if (kl_coeff != 0.0 && reference == nullptr) throw ContractViolation("KL penalty needs a reference model");
    const double g = static_cast<double>(group.completions.size());
    double total = 0.0;
    for (std::size_t i = 0; i < group.completions.size(); ++i) {
        const auto& c = group.completions[i];
        if (c.token_ids.empty()) continue;
        const auto input = policy_input(c);
        const Matrix logp = log_softmax_rows(forward(params, input));
        const auto offset = static_cast<Eigen::Index>(c.prompt_ids.size());
        const double len = static_cast<double>(c.token_ids.size());
        double ll = 0.0;
        for (std::size_t t = 0; t < c.token_ids.size(); ++t) ll += logp(offset + Eigen::Index(t), c.token_ids[t]);
        total -= group.advantages[i] * ll / (g * len);
        if (kl_coeff != 0.0) {
            const Matrix ref = log_softmax_rows(forward(*reference, input));
            double kl = 0.0;
            for (std::size_t t = 0; t < c.token_ids.size(); ++t)
                kl += kl_row(logp.row(offset + Eigen::Index(t)), ref.row(offset + Eigen::Index(t)));
            total += kl_coeff * kl / (g * len);
        }
    }
    return total;
}

void accumulate_policy_gradient(const ModelParams& params, const CompletionGroup& group, double scale,
                                ModelParams& grads, double kl_coeff, const ModelParams* reference) {
    check_group(group);
    if (kl_coeff != 0.0 && reference == nullptr) throw ContractViolation("KL penalty needs a reference model");
    const double g = static_cast<double>(group.completions.size());
    for (std::size_t i = 0; i < group.completions.size(); ++i) {
        const auto& c = group.completions[i];
        const double a = group.advantages[i];
        if (c.token_ids.empty() || (a == 0.0 && kl_coeff == 0.0)) continue;

        const auto input = policy_input(c);
        const auto cache = forward_cached(params, input);
        const Matrix logp = log_softmax_rows(cache.logits);
        const auto offset = static_cast<Eigen::Index>(c.prompt_ids.size());
        const double len = static_cast<double>(c.token_ids.size());
        const double coef = scale * a / (g * len);

        Matrix upstream = Matrix::Zero(cache.logits.rows(), cache.logits.cols());
        Matrix ref;
        if (kl_coeff != 0.0) ref = log_softmax_rows(forward(*reference, input));
        for (std::size_t t = 0; t < c.token_ids.size(); ++t) {
            const auto r = offset + static_cast<Eigen::Index>(t);
            const double lp = logp(r, c.token_ids[t]);
            if (!std::isfinite(lp))
                throw NumericError("non-finite log-probability in completion '" + c.text + "'");
            const RowVector p = logp.row(r).array().exp();
            // d(-log p_y)/dz = softmax - onehot(y)
            upstream.row(r) = coef * p;
            upstream(r, c.token_ids[t]) -= coef;
            if (kl_coeff != 0.0) {
                const RowVector diff = logp.row(r) - ref.row(r);
                const double kl = (p.array() * diff.array()).sum();
                upstream.row(r) += (scale * kl_coeff / (g * len)) * (p.array() * (diff.array() - kl)).matrix();
            }
        }
        backward(params, cache, upstream, grads);
    }
}

ModelParams policy_gradient(const ModelParams& params, const CompletionGroup& group, double kl_coeff,
                            const ModelParams* reference) {
    ModelParams grads = ModelParams::zeros(params.config);
    accumulate_policy_gradient(params, group, 1.0, grads, kl_coeff, reference);
    return grads;
}

void GrpoConfig::validate() const {
    if (steps < 0) throw ConfigError("grpo steps must be >= 0");
    if (group_size < 2) throw ConfigError("group_size must be at least 2");
    if (prompts_per_step < 1) throw ConfigError("prompts_per_step must be positive");
    if (lambdas.tag < 0.0 || lambdas.ans < 0.0) throw ConfigError("reward lambdas must be non-negative");
    if (kl_coeff < 0.0) throw ConfigError("kl_coeff must be non-negative");
    if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
    sampler.validate();
}

CompletionGroup make_group(const ModelParams& params, const GrpoPrompt& prompt, const GrpoConfig& config,
                           std::span<const std::uint64_t> seeds, const Vocabulary& vocab) {
    CompletionGroup group;
    group.prompt_ids = prompt.prompt_ids;
    group.completions = sample_group(params, prompt.prompt_ids, config.sampler, seeds, vocab);
    std::vector<double> rs;
    for (const auto& c : group.completions) {
        group.rewards.push_back(reward(c.text, prompt.gold, config.lambdas));
        rs.push_back(group.rewards.back().r);
    }
    group.advantages = group_advantages(rs, config.epsilon);
    return group;
}

std::vector<GrpoStepRecord> grpo_train(ModelParams& params, std::span<const GrpoPrompt> prompts,
                                       const GrpoConfig& config, const Vocabulary& vocab,
                                       const std::function<void(const GrpoStepRecord&)>& on_step) {
    config.validate();
    if (prompts.empty()) throw ConfigError("grpo needs at least one prompt");
    const std::uint64_t base = config.sampler.seed;

    std::vector<std::size_t> order(prompts.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 order_rng(derive_seed(base, {0x6f72646572ULL}));
    std::shuffle(order.begin(), order.end(), order_rng);

    const ModelParams reference = config.kl_coeff != 0.0 ? params : ModelParams{};
    Adam adam(params.config);
    ModelParams grads = ModelParams::zeros(params.config);
    std::vector<GrpoStepRecord> log;

    for (int step = 0; step < config.steps; ++step) {
        grads.set_zero();
        GrpoStepRecord rec;
        rec.step = step;
        std::size_t n = 0;
        std::size_t invalid = 0;
        double length = 0.0;
        std::uint64_t digest = 0;
        for (int j = 0; j < config.prompts_per_step; ++j) {
            const std::size_t slot = (static_cast<std::size_t>(step) * config.prompts_per_step + j) % prompts.size();
            const std::size_t index = order[slot];
            std::vector<std::uint64_t> seeds(static_cast<std::size_t>(config.group_size));
            for (std::size_t m = 0; m < seeds.size(); ++m)
                seeds[m] = derive_seed(base, {static_cast<std::uint64_t>(step), index, m});
            digest = splitmix64(digest ^ seeds.front());

            const auto group = make_group(params, prompts[index], config, seeds, vocab);
            for (std::size_t m = 0; m < group.completions.size(); ++m) {
                rec.mean_reward += group.rewards[m].r;
                rec.mean_r_tag += group.rewards[m].r_tag;
                rec.mean_r_ans += group.rewards[m].r_ans;
                invalid += is_valid_output(group.completions[m].text) ? 0 : 1;
                length += static_cast<double>(group.completions[m].token_ids.size());
                ++n;
            }
            accumulate_policy_gradient(params, group, 1.0 / config.prompts_per_step, grads, config.kl_coeff,
                                       config.kl_coeff != 0.0 ? &reference : nullptr);
        }
        rec.mean_reward /= double(n);
        rec.mean_r_tag /= double(n);
        rec.mean_r_ans /= double(n);
        rec.invalid_rate = double(invalid) / double(n);
        rec.mean_length = length / double(n);
        rec.seed_digest = digest;

        check_finite(grads);
        rec.grad_norm = clip_grad_norm(grads, config.clip_norm);
        if (config.optimizer == OptimizerKind::Adam)
            adam.step(params, grads, config.learning_rate);
        else
            sgd_step(params, grads, config.learning_rate);

        log.push_back(rec);
        if (on_step) on_step(rec);
    }
    return log;
}

} // namespace scale
