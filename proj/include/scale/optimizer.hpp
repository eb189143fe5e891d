#pragma once

#include "scale/model.hpp"

#include <cstdint>
#include <span>
#include <string_view>

namespace scale {

enum class OptimizerKind { Adam, Sgd };

OptimizerKind parse_optimizer_kind(std::string_view name);
std::string_view to_string(OptimizerKind kind);

// p <- p - lr * g. Throws NumericError when g holds a non-finite entry.
void sgd_update(std::span<double> params, std::span<const double> grads, double learning_rate);
void sgd_step(ModelParams& params, const ModelParams& grads, double learning_rate);

// Throws NumericError naming the first tensor with a non-finite entry.
void check_finite(const ModelParams& grads);

// Rescales grads so their global L2 norm is at most max_norm (no-op when
// max_norm <= 0). Returns the norm before clipping.
double clip_grad_norm(ModelParams& grads, double max_norm);

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam. State is part of checkpoints so resumed runs continue
// bit-for-bit.
class Adam {
public:
    Adam() = default;
    explicit Adam(const ModelConfig& config, AdamHyper hyper = {});

    void step(ModelParams& params, const ModelParams& grads, double learning_rate);

    std::int64_t steps_taken() const noexcept { return t_; }
    const ModelParams& first_moment() const noexcept { return m_; }
    const ModelParams& second_moment() const noexcept { return v_; }
    const AdamHyper& hyper() const noexcept { return hyper_; }

    static Adam restore(ModelParams m, ModelParams v, std::int64_t t, AdamHyper hyper);

private:
    AdamHyper hyper_;
    ModelParams m_, v_;
    std::int64_t t_ = 0;
};

} // namespace scale
