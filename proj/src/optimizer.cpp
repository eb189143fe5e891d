#include "scale/optimizer.hpp"

#include "scale/error.hpp"

#include <cmath>
#include <string>

namespace scale {

OptimizerKind parse_optimizer_kind(std::string_view name) {
    if (name == "adam") return OptimizerKind::Adam;
    if (name == "sgd") return OptimizerKind::Sgd;
    throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

void sgd_update(std::span<double> params, std::span<const double> grads, double learning_rate) {
    if (params.size() != grads.size()) throw ContractViolation("parameter and gradient sizes differ");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i])) throw NumericError("non-finite gradient at index " + std::to_string(i));
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= learning_rate * grads[i];
}

void check_finite(const ModelParams& grads) {
    for (const auto& [name, m] : grads.named_tensors())
        if (!m->allFinite()) throw NumericError("non-finite gradient in tensor " + name);
}

void sgd_step(ModelParams& params, const ModelParams& grads, double learning_rate) {
    check_finite(grads);
    params.add_scaled(grads, -learning_rate);
}

double clip_grad_norm(ModelParams& grads, double max_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto& [name, m] : grads.named_tensors()) *m *= s;
    }
    return norm;
}

Adam::Adam(const ModelConfig& config, AdamHyper hyper)
    : hyper_(hyper), m_(ModelParams::zeros(config)), v_(ModelParams::zeros(config)) {}

Adam Adam::restore(ModelParams m, ModelParams v, std::int64_t t, AdamHyper hyper) {
    if (!(m.config == v.config)) throw ValidationError("optimizer moments disagree on model shape");
    Adam a;
    a.hyper_ = hyper;
    a.m_ = std::move(m);
    a.v_ = std::move(v);
    a.t_ = t;
    return a;
}

void Adam::step(ModelParams& params, const ModelParams& grads, double learning_rate) {
    check_finite(grads);
    auto p = params.named_tensors();
    auto g = grads.named_tensors();
    auto m = m_.named_tensors();
    auto v = v_.named_tensors();
    if (p.size() != g.size() || p.size() != m.size()) throw ContractViolation("optimizer state does not match model");
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& pm = *p[i].second;
        for (const Matrix* other : {g[i].second, static_cast<const Matrix*>(m[i].second)})
            if (pm.rows() != other->rows() || pm.cols() != other->cols())
                throw ContractViolation("shape mismatch in " + p[i].first);
    }
    ++t_;
    const double c1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < p.size(); ++i) {
        auto& pm = *p[i].second;
        const auto& gm = *g[i].second;
        auto& mm = *m[i].second;
        auto& vm = *v[i].second;
        mm = hyper_.beta1 * mm + (1.0 - hyper_.beta1) * gm;
        vm = hyper_.beta2 * vm + (1.0 - hyper_.beta2) * gm.cwiseProduct(gm);
        pm.array() -= learning_rate * (mm.array() / c1) / ((vm.array() / c2).sqrt() + hyper_.eps);
    }
}

} // namespace scale
