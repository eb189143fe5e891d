#include "scale/loss.hpp"

#include "scale/error.hpp"
#include "scale/log.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace scale {
namespace {

void check_targets(const Matrix& logits, std::span<const TokenId> targets) {
    if (static_cast<std::size_t>(logits.rows()) != targets.size())
        throw ContractViolation("logits have " + std::to_string(logits.rows()) + " rows but there are " +
                                std::to_string(targets.size()) + " targets");
    for (TokenId t : targets)
        if (t < 0 || t >= logits.cols())
            throw ContractViolation("target id " + std::to_string(t) + " outside logits width " +
                                    std::to_string(logits.cols()));
}

void check_labels(std::size_t n, std::span<const SegmentLabel> labels) {
    if (labels.size() != n)
        throw ContractViolation("label count " + std::to_string(labels.size()) + " does not match " +
                                std::to_string(n) + " positions");
}

double weight_for(SegmentLabel label, SegmentWeights w) {
    switch (label) {
    case SegmentLabel::Think: return w.think;
    case SegmentLabel::Answer: return w.answer;
    case SegmentLabel::Prompt: return 0.0;
    }
    return 0.0;
}

} // namespace

double schedule_eval(const WeightSchedule& schedule, std::int64_t step) {
    if (schedule.horizon < 1) throw ConfigError("schedule horizon must be positive");
    if (step < 0 || step > schedule.horizon) {
        log::warn("schedule step " + std::to_string(step) + " outside [0, " + std::to_string(schedule.horizon) +
                  "], clamped");
        step = std::clamp<std::int64_t>(step, 0, schedule.horizon);
    }
    if (step == 0) return schedule.start;
    if (step == schedule.horizon) return schedule.end;
    const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(schedule.horizon);
    const double w = schedule.end + 0.5 * (schedule.start - schedule.end) * (1.0 + std::cos(phase));
    // Rounding could otherwise overshoot an endpoint by one ulp.
    return std::clamp(w, std::min(schedule.start, schedule.end), std::max(schedule.start, schedule.end));
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        p.row(i) = (logits.row(i).array() - m).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

Matrix log_softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        const double lse = m + std::log((logits.row(i).array() - m).exp().sum());
        out.row(i) = logits.row(i).array() - lse;
    }
    return out;
}

std::vector<double> token_ce(const Matrix& logits, std::span<const TokenId> targets) {
    check_targets(logits, targets);
    std::vector<double> ce(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto row = logits.row(static_cast<Eigen::Index>(i));
        const double m = row.maxCoeff();
        const double lse = m + std::log((row.array() - m).exp().sum());
        // lse >= row[target] mathematically; clamp away -0 style rounding.
        const double v = lse - row(targets[i]);
        ce[i] = v < 0.0 ? 0.0 : v;
    }
    return ce;
}

double vanilla_loss(std::span<const double> per_token_ce) {
    if (per_token_ce.empty()) throw ContractViolation("vanilla loss over zero tokens");
    double sum = 0.0;
    for (double c : per_token_ce) sum += c;
    return sum / static_cast<double>(per_token_ce.size());
}

SegmentMean segment_loss(std::span<const double> per_token_ce, std::span<const SegmentLabel> labels,
                         SegmentLabel segment) {
    check_labels(per_token_ce.size(), labels);
    if (segment == SegmentLabel::Prompt) throw ContractViolation("prompt tokens carry no loss");
    SegmentMean out;
    double sum = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != segment) continue;
        sum += per_token_ce[i];
        ++out.count;
    }
    if (out.count == 0)
        throw DegenerateSegment("segment '" + std::string(to_string(segment)) + "' has no tokens");
    out.mean = sum / static_cast<double>(out.count);
    return out;
}

LossBreakdown scale_loss(std::span<const double> per_token_ce, std::span<const SegmentLabel> labels,
                         SegmentWeights weights) {
    const auto think = segment_loss(per_token_ce, labels, SegmentLabel::Think);
    const auto answer = segment_loss(per_token_ce, labels, SegmentLabel::Answer);
    LossBreakdown b;
    b.l_think = think.mean;
    b.n_think = think.count;
    b.l_answer = answer.mean;
    b.n_answer = answer.count;
    b.w_t = weights.think;
    b.w_a = weights.answer;
    b.total = b.w_t * b.l_think + b.w_a * b.l_answer;
    return b;
}

LossBreakdown scale_loss(std::span<const double> per_token_ce, std::span<const SegmentLabel> labels,
                         const WeightSchedule& think_schedule, const WeightSchedule& answer_schedule,
                         std::int64_t step) {
    return scale_loss(per_token_ce, labels,
                      SegmentWeights{schedule_eval(think_schedule, step), schedule_eval(answer_schedule, step)});
}

Matrix scale_loss_grad(const Matrix& logits, std::span<const TokenId> targets, std::span<const SegmentLabel> labels,
                       SegmentWeights weights) {
    check_targets(logits, targets);
    check_labels(targets.size(), labels);
    const auto n_think = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), SegmentLabel::Think));
    const auto n_answer = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), SegmentLabel::Answer));
    if (n_think == 0) throw DegenerateSegment("segment 'think' has no tokens");
    if (n_answer == 0) throw DegenerateSegment("segment 'answer' has no tokens");

    Matrix grad = softmax_rows(logits);
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        const double n = labels[i] == SegmentLabel::Think ? double(n_think) : double(n_answer);
        const double scale = labels[i] == SegmentLabel::Prompt ? 0.0 : weight_for(labels[i], weights) / n;
        grad(r, targets[i]) -= 1.0;
        grad.row(r) *= scale;
    }
    return grad;
}

Matrix vanilla_loss_grad(const Matrix& logits, std::span<const TokenId> targets) {
    check_targets(logits, targets);
    if (targets.empty()) throw ContractViolation("vanilla loss over zero tokens");
    Matrix grad = softmax_rows(logits);
    const double scale = 1.0 / static_cast<double>(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        grad(r, targets[i]) -= 1.0;
        grad.row(r) *= scale;
    }
    return grad;
}

} // namespace scale
