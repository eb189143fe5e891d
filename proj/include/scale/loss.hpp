#pragma once

#include "scale/segmenter.hpp"
#include "scale/tensor.hpp"
#include "scale/vocab.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace scale {

// Cosine-annealed weight: w(step) = end + (start - end) * (1 + cos(pi * step / horizon)) / 2.
struct WeightSchedule {
    double start = 1.0;
    double end = 1.0;
    std::int64_t horizon = 1;  // T, total optimizer steps

    static WeightSchedule constant(double w, std::int64_t horizon = 1) { return {w, w, horizon}; }
    bool is_constant() const noexcept { return start == end; }
};

// Exact at both endpoints and monotone between them. Steps outside
// [0, horizon] clamp to the nearest endpoint and emit a warning.
double schedule_eval(const WeightSchedule& schedule, std::int64_t step);

struct SegmentWeights {
    double think = 1.0;
    double answer = 1.0;
};

struct SegmentMean {
    double mean = 0.0;
    std::size_t count = 0;
};

struct LossBreakdown {
    double l_think = 0.0;
    double l_answer = 0.0;
    std::size_t n_think = 0;
    std::size_t n_answer = 0;
    double w_t = 0.0;
    double w_a = 0.0;
    double total = 0.0;
};

// -log softmax(logits_i)[target_i] per row, log-sum-exp stabilized.
std::vector<double> token_ce(const Matrix& logits, std::span<const TokenId> targets);

// Mean over all target tokens.
double vanilla_loss(std::span<const double> per_token_ce);

// Mean CE over positions carrying `segment`. Throws DegenerateSegment when
// there are none.
SegmentMean segment_loss(std::span<const double> per_token_ce, std::span<const SegmentLabel> labels,
                         SegmentLabel segment);

LossBreakdown scale_loss(std::span<const double> per_token_ce, std::span<const SegmentLabel> labels,
                         SegmentWeights weights);
LossBreakdown scale_loss(std::span<const double> per_token_ce, std::span<const SegmentLabel> labels,
                         const WeightSchedule& think_schedule, const WeightSchedule& answer_schedule,
                         std::int64_t step);

// d total / d logits. Row i in segment s is (softmax_i - onehot(target_i)) * w_s / N_s.
Matrix scale_loss_grad(const Matrix& logits, std::span<const TokenId> targets, std::span<const SegmentLabel> labels,
                       SegmentWeights weights);

// d vanilla_loss / d logits: (softmax_i - onehot(target_i)) / N.
Matrix vanilla_loss_grad(const Matrix& logits, std::span<const TokenId> targets);

// Row-wise softmax and log-softmax.
Matrix softmax_rows(const Matrix& logits);
Matrix log_softmax_rows(const Matrix& logits);

} // namespace scale
