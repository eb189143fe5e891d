#include "doctest.h"

#include "oracles.hpp"

#include "scale/error.hpp"
#include "scale/loss.hpp"
#include "scale/model.hpp"

#include <array>
#include <map>
#include <random>

using namespace scale;

namespace {

ModelConfig tiny(int vocab, int d, int layers, int heads, int len, std::uint64_t seed) {
    return ModelConfig{vocab, d, layers, heads, len, seed};
}

std::vector<double> flatten(const ModelParams& p) {
    std::vector<double> out;
    for (const auto& [name, m] : p.named_tensors()) out.insert(out.end(), m->data(), m->data() + m->size());
    return out;
}

void unflatten(ModelParams& p, const std::vector<double>& x) {
    std::size_t k = 0;
    for (auto& [name, m] : p.named_tensors())
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = x[k++];
}

ModelParams randomized(const ModelConfig& c) {
    // Larger than default init so every path carries signal.
    auto p = ModelParams::initialize(c);
    std::mt19937_64 rng(c.seed + 1000);
    std::normal_distribution<double> g(0.0, 0.3);
    for (auto& [name, m] : p.named_tensors())
        for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] += g(rng);
    return p;
}

} // namespace

TEST_CASE("config validation") {
    CHECK_NOTHROW(tiny(10, 8, 1, 2, 8, 0).validate());
    CHECK_THROWS_AS(tiny(10, 8, 1, 3, 8, 0).validate(), ConfigError);
    CHECK_THROWS_AS(tiny(0, 8, 1, 2, 8, 0).validate(), ConfigError);
    CHECK_THROWS_AS(tiny(10, 8, 0, 2, 8, 0).validate(), ConfigError);
    CHECK_THROWS_AS(tiny(10, 8, 1, 2, 0, 0).validate(), ConfigError);
}

TEST_CASE("initialization is seeded and shaped") {
    const auto c = tiny(12, 8, 2, 2, 10, 4);
    const auto a = ModelParams::initialize(c);
    const auto b = ModelParams::initialize(c);
    CHECK(flatten(a) == flatten(b));
    auto c2 = c;
    c2.seed = 5;
    CHECK(flatten(a) != flatten(ModelParams::initialize(c2)));
    CHECK(a.wte.rows() == 12);
    CHECK(a.wpe.rows() == 10);
    CHECK(a.layers.size() == 2);
    CHECK(a.layers[0].ln1_g.isOnes());
    CHECK(a.layers[1].b_fc.isZero());
    CHECK(a.parameter_count() == flatten(a).size());
    // 12*8 + 10*8 + 2*(4*8 + 8*24+24 + 8*8+8 + 8*32+32 + 32*8+8) + 2*8 + 8*12
    CHECK(a.parameter_count() == 96 + 80 + 2 * (32 + 216 + 72 + 288 + 264) + 16 + 96);
}

TEST_CASE("forward is causal") {
    const auto c = tiny(12, 8, 2, 2, 10, 1);
    const auto p = randomized(c);
    const std::vector<TokenId> a{1, 5, 7, 3, 9, 2};
    auto b = a;
    b[4] = 11;
    const auto la = forward(p, a), lb = forward(p, b);
    CHECK(la.rows() == 6);
    CHECK(la.cols() == 12);
    CHECK(la.topRows(4) == lb.topRows(4));
    CHECK(la.row(4) != lb.row(4));
}

TEST_CASE("forward rejects bad input") {
    const auto p = ModelParams::initialize(tiny(12, 8, 1, 2, 4, 1));
    CHECK_THROWS_AS(forward(p, std::vector<TokenId>{1, 2, 3, 4, 5}), ContractViolation);
    CHECK_THROWS_AS(forward(p, std::vector<TokenId>{1, 12}), ContractViolation);
    CHECK_THROWS_AS(forward(p, std::vector<TokenId>{}), ContractViolation);
}

TEST_CASE("decoder reproduces forward row by row") {
    const auto c = tiny(12, 8, 2, 2, 10, 2);
    const auto p = randomized(c);
    const std::vector<TokenId> seq{1, 4, 4, 8, 0, 11, 3, 2, 6, 5};
    const auto full = forward(p, seq);
    Decoder d(p);
    for (std::size_t i = 0; i < seq.size(); ++i) {
        const RowVector row = d.feed(seq[i]);
        CHECK((row - full.row(static_cast<Eigen::Index>(i))).cwiseAbs().maxCoeff() < 1e-12);
    }
    CHECK(d.length() == 10);
    CHECK_THROWS_AS(d.feed(1), ContractViolation);
}

TEST_CASE("end-to-end gradient matches central differences") {
    std::mt19937_64 rng(77);
    int configs = 0;
    for (int layers : {1, 2})
        for (int heads : {1, 2})
            for (int seed = 0; seed < 3; ++seed) {
                const int v = 8 + seed * 3, d = 4 * heads, n = 5 + seed;
                const auto c = tiny(v, d, layers, heads, n + 1, static_cast<std::uint64_t>(seed * 10 + layers + heads));
                auto p = randomized(c);
                std::vector<TokenId> input(static_cast<std::size_t>(n)), targets(static_cast<std::size_t>(n));
                for (auto& t : input) t = std::uniform_int_distribution<TokenId>(0, v - 1)(rng);
                for (auto& t : targets) t = std::uniform_int_distribution<TokenId>(0, v - 1)(rng);
                std::vector<SegmentLabel> labels(static_cast<std::size_t>(n), SegmentLabel::Answer);
                labels[0] = SegmentLabel::Prompt;
                labels[1] = labels[2] = SegmentLabel::Think;
                const SegmentWeights w{0.8, 1.0};

                const auto loss = [&](const std::vector<double>& x) {
                    auto q = p;
                    unflatten(q, x);
                    return scale_loss(token_ce(forward(q, input), targets), labels, w).total;
                };
                const auto logits = forward(p, input);
                const auto grads = backward(p, input, scale_loss_grad(logits, targets, labels, w));
                const auto numeric = oracle::finite_difference(loss, flatten(p), 1e-5);
                CHECK(oracle::relative_error(flatten(grads), numeric) < 1e-3);
                ++configs;
            }
    CHECK(configs >= 10);
}

TEST_CASE("backward accumulates") {
    const auto c = tiny(9, 4, 1, 1, 6, 3);
    const auto p = randomized(c);
    const std::vector<TokenId> seq{1, 2, 3};
    const Matrix up = Matrix::Ones(3, 9);
    const auto once = backward(p, seq, up);
    auto twice = ModelParams::zeros(c);
    const auto cache = forward_cached(p, seq);
    backward(p, cache, up, twice);
    backward(p, cache, up, twice);
    CHECK(twice.squared_norm() == doctest::Approx(4.0 * once.squared_norm()));
}

TEST_CASE("greedy sampling picks the lowest index among ties") {
    std::mt19937_64 rng(1);
    RowVector logits(5);
    logits << 0.5, 2.0, 2.0, -1.0, 2.0;
    CHECK(sample_token(logits, SamplerConfig{0.0, 1.0, 4, 0}, rng) == 1);
}

TEST_CASE("top-p keeps the smallest nucleus") {
    RowVector logits(4);
    logits << 0.0, 5.0, 0.0, 0.0;  // p(1) ~ 0.98
    std::mt19937_64 rng(3);
    for (int i = 0; i < 200; ++i) CHECK(sample_token(logits, SamplerConfig{1.0, 0.9, 4, 0}, rng) == 1);
    std::map<TokenId, int> seen;
    for (int i = 0; i < 4000; ++i) ++seen[sample_token(logits, SamplerConfig{1.0, 1.0, 4, 0}, rng)];
    CHECK(seen.size() == 4);
}

TEST_CASE("temperature sampling follows the softmax") {
    RowVector logits(3);
    logits << std::log(0.2), std::log(0.3), std::log(0.5);
    std::mt19937_64 rng(11);
    std::array<int, 3> counts{};
    const int n = 40000;
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_token(logits, SamplerConfig{1.0, 1.0, 1, 0}, rng))];
    CHECK(counts[0] / double(n) == doctest::Approx(0.2).epsilon(0.05));
    CHECK(counts[2] / double(n) == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("sampler config validation") {
    CHECK_THROWS_AS(SamplerConfig({-1.0, 1.0, 4, 0}).validate(), ConfigError);
    CHECK_THROWS_AS(SamplerConfig({1.0, 0.0, 4, 0}).validate(), ConfigError);
    CHECK_THROWS_AS(SamplerConfig({1.0, 1.5, 4, 0}).validate(), ConfigError);
    CHECK_THROWS_AS(SamplerConfig({1.0, 1.0, 0, 0}).validate(), ConfigError);
}

TEST_CASE("sample_group equals independent samples with the same seeds") {
    const auto& vocab = Vocabulary::builtin();
    const auto c = tiny(static_cast<int>(vocab.size()), 8, 1, 2, 24, 9);
    const auto p = randomized(c);
    const std::vector<TokenId> prompt{7, 8, 9};
    SamplerConfig s{1.0, 1.0, 12, 0};
    const std::vector<std::uint64_t> seeds{5, 6, 7, 5};
    const auto group = sample_group(p, prompt, s, seeds, vocab);
    REQUIRE(group.size() == 4);
    for (std::size_t g = 0; g < seeds.size(); ++g) {
        s.seed = seeds[g];
        const auto one = sample(p, prompt, s, vocab);
        CHECK(one.token_ids == group[g].token_ids);
        CHECK(one.text == group[g].text);
        CHECK(group[g].token_ids.size() <= 12);
        CHECK(group[g].finished == (!group[g].token_ids.empty() && group[g].token_ids.back() == Vocabulary::kEos));
    }
    CHECK(group[0].token_ids == group[3].token_ids);
}

TEST_CASE("generation stops at the context limit") {
    const auto& vocab = Vocabulary::builtin();
    const auto c = tiny(static_cast<int>(vocab.size()), 8, 1, 2, 6, 9);
    const auto p = randomized(c);
    const auto out = sample(p, std::vector<TokenId>{7, 8}, SamplerConfig{1.0, 1.0, 50, 1}, vocab);
    CHECK(out.token_ids.size() <= 4);
    CHECK_THROWS_AS(sample(p, std::vector<TokenId>{7, 8, 9, 10, 11, 12}, SamplerConfig{}, vocab), ContractViolation);
}
