#include "scale/model.hpp"

#include "scale/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace scale {
namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInitStd = 0.02;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

Matrix zeros(Eigen::Index r, Eigen::Index c) { return Matrix::Zero(r, c); }

// y = g * (x - mean) * rstd + b, row-wise.
Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, Matrix& xhat, std::vector<double>& rstd) {
    const auto n = x.rows();
    xhat.resize(n, x.cols());
    rstd.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mean = x.row(i).mean();
        const double var = (x.row(i).array() - mean).square().mean();
        const double r = 1.0 / std::sqrt(var + kLnEps);
        rstd[static_cast<std::size_t>(i)] = r;
        xhat.row(i) = (x.row(i).array() - mean) * r;
    }
    Matrix y = xhat.array().rowwise() * g.row(0).array();
    y.rowwise() += b.row(0);
    return y;
}

// Returns dx; accumulates dg, db.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const std::vector<double>& rstd, const Matrix& g,
                           Matrix& dg, Matrix& db) {
    dg.row(0) += (dy.array() * xhat.array()).colwise().sum().matrix();
    db.row(0) += dy.colwise().sum();
    const Matrix dxhat = dy.array().rowwise() * g.row(0).array();
    Matrix dx(dy.rows(), dy.cols());
    const double inv_d = 1.0 / static_cast<double>(dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const double mean_dxhat = dxhat.row(i).sum() * inv_d;
        const double mean_dxhat_xhat = dxhat.row(i).dot(xhat.row(i)) * inv_d;
        dx.row(i) = rstd[static_cast<std::size_t>(i)] *
                    (dxhat.row(i).array() - mean_dxhat - xhat.row(i).array() * mean_dxhat_xhat);
    }
    return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x))); }

double gelu_grad(double x) {
    const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
}

void check_tokens(const ModelParams& params, std::span<const TokenId> tokens) {
    const auto& cfg = params.config;
    if (tokens.empty()) throw ContractViolation("forward over an empty sequence");
    if (tokens.size() > static_cast<std::size_t>(cfg.max_seq_len))
        throw ContractViolation("sequence length " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                                std::to_string(cfg.max_seq_len));
    for (TokenId t : tokens)
        if (t < 0 || t >= cfg.vocab_size)
            throw ContractViolation("token id " + std::to_string(t) + " outside vocabulary of " +
                                    std::to_string(cfg.vocab_size));
}

} // namespace

void ModelConfig::validate() const {
    if (vocab_size < 8) throw ConfigError("vocab_size must be at least 8");
    if (d_model < 1 || n_layers < 1 || n_heads < 1 || max_seq_len < 2)
        throw ConfigError("model dimensions must be positive (max_seq_len >= 2)");
    if (d_model % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
}

ModelParams ModelParams::zeros(const ModelConfig& config) {
    config.validate();
    const Eigen::Index v = config.vocab_size;
    const Eigen::Index d = config.d_model;
    ModelParams p;
    p.config = config;
    p.wte = scale::zeros(v, d);
    p.wpe = scale::zeros(config.max_seq_len, d);
    p.layers.resize(static_cast<std::size_t>(config.n_layers));
    for (auto& l : p.layers) {
        l.ln1_g = scale::zeros(1, d);
        l.ln1_b = scale::zeros(1, d);
        l.w_qkv = scale::zeros(d, 3 * d);
        l.b_qkv = scale::zeros(1, 3 * d);
        l.w_o = scale::zeros(d, d);
        l.b_o = scale::zeros(1, d);
        l.ln2_g = scale::zeros(1, d);
        l.ln2_b = scale::zeros(1, d);
        l.w_fc = scale::zeros(d, 4 * d);
        l.b_fc = scale::zeros(1, 4 * d);
        l.w_proj = scale::zeros(4 * d, d);
        l.b_proj = scale::zeros(1, d);
    }
    p.lnf_g = scale::zeros(1, d);
    p.lnf_b = scale::zeros(1, d);
    p.w_head = scale::zeros(d, v);
    return p;
}

ModelParams ModelParams::initialize(const ModelConfig& config) {
    ModelParams p = zeros(config);
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> normal(0.0, kInitStd);
    for (auto& [name, m] : p.named_tensors()) {
        const bool is_gain = name.ends_with("_g");
        const bool is_bias = name.ends_with("_b") || name.find(".b_") != std::string::npos;
        if (is_gain) {
            m->setOnes();
        } else if (!is_bias) {
            for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = normal(rng);
        }
    }
    return p;
}

std::vector<std::pair<std::string, Matrix*>> ModelParams::named_tensors() {
    std::vector<std::pair<std::string, Matrix*>> out;
    out.emplace_back("wte", &wte);
    out.emplace_back("wpe", &wpe);
    for (std::size_t i = 0; i < layers.size(); ++i) {
        auto& l = layers[i];
        const std::string pre = "layers." + std::to_string(i) + ".";
        for (auto [n, m] : {std::pair{"ln1_g", &l.ln1_g}, std::pair{"ln1_b", &l.ln1_b}, std::pair{"w_qkv", &l.w_qkv},
                            std::pair{"b_qkv", &l.b_qkv}, std::pair{"w_o", &l.w_o}, std::pair{"b_o", &l.b_o},
                            std::pair{"ln2_g", &l.ln2_g}, std::pair{"ln2_b", &l.ln2_b}, std::pair{"w_fc", &l.w_fc},
                            std::pair{"b_fc", &l.b_fc}, std::pair{"w_proj", &l.w_proj},
                            std::pair{"b_proj", &l.b_proj}})
            out.emplace_back(pre + n, m);
    }
    out.emplace_back("lnf_g", &lnf_g);
    out.emplace_back("lnf_b", &lnf_b);
    out.emplace_back("w_head", &w_head);
    return out;
}

std::vector<std::pair<std::string, const Matrix*>> ModelParams::named_tensors() const {
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (auto& [n, m] : const_cast<ModelParams*>(this)->named_tensors()) out.emplace_back(n, m);
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, m] : named_tensors()) n += static_cast<std::size_t>(m->size());
    return n;
}

void ModelParams::set_zero() {
    for (auto& [name, m] : named_tensors()) m->setZero();
}

void ModelParams::add_scaled(const ModelParams& other, double scale) {
    auto mine = named_tensors();
    auto theirs = other.named_tensors();
    if (mine.size() != theirs.size()) throw ContractViolation("parameter sets differ in structure");
    for (std::size_t i = 0; i < mine.size(); ++i) {
        if (mine[i].second->rows() != theirs[i].second->rows() || mine[i].second->cols() != theirs[i].second->cols())
            throw ContractViolation("shape mismatch in " + mine[i].first);
        *mine[i].second += scale * *theirs[i].second;
    }
}

double ModelParams::squared_norm() const {
    double s = 0.0;
    for (const auto& [name, m] : named_tensors()) s += m->squaredNorm();
    return s;
}

ForwardCache forward_cached(const ModelParams& params, std::span<const TokenId> tokens) {
    check_tokens(params, tokens);
    const auto& cfg = params.config;
    const auto n = static_cast<Eigen::Index>(tokens.size());
    const Eigen::Index d = cfg.d_model;
    const Eigen::Index hd = cfg.head_dim();
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    ForwardCache c;
    c.tokens.assign(tokens.begin(), tokens.end());
    Matrix x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) x.row(i) = params.wte.row(tokens[static_cast<std::size_t>(i)]) + params.wpe.row(i);

    c.layers.resize(params.layers.size());
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
        const auto& L = params.layers[li];
        auto& lc = c.layers[li];
        lc.x_in = x;
        lc.a_in = layer_norm(x, L.ln1_g, L.ln1_b, lc.xhat1, lc.rstd1);
        lc.qkv.noalias() = lc.a_in * L.w_qkv;
        lc.qkv.rowwise() += L.b_qkv.row(0);

        lc.att.resize(n, d);
        lc.probs.resize(static_cast<std::size_t>(cfg.n_heads));
        for (int h = 0; h < cfg.n_heads; ++h) {
            const auto q = lc.qkv.middleCols(h * hd, hd);
            const auto k = lc.qkv.middleCols(d + h * hd, hd);
            const auto v = lc.qkv.middleCols(2 * d + h * hd, hd);
            Matrix s = (q * k.transpose()) * att_scale;
            auto& p = lc.probs[static_cast<std::size_t>(h)];
            p = Matrix::Zero(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const auto row = s.row(i).head(i + 1);
                const double m = row.maxCoeff();
                p.row(i).head(i + 1) = (row.array() - m).exp();
                p.row(i).head(i + 1) /= p.row(i).head(i + 1).sum();
            }
            lc.att.middleCols(h * hd, hd).noalias() = p * v;
        }
        lc.x_mid = x;
        lc.x_mid.noalias() += lc.att * L.w_o;
        lc.x_mid.rowwise() += L.b_o.row(0);

        lc.m_in = layer_norm(lc.x_mid, L.ln2_g, L.ln2_b, lc.xhat2, lc.rstd2);
        lc.hpre.noalias() = lc.m_in * L.w_fc;
        lc.hpre.rowwise() += L.b_fc.row(0);
        lc.hact = lc.hpre.unaryExpr([](double v) { return gelu(v); });
        x = lc.x_mid;
        x.noalias() += lc.hact * L.w_proj;
        x.rowwise() += L.b_proj.row(0);
    }
    c.x_final = x;
    c.f = layer_norm(x, params.lnf_g, params.lnf_b, c.xhat_f, c.rstd_f);
    c.logits.noalias() = c.f * params.w_head;
    return c;
}

Matrix forward(const ModelParams& params, std::span<const TokenId> tokens) {
    return forward_cached(params, tokens).logits;
}

void backward(const ModelParams& params, const ForwardCache& c, const Matrix& upstream, ModelParams& g) {
    const auto& cfg = params.config;
    const auto n = static_cast<Eigen::Index>(c.tokens.size());
    if (upstream.rows() != c.logits.rows() || upstream.cols() != c.logits.cols())
        throw ContractViolation("upstream gradient shape " + std::to_string(upstream.rows()) + "x" +
                                std::to_string(upstream.cols()) + " does not match logits " +
                                std::to_string(c.logits.rows()) + "x" + std::to_string(c.logits.cols()));
    const Eigen::Index d = cfg.d_model;
    const Eigen::Index hd = cfg.head_dim();
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));

    g.w_head.noalias() += c.f.transpose() * upstream;
    Matrix df = upstream * params.w_head.transpose();
    Matrix dx = layer_norm_backward(df, c.xhat_f, c.rstd_f, params.lnf_g, g.lnf_g, g.lnf_b);

    for (std::size_t li = params.layers.size(); li-- > 0;) {
        const auto& L = params.layers[li];
        auto& G = g.layers[li];
        const auto& lc = c.layers[li];

        // MLP branch: x = x_mid + gelu(m_in W_fc + b_fc) W_proj + b_proj
        G.b_proj.row(0) += dx.colwise().sum();
        G.w_proj.noalias() += lc.hact.transpose() * dx;
        Matrix dh = dx * L.w_proj.transpose();
        dh = dh.cwiseProduct(lc.hpre.unaryExpr([](double v) { return gelu_grad(v); }));
        G.b_fc.row(0) += dh.colwise().sum();
        G.w_fc.noalias() += lc.m_in.transpose() * dh;
        Matrix dm_in = dh * L.w_fc.transpose();
        Matrix dx_mid = dx + layer_norm_backward(dm_in, lc.xhat2, lc.rstd2, L.ln2_g, G.ln2_g, G.ln2_b);

        // Attention branch: x_mid = x_in + att W_o + b_o
        G.b_o.row(0) += dx_mid.colwise().sum();
        G.w_o.noalias() += lc.att.transpose() * dx_mid;
        Matrix datt = dx_mid * L.w_o.transpose();
        Matrix dqkv = Matrix::Zero(n, 3 * d);
        for (int h = 0; h < cfg.n_heads; ++h) {
            const auto q = lc.qkv.middleCols(h * hd, hd);
            const auto k = lc.qkv.middleCols(d + h * hd, hd);
            const auto v = lc.qkv.middleCols(2 * d + h * hd, hd);
            const auto& p = lc.probs[static_cast<std::size_t>(h)];
            const auto dout = datt.middleCols(h * hd, hd);
            Matrix dp = dout * v.transpose();
            dqkv.middleCols(2 * d + h * hd, hd).noalias() += p.transpose() * dout;
            Matrix ds(n, n);
            for (Eigen::Index i = 0; i < n; ++i) {
                const double dot = p.row(i).dot(dp.row(i));
                ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
            }
            ds *= att_scale;
            dqkv.middleCols(h * hd, hd).noalias() += ds * k;
            dqkv.middleCols(d + h * hd, hd).noalias() += ds.transpose() * q;
        }
        G.b_qkv.row(0) += dqkv.colwise().sum();
        G.w_qkv.noalias() += lc.a_in.transpose() * dqkv;
        Matrix da_in = dqkv * L.w_qkv.transpose();
        dx = dx_mid + layer_norm_backward(da_in, lc.xhat1, lc.rstd1, L.ln1_g, G.ln1_g, G.ln1_b);
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        g.wte.row(c.tokens[static_cast<std::size_t>(i)]) += dx.row(i);
        g.wpe.row(i) += dx.row(i);
    }
}

ModelParams backward(const ModelParams& params, std::span<const TokenId> tokens, const Matrix& upstream) {
    ModelParams grads = ModelParams::zeros(params.config);
    backward(params, forward_cached(params, tokens), upstream, grads);
    return grads;
}

Decoder::Decoder(const ModelParams& params) : params_(&params) {
    const auto& cfg = params.config;
    keys_.assign(static_cast<std::size_t>(cfg.n_layers), Matrix::Zero(cfg.max_seq_len, cfg.d_model));
    values_ = keys_;
}

RowVector Decoder::feed(TokenId token) {
    const auto& P = *params_;
    const auto& cfg = P.config;
    if (len_ >= cfg.max_seq_len) throw ContractViolation("decoder context is full");
    if (token < 0 || token >= cfg.vocab_size) throw ContractViolation("token id outside vocabulary");
    const Eigen::Index d = cfg.d_model;
    const Eigen::Index hd = cfg.head_dim();
    const double att_scale = 1.0 / std::sqrt(static_cast<double>(hd));
    const Eigen::Index pos = len_;

    auto norm = [](const RowVector& x, const Matrix& g, const Matrix& b) {
        const double mean = x.mean();
        const double var = (x.array() - mean).square().mean();
        RowVector y = ((x.array() - mean) / std::sqrt(var + kLnEps)) * g.row(0).array() + b.row(0).array();
        return y;
    };

    RowVector x = P.wte.row(token) + P.wpe.row(pos);
    for (std::size_t li = 0; li < P.layers.size(); ++li) {
        const auto& L = P.layers[li];
        RowVector a = norm(x, L.ln1_g, L.ln1_b);
        RowVector qkv = a * L.w_qkv + L.b_qkv;
        keys_[li].row(pos) = qkv.segment(d, d);
        values_[li].row(pos) = qkv.segment(2 * d, d);
        RowVector att(d);
        for (int h = 0; h < cfg.n_heads; ++h) {
            const auto q = qkv.segment(h * hd, hd);
            const auto k = keys_[li].block(0, h * hd, pos + 1, hd);
            const auto v = values_[li].block(0, h * hd, pos + 1, hd);
            RowVector s = (q * k.transpose()) * att_scale;
            s = (s.array() - s.maxCoeff()).exp();
            s /= s.sum();
            att.segment(h * hd, hd) = s * v;
        }
        x += att * L.w_o + L.b_o;
        RowVector m = norm(x, L.ln2_g, L.ln2_b);
        RowVector hpre = m * L.w_fc + L.b_fc;
        x += hpre.unaryExpr([](double v) { return gelu(v); }) * L.w_proj + L.b_proj;
    }
    ++len_;
    return norm(x, P.lnf_g, P.lnf_b) * P.w_head;
}

void SamplerConfig::validate() const {
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be >= 0");
    if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
    if (max_new_tokens < 1) throw ConfigError("max_new_tokens must be positive");
}

TokenId sample_token(const RowVector& logits, const SamplerConfig& sampler, std::mt19937_64& rng) {
    if (sampler.temperature == 0.0) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < logits.size(); ++i)
            if (logits(i) > logits(best)) best = i;
        return static_cast<TokenId>(best);
    }
    const auto v = static_cast<std::size_t>(logits.size());
    std::vector<double> prob(v);
    const double m = logits.maxCoeff();
    double z = 0.0;
    for (std::size_t i = 0; i < v; ++i) {
        prob[i] = std::exp((logits(static_cast<Eigen::Index>(i)) - m) / sampler.temperature);
        z += prob[i];
    }
    for (auto& p : prob) p /= z;

    std::vector<std::size_t> order(v);
    std::iota(order.begin(), order.end(), 0);
    std::size_t keep = v;
    if (sampler.top_p < 1.0) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return prob[a] > prob[b]; });
        double cum = 0.0;
        for (std::size_t i = 0; i < v; ++i) {
            cum += prob[order[i]];
            if (cum >= sampler.top_p) {
                keep = i + 1;
                break;
            }
        }
    }
    double mass = 0.0;
    for (std::size_t i = 0; i < keep; ++i) mass += prob[order[i]];
    // 53 random bits -> uniform in [0, 1).
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53 * mass;
    double cum = 0.0;
    for (std::size_t i = 0; i < keep; ++i) {
        cum += prob[order[i]];
        if (u < cum) return static_cast<TokenId>(order[i]);
    }
    return static_cast<TokenId>(order[keep - 1]);
}

namespace {

Completion continue_sampling(Decoder decoder, RowVector logits, std::span<const TokenId> prompt_ids,
                             const SamplerConfig& sampler, std::uint64_t seed, const Vocabulary& vocab) {
    std::mt19937_64 rng(seed);
    Completion c;
    c.prompt_ids.assign(prompt_ids.begin(), prompt_ids.end());
    while (static_cast<int>(c.token_ids.size()) < sampler.max_new_tokens) {
        const TokenId t = sample_token(logits, sampler, rng);
        c.token_ids.push_back(t);
        if (t == Vocabulary::kEos) {
            c.finished = true;
            break;
        }
        if (decoder.length() >= decoder.capacity()) break;
        if (static_cast<int>(c.token_ids.size()) < sampler.max_new_tokens) logits = decoder.feed(t);
    }
    c.text = vocab.decode(c.token_ids);
    return c;
}

std::pair<Decoder, RowVector> prefill(const ModelParams& params, std::span<const TokenId> prompt_ids) {
    if (1 + prompt_ids.size() >= static_cast<std::size_t>(params.config.max_seq_len))
        throw ContractViolation("prompt of " + std::to_string(prompt_ids.size()) + " tokens does not fit the context");
    Decoder decoder(params);
    RowVector logits = decoder.feed(Vocabulary::kBos);
    for (TokenId t : prompt_ids) logits = decoder.feed(t);
    return {std::move(decoder), std::move(logits)};
}

} // namespace

Completion sample(const ModelParams& params, std::span<const TokenId> prompt_ids, const SamplerConfig& sampler,
                  const Vocabulary& vocab) {
    sampler.validate();
    auto [decoder, logits] = prefill(params, prompt_ids);
    return continue_sampling(std::move(decoder), std::move(logits), prompt_ids, sampler, sampler.seed, vocab);
}

std::vector<Completion> sample_group(const ModelParams& params, std::span<const TokenId> prompt_ids,
                                     const SamplerConfig& sampler, std::span<const std::uint64_t> seeds,
                                     const Vocabulary& vocab) {
    sampler.validate();
    auto [decoder, logits] = prefill(params, prompt_ids);
    std::vector<Completion> out;
    out.reserve(seeds.size());
    for (auto seed : seeds) out.push_back(continue_sampling(decoder, logits, prompt_ids, sampler, seed, vocab));
    return out;
}

} // namespace scale
