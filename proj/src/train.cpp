#include "scale/train.hpp"

#include "scale/checkpoint.hpp"
#include "scale/error.hpp"
#include "scale/loss.hpp"
#include "scale/rng.hpp"
#include "scale/runlog.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace scale {
namespace {

namespace fs = std::filesystem;

// Exclusive ownership of an output directory for the lifetime of a run.
class DirectoryLock {
public:
    explicit DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
        fs::create_directories(dir);
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (f == nullptr) throw ConfigError("output directory " + dir.string() + " is locked by another run");
        std::fclose(f);
    }
    ~DirectoryLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    fs::path path_;
};

void write_text(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

nlohmann::json seeds_json(const SeedConfig& s) {
    return {{"data", s.data}, {"init", s.init}, {"sampling", s.sampling}};
}

std::vector<EncodedSample> encode_all(std::span<const Sample> samples, const Vocabulary& vocab,
                                      const PromptTemplate& tmpl, int max_seq_len) {
    std::vector<EncodedSample> out;
    out.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        try {
            out.push_back(encode(samples[i], vocab, tmpl));
        } catch (const Error& e) {
            throw ValidationError("sample " + std::to_string(i + 1) + ": " + e.what());
        }
        if (out.back().input_length() > static_cast<std::size_t>(max_seq_len))
            throw ConfigError("sample " + std::to_string(i + 1) + " needs " + std::to_string(out.back().input_length()) +
                              " positions but model.max_seq_len is " + std::to_string(max_seq_len));
    }
    return out;
}

std::vector<TokenId> model_input(const EncodedSample& e) {
    auto seq = e.full_sequence();
    seq.pop_back();
    return seq;
}

struct BatchStats {
    double l_think = 0.0, l_answer = 0.0, total = 0.0, vanilla = 0.0;
    double n_think = 0.0, n_answer = 0.0;
    bool finite = true;
};

Checkpoint make_checkpoint(const ModelParams& params, std::int64_t step, nlohmann::json meta,
                           std::optional<Adam> optimizer) {
    Checkpoint c;
    c.params = params;
    c.vocab_tokens = Vocabulary::builtin().tokens();
    c.step = step;
    c.meta = std::move(meta);
    c.optimizer = std::move(optimizer);
    return c;
}

} // namespace

std::int64_t sft_total_steps(std::size_t n_samples, int batch_size, int epochs) {
    if (n_samples == 0 || batch_size < 1 || epochs < 1) throw ConfigError("empty training schedule");
    const auto per_epoch = static_cast<std::int64_t>((n_samples + static_cast<std::size_t>(batch_size) - 1) /
                                                     static_cast<std::size_t>(batch_size));
    return per_epoch * epochs;
}

std::int64_t schedule_horizon(std::int64_t total_steps) { return std::max<std::int64_t>(1, total_steps - 1); }

SftResult train_sft(const RunConfig& config, std::string_view config_text) {
    if (!is_sft(config.mode)) throw ConfigError("train-sft needs an sft_* mode");
    config.validate();
    const auto& vocab = Vocabulary::builtin();
    const auto tmpl = config.make_template();
    const auto samples = load_jsonl(config.train_data);
    if (samples.empty()) throw ConfigError("training set " + config.train_data.string() + " is empty");
    const auto encoded = encode_all(samples, vocab, tmpl, config.model.max_seq_len);

    DirectoryLock lock(config.output_dir);
    write_text(config.output_dir / "config.ini", config_text.empty() ? serialize(config) : config_text);

    const auto& opt = config.optimizer;
    const std::int64_t total_steps = sft_total_steps(encoded.size(), opt.batch_size, opt.epochs);
    const std::int64_t horizon = schedule_horizon(total_steps);
    const std::int64_t last_step = opt.max_steps > 0 ? std::min(total_steps, opt.max_steps) : total_steps;
    const auto think_schedule = config.schedule.think(horizon);
    const auto answer_schedule = config.schedule.answer(horizon);

    ModelConfig mc{static_cast<int>(vocab.size()), config.model.d_model, config.model.n_layers, config.model.n_heads,
                   config.model.max_seq_len, config.seeds.init};
    ModelParams params = ModelParams::initialize(mc);
    Adam adam(mc);
    std::int64_t step = 0;

    nlohmann::json meta = {{"stage", "sft"},
                           {"mode", to_string(config.mode)},
                           {"seeds", seeds_json(config.seeds)},
                           {"prompt_template", tmpl.text()},
                           {"total_steps", total_steps},
                           {"horizon", horizon}};

    if (!config.resume_from.empty()) {
        auto ckpt = load_checkpoint(config.resume_from);
        if (ckpt.vocab_tokens != vocab.tokens()) throw ConfigError("resume checkpoint uses a different vocabulary");
        if (!(ckpt.params.config == mc)) throw ConfigError("resume checkpoint model config differs from the run config");
        if (ckpt.meta.value("mode", "") != to_string(config.mode) ||
            ckpt.meta.value("total_steps", std::int64_t{-1}) != total_steps)
            throw ConfigError("resume checkpoint was produced by a different schedule");
        params = std::move(ckpt.params);
        step = ckpt.step;
        if (opt.kind == OptimizerKind::Adam) {
            if (!ckpt.optimizer) throw ConfigError("resume checkpoint carries no optimizer state");
            adam = std::move(*ckpt.optimizer);
        }
    }

    const std::size_t n = encoded.size();
    const auto per_epoch = total_steps / opt.epochs;
    RunLog log(config.output_dir / "run_log.jsonl",
               {{"mode", to_string(config.mode)},
                {"seeds", seeds_json(config.seeds)},
                {"total_steps", total_steps},
                {"horizon", horizon},
                {"n_train", n},
                {"parameters", params.parameter_count()},
                {"resumed_at", step}});

    ModelParams grads = ModelParams::zeros(mc);
    std::vector<std::size_t> order(n);
    std::int64_t order_epoch = -1;
    const auto t0 = std::chrono::steady_clock::now();

    for (; step < last_step; ++step) {
        const std::int64_t epoch = step / per_epoch;
        const std::int64_t batch_index = step % per_epoch;
        const std::uint64_t order_seed = derive_seed(config.seeds.data, {static_cast<std::uint64_t>(epoch)});
        if (epoch != order_epoch) {
            std::iota(order.begin(), order.end(), 0);
            std::mt19937_64 rng(order_seed);
            std::shuffle(order.begin(), order.end(), rng);
            order_epoch = epoch;
        }
        const std::size_t begin = static_cast<std::size_t>(batch_index) * static_cast<std::size_t>(opt.batch_size);
        const std::size_t end = std::min(n, begin + static_cast<std::size_t>(opt.batch_size));
        const double inv_batch = 1.0 / static_cast<double>(end - begin);

        const SegmentWeights weights{schedule_eval(think_schedule, step), schedule_eval(answer_schedule, step)};
        grads.set_zero();
        BatchStats stats;
        for (std::size_t b = begin; b < end; ++b) {
            const auto& e = encoded[order[b]];
            const auto cache = forward_cached(params, model_input(e));
            const auto prompt_rows = static_cast<Eigen::Index>(e.prompt_ids.size());
            const auto target_rows = static_cast<Eigen::Index>(e.target_ids.size());
            const Matrix target_logits = cache.logits.middleRows(prompt_rows, target_rows);
            const auto ce = token_ce(target_logits, e.target_ids);
            const auto breakdown = scale_loss(ce, e.labels, weights);
            const double vanilla = vanilla_loss(ce);

            Matrix dtarget = config.mode == RunMode::SftVanilla ? vanilla_loss_grad(target_logits, e.target_ids)
                                                                : scale_loss_grad(target_logits, e.target_ids,
                                                                                  e.labels, weights);
            Matrix upstream = Matrix::Zero(cache.logits.rows(), cache.logits.cols());
            upstream.middleRows(prompt_rows, target_rows) = dtarget * inv_batch;
            backward(params, cache, upstream, grads);

            stats.l_think += breakdown.l_think * inv_batch;
            stats.l_answer += breakdown.l_answer * inv_batch;
            stats.n_think += static_cast<double>(breakdown.n_think) * inv_batch;
            stats.n_answer += static_cast<double>(breakdown.n_answer) * inv_batch;
            stats.vanilla += vanilla * inv_batch;
            stats.total += (config.mode == RunMode::SftVanilla ? vanilla : breakdown.total) * inv_batch;
        }

        if (!std::isfinite(stats.total) || !std::isfinite(grads.squared_norm())) {
            save_checkpoint(config.output_dir / "last_good.ckpt", make_checkpoint(params, step, meta, adam));
            throw NumericError(std::string(std::isfinite(stats.total) ? "non-finite gradient" : "non-finite loss") +
                               " at step " + std::to_string(step) + "; last good state saved to last_good.ckpt");
        }
        const double grad_norm = clip_grad_norm(grads, opt.clip_norm);
        if (opt.kind == OptimizerKind::Adam)
            adam.step(params, grads, opt.lr);
        else
            sgd_step(params, grads, opt.lr);

        nlohmann::json rec = {{"step", step},
                              {"mode", to_string(config.mode)},
                              {"epoch", epoch},
                              {"l_think", stats.l_think},
                              {"l_answer", stats.l_answer},
                              {"n_think", stats.n_think},
                              {"n_answer", stats.n_answer},
                              {"total", stats.total},
                              {"vanilla", stats.vanilla},
                              {"grad_norm", grad_norm},
                              {"seed_digest", splitmix64(order_seed ^ static_cast<std::uint64_t>(batch_index))}};
        if (config.mode == RunMode::SftVanilla) {
            rec["w_t"] = nullptr;
            rec["w_a"] = nullptr;
        } else {
            rec["w_t"] = weights.think;
            rec["w_a"] = weights.answer;
        }
        if (config.record_wall_clock)
            rec["wall_ms"] =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        log.append(std::move(rec));

        const std::int64_t done = step + 1;
        if (opt.checkpoint_every > 0 && done % opt.checkpoint_every == 0 && done < last_step)
            save_checkpoint(config.output_dir / ("checkpoint_step_" + std::to_string(done) + ".ckpt"),
                            make_checkpoint(params, done, meta, adam));
    }

    SftResult result;
    result.checkpoint = config.output_dir / "model.ckpt";
    result.log = log.path();
    result.steps = step;
    result.total_steps = total_steps;
    save_checkpoint(result.checkpoint,
                    make_checkpoint(params, step, meta,
                                    opt.kind == OptimizerKind::Adam ? std::optional<Adam>(adam) : std::nullopt));
    return result;
}

GrpoResult train_grpo(const RunConfig& config, std::string_view config_text) {
    if (config.mode != RunMode::Grpo) throw ConfigError("train-grpo needs mode = grpo");
    config.validate();
    auto ckpt = load_checkpoint(config.init_checkpoint);
    const auto vocab = Vocabulary::from_tokens(ckpt.vocab_tokens);
    const auto tmpl = config.make_template();
    const auto samples = load_jsonl(config.train_data);
    if (samples.empty()) throw ConfigError("prompt set " + config.train_data.string() + " is empty");

    std::vector<GrpoPrompt> prompts;
    prompts.reserve(samples.size());
    for (const auto& s : samples) prompts.push_back({encode_prompt(s.prompt, vocab, tmpl), s.gold});

    DirectoryLock lock(config.output_dir);
    write_text(config.output_dir / "config.ini", config_text.empty() ? serialize(config) : config_text);

    const auto gcfg = config.grpo_config();
    RunLog log(config.output_dir / "run_log.jsonl",
               {{"mode", "grpo"},
                {"seeds", seeds_json(config.seeds)},
                {"total_steps", gcfg.steps},
                {"init_checkpoint", config.init_checkpoint.string()},
                {"group_size", gcfg.group_size},
                {"prompts_per_step", gcfg.prompts_per_step}});

    ModelParams params = std::move(ckpt.params);
    const auto t0 = std::chrono::steady_clock::now();
    GrpoResult result;
    result.records = grpo_train(params, prompts, gcfg, vocab, [&](const GrpoStepRecord& r) {
        nlohmann::json rec = {{"step", r.step},
                              {"mode", "grpo"},
                              {"reward", r.mean_reward},
                              {"r_tag", r.mean_r_tag},
                              {"r_ans", r.mean_r_ans},
                              {"invalid_rate", r.invalid_rate},
                              {"mean_length", r.mean_length},
                              {"grad_norm", r.grad_norm},
                              {"seed_digest", r.seed_digest}};
        if (config.record_wall_clock)
            rec["wall_ms"] =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        log.append(std::move(rec));
    });

    nlohmann::json meta = {{"stage", "grpo"},
                           {"mode", "grpo"},
                           {"seeds", seeds_json(config.seeds)},
                           {"prompt_template", tmpl.text()},
                           {"init_checkpoint", config.init_checkpoint.string()},
                           {"sft_meta", ckpt.meta}};
    result.checkpoint = config.output_dir / "model.ckpt";
    result.log = log.path();
    Checkpoint out;
    out.params = std::move(params);
    out.vocab_tokens = ckpt.vocab_tokens;
    out.step = gcfg.steps;
    out.meta = std::move(meta);
    save_checkpoint(result.checkpoint, out);
    return result;
}

EvalReport evaluate_checkpoint(const fs::path& checkpoint, const fs::path& data, const PromptTemplate& tmpl,
                               int max_new_tokens) {
    const auto ckpt = load_checkpoint(checkpoint);
    const auto vocab = Vocabulary::from_tokens(ckpt.vocab_tokens);
    const auto samples = load_jsonl(data);
    return evaluate(ckpt.params, samples, SamplerConfig{0.0, 1.0, max_new_tokens, 0}, vocab, tmpl);
}

PipelineResult run_pipeline(const RunConfig& sft, RunConfig grpo, std::string_view sft_text,
                            std::string_view grpo_text, const std::map<std::string, fs::path>& prior_reports) {
    if (!is_sft(sft.mode)) throw ConfigError("pipeline: first config must be an sft_* mode");
    if (grpo.mode != RunMode::Grpo) throw ConfigError("pipeline: second config must have mode = grpo");
    sft.validate();

    PipelineResult result;
    // The GRPO stage always starts from this pipeline's SFT output.
    const auto sft_ckpt = sft.output_dir / "model.ckpt";
    if (grpo.init_checkpoint.empty()) grpo.init_checkpoint = sft_ckpt;
    if (fs::weakly_canonical(grpo.init_checkpoint) != fs::weakly_canonical(sft_ckpt))
        throw ConfigError("pipeline: grpo init_checkpoint must reference the SFT output " + sft_ckpt.string());
    grpo.validate();

    result.sft = train_sft(sft, sft_text);
    result.final_checkpoint = result.sft.checkpoint;

    nlohmann::json report = {{"sft_mode", to_string(sft.mode)}, {"stages", nlohmann::json::object()}};
    const bool have_test = !sft.test_data.empty();
    if (have_test) {
        result.sft_report = evaluate_checkpoint(result.sft.checkpoint, sft.test_data, sft.make_template(),
                                                sft.eval_max_new_tokens);
        write_report(sft.output_dir / "eval.json", *result.sft_report);
        report["stages"]["sft"] = summary_json(*result.sft_report);
    }

    if (grpo.grpo.steps > 0) {
        result.grpo = train_grpo(grpo, grpo_text);
        result.final_checkpoint = result.grpo->checkpoint;
        if (have_test) {
            result.grpo_report = evaluate_checkpoint(result.grpo->checkpoint, sft.test_data, grpo.make_template(),
                                                     grpo.eval_max_new_tokens);
            write_report(grpo.output_dir / "eval.json", *result.grpo_report);
            report["stages"]["grpo"] = summary_json(*result.grpo_report);
            report["sft_vs_grpo"] = to_json(compare(*result.sft_report, *result.grpo_report));
        }
    }

    if (have_test) {
        const EvalReport& final_report = result.grpo_report ? *result.grpo_report : *result.sft_report;
        for (const auto& [name, path] : prior_reports) {
            const auto prior = read_report(path);
            report["priors"][name] = summary_json(prior);
            report["comparisons"][name + "_vs_final"] = to_json(compare(prior, final_report));
            report["comparisons"][name + "_vs_sft"] = to_json(compare(prior, *result.sft_report));
        }
    }

    const fs::path out_dir = result.grpo ? grpo.output_dir : sft.output_dir;
    result.report_path = out_dir / "pipeline_report.json";
    write_text(result.report_path, report.dump(2) + "\n");
    result.report = std::move(report);
    return result;
}

} // namespace scale
