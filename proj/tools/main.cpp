// scale: command-line front end for data generation, SFT, GRPO-lite,
// evaluation, report comparison and log inspection.

#include "scale/checkpoint.hpp"
#include "scale/corpus.hpp"
#include "scale/error.hpp"
#include "scale/eval.hpp"
#include "scale/runlog.hpp"
#include "scale/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw scale::IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw scale::IoError("cannot write " + path.string());
    out << text;
}

int fail(std::string_view kind, std::string_view message, int code) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
    return code;
}

struct Args {
    // gen-data
    std::string task = "counting";
    int difficulty = 3;
    std::size_t size = 0;
    std::uint64_t seed = 0;
    fs::path out;
    double train_fraction = 1.0;
    fs::path test_out;
    // runs
    fs::path config;
    fs::path sft_config, grpo_config;
    std::vector<std::string> priors;
    // eval / compare / inspect
    fs::path checkpoint, data, report_a, report_b, log;
    int max_new_tokens = 64;
    std::string prompt_template;
};

void gen_data(const Args& a) {
    scale::TaskSpec spec{scale::parse_task_kind(a.task), a.difficulty, a.seed, a.size};
    const auto samples = scale::generate(spec);
    if (a.train_fraction >= 1.0) {
        scale::save_jsonl(a.out, samples);
        std::cout << json{{"samples", samples.size()}, {"out", a.out.string()}}.dump() << "\n";
        return;
    }
    if (a.test_out.empty()) throw scale::ConfigError("--train-fraction below 1 needs --test-out");
    const auto parts = scale::split(samples, a.train_fraction, a.seed);
    scale::save_jsonl(a.out, parts.train);
    scale::save_jsonl(a.test_out, parts.test);
    std::cout << json{{"train", parts.train.size()}, {"test", parts.test.size()}}.dump() << "\n";
}

scale::PromptTemplate template_for(const scale::Checkpoint& ckpt, const std::string& override_text) {
    if (!override_text.empty()) return scale::PromptTemplate(override_text);
    if (ckpt.meta.contains("prompt_template")) return scale::PromptTemplate(ckpt.meta["prompt_template"].get<std::string>());
    return {};
}

void run_eval(const Args& a) {
    const auto ckpt = scale::load_checkpoint(a.checkpoint);
    const auto report =
        scale::evaluate_checkpoint(a.checkpoint, a.data, template_for(ckpt, a.prompt_template), a.max_new_tokens);
    scale::write_report(a.out, report);
    std::cout << scale::summary_json(report).dump() << "\n";
}

void run_compare(const Args& a) {
    const auto cmp = scale::compare(scale::read_report(a.report_a), scale::read_report(a.report_b));
    const auto j = scale::to_json(cmp);
    if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
    std::cout << j.dump() << "\n";
}

void run_inspect(const Args& a) {
    const auto result = scale::inspect_log(a.log);
    if (a.out.empty())
        std::cout << result.csv;
    else
        write_text(a.out, result.csv);
    if (result.skipped > 0) std::cerr << "skipped " << result.skipped << " corrupt line(s)\n";
}

void run_pipeline(const Args& a) {
    const auto sft_text = read_text(a.sft_config);
    const auto grpo_text = read_text(a.grpo_config);
    std::map<std::string, fs::path> priors;
    for (const auto& p : a.priors) {
        const auto eq = p.find('=');
        if (eq == std::string::npos || eq == 0) throw scale::ConfigError("--prior expects name=path, got " + p);
        priors[p.substr(0, eq)] = p.substr(eq + 1);
    }
    const auto result = scale::run_pipeline(scale::parse_run_config(sft_text), scale::parse_run_config(grpo_text),
                                            sft_text, grpo_text, priors);
    std::cout << json{{"final_checkpoint", result.final_checkpoint.string()},
                      {"report", result.report_path.string()}}
                     .dump()
              << "\n";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"SCALe toolkit: segment-scheduled SFT and GRPO-lite on synthetic reasoning tasks"};
    app.require_subcommand(1);
    Args a;

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic JSONL dataset");
    gen->add_option("--task", a.task, "counting | addition_chain")->required();
    gen->add_option("--difficulty", a.difficulty, "Number of groups / operands")->required();
    gen->add_option("--size", a.size, "Number of samples")->required();
    gen->add_option("--seed", a.seed, "Generator seed")->required();
    gen->add_option("--out", a.out, "Output JSONL (train part when splitting)")->required();
    gen->add_option("--train-fraction", a.train_fraction, "Fraction kept for training; rest goes to --test-out");
    gen->add_option("--test-out", a.test_out, "Output JSONL for the held-out part");

    auto* sft = app.add_subcommand("train-sft", "Supervised fine-tuning (sft_vanilla, sft_scale, sft_fw)");
    sft->add_option("--config", a.config)->required()->check(CLI::ExistingFile);

    auto* grpo = app.add_subcommand("train-grpo", "GRPO-lite from an SFT checkpoint");
    grpo->add_option("--config", a.config)->required()->check(CLI::ExistingFile);

    auto* ev = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
    ev->add_option("--checkpoint", a.checkpoint)->required()->check(CLI::ExistingFile);
    ev->add_option("--data", a.data)->required()->check(CLI::ExistingFile);
    ev->add_option("--out", a.out, "Summary JSON; per-example JSONL is written next to it")->required();
    ev->add_option("--max-new-tokens", a.max_new_tokens);
    ev->add_option("--template", a.prompt_template, "Prompt template (default: the one stored in the checkpoint)");

    auto* cmp = app.add_subcommand("compare", "Paired comparison of two eval reports (b - a)");
    cmp->add_option("--a", a.report_a)->required()->check(CLI::ExistingFile);
    cmp->add_option("--b", a.report_b)->required()->check(CLI::ExistingFile);
    cmp->add_option("--out", a.out);

    auto* insp = app.add_subcommand("inspect", "Per-step CSV series from a run log");
    insp->add_option("--log", a.log)->required()->check(CLI::ExistingFile);
    insp->add_option("--out", a.out);

    auto* pipe = app.add_subcommand("pipeline", "SFT, optional GRPO, evaluation and combined report");
    pipe->add_option("--sft-config", a.sft_config)->required()->check(CLI::ExistingFile);
    pipe->add_option("--grpo-config", a.grpo_config)->required()->check(CLI::ExistingFile);
    pipe->add_option("--prior", a.priors, "name=path of an earlier eval summary, repeatable");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("config_error", e.what(), 2);
    }

    try {
        if (*gen) {
            gen_data(a);
        } else if (*sft) {
            const auto text = read_text(a.config);
            const auto r = scale::train_sft(scale::parse_run_config(text), text);
            std::cout << json{{"checkpoint", r.checkpoint.string()}, {"log", r.log.string()}, {"steps", r.steps}}.dump()
                      << "\n";
        } else if (*grpo) {
            const auto text = read_text(a.config);
            const auto r = scale::train_grpo(scale::parse_run_config(text), text);
            std::cout << json{{"checkpoint", r.checkpoint.string()}, {"log", r.log.string()}}.dump() << "\n";
        } else if (*ev) {
            run_eval(a);
        } else if (*cmp) {
            run_compare(a);
        } else if (*insp) {
            run_inspect(a);
        } else if (*pipe) {
            run_pipeline(a);
        }
    } catch (const scale::ConfigError& e) {
        return fail(e.kind(), e.what(), 2);
    } catch (const scale::Error& e) {
        return fail(e.kind(), e.what(), 1);
    } catch (const std::exception& e) {
        return fail("internal_error", e.what(), 1);
    }
    return 0;
}
