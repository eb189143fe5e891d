#include "doctest.h"

#include "scratch.hpp"

#include "json.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run cli(const ScratchDir& dir, const std::string& args) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string("cd '") + dir.path().string() + "' && '" + SCALE_CLI_PATH + "' " + args +
                            " >'" + out.string() + "' 2>'" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

} // namespace

TEST_CASE("gen-data writes jsonl and splits") {
    ScratchDir d("cli_gen");
    auto r = cli(d, "gen-data --task counting --difficulty 3 --size 50 --seed 4 --out all.jsonl");
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["samples"] == 50);
    r = cli(d, "gen-data --task addition_chain --difficulty 2 --size 50 --seed 4 --out tr.jsonl --train-fraction 0.8 --test-out te.jsonl");
    CHECK(r.code == 0);
    CHECK(fs::exists(d / "te.jsonl"));
    // same arguments, same bytes
    cli(d, "gen-data --task counting --difficulty 3 --size 50 --seed 4 --out again.jsonl");
    CHECK(slurp(d / "all.jsonl") == slurp(d / "again.jsonl"));
}

TEST_CASE("errors produce a machine-readable record and nonzero exit") {
    ScratchDir d("cli_err");
    auto r = cli(d, "gen-data --task sorting --difficulty 3 --size 5 --seed 1 --out x.jsonl");
    CHECK(r.code == 2);
    auto e = nlohmann::json::parse(r.err);
    CHECK(e["error"] == "config_error");
    CHECK(e["message"].get<std::string>().find("sorting") != std::string::npos);

    r = cli(d, "frobnicate");
    CHECK(r.code == 2);
    CHECK(nlohmann::json::parse(r.err)["error"] == "config_error");

    write(d / "bad.ini", "[run]\nmode = sft_scale\nlearning_rate = 1\n");
    r = cli(d, "train-sft --config bad.ini");
    CHECK(r.code == 2);

    write(d / "bad.jsonl", "{\"prompt\": 3}\n");
    write(d / "ok.ini", "[run]\nmode = sft_scale\noutput_dir = out\ntrain_data = bad.jsonl\n");
    r = cli(d, "train-sft --config ok.ini");
    CHECK(r.code == 1);
    CHECK(nlohmann::json::parse(r.err)["error"] == "parse_error");
}

TEST_CASE("train, eval, compare and inspect from the command line") {
    ScratchDir d("cli_flow");
    REQUIRE(cli(d, "gen-data --task addition_chain --difficulty 2 --size 40 --seed 9 --out tr.jsonl --train-fraction 0.75 --test-out te.jsonl").code == 0);
    const std::string common = "train_data = tr.jsonl\ntest_data = te.jsonl\n[model]\nd_model = 16\nn_layers = 1\nn_heads = 2\n[optimizer]\nbatch_size = 8\n";
    write(d / "scale.ini", "[run]\nmode = sft_scale\noutput_dir = s\n" + common);
    write(d / "vanilla.ini", "[run]\nmode = sft_vanilla\noutput_dir = v\n" + common);
    REQUIRE(cli(d, "train-sft --config scale.ini").code == 0);
    REQUIRE(cli(d, "train-sft --config vanilla.ini").code == 0);
    CHECK(slurp(d / "s" / "config.ini") == slurp(d / "scale.ini"));

    auto r = cli(d, "eval --checkpoint s/model.ckpt --data te.jsonl --out s_eval.json --max-new-tokens 16");
    REQUIRE(r.code == 0);
    CHECK(nlohmann::json::parse(r.out)["n_examples"] == 10);
    CHECK(fs::exists(d / "s_eval.jsonl"));
    REQUIRE(cli(d, "eval --checkpoint v/model.ckpt --data te.jsonl --out v_eval.json --max-new-tokens 16").code == 0);

    r = cli(d, "compare --a v_eval.json --b s_eval.json --out cmp.json");
    CHECK(r.code == 0);
    CHECK(nlohmann::json::parse(slurp(d / "cmp.json")).contains("delta_exact_match"));

    r = cli(d, "inspect --log s/run_log.jsonl");
    CHECK(r.code == 0);
    CHECK(r.out.rfind("step,mode,w_t,w_a", 0) == 0);
    std::istringstream rows(r.out);
    std::string line;
    int n = 0;
    while (std::getline(rows, line)) ++n;
    CHECK(n == 1 + 4);  // 30 samples, batch 8, one epoch

    write(d / "grpo.ini", "[run]\nmode = grpo\noutput_dir = g\ntrain_data = tr.jsonl\ninit_checkpoint = s/model.ckpt\n[grpo]\nsteps = 2\ngroup_size = 2\nmax_new_tokens = 8\n");
    r = cli(d, "train-grpo --config grpo.ini");
    CHECK(r.code == 0);
    CHECK(fs::exists(d / "g" / "model.ckpt"));
}

TEST_CASE("pipeline command") {
    ScratchDir d("cli_pipe");
    REQUIRE(cli(d, "gen-data --task addition_chain --difficulty 2 --size 20 --seed 3 --out tr.jsonl --train-fraction 0.8 --test-out te.jsonl").code == 0);
    write(d / "sft.ini", "[run]\nmode = sft_scale\noutput_dir = sft\ntrain_data = tr.jsonl\ntest_data = te.jsonl\n[model]\nd_model = 16\nn_layers = 1\nn_heads = 2\n[eval]\nmax_new_tokens = 12\n");
    write(d / "grpo.ini", "[run]\nmode = grpo\noutput_dir = grpo\ntrain_data = tr.jsonl\ninit_checkpoint = sft/model.ckpt\n[grpo]\nsteps = 2\ngroup_size = 2\nmax_new_tokens = 8\n[eval]\nmax_new_tokens = 12\n");
    auto r = cli(d, "pipeline --sft-config sft.ini --grpo-config grpo.ini");
    CHECK(r.code == 0);
    const auto report = nlohmann::json::parse(slurp(d / "grpo" / "pipeline_report.json"));
    CHECK(report["stages"].contains("sft"));
    CHECK(report["stages"].contains("grpo"));
    r = cli(d, "pipeline --sft-config sft.ini --grpo-config grpo.ini --prior base");
    CHECK(r.code == 2);
}
