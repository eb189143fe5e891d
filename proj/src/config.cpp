#include "scale/config.hpp"

#include "scale/error.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <vector>

namespace scale {
namespace {

std::string_view trim(std::string_view s) {
    const auto* ws = " \t\r";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
    T value{};
    const auto* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end)
        throw ConfigError("key '" + std::string(key) + "': cannot parse '" + std::string(text) + "'");
    return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("key '" + std::string(key) + "': expected true or false");
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

struct Field {
    std::function<void(RunConfig&, std::string_view key, std::string_view value)> set;
    std::function<std::string(const RunConfig&)> get;
};

// Registry keyed by "section.key", ordered for serialization.
const std::vector<std::pair<std::string, Field>>& fields() {
    using C = RunConfig;
    auto path = [](std::filesystem::path C::*m) {
        return Field{[m](C& c, std::string_view, std::string_view v) { c.*m = std::filesystem::path(std::string(v)); },
                     [m](const C& c) { return (c.*m).string(); }};
    };
    auto dbl = [](auto getter) {
        return Field{[getter](C& c, std::string_view k, std::string_view v) { getter(c) = parse_number<double>(k, v); },
                     [getter](const C& c) { return format_double(getter(const_cast<C&>(c))); }};
    };
    auto integer = [](auto getter) {
        using T = std::remove_reference_t<decltype(getter(std::declval<C&>()))>;
        return Field{[getter](C& c, std::string_view k, std::string_view v) { getter(c) = parse_number<T>(k, v); },
                     [getter](const C& c) { return std::to_string(getter(const_cast<C&>(c))); }};
    };

    static const std::vector<std::pair<std::string, Field>> registry = {
        {"run.mode", Field{[](C& c, std::string_view, std::string_view v) { c.mode = parse_run_mode(v); },
                           [](const C& c) { return std::string(to_string(c.mode)); }}},
        {"run.output_dir", path(&C::output_dir)},
        {"run.train_data", path(&C::train_data)},
        {"run.test_data", path(&C::test_data)},
        {"run.init_checkpoint", path(&C::init_checkpoint)},
        {"run.resume_from", path(&C::resume_from)},
        {"run.record_wall_clock",
         Field{[](C& c, std::string_view k, std::string_view v) { c.record_wall_clock = parse_bool(k, v); },
               [](const C& c) { return std::string(c.record_wall_clock ? "true" : "false"); }}},
        {"seeds.data", integer([](C& c) -> std::uint64_t& { return c.seeds.data; })},
        {"seeds.init", integer([](C& c) -> std::uint64_t& { return c.seeds.init; })},
        {"seeds.sampling", integer([](C& c) -> std::uint64_t& { return c.seeds.sampling; })},
        {"model.d_model", integer([](C& c) -> int& { return c.model.d_model; })},
        {"model.n_layers", integer([](C& c) -> int& { return c.model.n_layers; })},
        {"model.n_heads", integer([](C& c) -> int& { return c.model.n_heads; })},
        {"model.max_seq_len", integer([](C& c) -> int& { return c.model.max_seq_len; })},
        {"schedule.think_start", dbl([](C& c) -> double& { return c.schedule.think_start; })},
        {"schedule.think_end", dbl([](C& c) -> double& { return c.schedule.think_end; })},
        {"schedule.answer_start", dbl([](C& c) -> double& { return c.schedule.answer_start; })},
        {"schedule.answer_end", dbl([](C& c) -> double& { return c.schedule.answer_end; })},
        {"optimizer.kind",
         Field{[](C& c, std::string_view, std::string_view v) { c.optimizer.kind = parse_optimizer_kind(v); },
               [](const C& c) { return std::string(to_string(c.optimizer.kind)); }}},
        {"optimizer.lr", dbl([](C& c) -> double& { return c.optimizer.lr; })},
        {"optimizer.batch_size", integer([](C& c) -> int& { return c.optimizer.batch_size; })},
        {"optimizer.epochs", integer([](C& c) -> int& { return c.optimizer.epochs; })},
        {"optimizer.clip_norm", dbl([](C& c) -> double& { return c.optimizer.clip_norm; })},
        {"optimizer.max_steps", integer([](C& c) -> std::int64_t& { return c.optimizer.max_steps; })},
        {"optimizer.checkpoint_every", integer([](C& c) -> std::int64_t& { return c.optimizer.checkpoint_every; })},
        {"grpo.steps", integer([](C& c) -> int& { return c.grpo.steps; })},
        {"grpo.group_size", integer([](C& c) -> int& { return c.grpo.group_size; })},
        {"grpo.prompts_per_step", integer([](C& c) -> int& { return c.grpo.prompts_per_step; })},
        {"grpo.lambda_tag", dbl([](C& c) -> double& { return c.grpo.lambda_tag; })},
        {"grpo.lambda_ans", dbl([](C& c) -> double& { return c.grpo.lambda_ans; })},
        {"grpo.temperature", dbl([](C& c) -> double& { return c.grpo.temperature; })},
        {"grpo.top_p", dbl([](C& c) -> double& { return c.grpo.top_p; })},
        {"grpo.kl_coeff", dbl([](C& c) -> double& { return c.grpo.kl_coeff; })},
        {"grpo.max_new_tokens", integer([](C& c) -> int& { return c.grpo.max_new_tokens; })},
        {"eval.max_new_tokens", integer([](C& c) -> int& { return c.eval_max_new_tokens; })},
        {"prompt.template", Field{[](C& c, std::string_view, std::string_view v) { c.prompt_template = std::string(v); },
                                  [](const C& c) { return c.prompt_template; }}},
    };
    return registry;
}

const Field* find_field(std::string_view key) {
    for (const auto& [k, f] : fields())
        if (k == key) return &f;
    return nullptr;
}

} // namespace

RunMode parse_run_mode(std::string_view name) {
    if (name == "sft_vanilla") return RunMode::SftVanilla;
    if (name == "sft_scale") return RunMode::SftScale;
    if (name == "sft_fw") return RunMode::SftFw;
    if (name == "grpo") return RunMode::Grpo;
    throw ConfigError("unknown mode '" + std::string(name) + "' (expected sft_vanilla, sft_scale, sft_fw or grpo)");
}

std::string_view to_string(RunMode mode) {
    switch (mode) {
    case RunMode::SftVanilla: return "sft_vanilla";
    case RunMode::SftScale: return "sft_scale";
    case RunMode::SftFw: return "sft_fw";
    case RunMode::Grpo: return "grpo";
    }
    return "?";
}

RunConfig default_run_config(RunMode mode) {
    RunConfig c;
    c.mode = mode;
    if (mode == RunMode::SftFw) c.schedule = ScheduleConfig{1.0, 1.0, 1.0, 1.0};
    if (mode == RunMode::Grpo) c.optimizer.lr = 2e-4;
    return c;
}

void RunConfig::validate() const {
    if (output_dir.empty()) throw ConfigError("run.output_dir is required");
    if (train_data.empty()) throw ConfigError("run.train_data is required");
    if (mode == RunMode::Grpo && init_checkpoint.empty())
        throw ConfigError("grpo mode requires run.init_checkpoint");
    if (mode == RunMode::SftFw &&
        (schedule.think_start != schedule.think_end || schedule.answer_start != schedule.answer_end))
        throw ConfigError("sft_fw requires think_start == think_end and answer_start == answer_end");
    for (double w : {schedule.think_start, schedule.think_end, schedule.answer_start, schedule.answer_end})
        if (!(w >= 0.0)) throw ConfigError("schedule weights must be non-negative");
    if (optimizer.batch_size < 1) throw ConfigError("optimizer.batch_size must be positive");
    if (optimizer.epochs < 1) throw ConfigError("optimizer.epochs must be positive");
    if (!(optimizer.lr >= 0.0)) throw ConfigError("optimizer.lr must be non-negative");
    if (optimizer.max_steps < 0 || optimizer.checkpoint_every < 0)
        throw ConfigError("optimizer.max_steps and checkpoint_every must be non-negative");
    if (eval_max_new_tokens < 1) throw ConfigError("eval.max_new_tokens must be positive");
    ModelConfig probe{static_cast<int>(Vocabulary::builtin().size()), model.d_model, model.n_layers, model.n_heads,
                      model.max_seq_len, seeds.init};
    probe.validate();
    make_template();
    if (mode == RunMode::Grpo) grpo_config().validate();
}

PromptTemplate RunConfig::make_template() const {
    return prompt_template.empty() ? PromptTemplate() : PromptTemplate(prompt_template);
}

GrpoConfig RunConfig::grpo_config() const {
    GrpoConfig g;
    g.steps = grpo.steps;
    g.group_size = grpo.group_size;
    g.prompts_per_step = grpo.prompts_per_step;
    g.lambdas = RewardWeights{grpo.lambda_tag, grpo.lambda_ans};
    g.sampler = SamplerConfig{grpo.temperature, grpo.top_p, grpo.max_new_tokens, seeds.sampling};
    g.kl_coeff = grpo.kl_coeff;
    g.optimizer = optimizer.kind;
    g.learning_rate = optimizer.lr;
    g.clip_norm = optimizer.clip_norm;
    return g;
}

SamplerConfig RunConfig::eval_sampler() const { return SamplerConfig{0.0, 1.0, eval_max_new_tokens, seeds.sampling}; }

RunConfig parse_run_config(std::string_view text) {
    std::map<std::string, std::string> values;
    std::map<std::string, std::size_t> first_line;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        const auto raw = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        const auto line = trim(raw);
        const std::string where = "config line " + std::to_string(line_no) + ": ";
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + "expected key = value");
        if (section.empty()) throw ConfigError(where + "key outside of any section");
        const std::string key = section + "." + std::string(trim(line.substr(0, eq)));
        if (!find_field(key)) throw ConfigError(where + "unknown key '" + key + "'");
        if (values.contains(key))
            throw ConfigError(where + "duplicate key '" + key + "' (first set on line " +
                              std::to_string(first_line[key]) + ")");
        values[key] = std::string(trim(line.substr(eq + 1)));
        first_line[key] = line_no;
    }

    const RunMode mode = values.contains("run.mode") ? parse_run_mode(values["run.mode"]) : RunMode::SftScale;
    RunConfig c = default_run_config(mode);
    for (const auto& [key, field] : fields())
        if (auto it = values.find(key); it != values.end()) field.set(c, key, it->second);
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_run_config(buf.str());
}

std::string serialize(const RunConfig& config) {
    std::string out;
    std::string section;
    for (const auto& [key, field] : fields()) {
        const auto dot = key.find('.');
        const auto sec = key.substr(0, dot);
        if (sec != section) {
            if (!out.empty()) out += '\n';
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += key.substr(dot + 1) + " = " + field.get(config) + "\n";
    }
    return out;
}

} // namespace scale
