#include "scale/checkpoint.hpp"

#include "scale/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace scale {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'S', 'C', 'A', 'L', 'E', 'C', 'K', '1'};

nlohmann::json tensor_table(const ModelParams& p, const std::string& prefix) {
    auto table = nlohmann::json::array();
    for (const auto& [name, m] : p.named_tensors())
        table.push_back({{"name", prefix + name}, {"rows", m->rows()}, {"cols", m->cols()}});
    return table;
}

void write_tensors(std::ofstream& out, const ModelParams& p) {
    for (const auto& [name, m] : p.named_tensors())
        out.write(reinterpret_cast<const char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
}

void read_tensors(std::ifstream& in, ModelParams& p, const nlohmann::json& table, std::size_t& cursor,
                  const std::string& prefix, const std::filesystem::path& path) {
    for (auto& [name, m] : p.named_tensors()) {
        if (cursor >= table.size()) throw ParseError(path.string() + ": tensor table is too short");
        const auto& entry = table[cursor++];
        if (entry.at("name").get<std::string>() != prefix + name || entry.at("rows").get<Eigen::Index>() != m->rows() ||
            entry.at("cols").get<Eigen::Index>() != m->cols())
            throw ParseError(path.string() + ": tensor table entry " + entry.dump() + " does not match " + prefix + name);
        in.read(reinterpret_cast<char*>(m->data()), static_cast<std::streamsize>(m->size() * sizeof(double)));
        if (!in) throw ParseError(path.string() + ": truncated tensor data for " + prefix + name);
    }
}

} // namespace

nlohmann::json to_json(const ModelConfig& c) {
    return {{"vocab_size", c.vocab_size}, {"d_model", c.d_model},         {"n_layers", c.n_layers},
            {"n_heads", c.n_heads},       {"max_seq_len", c.max_seq_len}, {"seed", c.seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["format"] = "scale-checkpoint";
    header["version"] = 1;
    header["config"] = to_json(ckpt.params.config);
    header["vocab"] = ckpt.vocab_tokens;
    header["step"] = ckpt.step;
    header["meta"] = ckpt.meta;
    auto table = tensor_table(ckpt.params, "");
    if (ckpt.optimizer) {
        const auto& opt = *ckpt.optimizer;
        header["optimizer"] = {{"kind", "adam"},
                               {"t", opt.steps_taken()},
                               {"beta1", opt.hyper().beta1},
                               {"beta2", opt.hyper().beta2},
                               {"eps", opt.hyper().eps}};
        for (auto& e : tensor_table(opt.first_moment(), "adam.m.")) table.push_back(e);
        for (auto& e : tensor_table(opt.second_moment(), "adam.v.")) table.push_back(e);
    }
    header["tensors"] = table;
    const std::string text = header.dump();

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(kMagic, sizeof kMagic);
        const std::uint64_t len = text.size();
        out.write(reinterpret_cast<const char*>(&len), sizeof len);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        write_tensors(out, ckpt.params);
        if (ckpt.optimizer) {
            write_tensors(out, ckpt.optimizer->first_moment());
            write_tensors(out, ckpt.optimizer->second_moment());
        }
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    char magic[8];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) throw ParseError(path.string() + ": not a checkpoint");
    std::uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof len);
    if (!in || len > (1u << 26)) throw ParseError(path.string() + ": bad header length");
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw ParseError(path.string() + ": truncated header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(text);
        Checkpoint ckpt;
        ckpt.params = ModelParams::zeros(model_config_from_json(header.at("config")));
        ckpt.vocab_tokens = header.at("vocab").get<std::vector<std::string>>();
        ckpt.step = header.at("step").get<std::int64_t>();
        ckpt.meta = header.value("meta", nlohmann::json::object());
        const auto& table = header.at("tensors");
        std::size_t cursor = 0;
        read_tensors(in, ckpt.params, table, cursor, "", path);
        if (header.contains("optimizer")) {
            const auto& o = header["optimizer"];
            ModelParams m = ModelParams::zeros(ckpt.params.config);
            ModelParams v = ModelParams::zeros(ckpt.params.config);
            read_tensors(in, m, table, cursor, "adam.m.", path);
            read_tensors(in, v, table, cursor, "adam.v.", path);
            ckpt.optimizer = Adam::restore(std::move(m), std::move(v), o.at("t").get<std::int64_t>(),
                                           AdamHyper{o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                                                     o.at("eps").get<double>()});
        }
        if (cursor != table.size()) throw ParseError(path.string() + ": unread tensors in table");
        if (static_cast<std::size_t>(ckpt.params.config.vocab_size) != ckpt.vocab_tokens.size())
            throw ParseError(path.string() + ": vocabulary size disagrees with model config");
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": bad checkpoint header (" + e.what() + ")");
    } catch (const ConfigError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

} // namespace scale
