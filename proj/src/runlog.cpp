#include "scale/runlog.hpp"

#include "scale/error.hpp"
#include "scale/log.hpp"

#include <array>
#include <charconv>

namespace scale {
namespace {

constexpr std::array<const char*, 11> kColumns = {"step",  "mode",   "w_t",   "w_a",   "l_think",     "l_answer",
                                                  "total", "reward", "r_tag", "r_ans", "invalid_rate"};

std::string cell(const nlohmann::json& record, const char* key) {
    auto it = record.find(key);
    if (it == record.end() || it->is_null()) return {};
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
    if (it->is_number()) {
        char buf[64];
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, it->get<double>());
        return std::string(buf, ptr);
    }
    return it->dump();
}

} // namespace

RunLog::RunLog(const std::filesystem::path& path, const nlohmann::json& header) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot write run log " + path.string());
    nlohmann::json h = header;
    h["type"] = "header";
    out_ << h.dump() << '\n';
    out_.flush();
}

void RunLog::append(nlohmann::json record) {
    if (!record.contains("step") || !record["step"].is_number_integer())
        throw ContractViolation("run log record needs an integer step");
    const auto step = record["step"].get<std::int64_t>();
    if (last_step_ && step <= *last_step_)
        throw ContractViolation("run log step " + std::to_string(step) + " does not follow " +
                                std::to_string(*last_step_));
    last_step_ = step;
    record["type"] = "step";
    out_ << record.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("write failed for " + path_.string());
}

InspectResult inspect_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open run log " + path.string());
    InspectResult r;
    for (std::size_t i = 0; i < kColumns.size(); ++i) r.csv += (i ? "," : "") + std::string(kColumns[i]);
    r.csv += '\n';

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
            if (!record.is_object()) throw std::runtime_error("not an object");
            if (record.value("type", "") == "header") continue;
            if (!record.contains("step") || !record["step"].is_number_integer())
                throw std::runtime_error("missing step");
        } catch (const std::exception& e) {
            ++r.skipped;
            log::warn(path.string() + ":" + std::to_string(line_no) + ": skipping corrupt line (" + e.what() + ")");
            continue;
        }
        for (std::size_t i = 0; i < kColumns.size(); ++i) r.csv += (i ? "," : "") + cell(record, kColumns[i]);
        r.csv += '\n';
        ++r.rows;
    }
    return r;
}

} // namespace scale
