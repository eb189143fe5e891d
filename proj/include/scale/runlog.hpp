#pragma once

#include "json.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

namespace scale {

// Append-only JSONL log. The first line is a header record
// ({"type":"header",...}); every later line is a step record whose "step"
// must strictly increase.
class RunLog {
public:
    RunLog(const std::filesystem::path& path, const nlohmann::json& header);

    // Throws ContractViolation when record["step"] does not increase.
    void append(nlohmann::json record);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::optional<std::int64_t> last_step_;
};

struct InspectResult {
    std::string csv;
    std::size_t rows = 0;
    std::size_t skipped = 0;  // corrupt lines
};

// Per-step series for external plotting:
// step,mode,w_t,w_a,l_think,l_answer,total,reward,r_tag,r_ans,invalid_rate
// Missing values are empty cells; corrupt lines are skipped with a warning.
InspectResult inspect_log(const std::filesystem::path& path);

} // namespace scale
