#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace qf {

// Compiled-in copy of a file under resources/, e.g. "rubrics/faithfulness.txt".
std::optional<std::string_view> embedded_resource(std::string_view name);

// Reads `name` from `dir` when given and present, else the embedded copy.
// Throws NotFound when neither exists.
std::string load_resource(std::string_view name,
                          const std::optional<std::filesystem::path>& dir = std::nullopt);

}  // namespace qf
