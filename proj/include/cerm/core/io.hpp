#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <string_view>

namespace cerm {

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partial file. Throws Error(Storage).
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Whole file as a string. Throws Error(Storage).
std::string read_file(const std::filesystem::path& path);

/// Calls `fn(line, line_number)` for each non-blank line (1-based numbers).
void for_each_line(const std::filesystem::path& path,
                   const std::function<void(std::string_view, std::size_t)>& fn);

}  // namespace cerm
