#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace stmae::csv {

std::vector<std::string> split(std::string_view line);

/// Parses one numeric cell; throws std::runtime_error naming file, row and
/// column (both 1-based, row counted over data rows) when it is not a number.
double parse_cell(std::string_view cell, const std::filesystem::path& file, std::size_t row,
                  std::size_t col);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace stmae::csv
