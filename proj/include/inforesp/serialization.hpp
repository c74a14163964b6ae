#pragma once

// Plot-ready output files. CSVs start with "# key = value" lines echoing the parameters,
// followed by a mandatory header row.

#include "inforesp/measures_analytic.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace inforesp {

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

/// One "# key = value" line per entry of a (possibly nested) JSON object.
void write_parameter_comments(std::ostream& os, const nlohmann::json& params);

void write_table_csv(std::ostream& os, const nlohmann::json& params, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows);

/// Long format: x0, y0, <quantity>.
void write_grid_csv(std::ostream& os, const nlohmann::json& params, const LocalGrid& grid);

/// Creates `dir` if needed; ConfigError when it cannot be created or written.
std::filesystem::path ensure_output_dir(const std::filesystem::path& dir);

void write_text_file(const std::filesystem::path& path, const std::string& text);
/// Pretty-printed with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace inforesp
