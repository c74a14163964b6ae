#include "inforesp/serialization.hpp"

#include "inforesp/errors.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>
#include <system_error>

namespace inforesp {

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace {

void comments(std::ostream& os, const nlohmann::json& j, const std::string& prefix) {
  if (j.is_object()) {
    for (const auto& [key, value] : j.items()) comments(os, value, prefix.empty() ? key : prefix + "." + key);
    return;
  }
  os << "# " << prefix << " = ";
  if (j.is_number_float())
    os << format_double(j.get<double>());
  else if (j.is_string())
    os << j.get<std::string>();
  else
    os << j.dump();
  os << '\n';
}

}  // namespace

void write_parameter_comments(std::ostream& os, const nlohmann::json& params) { comments(os, params, ""); }

void write_table_csv(std::ostream& os, const nlohmann::json& params, const std::vector<std::string>& header,
                     const std::vector<std::vector<double>>& rows) {
  write_parameter_comments(os, params);
  for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
  os << '\n';
  for (const auto& row : rows) {
    if (row.size() != header.size()) throw DomainError("csv row width does not match the header");
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << format_double(row[c]);
    os << '\n';
  }
}

void write_grid_csv(std::ostream& os, const nlohmann::json& params, const LocalGrid& grid) {
  grid.validate();
  nlohmann::json p = params;
  p["quantity"] = std::string(to_string(grid.quantity));
  p["shape"] = {grid.x0.size(), grid.y0.size()};
  write_parameter_comments(os, p);
  os << "x0,y0," << to_string(grid.quantity) << '\n';
  for (Index i = 0; i < grid.x0.size(); ++i)
    for (Index j = 0; j < grid.y0.size(); ++j)
      os << format_double(grid.x0(i)) << ',' << format_double(grid.y0(j)) << ',' << format_double(grid.values(i, j))
         << '\n';
}

std::filesystem::path ensure_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir))
    throw ConfigError("unwritable output directory: " + dir.string() + (ec ? " (" + ec.message() + ")" : ""));
  const auto probe = dir / ".write_probe";
  {
    std::ofstream f(probe);
    if (!f) throw ConfigError("unwritable output directory: " + dir.string());
  }
  std::filesystem::remove(probe, ec);
  return dir;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open output file: " + path.string());
  f << text;
  if (!f) throw ConfigError("failed writing output file: " + path.string());
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace inforesp
