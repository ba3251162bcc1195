#include "csv.hpp"

#include <cmath>
#include <fstream>

#include <fmt/core.h>

#include "config.hpp"

namespace dynsig::cli {

void CsvTable::add_row(std::vector<std::string> row) {
  if (row.size() != header_.size())
    throw Error(fmt::format("csv row has {} fields, header has {}", row.size(), header_.size()));
  rows_.push_back(std::move(row));
}

std::string CsvTable::str() const {
  std::string s;
  auto line = [&s](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) s += ',';
      s += fields[i];
    }
    s += '\n';
  };
  line(header_);
  for (const auto& r : rows_) line(r);
  return s;
}

void CsvTable::write(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError(fmt::format("cannot write csv file '{}'", path));
  out << str();
  if (!out) throw ConfigError(fmt::format("failed writing csv file '{}'", path));
}

std::string format_number(double x) {
  if (x == 0.0) return "0";  // no "-0"
  return fmt::format("{:.12g}", x);
}

std::string format_optional(const std::optional<double>& x) {
  return x ? format_number(*x) : std::string{};
}

}  // namespace dynsig::cli
