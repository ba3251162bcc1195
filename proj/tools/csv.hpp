#pragma once

#include <optional>
#include <string>
#include <vector>

namespace dynsig::cli {

// Fixed-format table: numbers go through format_number, so output does not
// depend on the locale and is identical across runs.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  void add_row(std::vector<std::string> row);
  const std::vector<std::string>& header() const { return header_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

  std::string str() const;
  void write(const std::string& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string format_number(double x);
std::string format_optional(const std::optional<double>& x);

}  // namespace dynsig::cli
