#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dynsig::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_internal = 1,
  exit_config = 2,
  exit_convergence = 3,
  exit_verification = 4,
};

// Environment variable naming the default directory for CSV output.
inline constexpr const char* output_dir_variable = "DYNSIG_OUTPUT_DIR";

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

// Quick invariant checks across all modules. Prints one line per check and
// returns the number of failures. Rows are (check, passed, value).
struct SelftestRow {
  std::string name;
  bool passed = false;
  double value = 0.0;
};
std::vector<SelftestRow> selftest(std::ostream& out);

}  // namespace dynsig::cli
