#pragma once

#include <functional>
#include <string>
#include <vector>

// User-runnable property suites behind `ddn check`. Each check asserts one
// documented invariant of a module and reports pass/fail with a short detail
// string.

namespace ddn {
namespace checks {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<std::string> suite_names();

// Runs one suite ("all" aggregates every suite); unknown names are errors.
std::vector<CheckResult> run_suite(const std::string& suite);

}  // namespace checks
}  // namespace ddn
