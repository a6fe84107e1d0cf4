#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

namespace kam::cli {

struct PropertyResult {
  std::string name;
  bool passed = false;
  double value = 0.0;  // measured quantity
  double bound = 0.0;  // pass threshold
  std::string detail;
};

struct VerifyReport {
  std::vector<PropertyResult> properties;

  bool passed() const;
  std::vector<std::string> failed() const;
  nlohmann::json to_json() const;
};

/// Runs the property suites of every module with fixed seeds. `fault`
/// selects a test hook: "none", or "bracket_sign", which flips the sign of
/// the second half of the bracket used by the algebra checks.
VerifyReport run_verify(const std::string& fault = "none");

}  // namespace kam::cli
