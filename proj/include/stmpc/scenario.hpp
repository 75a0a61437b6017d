#pragma once

#include "stmpc/netsim.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace stmpc {

/// Parse or validation failure. `line`/`column` are 1-based and 0 when the
/// error is not tied to a position (e.g. a missing key).
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(const std::string& msg, std::string source, int line, int column);
  const std::string& source() const { return source_; }
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  std::string source_;
  int line_;
  int column_;
};

/// Raw `section.key -> value` entries of a scenario file, with positions.
struct ScenarioEntries {
  struct Entry {
    std::string value;
    int line = 0;
    int column = 0;  // column of the value
  };
  std::string source;
  std::map<std::string, Entry> values;
};

ScenarioEntries read_scenario_entries(const std::string& text, const std::string& source);

/// Applies `section.key=value`. Unknown keys are rejected.
void apply_override(ScenarioEntries& entries, const std::string& assignment);

Scenario build_scenario(const ScenarioEntries& entries);

Scenario parse_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
Scenario parse_scenario_text(const std::string& text, const std::vector<std::string>& overrides = {},
                             const std::string& source = "<string>");

/// Every key the format accepts.
const std::vector<std::string>& known_scenario_keys();

}  // namespace stmpc
