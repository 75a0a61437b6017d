#pragma once

#include "stmpc/netsim.hpp"

#include <filesystem>
#include <string>

#include <json.hpp>

namespace stmpc {

/// %.17g, so a value written and read back is bit-identical.
std::string format_double(double v);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

std::string transmissions_csv(const ClosedLoopLog& log);
std::string trajectory_csv(const ClosedLoopLog& log);
nlohmann::json summary_json(const Summary& s);

/// transmissions.csv, trajectory.csv and summary.json under `dir`.
void write_run_artifacts(const std::filesystem::path& dir, const ClosedLoopLog& log, const Summary& s);

}  // namespace stmpc
