#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "config.hpp"

namespace tfpatch::cli {

/// 0 success, 2 configuration or missing file, 3 malformed data,
/// 4 numeric failure (degenerate, undefined fit, domain).
int exit_code(Errc code) noexcept;

int cmd_generate(const RunConfig& config, std::ostream& out);
int cmd_rank(const RunConfig& config, std::ostream& out);
int cmd_patch(const RunConfig& config, std::ostream& out);
int cmd_attn(const RunConfig& config, std::ostream& out);
int cmd_analyze(const RunConfig& config, std::ostream& out);
int cmd_fit(const RunConfig& config, std::ostream& out);
int cmd_export_fixture(const RunConfig& config, std::ostream& out);

/// Full front end: parses `args` (without the program name), dispatches, and
/// reports errors on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tfpatch::cli
