#pragma once

namespace riskswitch {

/// Full command-line front end; returns the process exit code.
/// Subcommands: validate | solve | oracle | sweep | residual.
/// Exit codes: 0 success, 1 validation or runtime failure, 2 config parse
/// error, 3 sweep monotonicity violation.
int cli_main(int argc, const char* const* argv);

}  // namespace riskswitch
