#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "helioaim/config.hpp"
#include "helioaim/error.hpp"
#include "helioaim/milp.hpp"

namespace helioaim {

enum ExitCode : int { kExitOk = 0, kExitRuntime = 1, kExitConfig = 2, kExitDomain = 3, kExitSolver = 4 };

int exit_code(ErrorKind kind) noexcept;

/// Backend named by the config; HELIO_SOLVER_PATH overrides solver.path.
/// Throws Error(Backend) when the external executable cannot be found.
std::unique_ptr<SolverBackend> make_backend(const SolverConfig& config);

/// Percentage change of a relative to b, rounded to one decimal.
double percent_delta(double a, double b);

/// Entry point of the helioaim tool; args exclude the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace helioaim
