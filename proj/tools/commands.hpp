#pragma once

#include <iosfwd>

#include "cli_common.hpp"

namespace omnical::cli {

// Runs one experiment command and writes its artifacts under cfg.out.
// Returns 0 when every bound check holds and 2 otherwise; errors propagate as exceptions.
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);

// Feature-dimension cap for the V-forecaster's coordinate count.
inline constexpr std::size_t kMaxVCoordinates = 200000;

}  // namespace omnical::cli
