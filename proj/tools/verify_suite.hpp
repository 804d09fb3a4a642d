#pragma once

#include <filesystem>
#include <iosfwd>

namespace omnical::cli {

// Runs every acceptance property suite. Files under out are a pure function of the code;
// timings go to log only. Returns 0 when every criterion holds and 2 otherwise.
int run_verify(const std::filesystem::path& out, std::ostream& log);

}  // namespace omnical::cli
