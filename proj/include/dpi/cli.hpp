#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dpi {

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

/// Entry point behind the `dpi` executable. args excludes the program name.
///
///   dpi simulate      [--config f] [--seed n] [--out dir]
///   dpi estimate      --input dir [--config f] [--iters n] [--out dir]
///   dpi observability [--case 1..4 | --input dir] [--config f] [--tol x] [--out dir]
///   dpi montecarlo    [--config f] [--runs n] [--seed n] [--iters n] [--out dir]
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dpi
