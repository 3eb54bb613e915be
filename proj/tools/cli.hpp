#pragma once

#include <iosfwd>

#include "rdas/harness.hpp"
#include "run_config.hpp"

namespace rdas::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Load the KB and question splits named by `config`: either a synthetic
/// spec (generated under `seed`) or kb + qa files. Without an explicit dev
/// split a seeded `dev_fraction` of the training questions is held out.
harness::Dataset load_dataset(const RunConfig& config);

/// Entry point behind the `rdas` executable.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rdas::cli
