#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "icefuse/numkernel/gradcheck.hpp"

namespace icefuse::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kDataError = 2, kNumericalError = 3 };

struct ModelGradCheck {
  nk::GradCheckReport report;
  std::string worst_name;
};

/// Central-difference check of every weight of a tiny model (chip 16, hidden 8,
/// 2 heads) with weights large enough to keep all gradients well away from zero.
ModelGradCheck tiny_model_gradcheck(std::uint64_t seed = 100, double tolerance = 1e-4);

/// Runs one command line (without the program name) and returns its exit code.
/// Subcommands: gen, train, infer, fuse, eval, gradcheck.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace icefuse::cli
