#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "energylens/baselines.hpp"
#include "energylens/dataset.hpp"
#include "energylens/evaluation.hpp"

namespace energylens::cli {

/// Exit codes: 0 success, 1 runtime error, 2 usage error.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Method names accepted by `fit` and `evaluate`.
const std::vector<std::string>& method_names();

struct MethodOptions {
  std::uint64_t seed = 0;
  FitOptions fit;
};

/// Fits `method` on `train` and returns a predictor. The formula-based
/// methods (energylens, proxy, proxy-mean) are fitted once per context.
Predictor fit_method(const std::string& method, const Dataset& train, const MethodOptions& options);

}  // namespace energylens::cli
