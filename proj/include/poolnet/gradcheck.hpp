#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace poolnet {

struct GradcheckOptions {
  std::size_t trials = 20;
  double h = 1e-5;
  std::uint64_t seed = 1;
  double layer_tolerance = 1e-4;
  double network_tolerance = 1e-3;
};

struct GradcheckRow {
  std::string name;
  std::size_t trials = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// |a - b| / max(|a|, |b|, floor). The checks use floor = 1e-3 of the
/// largest finite-difference magnitude in the trial (at least 1e-8), so
/// exact zeros are compared against the trial's gradient scale.
double gradcheck_rel_error(double analytic, double numeric, double floor);

/// conv, fc, batchnorm, softmax_ce, stack:<stack> for each checked pooling
/// stack, and network.
std::vector<std::string> gradcheck_names();

/// Central-difference checks in double precision. `only` restricts the run
/// to the named rows; unknown names throw std::invalid_argument.
std::vector<GradcheckRow> run_gradcheck(const GradcheckOptions &opt, const std::vector<std::string> &only = {});

nlohmann::json to_json(const GradcheckRow &row);

} // namespace poolnet
