#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mse2d {

struct GradcheckCase {
  std::string label;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Runs the analytic-vs-finite-difference check for every objective
// configuration (full, mse, v1, v2, v2+score, v2+full-dim, v2+fix-doc) on a
// small random encoder at 64-bit precision, n_seeds times each. The worst
// error per configuration is reported against `tolerance`.
std::vector<GradcheckCase> run_gradcheck_suite(int n_seeds = 3, double tolerance = 1e-4,
                                               std::ostream* log = nullptr);

}  // namespace mse2d
