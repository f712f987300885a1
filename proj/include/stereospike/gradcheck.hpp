#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stereospike::ad {

struct GradCheckCase {
  std::string name;       // "<op>/<argument>"
  std::string precision;  // "f32" or "f64"
  int instances = 0;
  double worst_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return worst_rel_error <= tolerance; }
};

struct GradCheckOptions {
  int instances = 20;
  double tol_f32 = 1e-3;
  double tol_f64 = 1e-5;
  double eps_f32 = 1e-2;
  double eps_f64 = 1e-6;
};

// Checks every smooth primitive, and a composed strided-conv block, against
// central differences on random instances in both precisions. Scalar outputs
// are formed by contracting with a fixed random tensor.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace stereospike::ad
