#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sfpp/gradcheck.hpp"

namespace sfpp {

struct GradcheckEntry {
  std::string op;
  int instances = 0;
  int failures = 0;
  double max_rel_err = 0;
  double seconds = 0;
};

struct GradcheckSuite {
  std::vector<GradcheckEntry> entries;
  double tolerance = 1e-4;

  bool pass() const;
  int min_instances() const;
  double max_rel_err() const;
  // One line per op, then a verdict line.
  std::string report() const;
};

// Finite-difference checks (64-bit, central differences) of every
// differentiable op, each loss, and the full objective on random instances.
GradcheckSuite run_gradcheck_suite(int instances = 20, std::uint64_t seed = 1, double tol = 1e-4);

}  // namespace sfpp
