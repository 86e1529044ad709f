#ifndef DERM_GRADCHECK_SUITE_HPP
#define DERM_GRADCHECK_SUITE_HPP

#include <string>
#include <vector>

#include "derm/gradcheck.hpp"

namespace derm {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

// Central-difference checks in 64-bit for every differentiable layer kind
// plus both full models at tiny sizes.
std::vector<GradCheckCase> run_gradcheck_suite();

inline constexpr double kGradCheckTolerance = 1e-5;

}  // namespace derm

#endif
