#include <doctest.h>

#include <set>

#include "derm/gradcheck_suite.hpp"

using namespace derm;

TEST_CASE("gradient suite covers all layer kinds and passes the tolerance") {
  const auto cases = run_gradcheck_suite();
  std::set<std::string> names;
  for (const auto& c : cases) {
    INFO(c.name, " rel err ", c.report.max_rel_err, " at ", c.report.worst_param);
    CHECK(c.report.max_rel_err < kGradCheckTolerance);
    names.insert(c.name);
  }
  for (const char* required :
       {"conv2d", "linear", "attention", "encoder_block", "positional_encoding_add", "perceptron_fusion",
        "kan_spline_layer", "weighted_bce", "sequential_model", "parallel_model_perceptron",
        "parallel_model_spline"})
    CHECK(names.count(required) == 1);
  CHECK(names.size() >= 8);
}
