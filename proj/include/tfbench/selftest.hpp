#pragma once

// Quick in-binary checks of gradients and numerical oracles, for verifying a
// build without the test suite.

#include <string>
#include <vector>

namespace tfbench {

struct SelfCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<SelfCheck> run_selftest();

}  // namespace tfbench
