#pragma once

#include <string>
#include <vector>

namespace llmregress::cli {

// Full command-line entry point; returns the process exit code.
// 0 ok/all-pass, 1 suite FAIL, 2 INCONCLUSIVE without FAIL, 3 partial run,
// 4 usage or data error, 5 provider error.
int cli_main(const std::vector<std::string>& args);

}  // namespace llmregress::cli
