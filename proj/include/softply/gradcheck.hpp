#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "softply/tinynn.hpp"

namespace softply::nn {

// One small network per layer type; the layer under test feeds a dense head
// so the output is 5-wide.
struct GradcheckCase {
    std::string layer;
    NetSpec spec;
};

std::vector<GradcheckCase> gradcheck_cases();

struct GradcheckResult {
    std::string layer;
    int instances = 0;
    long checked = 0;  // coordinates compared
    long skipped = 0;  // coordinates whose +-eps probes cross a ReLU / max-pool switch
    double max_rel_error = 0.0;
};

// Central finite differences in double precision on random instances,
// covering every parameter and input coordinate.
std::vector<GradcheckResult> run_gradcheck(int instances, std::uint64_t seed, double eps = 1e-3);

}  // namespace softply::nn
