#pragma once

#include <string>
#include <vector>

#include "proxnn/autodiff.hpp"

namespace proxnn {

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long long t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One bias-corrected Adam update of `params` in place. Moments are sized on first use.
/// A non-finite gradient raises TrainingError naming the segment it belongs to.
void adam_step(AdamState& state, const GradPack& grads, std::vector<double>& params,
               const std::vector<ParamSegment>& layout = {});

/// Sidecar blob holding m, v and the optimizer scalars (weights container format).
std::string serialize_adam(const AdamState& state);
AdamState deserialize_adam(const std::string& bytes);

}  // namespace proxnn
