#pragma once

#include <span>

#include "conceal/nn.hpp"

namespace conceal::kernels {

/// Scores `count` samples laid out back to back in `inputs`. For each sample,
/// residual = target - output and epsilon = mean squared residual. `residuals`
/// may be empty when only epsilon is needed. Runs across OpenMP threads; each
/// sample is computed exactly as the serial version computes it.
void score_batch(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                 std::span<const double> inputs, std::span<const double> targets,
                 std::span<double> epsilon, std::span<double> residuals = {});

namespace serial {

/// Single-threaded reference for kernels::score_batch.
void score_batch(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                 std::span<const double> inputs, std::span<const double> targets,
                 std::span<double> epsilon, std::span<double> residuals = {});

}  // namespace serial

}  // namespace conceal::kernels
