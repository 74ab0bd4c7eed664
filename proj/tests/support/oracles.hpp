#pragma once

// Independent reference computations used only by the test suites. None of
// these call into the code paths they check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "conceal/nn.hpp"

namespace conceal::oracle {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
};

/// Central finite differences of the single-sample MSE loss, computed from
/// forward passes only, compared against `analytic`. Elements where both
/// gradients are below `floor` are skipped. `stride` > 1 checks every stride-th
/// element of each block (for very large layers).
inline GradCheckResult finite_difference_check(const nn::NetworkSpec& spec,
                                               const nn::ModelParams& params,
                                               std::span<const double> x,
                                               std::span<const double> target,
                                               const nn::ModelParams& analytic,
                                               double h = 1e-5, double floor = 1e-6,
                                               std::size_t stride = 1) {
    GradCheckResult r;
    nn::ModelParams probe = params;
    auto loss = [&] {
        const auto out = nn::forward(spec, probe, x);
        double acc = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) acc += (out[i] - target[i]) * (out[i] - target[i]);
        return acc / static_cast<double>(out.size());
    };
    for (std::size_t b = 0; b < probe.blocks.size(); ++b) {
        for (std::size_t i = 0; i < probe.blocks[b].data.size(); i += stride) {
            double& p = probe.blocks[b].data[i];
            const double saved = p;
            p = saved + h;
            const double up = loss();
            p = saved - h;
            const double down = loss();
            p = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double exact = analytic.blocks[b].data[i];
            if (std::abs(exact) <= floor && std::abs(numeric) <= floor) continue;
            const double denom = std::max(std::abs(exact), std::abs(numeric));
            r.max_rel_error = std::max(r.max_rel_error, std::abs(exact - numeric) / denom);
            ++r.checked;
        }
    }
    return r;
}

/// Sort-and-interpolate percentile with rank q * (N - 1).
inline double brute_percentile(std::vector<double> values, double q) {
    std::sort(values.begin(), values.end());
    const double rank = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = static_cast<std::size_t>(std::ceil(rank));
    return values[lo] + (rank - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

/// Trailing mean over max(0, t - w + 1)..t by direct summation.
inline std::vector<double> brute_trailing_mean(std::span<const double> v, std::size_t w) {
    std::vector<double> out(v.size());
    for (std::size_t t = 0; t < v.size(); ++t) {
        const std::size_t begin = t + 1 >= w ? t + 1 - w : 0;
        double acc = 0.0;
        for (std::size_t s = begin; s <= t; ++s) acc += v[s];
        out[t] = acc / static_cast<double>(t - begin + 1);
    }
    return out;
}

}  // namespace conceal::oracle
