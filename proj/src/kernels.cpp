#include "conceal/kernels.hpp"

#include "conceal/error.hpp"

namespace conceal::kernels {

namespace {

std::size_t check_batch(const nn::NetworkSpec& spec, std::span<const double> inputs,
                        std::span<const double> targets, std::span<double> epsilon,
                        std::span<double> residuals) {
    const std::size_t in = spec.input_size();
    const std::size_t out = spec.output_size();
    require(inputs.size() % in == 0, ErrorKind::dimension, "batch input is not a whole number of samples");
    const std::size_t count = inputs.size() / in;
    require(targets.size() == count * out, ErrorKind::dimension, "batch targets do not match inputs");
    require(epsilon.size() == count, ErrorKind::dimension, "epsilon buffer has the wrong size");
    require(residuals.empty() || residuals.size() == count * out, ErrorKind::dimension,
            "residual buffer has the wrong size");
    return count;
}

void score_one(const nn::NetworkSpec& spec, const nn::ModelParams& params,
               std::span<const double> input, std::span<const double> target, double& epsilon,
               double* residual, nn::Workspace& ws) {
    const auto output = nn::forward(spec, params, input, ws);
    double acc = 0.0;
    for (std::size_t c = 0; c < output.size(); ++c) {
        const double r = target[c] - output[c];
        if (residual) residual[c] = r;
        acc += r * r;
    }
    epsilon = acc / static_cast<double>(output.size());
}

}  // namespace

void score_batch(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                 std::span<const double> inputs, std::span<const double> targets,
                 std::span<double> epsilon, std::span<double> residuals) {
    const std::size_t count = check_batch(spec, inputs, targets, epsilon, residuals);
    const std::size_t in = spec.input_size();
    const std::size_t out = spec.output_size();
    const auto n = static_cast<std::ptrdiff_t>(count);
#pragma omp parallel if (count > 64)
    {
        nn::Workspace ws;
#pragma omp for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            const auto k = static_cast<std::size_t>(i);
            score_one(spec, params, inputs.subspan(k * in, in), targets.subspan(k * out, out),
                      epsilon[k], residuals.empty() ? nullptr : residuals.data() + k * out, ws);
        }
    }
}

namespace serial {

void score_batch(const nn::NetworkSpec& spec, const nn::ModelParams& params,
                 std::span<const double> inputs, std::span<const double> targets,
                 std::span<double> epsilon, std::span<double> residuals) {
    const std::size_t count = check_batch(spec, inputs, targets, epsilon, residuals);
    const std::size_t in = spec.input_size();
    const std::size_t out = spec.output_size();
    nn::Workspace ws;
    for (std::size_t k = 0; k < count; ++k)
        score_one(spec, params, inputs.subspan(k * in, in), targets.subspan(k * out, out),
                  epsilon[k], residuals.empty() ? nullptr : residuals.data() + k * out, ws);
}

}  // namespace serial

}  // namespace conceal::kernels
