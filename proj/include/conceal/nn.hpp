#pragma once

// Small deterministic neural-network engine: dense autoencoder, single-layer
// LSTM and 1D-CNN predictors, trained with MSE + ADAM.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace conceal::nn {

enum class Architecture : std::uint32_t {
    dense_autoencoder = 0,
    lstm_predictor = 1,
    cnn_predictor = 2,
};

enum class Activation : std::uint32_t { sigmoid = 0, linear = 1, tanh = 2 };

std::string_view to_string(Architecture kind);
std::string_view to_string(Activation act);
Architecture parse_architecture(std::string_view name);
Activation parse_activation(std::string_view name);

/// Layer layout per architecture:
///  - dense_autoencoder: `widths` are the hidden layers; `activations` has one
///    entry per hidden layer plus one for the output layer.
///  - lstm_predictor: `widths` = {hidden units}; `activations` = {output dense}.
///  - cnn_predictor: `widths` = conv filter counts; `activations` has one entry
///    per conv layer plus one for the output dense layer.
struct NetworkSpec {
    Architecture kind = Architecture::dense_autoencoder;
    std::vector<std::size_t> widths;
    std::size_t steps = 1;     // timesteps per sample (m + 1)
    std::size_t channels = 0;  // n
    std::vector<Activation> activations;
    double dropout = 0.0;  // CNN only, applied after flatten
    std::uint64_t seed = 0;

    std::size_t input_size() const { return steps * channels; }
    std::size_t output_size() const { return channels; }

    /// Throws invalid-spec on any broken invariant.
    void validate() const;

    bool operator==(const NetworkSpec&) const = default;
};

inline constexpr std::size_t kCnnKernel = 2;

/// Defaults used by the detectors and the generator.
NetworkSpec autoencoder_spec(std::size_t channels, std::vector<std::size_t> hidden,
                             Activation hidden_act, Activation output_act,
                             std::uint64_t seed);
NetworkSpec lstm_spec(std::size_t channels, std::size_t steps, std::uint64_t seed);
NetworkSpec cnn_spec(std::size_t channels, std::size_t steps, std::uint64_t seed,
                     std::vector<std::size_t> filters = {64, 128, 256},
                     double dropout = 0.2);

/// Width of the CNN's flattened layer (the dropout mask length).
std::size_t cnn_flat_size(const NetworkSpec& spec);

/// Row-major dense block.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::size_t size() const { return data.size(); }
    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool operator==(const Tensor&) const = default;
};

/// Weights and biases in layer order.
struct ModelParams {
    std::vector<Tensor> blocks;

    std::size_t parameter_count() const;
    bool same_shape(const ModelParams& other) const;
    void fill(double value);
    bool all_finite() const;

    bool operator==(const ModelParams&) const = default;
};

/// Uniform Glorot/Xavier init, L = sqrt(6 / (fan_in + fan_out)); returns a
/// fan_out x fan_in matrix.
Tensor glorot_init(std::size_t fan_in, std::size_t fan_out, std::uint64_t seed);
Tensor glorot_init(std::size_t rows, std::size_t cols, std::size_t fan_in,
                   std::size_t fan_out, std::uint64_t seed);

/// Allocates parameters for `spec` (zero-filled).
ModelParams zero_params(const NetworkSpec& spec);
/// Glorot weights, zero biases (LSTM forget-gate bias 1), seeded by spec.seed.
ModelParams init_params(const NetworkSpec& spec);

/// Scratch buffers reused across forward/backward calls. One per thread.
struct Workspace {
    std::vector<std::vector<double>> a;   // layer outputs / per-step states
    std::vector<std::vector<double>> b;   // auxiliary per-step buffers
    std::vector<std::size_t> argmax;      // CNN pooling routes
    std::vector<std::size_t> pool_offsets;
    std::vector<double> delta;
    std::vector<double> delta_prev;
    std::vector<double> output;
};

/// Forward pass. `x` holds steps x channels values, row-major by timestep.
/// The returned view aliases `ws.output`.
std::span<const double> forward(const NetworkSpec& spec, const ModelParams& params,
                                std::span<const double> x, Workspace& ws);
std::vector<double> forward(const NetworkSpec& spec, const ModelParams& params,
                            std::span<const double> x);

/// Mean squared difference.
double mse(std::span<const double> a, std::span<const double> b);

/// Accumulates d(mse(forward(x), target))/d(params) into `grads` and returns the
/// loss. `dropout_mask`, if non-empty, is the CNN flatten-layer mask (already
/// scaled by 1/(1-p)).
double accumulate_gradients(const NetworkSpec& spec, const ModelParams& params,
                            std::span<const double> x, std::span<const double> target,
                            ModelParams& grads, Workspace& ws,
                            std::span<const double> dropout_mask = {});

/// Fresh gradient of the single-sample loss.
ModelParams backward(const NetworkSpec& spec, const ModelParams& params,
                     std::span<const double> x, std::span<const double> target);

struct AdamState {
    static constexpr double beta1 = 0.9;
    static constexpr double beta2 = 0.999;
    static constexpr double eps = 1e-8;

    ModelParams m;
    ModelParams v;
    std::uint64_t step = 0;

    static AdamState zeros_like(const ModelParams& params);
};

/// One bias-corrected ADAM update. Non-finite gradients throw a numeric error
/// before anything is modified.
void adam_step(ModelParams& params, AdamState& state, const ModelParams& grads, double lr);

struct TrainConfig {
    double learning_rate = 0.001;
    double train_fraction = 2.0 / 3.0;
    std::size_t early_stopping_patience = 10;
    std::size_t plateau_patience = 5;
    double plateau_factor = 0.5;
    double min_learning_rate = 1e-6;
    std::size_t max_epochs = 500;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Inputs (count x input_size) and targets (count x target_size), row-major.
struct SampleSet {
    std::size_t input_size = 0;
    std::size_t target_size = 0;
    std::vector<double> inputs;
    std::vector<double> targets;

    std::size_t count() const { return input_size == 0 ? 0 : inputs.size() / input_size; }
    std::span<const double> input(std::size_t i) const {
        return {inputs.data() + i * input_size, input_size};
    }
    std::span<const double> target(std::size_t i) const {
        return {targets.data() + i * target_size, target_size};
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double learning_rate = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    bool stopped_early = false;
};

struct TrainResult {
    ModelParams params;
    TrainLog log;
};

/// Mini-batch ADAM on a contiguous train/validation split. Returns the
/// snapshot with the lowest validation loss.
TrainResult train(const NetworkSpec& spec, const SampleSet& data, const TrainConfig& cfg);

/// Mean per-sample loss over a range of samples.
double evaluate_loss(const NetworkSpec& spec, const ModelParams& params, const SampleSet& data,
                     std::size_t begin, std::size_t end);

}  // namespace conceal::nn
