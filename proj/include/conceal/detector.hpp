#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

#include "conceal/data.hpp"
#include "conceal/nn.hpp"

namespace conceal::detector {

struct DetectorModel {
    nn::NetworkSpec spec;
    nn::ModelParams params;
    data::Normalizer normalizer;
    double threshold = 0.0;
    std::size_t window = 1;

    std::size_t channels() const { return spec.channels; }
    /// Rows of history preceding s_t in each network input.
    std::size_t lookback() const { return spec.steps - 1; }
    void validate() const;
};

struct Reconstruction {
    std::vector<double> residual;  // s_t - o, per channel
    double epsilon = 0.0;
};

/// `normalized_window` holds lookback() + 1 normalized rows ending at s_t.
Reconstruction reconstruction_error(const DetectorModel& model,
                                    std::span<const double> normalized_window);

/// Linear interpolation between closest ranks, rank = q * (N - 1).
double percentile(std::span<const double> values, double q);
double calibrate_threshold(std::span<const double> errors);

/// Mean over max(0, t - w + 1)..t for every t, summed directly per step.
std::vector<double> trailing_mean(std::span<const double> values, std::size_t w);

std::vector<data::Label> classify(std::span<const double> epsilon, double threshold, std::size_t w);

struct DetectionTrace {
    std::size_t channels = 0;
    std::vector<double> epsilon;
    std::vector<double> smoothed;
    std::vector<data::Label> labels;
    std::vector<double> residuals;  // steps x channels

    std::size_t steps() const { return epsilon.size(); }
};

DetectionTrace detect_series(const DetectorModel& model, const data::TimeSeries& series);

void write_trace_csv(std::ostream& out, const DetectionTrace& trace,
                     std::span<const std::string> timestamps, double threshold,
                     std::span<const std::string> channel_names = {});

/// Network shape used when a detector is built without an explicit spec.
nn::NetworkSpec default_network(nn::Architecture kind, std::size_t channels, std::uint64_t seed);

/// Trains on attack-free data. Normalization is fit on all of `normal`, the
/// network trains on its windows, and the threshold is the Q99.5 of epsilon
/// over those same windows.
DetectorModel build_detector(const nn::NetworkSpec& spec, const data::TimeSeries& normal,
                             const nn::TrainConfig& cfg, std::size_t window,
                             nn::TrainLog* log = nullptr);

/// Causal one-row-at-a-time detector. Produces the same values as
/// detect_series over the rows pushed so far.
class StreamingDetector {
public:
    struct Step {
        Reconstruction error;
        double smoothed = 0.0;
        data::Label label = data::Label::safe;
    };

    explicit StreamingDetector(const DetectorModel& model);

    Step push(std::span<const double> raw_row);
    std::size_t steps() const { return steps_; }

private:
    const DetectorModel& model_;
    std::deque<std::vector<double>> history_;  // normalized rows, newest last
    std::deque<double> recent_eps_;
    std::vector<double> input_;
    std::size_t steps_ = 0;
};

}  // namespace conceal::detector
