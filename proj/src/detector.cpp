#include "conceal/detector.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "conceal/error.hpp"
#include "conceal/kernels.hpp"

namespace conceal::detector {

void DetectorModel::validate() const {
    spec.validate();
    require(params.same_shape(init_params(spec)), ErrorKind::invalid_spec,
            "detector parameters do not match the network spec");
    require(params.all_finite(), ErrorKind::numeric, "detector parameters are not finite");
    require(spec.output_size() == spec.channels, ErrorKind::invalid_spec,
            "detector must output one value per channel");
    require(normalizer.channels() == spec.channels, ErrorKind::dimension,
            "normalization stats do not cover every channel");
    for (std::size_t c = 0; c < normalizer.channels(); ++c)
        require(normalizer.min[c] <= normalizer.max[c], ErrorKind::invalid_spec,
                "normalization min exceeds max");
    require(std::isfinite(threshold) && threshold >= 0.0, ErrorKind::invalid_spec,
            "threshold must be finite and >= 0");
    require(window >= 1, ErrorKind::invalid_config, "detector window must be >= 1");
}

Reconstruction reconstruction_error(const DetectorModel& model,
                                    std::span<const double> normalized_window) {
    const std::size_t n = model.channels();
    require(normalized_window.size() == model.spec.input_size(), ErrorKind::dimension,
            "window has " + std::to_string(normalized_window.size()) + " values, detector expects " +
                std::to_string(model.spec.input_size()));
    Reconstruction r;
    r.residual.resize(n);
    double eps = 0.0;
    kernels::serial::score_batch(model.spec, model.params, normalized_window,
                                 normalized_window.subspan(model.lookback() * n, n),
                                 std::span<double>(&eps, 1), r.residual);
    r.epsilon = eps;
    return r;
}

double percentile(std::span<const double> values, double q) {
    require(!values.empty(), ErrorKind::invalid_input, "percentile of an empty list");
    require(q >= 0.0 && q <= 1.0, ErrorKind::invalid_input, "percentile level must lie in [0, 1]");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double rank = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double calibrate_threshold(std::span<const double> errors) { return percentile(errors, 0.995); }

std::vector<double> trailing_mean(std::span<const double> values, std::size_t w) {
    require(w >= 1, ErrorKind::invalid_config, "smoothing window must be >= 1");
    std::vector<double> out(values.size());
    for (std::size_t t = 0; t < values.size(); ++t) {
        const std::size_t begin = t + 1 >= w ? t + 1 - w : 0;
        double acc = 0.0;
        for (std::size_t s = begin; s <= t; ++s) acc += values[s];
        out[t] = acc / static_cast<double>(t - begin + 1);
    }
    return out;
}

std::vector<data::Label> classify(std::span<const double> epsilon, double threshold, std::size_t w) {
    require(w >= 1, ErrorKind::invalid_config, "smoothing window must be >= 1");
    require(!epsilon.empty(), ErrorKind::invalid_input, "classify needs a non-empty history");
    const auto smoothed = trailing_mean(epsilon, w);
    std::vector<data::Label> labels(smoothed.size());
    std::transform(smoothed.begin(), smoothed.end(), labels.begin(), [&](double v) {
        return v > threshold ? data::Label::under_attack : data::Label::safe;
    });
    return labels;
}

DetectionTrace detect_series(const DetectorModel& model, const data::TimeSeries& series) {
    const std::size_t n = model.channels();
    require(series.channels == n, ErrorKind::invalid_input,
            "series has " + std::to_string(series.channels) + " channels, detector expects " +
                std::to_string(n));
    require(series.rows() >= 1, ErrorKind::invalid_input, "cannot run detection on an empty series");
    const auto norm = model.normalizer.normalize(series);
    const std::size_t steps = series.rows();
    const std::size_t in = model.spec.input_size();
    const std::size_t m = model.lookback();

    std::vector<double> inputs(steps * in);
    for (std::size_t t = 0; t < steps; ++t)
        data::window_at(norm, t, m, std::span<double>(inputs).subspan(t * in, in));

    DetectionTrace trace;
    trace.channels = n;
    trace.epsilon.resize(steps);
    trace.residuals.resize(steps * n);
    kernels::score_batch(model.spec, model.params, inputs, norm.values, trace.epsilon,
                         trace.residuals);
    trace.smoothed = trailing_mean(trace.epsilon, model.window);
    trace.labels.resize(steps);
    for (std::size_t t = 0; t < steps; ++t)
        trace.labels[t] =
            trace.smoothed[t] > model.threshold ? data::Label::under_attack : data::Label::safe;
    return trace;
}

void write_trace_csv(std::ostream& out, const DetectionTrace& trace,
                     std::span<const std::string> timestamps, double threshold,
                     std::span<const std::string> channel_names) {
    require(timestamps.empty() || timestamps.size() == trace.steps(), ErrorKind::dimension,
            "timestamp count differs from trace length");
    require(channel_names.empty() || channel_names.size() == trace.channels, ErrorKind::dimension,
            "channel name count differs from trace width");
    out << "timestamp,epsilon,epsilon_smoothed,threshold,label";
    for (const auto& name : channel_names) out << ",err_" << name;
    out << '\n';
    for (std::size_t t = 0; t < trace.steps(); ++t) {
        out << (timestamps.empty() ? std::to_string(t) : timestamps[t]) << ','
            << data::format_double(trace.epsilon[t]) << ',' << data::format_double(trace.smoothed[t])
            << ',' << data::format_double(threshold) << ','
            << static_cast<int>(trace.labels[t]);
        if (!channel_names.empty())
            for (std::size_t c = 0; c < trace.channels; ++c)
                out << ',' << data::format_double(trace.residuals[t * trace.channels + c]);
        out << '\n';
    }
}

nn::NetworkSpec default_network(nn::Architecture kind, std::size_t channels, std::uint64_t seed) {
    switch (kind) {
        case nn::Architecture::dense_autoencoder: {
            const std::size_t inner = std::max<std::size_t>(1, (channels + 1) / 2);
            return nn::autoencoder_spec(channels, {channels, inner, channels}, nn::Activation::tanh,
                                        nn::Activation::sigmoid, seed);
        }
        case nn::Architecture::lstm_predictor:
            return nn::lstm_spec(channels, 8, seed);
        case nn::Architecture::cnn_predictor:
            return nn::cnn_spec(channels, 2, seed);
    }
    fail(ErrorKind::invalid_spec, "unknown architecture");
}

DetectorModel build_detector(const nn::NetworkSpec& spec, const data::TimeSeries& normal,
                             const nn::TrainConfig& cfg, std::size_t window, nn::TrainLog* log) {
    spec.validate();
    require(window >= 1, ErrorKind::invalid_config, "detector window must be >= 1");
    require(!normal.has_attacks(), ErrorKind::invalid_input,
            "detector training data contains attack labels");
    require(normal.channels == spec.channels, ErrorKind::dimension,
            "training data width does not match the network");
    DetectorModel model;
    model.spec = spec;
    model.window = window;
    model.normalizer = data::fit_normalizer(normal);
    const auto samples = data::window(model.normalizer.normalize(normal), spec.steps - 1);
    auto result = nn::train(spec, samples, cfg);
    model.params = std::move(result.params);
    if (log) *log = std::move(result.log);

    std::vector<double> eps(samples.count());
    kernels::score_batch(spec, model.params, samples.inputs, samples.targets, eps);
    model.threshold = calibrate_threshold(eps);
    return model;
}

StreamingDetector::StreamingDetector(const DetectorModel& model)
    : model_(model), input_(model.spec.input_size()) {
    model.validate();
}

StreamingDetector::Step StreamingDetector::push(std::span<const double> raw_row) {
    const std::size_t n = model_.channels();
    require(raw_row.size() == n, ErrorKind::dimension, "streamed row has the wrong width");
    std::vector<double> row(n);
    model_.normalizer.normalize_row(raw_row, row);
    history_.push_back(std::move(row));
    const std::size_t m = model_.lookback();
    if (history_.size() > m + 1) history_.pop_front();

    // Rows before the first one are padded with the first row.
    const std::size_t missing = m + 1 - history_.size();
    for (std::size_t k = 0; k <= m; ++k) {
        const auto& src = k < missing ? history_.front() : history_[k - missing];
        std::copy(src.begin(), src.end(), input_.begin() + static_cast<std::ptrdiff_t>(k * n));
    }

    Step step;
    step.error = reconstruction_error(model_, input_);
    recent_eps_.push_back(step.error.epsilon);
    if (recent_eps_.size() > model_.window) recent_eps_.pop_front();
    double acc = 0.0;
    for (double e : recent_eps_) acc += e;
    step.smoothed = acc / static_cast<double>(recent_eps_.size());
    step.label = step.smoothed > model_.threshold ? data::Label::under_attack : data::Label::safe;
    ++steps_;
    return step;
}

}  // namespace conceal::detector
