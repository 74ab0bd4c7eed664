#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "conceal/nn.hpp"

namespace conceal::data {

enum class ChannelKind { continuous, categorical };

struct Channel {
    std::string name;
    ChannelKind kind = ChannelKind::continuous;
    std::vector<double> allowed;  // categorical only, sorted ascending
    std::optional<std::pair<double, double>> range;
    std::string plc;
    std::optional<std::size_t> depends_on;  // governing categorical channel

    bool categorical() const { return kind == ChannelKind::categorical; }
};

struct SensorSchema {
    std::vector<Channel> channels;
    double sampling_interval_s = 1.0;

    std::size_t size() const { return channels.size(); }
    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;
    std::vector<std::string> plcs() const;
    std::vector<std::size_t> channels_of(std::string_view plc) const;

    /// Unique names, non-empty categorical sets, dependency targets categorical,
    /// every channel owned by a PLC.
    void validate() const;

    SensorSchema slice(std::span<const std::size_t> indices) const;
};

SensorSchema schema_from_json(const nlohmann::json& j);
nlohmann::json schema_to_json(const SensorSchema& schema);
SensorSchema load_schema(const std::filesystem::path& path);
void save_schema(const SensorSchema& schema, const std::filesystem::path& path);

enum class Label : std::uint8_t { safe = 0, under_attack = 1 };

struct TimeSeries {
    std::vector<std::string> timestamps;
    std::size_t channels = 0;
    std::vector<double> values;  // rows x channels, row-major
    std::vector<Label> labels;   // empty when unlabeled
    double interval_s = 1.0;

    std::size_t rows() const { return channels == 0 ? 0 : values.size() / channels; }
    bool labeled() const { return !labels.empty(); }
    bool has_attacks() const;
    std::span<const double> row(std::size_t t) const {
        return {values.data() + t * channels, channels};
    }
    std::span<double> row(std::size_t t) { return {values.data() + t * channels, channels}; }
    double at(std::size_t t, std::size_t c) const { return values[t * channels + c]; }
    double& at(std::size_t t, std::size_t c) { return values[t * channels + c]; }

    /// Rows [begin, end).
    TimeSeries slice(std::size_t begin, std::size_t end) const;
    TimeSeries select_rows(std::span<const std::size_t> rows) const;
    TimeSeries select_channels(std::span<const std::size_t> channels) const;
    void append(const TimeSeries& other);
    void validate() const;
};

struct LoadWarnings {
    std::size_t unlabeled_rows = 0;  // ATT_FLAG == -999
};

TimeSeries load_csv(const std::filesystem::path& path, const SensorSchema& schema,
                    LoadWarnings* warnings = nullptr);
TimeSeries parse_csv(std::istream& in, const SensorSchema& schema, LoadWarnings* warnings = nullptr);
void save_csv(const TimeSeries& series, const SensorSchema& schema,
              const std::filesystem::path& path);
void write_csv(std::ostream& out, const TimeSeries& series, const SensorSchema& schema);

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

/// Per-channel min-max scaling to [0, 1]; constant channels map to 0.5.
struct Normalizer {
    std::vector<double> min;
    std::vector<double> max;

    std::size_t channels() const { return min.size(); }
    bool is_constant(std::size_t c) const { return !(max[c] > min[c]); }
    double normalize(std::size_t c, double v) const;
    double denormalize(std::size_t c, double v) const;
    void normalize_row(std::span<const double> in, std::span<double> out) const;
    TimeSeries normalize(const TimeSeries& series) const;
    Normalizer slice(std::span<const std::size_t> indices) const;

    bool operator==(const Normalizer&) const = default;
};

Normalizer fit_normalizer(const TimeSeries& train);

/// Windows of m + 1 consecutive rows; sample j covers rows j..j+m and targets
/// row j+m.
nn::SampleSet window(const TimeSeries& series, std::size_t m);

/// Window ending at row t, with rows before the start replaced by row 0.
void window_at(const TimeSeries& series, std::size_t t, std::size_t m, std::span<double> out);

/// Contiguous temporal split; the earlier part trains.
std::pair<TimeSeries, TimeSeries> split_train_val(const TimeSeries& series, double ratio);

enum class SampleMode { prefix, random };
SampleMode parse_sample_mode(std::string_view name);

TimeSeries subsample_fraction(const TimeSeries& series, double p, SampleMode mode,
                              std::uint64_t seed);

}  // namespace conceal::data
