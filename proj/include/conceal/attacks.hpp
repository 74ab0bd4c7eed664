#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "conceal/data.hpp"
#include "conceal/detector.hpp"
#include "conceal/nn.hpp"

namespace conceal::attacks {

enum class ConstraintMode { unconstrained, partial, full, topology };

std::string_view to_string(ConstraintMode mode);
ConstraintMode parse_constraint_mode(std::string_view name);

/// Channels the attacker observes and may overwrite, plus the share of
/// eavesdropped normal data available to it. Sets are ascending.
struct AttackConstraint {
    ConstraintMode mode = ConstraintMode::unconstrained;
    std::vector<std::size_t> read_set;
    std::vector<std::size_t> write_set;
    double data_fraction = 1.0;

    void validate(std::size_t channels) const;
    bool can_write(std::size_t channel) const;

    static AttackConstraint unconstrained(std::size_t channels, double data_fraction = 1.0);
    /// Reads every channel, writes `write`.
    static AttackConstraint partial(std::size_t channels, std::vector<std::size_t> write,
                                    double data_fraction = 1.0);
    /// Reads and writes exactly `channels`.
    static AttackConstraint full(std::vector<std::size_t> channels, double data_fraction = 1.0);
};

/// Write set = the PLC's channels. With `full_reach` the attacker also reads
/// only those channels; otherwise it reads everything.
AttackConstraint topology_features(const data::SensorSchema& schema, std::string_view plc,
                                   bool full_reach, double data_fraction = 1.0);

/// The k channels with the highest counts, ties to the lower index, ascending.
std::vector<std::size_t> select_best_case_features(std::span<const std::size_t> change_counts,
                                                   std::size_t k);

struct ChangeRecord {
    std::size_t step = 0;
    std::size_t channel = 0;
    double old_value = 0.0;
    double new_value = 0.0;
};

struct ChangeLog {
    std::vector<ChangeRecord> records;

    /// Modification count per channel.
    std::vector<std::size_t> counts(std::size_t channels) const;
    void record_diff(std::size_t step, std::span<const double> before, std::span<const double> after);
};

void write_change_log(std::ostream& out, const ChangeLog& log, const data::SensorSchema& schema);
ChangeLog read_change_log(std::istream& in, const data::SensorSchema& schema);

// ---------------------------------------------------------------- replay

struct ReplayResult {
    data::TimeSeries series;
    ChangeLog changes;
    std::size_t contaminated_steps = 0;  // replay sources that carry attack labels
};

/// For each attack-labeled step t, copies row t - offset onto the write set.
ReplayResult replay_attack(const data::TimeSeries& series, std::size_t offset,
                           std::span<const std::size_t> write_set);

// ---------------------------------------------------------------- oracle

struct OracleAnswer {
    std::vector<double> residual;
    double epsilon = 0.0;
    double threshold = 0.0;
};

/// Query interface exposing a detector's per-channel errors on raw samples.
class Oracle {
public:
    virtual ~Oracle() = default;
    virtual std::size_t channels() const = 0;
    virtual double threshold() const = 0;
    virtual OracleAnswer query(std::span<const double> sample) const = 0;
    /// Epsilon for `count` samples stored back to back.
    virtual void epsilon_batch(std::span<const double> samples, std::span<double> epsilon) const;
};

/// Wraps a trained detector. For models that look back over previous rows,
/// `set_history` supplies the raw rows preceding the queried sample.
class DetectorOracle final : public Oracle {
public:
    explicit DetectorOracle(const detector::DetectorModel& model);

    std::size_t channels() const override { return model_.channels(); }
    double threshold() const override { return model_.threshold; }
    OracleAnswer query(std::span<const double> sample) const override;
    void epsilon_batch(std::span<const double> samples, std::span<double> epsilon) const override;

    /// Raw rows, oldest first; fewer than lookback() rows are padded with the
    /// oldest one, and an empty history pads with the sample itself.
    void set_history(std::span<const double> rows);

private:
    void fill_window(std::span<const double> sample, std::span<double> out) const;

    const detector::DetectorModel& model_;
    std::vector<double> history_;  // normalized, lookback() rows once set
};

/// Oracle defined by a residual function; epsilon = mean squared residual.
class FunctionOracle final : public Oracle {
public:
    using ResidualFn = std::function<std::vector<double>(std::span<const double>)>;

    FunctionOracle(std::size_t channels, double threshold, ResidualFn fn);

    std::size_t channels() const override { return channels_; }
    double threshold() const override { return threshold_; }
    OracleAnswer query(std::span<const double> sample) const override;

private:
    std::size_t channels_;
    double threshold_;
    ResidualFn fn_;
};

// ---------------------------------------------------------------- iterative

struct IterativeBudget {
    std::size_t patience = 15;
    std::size_t budget = 200;
    std::size_t grid = 50;

    void validate() const;
};

/// Candidate values per channel: categorical channels use their allowed set;
/// continuous channels use `grid` evenly spaced values across [min, max] of
/// `ranges`, or the single value when min = max.
struct MutationGrid {
    std::vector<std::vector<double>> values;

    static MutationGrid build(const data::SensorSchema& schema, const data::Normalizer& ranges,
                              std::size_t grid);
};

/// Rows equal to `x` except at `channel`, one per grid value, back to back.
std::vector<double> compute_matrix_of_mutations(std::span<const double> x, std::size_t channel,
                                                const MutationGrid& grid);

struct Mutation {
    double value = 0.0;
    double epsilon = 0.0;
    std::size_t index = 0;  // position in the channel's grid
};

/// Grid value minimizing epsilon; the lowest index wins ties.
Mutation find_best_mutation(const Oracle& oracle, std::span<const double> x, std::size_t channel,
                            const MutationGrid& grid);

struct IterativeResult {
    std::vector<double> sample;
    bool solved = false;
    std::size_t iterations = 0;
    double epsilon = 0.0;
    double initial_epsilon = 0.0;
    std::size_t longest_stall = 0;  // consecutive non-improving iterations
};

/// Coordinate descent: repeatedly take the writable channel with the largest
/// squared residual, substitute its best grid value, and keep it when epsilon
/// drops. Channels that fail to improve are skipped until some other channel
/// improves. Stops when epsilon < threshold, after `patience` consecutive
/// failures, after `budget` iterations, or when no channel is left to try.
IterativeResult iterative_conceal(const Oracle& oracle, std::span<const double> x,
                                  const AttackConstraint& constraint, const IterativeBudget& budget,
                                  const MutationGrid& grid);

struct StepRecord {
    std::size_t step = 0;
    bool solved = false;
    std::size_t iterations = 0;
    double epsilon_before = 0.0;
    double epsilon_after = 0.0;
    double seconds = 0.0;
};

struct AttackRun {
    data::TimeSeries series;
    ChangeLog changes;
    std::vector<StepRecord> steps;  // one per attacked step
};

/// Attack-labeled steps are concealed in time order; for detectors with
/// lookback the history holds the already concealed rows. Unlabeled series
/// are attacked at every step.
AttackRun run_iterative(const detector::DetectorModel& model, const data::TimeSeries& series,
                        const AttackConstraint& constraint, const IterativeBudget& budget,
                        const MutationGrid& grid);

// ---------------------------------------------------------------- learning

struct GeneratorModel {
    nn::NetworkSpec spec;
    nn::ModelParams params;
    data::Normalizer normalizer;  // over read_set, fit on the attacker's data
    std::vector<std::size_t> read_set;
    data::SensorSchema schema;  // the read-set slice

    void validate() const;
};

/// 2n'/4n'/2n' sigmoid autoencoder over n' read channels.
nn::NetworkSpec generator_spec(std::size_t read_channels, std::uint64_t seed);

struct GeneratorTraining {
    GeneratorModel model;
    nn::TrainLog log;
    bool insufficient_data = false;  // fewer than 10 samples per read channel
    std::size_t rows_used = 0;
};

GeneratorTraining train_generator(const data::TimeSeries& normal, const data::SensorSchema& schema,
                                  const AttackConstraint& constraint, const nn::TrainConfig& cfg,
                                  data::SampleMode mode = data::SampleMode::prefix,
                                  std::uint64_t sample_seed = 0);

double round_to_allowed(const data::Channel& channel, double value);

/// Feeds the read-set slice through the generator and overwrites the write
/// set with its denormalized outputs, then rounds categorical channels and
/// zeroes dependent channels whose governing actuator is at its lowest value.
std::vector<double> conceal_learning(const GeneratorModel& gen, std::span<const double> x,
                                     const AttackConstraint& constraint,
                                     const data::SensorSchema& schema);

AttackRun run_learning(const GeneratorModel& gen, const data::TimeSeries& series,
                       const AttackConstraint& constraint, const data::SensorSchema& schema);

}  // namespace conceal::attacks
