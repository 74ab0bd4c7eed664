#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "conceal/attacks.hpp"
#include "conceal/data.hpp"
#include "conceal/detector.hpp"

namespace conceal::eval {

/// Under-attack is the positive class.
struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
    bool operator==(const Confusion&) const = default;
};

Confusion confusion(std::span<const data::Label> predicted, std::span<const data::Label> truth);

/// Ratios with a zero denominator are absent.
struct Metrics {
    std::optional<double> recall;
    std::optional<double> precision;
    std::optional<double> accuracy;
    std::optional<double> fpr;
};

Metrics metrics(const Confusion& counts);

/// Recall of `predicted` restricted to steps where `truth` is under attack.
std::optional<double> recall_on_attacks(std::span<const data::Label> predicted,
                                        std::span<const data::Label> truth);

/// Runs the detector on `concealed` and scores it on the truth attack steps.
std::optional<double> attack_recall(const detector::DetectorModel& model,
                                    const data::TimeSeries& concealed,
                                    std::span<const data::Label> truth);

/// Maximal runs of consecutive under-attack steps, as [start, end).
struct Window {
    std::size_t start = 0;
    std::size_t end = 0;
};

std::vector<Window> attack_windows(std::span<const data::Label> truth);

/// A window counts as detected when at least one of its steps is flagged.
std::vector<bool> windows_detected(std::span<const data::Label> predicted, std::span<const Window> windows);

struct TimingStats {
    double mean_s = 0.0;
    double std_s = 0.0;  // sample standard deviation, 0 for a single sample
    std::size_t samples = 0;
};

TimingStats timing_stats(std::span<const double> seconds);

/// Times `attack(i)` for i in [0, samples) with a monotonic clock after
/// `warmup` untimed calls.
TimingStats measure_latency(const std::function<void(std::size_t)>& attack, std::size_t samples,
                            std::size_t warmup = 5);

struct EvalReport {
    Confusion counts;
    Metrics overall;
    std::optional<double> attack_recall;
    std::vector<Window> windows;
    std::vector<bool> detected;
    std::optional<TimingStats> timing;
    nlohmann::json metadata = nlohmann::json::object();

    nlohmann::json to_json() const;
};

EvalReport evaluate(const detector::DetectorModel& model, const data::TimeSeries& series,
                    std::span<const data::Label> truth);

// ---------------------------------------------------------------- sweeps

enum class AttackKind { replay, iterative, learning };
std::string_view to_string(AttackKind kind);
AttackKind parse_attack_kind(std::string_view name);

enum class Selection { best_case, topology };
std::string_view to_string(Selection s);
Selection parse_selection(std::string_view name);

/// Everything an attack needs besides its constraint.
struct AttackContext {
    const detector::DetectorModel* model = nullptr;
    const data::SensorSchema* schema = nullptr;
    const data::TimeSeries* normal = nullptr;  // eavesdropping source
    const data::TimeSeries* target = nullptr;  // labeled series to conceal
    std::size_t replay_offset = 1;
    attacks::IterativeBudget budget;
    nn::TrainConfig generator_cfg;
    data::SampleMode sample_mode = data::SampleMode::prefix;

    void validate() const;
};

struct AttackOutcome {
    attacks::AttackRun run;
    std::optional<double> recall;
    TimingStats timing;
};

/// Runs one attack under `constraint`. `sample_seed` drives random-mode data
/// subsampling. A generator already trained for the same read set and data
/// fraction may be passed to skip retraining.
AttackOutcome run_attack(const AttackContext& ctx, AttackKind kind,
                         const attacks::AttackConstraint& constraint, std::uint64_t sample_seed = 0,
                         const attacks::GeneratorModel* generator = nullptr);

/// Mutation grid ranges from the attacker's eavesdropped share of normal data.
attacks::MutationGrid attacker_grid(const AttackContext& ctx, const attacks::AttackConstraint& constraint,
                                    std::uint64_t sample_seed);

struct SweepConfig {
    std::vector<AttackKind> attacks{AttackKind::replay, AttackKind::iterative, AttackKind::learning};
    std::vector<std::size_t> k_values;
    Selection selection = Selection::best_case;
    bool full_reach = false;  // fully constrained: read set = write set
    std::size_t repetitions = 1;
    std::uint64_t seed = 0;
    /// Channel modification counts per attack from prior unconstrained runs;
    /// best-case selection for attacks without their own log uses `fallback`.
    std::vector<std::pair<AttackKind, std::vector<std::size_t>>> change_counts;
    std::vector<std::size_t> fallback_counts;
};

struct SweepCell {
    AttackKind attack = AttackKind::replay;
    std::size_t k = 0;
    std::string plc;  // topology selection only
    double data_fraction = 1.0;
    std::size_t repetition = 0;
    std::optional<double> recall;
    double mean_time_s = 0.0;
    double std_time_s = 0.0;
};

/// One cell per (attack, k or PLC, repetition). Cells are independent and
/// run across OpenMP threads; results are ordered as enumerated.
std::vector<SweepCell> sweep_constraints(const AttackContext& ctx, const SweepConfig& cfg);

/// Learning-attack Recall over data fractions, repetitions seeded per run.
std::vector<SweepCell> sweep_data_fraction(const AttackContext& ctx, std::span<const double> fractions,
                                           std::size_t repetitions, std::uint64_t seed);

/// Long format: attack,k,repetition,recall,mean_time_s,std_time_s.
void write_sweep_csv(std::ostream& out, std::span<const SweepCell> cells);
/// Long format: attack,data_fraction,repetition,recall,mean_time_s,std_time_s.
void write_fraction_csv(std::ostream& out, std::span<const SweepCell> cells);
/// Mean and sample std of Recall across repetitions per (attack, k, plc, fraction).
nlohmann::json summarize_sweep(std::span<const SweepCell> cells);

/// n, then multiples of 5 (of 10 plus 15 when n >= 60) down to 10, then 9 .. 2.
std::vector<std::size_t> default_k_values(std::size_t channels);

}  // namespace conceal::eval
