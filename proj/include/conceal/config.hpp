#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "conceal/attacks.hpp"
#include "conceal/eval.hpp"
#include "conceal/nn.hpp"
#include "conceal/process_sim.hpp"

namespace conceal::cli {

struct RandomScenarios {
    std::size_t count = 10;
    std::size_t min_duration = 40;
    std::size_t max_duration = 90;
    std::size_t gap = 120;
    std::uint64_t seed = 7;
};

struct SimulatorSource {
    sim::PlantConfig plant;
    std::size_t train_steps = 10000;
    std::size_t test_steps = 3000;
    std::uint64_t train_seed = 1;
    std::uint64_t test_seed = 3;
    std::vector<sim::AnomalyScenario> scenarios;
    std::optional<RandomScenarios> random_scenarios;
};

struct CsvSource {
    std::filesystem::path train;
    std::filesystem::path test;
    std::filesystem::path schema;
};

struct DetectorSection {
    nn::Architecture kind = nn::Architecture::dense_autoencoder;
    std::size_t window = 3;
    std::vector<std::size_t> hidden;   // autoencoder; empty = default shape
    std::vector<std::size_t> filters;  // cnn; empty = default
    std::size_t steps = 0;             // lstm / cnn input steps; 0 = default
    nn::TrainConfig train;
    std::optional<std::filesystem::path> model;  // reuse a trained detector.bin
};

struct ConstraintSection {
    attacks::ConstraintMode mode = attacks::ConstraintMode::unconstrained;
    std::vector<std::string> write;  // channel names for partial / full
    std::size_t k = 0;               // > 0: best-case selection of k channels
    std::string plc;                 // topology
    bool full_reach = false;         // topology: read only the PLC's channels
    double data_fraction = 1.0;
};

struct AttackSection {
    eval::AttackKind kind = eval::AttackKind::learning;
    ConstraintSection constraint;
    std::size_t replay_offset = 0;  // 0 = one demand period / one day
    attacks::IterativeBudget budget;
    nn::TrainConfig generator;
    data::SampleMode sample_mode = data::SampleMode::prefix;
};

struct EvaluationSection {
    std::vector<eval::AttackKind> attacks{eval::AttackKind::replay, eval::AttackKind::iterative,
                                          eval::AttackKind::learning};
    std::vector<std::size_t> k_values;  // empty = default grid
    eval::Selection selection = eval::Selection::best_case;
    bool full_reach = false;
    std::size_t repetitions = 1;
    std::vector<double> data_fractions;
    std::size_t fraction_repetitions = 10;
};

struct RealtimeSection {
    std::optional<eval::AttackKind> attack;  // empty = the attack section's kind
    bool identity = false;                   // stream without any attack
    double sampling_interval_s = 1.0;
    bool max_speed = true;
    std::size_t max_steps = 0;  // 0 = whole test series
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "runs";
    std::optional<SimulatorSource> simulator;
    std::optional<CsvSource> csv;
    DetectorSection detector;
    AttackSection attack;
    EvaluationSection evaluation;
    RealtimeSection realtime;
    nlohmann::json canonical;  // effective input after overrides, output_dir excluded

    std::string run_id() const;
    std::filesystem::path run_dir() const { return output_dir / run_id(); }
};

/// Strict parse: unknown keys, wrong types and missing files are
/// invalid-config errors. Relative paths resolve against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);

ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<std::uint64_t> seed_override = std::nullopt,
                             std::optional<std::filesystem::path> out_override = std::nullopt);

nlohmann::json train_config_to_json(const nn::TrainConfig& cfg);

}  // namespace conceal::cli
