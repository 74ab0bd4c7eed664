#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "conceal/config.hpp"
#include "conceal/data.hpp"
#include "conceal/process_sim.hpp"

namespace conceal::cli {

/// Training (normal) and labeled test series for one experiment.
struct Dataset {
    data::SensorSchema schema;
    data::TimeSeries train;
    data::TimeSeries test;
    std::vector<sim::AnomalyScenario> scenarios;  // simulator source only
    std::size_t period_steps = 0;                 // one demand period, or one day for CSV data
};

/// Deterministic in-memory dataset: simulated from seeds or loaded from CSV.
Dataset resolve_dataset(const ExperimentConfig& cfg);

/// Replay offset in steps after applying the one-period default.
std::size_t replay_offset(const ExperimentConfig& cfg, const Dataset& dataset);

/// Every command writes into cfg.run_dir() and reports written files on `log`.
void cmd_simulate(const ExperimentConfig& cfg, std::ostream& log);
void cmd_train_detector(const ExperimentConfig& cfg, std::ostream& log);
void cmd_attack(const ExperimentConfig& cfg, std::ostream& log);
void cmd_evaluate(const ExperimentConfig& cfg, std::ostream& log);
void cmd_sweep(const ExperimentConfig& cfg, std::ostream& log);
void cmd_realtime(const ExperimentConfig& cfg, std::ostream& log);

/// Names accepted by `run_command`, in CLI order.
const std::vector<std::string_view>& command_names();
void run_command(std::string_view name, const ExperimentConfig& cfg, std::ostream& log);

}  // namespace conceal::cli
