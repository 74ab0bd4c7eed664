#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "conceal/data.hpp"

namespace conceal::sim {

struct TankConfig {
    std::string name;
    double capacity = 0.0;  // volume units
    double area = 0.0;      // volume per level unit
    double initial_level = 0.0;
    double demand_share = 0.0;  // fraction of total demand drawn from this tank
    std::string plc;

    double max_level() const { return capacity / area; }
};

/// Fills `tank` from an external source. Switches on below `on_level` and off
/// above `off_level`; delivered flow drops linearly with the tank level by
/// `head_loss` (fraction of `flow_rate` lost at a full tank).
struct PumpConfig {
    std::string name;
    std::size_t tank = 0;
    double flow_rate = 0.0;
    double on_level = 0.0;
    double off_level = 0.0;
    double head_loss = 0.0;
    std::string plc;
};

/// Gravity transfer from tank `from` to tank `to`, controlled by the level of
/// `to`: opens below `open_level`, closes above `close_level`.
struct ValveConfig {
    std::string name;
    std::size_t from = 0;
    std::size_t to = 0;
    double flow_rate = 0.0;
    double open_level = 0.0;
    double close_level = 0.0;
    std::string plc;
};

/// base + amplitude * sin(2 pi t / period) + uniform noise in [-noise, noise],
/// floored at zero.
struct DemandConfig {
    double base = 0.0;
    double amplitude = 0.0;
    double noise = 0.0;
    double period_h = 24.0;
    std::string plc;
};

struct PlantConfig {
    std::vector<TankConfig> tanks;
    std::vector<PumpConfig> pumps;
    std::vector<ValveConfig> valves;
    DemandConfig demand;
    double sampling_interval_s = 900.0;
    double level_noise = 0.0;  // uniform, level units
    double flow_noise = 0.0;   // uniform, relative to the reported flow
    std::uint64_t seed = 1;

    void validate() const;
    double step_hours() const { return sampling_interval_s / 3600.0; }

    /// Channel layout of emitted series: tank levels, then per pump flow and
    /// status, per valve flow and status, then total demand.
    data::SensorSchema schema() const;
};

/// 3 tanks, 3 pumps, 2 valves, 2 PLCs, 14 channels.
PlantConfig default_plant();

PlantConfig plant_from_json(const nlohmann::json& j);
nlohmann::json plant_to_json(const PlantConfig& cfg);

enum class ScenarioKind { force_on, force_off, stuck_sensor, sensor_offset };

std::string_view to_string(ScenarioKind kind);
ScenarioKind parse_scenario_kind(std::string_view name);

/// Force scenarios target an actuator by pump or valve name; sensor scenarios
/// target a channel by name.
struct AnomalyScenario {
    ScenarioKind kind = ScenarioKind::force_on;
    std::string target;
    std::size_t start = 0;
    std::size_t duration = 1;
    double magnitude = 0.0;

    std::size_t end() const { return start + duration; }
    bool operator==(const AnomalyScenario&) const = default;
};

AnomalyScenario scenario_from_json(const nlohmann::json& j);
nlohmann::json scenario_to_json(const AnomalyScenario& s);

data::TimeSeries simulate_normal(const PlantConfig& cfg, std::size_t steps);
data::TimeSeries inject_anomaly(const PlantConfig& cfg, std::span<const AnomalyScenario> scenarios,
                                std::size_t steps);

/// Force-actuator scenarios spread over `steps`, cycling through every
/// actuator and alternating on/off. Windows are separated by at least `gap`
/// clean steps and none starts before `gap`.
std::vector<AnomalyScenario> actuator_scenarios(const PlantConfig& cfg, std::size_t steps,
                                                std::size_t count, std::size_t min_duration,
                                                std::size_t max_duration, std::size_t gap,
                                                std::uint64_t seed);

}  // namespace conceal::sim
