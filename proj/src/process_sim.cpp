#include "conceal/process_sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <optional>
#include <set>

#include "conceal/error.hpp"
#include "conceal/random.hpp"

namespace conceal::sim {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
    require(j.is_object(), ErrorKind::invalid_config, where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                    [&](std::string_view a) { return a == key; });
        require(ok, ErrorKind::invalid_config, where + ": unknown key '" + key + "'");
    }
}

template <typename T>
T get(const nlohmann::json& j, const char* key, const std::string& where) {
    require(j.contains(key), ErrorKind::invalid_config, where + ": missing '" + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        fail(ErrorKind::invalid_config, where + ": '" + key + "' has the wrong type");
    }
}

std::size_t tank_index(const PlantConfig& cfg, const std::string& name, const std::string& where) {
    for (std::size_t i = 0; i < cfg.tanks.size(); ++i)
        if (cfg.tanks[i].name == name) return i;
    fail(ErrorKind::invalid_config, where + ": unknown tank '" + name + "'");
}

std::string timestamp(std::size_t step, double interval_s) {
    using namespace std::chrono;
    const auto start = sys_days{year{2024} / January / 1};
    const auto at = start + seconds(static_cast<long long>(std::llround(static_cast<double>(step) * interval_s)));
    const auto day = floor<days>(at);
    const year_month_day ymd{day};
    const hh_mm_ss hms{at - day};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u %02ld:%02ld:%02ld", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return buf;
}

}  // namespace

void PlantConfig::validate() const {
    require(!tanks.empty(), ErrorKind::invalid_config, "plant needs at least one tank");
    require(sampling_interval_s > 0.0, ErrorKind::invalid_config, "sampling interval must be > 0");
    require(level_noise >= 0.0 && flow_noise >= 0.0, ErrorKind::invalid_config,
            "noise amplitudes must be >= 0");
    std::set<std::string> names;
    double share = 0.0;
    for (const auto& t : tanks) {
        require(names.insert(t.name).second, ErrorKind::invalid_config, "duplicate name '" + t.name + "'");
        require(t.capacity > 0.0 && t.area > 0.0, ErrorKind::invalid_config,
                "tank '" + t.name + "': capacity and area must be > 0");
        require(t.initial_level >= 0.0 && t.initial_level <= t.max_level(), ErrorKind::invalid_config,
                "tank '" + t.name + "': initial level outside [0, capacity / area]");
        require(t.demand_share >= 0.0, ErrorKind::invalid_config,
                "tank '" + t.name + "': demand share must be >= 0");
        require(!t.plc.empty(), ErrorKind::invalid_config, "tank '" + t.name + "' has no plc");
        share += t.demand_share;
    }
    require(std::abs(share - 1.0) < 1e-9 || demand.base + demand.amplitude + demand.noise == 0.0,
            ErrorKind::invalid_config, "tank demand shares must sum to 1");
    for (const auto& p : pumps) {
        require(names.insert(p.name).second, ErrorKind::invalid_config, "duplicate name '" + p.name + "'");
        require(p.tank < tanks.size(), ErrorKind::invalid_config, "pump '" + p.name + "': unknown tank");
        require(p.flow_rate > 0.0, ErrorKind::invalid_config, "pump '" + p.name + "': flow rate must be > 0");
        require(p.on_level < p.off_level, ErrorKind::invalid_config,
                "pump '" + p.name + "': on level must be below off level");
        require(p.head_loss >= 0.0 && p.head_loss < 1.0, ErrorKind::invalid_config,
                "pump '" + p.name + "': head loss must lie in [0, 1)");
        require(!p.plc.empty(), ErrorKind::invalid_config, "pump '" + p.name + "' has no plc");
    }
    for (const auto& v : valves) {
        require(names.insert(v.name).second, ErrorKind::invalid_config, "duplicate name '" + v.name + "'");
        require(v.from < tanks.size() && v.to < tanks.size() && v.from != v.to, ErrorKind::invalid_config,
                "valve '" + v.name + "': needs two distinct tanks");
        require(v.flow_rate > 0.0, ErrorKind::invalid_config, "valve '" + v.name + "': flow rate must be > 0");
        require(v.open_level < v.close_level, ErrorKind::invalid_config,
                "valve '" + v.name + "': open level must be below close level");
        require(!v.plc.empty(), ErrorKind::invalid_config, "valve '" + v.name + "' has no plc");
    }
    require(demand.base >= 0.0 && demand.amplitude >= 0.0 && demand.noise >= 0.0,
            ErrorKind::invalid_config, "demand terms must be >= 0");
    require(demand.period_h > 0.0, ErrorKind::invalid_config, "demand period must be > 0");
    require(!demand.plc.empty(), ErrorKind::invalid_config, "demand meter has no plc");
}

data::SensorSchema PlantConfig::schema() const {
    using data::Channel;
    using data::ChannelKind;
    data::SensorSchema s;
    s.sampling_interval_s = sampling_interval_s;
    for (const auto& t : tanks)
        s.channels.push_back({"L_" + t.name, ChannelKind::continuous, {},
                              std::make_pair(0.0, t.max_level()), t.plc, std::nullopt});
    auto actuator = [&](const std::string& name, const std::string& plc) {
        const std::size_t status = s.channels.size() + 1;
        s.channels.push_back({"F_" + name, ChannelKind::continuous, {}, std::nullopt, plc, status});
        s.channels.push_back({"S_" + name, ChannelKind::categorical, {0.0, 1.0}, std::nullopt, plc,
                              std::nullopt});
    };
    for (const auto& p : pumps) actuator(p.name, p.plc);
    for (const auto& v : valves) actuator(v.name, v.plc);
    s.channels.push_back({"D_TOTAL", ChannelKind::continuous, {}, std::nullopt, demand.plc, std::nullopt});
    return s;
}

PlantConfig default_plant() {
    PlantConfig cfg;
    cfg.tanks = {
        {"T1", 100.0, 20.0, 3.0, 0.3, "PLC1"},
        {"T2", 80.0, 16.0, 2.5, 0.3, "PLC1"},
        {"T3", 60.0, 12.0, 2.0, 0.4, "PLC2"},
    };
    cfg.pumps = {
        {"PU1", 0, 30.0, 1.5, 4.0, 0.3, "PLC1"},
        {"PU2", 1, 18.0, 1.2, 3.5, 0.3, "PLC1"},
        {"PU3", 2, 16.0, 1.0, 3.0, 0.3, "PLC2"},
    };
    cfg.valves = {
        {"V1", 0, 1, 10.0, 2.0, 3.0, "PLC1"},
        {"V2", 1, 2, 8.0, 1.8, 2.6, "PLC2"},
    };
    cfg.demand = {16.0, 8.0, 2.0, 24.0, "PLC2"};
    cfg.sampling_interval_s = 900.0;
    cfg.level_noise = 0.01;
    cfg.flow_noise = 0.01;
    cfg.seed = 1;
    return cfg;
}

PlantConfig plant_from_json(const nlohmann::json& j) {
    check_keys(j, {"tanks", "pumps", "valves", "demand", "sampling_interval_s", "level_noise",
                   "flow_noise", "seed"},
               "plant");
    PlantConfig cfg;
    cfg.sampling_interval_s = j.value("sampling_interval_s", 900.0);
    cfg.level_noise = j.value("level_noise", 0.0);
    cfg.flow_noise = j.value("flow_noise", 0.0);
    cfg.seed = j.value("seed", std::uint64_t{1});
    for (const auto& t : j.value("tanks", nlohmann::json::array())) {
        check_keys(t, {"name", "capacity", "area", "initial_level", "demand_share", "plc"}, "tank");
        cfg.tanks.push_back({get<std::string>(t, "name", "tank"), get<double>(t, "capacity", "tank"),
                             get<double>(t, "area", "tank"), t.value("initial_level", 0.0),
                             t.value("demand_share", 0.0), get<std::string>(t, "plc", "tank")});
    }
    for (const auto& p : j.value("pumps", nlohmann::json::array())) {
        check_keys(p, {"name", "tank", "flow_rate", "on_level", "off_level", "head_loss", "plc"}, "pump");
        cfg.pumps.push_back({get<std::string>(p, "name", "pump"),
                             tank_index(cfg, get<std::string>(p, "tank", "pump"), "pump"),
                             get<double>(p, "flow_rate", "pump"), get<double>(p, "on_level", "pump"),
                             get<double>(p, "off_level", "pump"), p.value("head_loss", 0.0),
                             get<std::string>(p, "plc", "pump")});
    }
    for (const auto& v : j.value("valves", nlohmann::json::array())) {
        check_keys(v, {"name", "from", "to", "flow_rate", "open_level", "close_level", "plc"}, "valve");
        cfg.valves.push_back({get<std::string>(v, "name", "valve"),
                              tank_index(cfg, get<std::string>(v, "from", "valve"), "valve"),
                              tank_index(cfg, get<std::string>(v, "to", "valve"), "valve"),
                              get<double>(v, "flow_rate", "valve"), get<double>(v, "open_level", "valve"),
                              get<double>(v, "close_level", "valve"), get<std::string>(v, "plc", "valve")});
    }
    if (j.contains("demand")) {
        const auto& d = j["demand"];
        check_keys(d, {"base", "amplitude", "noise", "period_h", "plc"}, "demand");
        cfg.demand = {d.value("base", 0.0), d.value("amplitude", 0.0), d.value("noise", 0.0),
                      d.value("period_h", 24.0), get<std::string>(d, "plc", "demand")};
    }
    cfg.validate();
    return cfg;
}

nlohmann::json plant_to_json(const PlantConfig& cfg) {
    nlohmann::json j;
    j["sampling_interval_s"] = cfg.sampling_interval_s;
    j["level_noise"] = cfg.level_noise;
    j["flow_noise"] = cfg.flow_noise;
    j["seed"] = cfg.seed;
    j["tanks"] = nlohmann::json::array();
    for (const auto& t : cfg.tanks)
        j["tanks"].push_back({{"name", t.name}, {"capacity", t.capacity}, {"area", t.area},
                              {"initial_level", t.initial_level}, {"demand_share", t.demand_share},
                              {"plc", t.plc}});
    j["pumps"] = nlohmann::json::array();
    for (const auto& p : cfg.pumps)
        j["pumps"].push_back({{"name", p.name}, {"tank", cfg.tanks[p.tank].name},
                              {"flow_rate", p.flow_rate}, {"on_level", p.on_level},
                              {"off_level", p.off_level}, {"head_loss", p.head_loss}, {"plc", p.plc}});
    j["valves"] = nlohmann::json::array();
    for (const auto& v : cfg.valves)
        j["valves"].push_back({{"name", v.name}, {"from", cfg.tanks[v.from].name},
                               {"to", cfg.tanks[v.to].name}, {"flow_rate", v.flow_rate},
                               {"open_level", v.open_level}, {"close_level", v.close_level},
                               {"plc", v.plc}});
    j["demand"] = {{"base", cfg.demand.base}, {"amplitude", cfg.demand.amplitude},
                   {"noise", cfg.demand.noise}, {"period_h", cfg.demand.period_h},
                   {"plc", cfg.demand.plc}};
    return j;
}

std::string_view to_string(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::force_on: return "force-actuator-on";
        case ScenarioKind::force_off: return "force-actuator-off";
        case ScenarioKind::stuck_sensor: return "stuck-sensor";
        case ScenarioKind::sensor_offset: return "sensor-offset";
    }
    return "unknown";
}

ScenarioKind parse_scenario_kind(std::string_view name) {
    for (auto k : {ScenarioKind::force_on, ScenarioKind::force_off, ScenarioKind::stuck_sensor,
                   ScenarioKind::sensor_offset})
        if (to_string(k) == name) return k;
    fail(ErrorKind::invalid_scenario, "unknown scenario kind '" + std::string(name) + "'");
}

AnomalyScenario scenario_from_json(const nlohmann::json& j) {
    check_keys(j, {"kind", "target", "start", "duration", "magnitude"}, "scenario");
    AnomalyScenario s;
    s.kind = parse_scenario_kind(get<std::string>(j, "kind", "scenario"));
    s.target = get<std::string>(j, "target", "scenario");
    s.start = get<std::size_t>(j, "start", "scenario");
    s.duration = get<std::size_t>(j, "duration", "scenario");
    s.magnitude = j.value("magnitude", 0.0);
    return s;
}

nlohmann::json scenario_to_json(const AnomalyScenario& s) {
    return {{"kind", std::string(to_string(s.kind))}, {"target", s.target}, {"start", s.start},
            {"duration", s.duration}, {"magnitude", s.magnitude}};
}

data::TimeSeries inject_anomaly(const PlantConfig& cfg, std::span<const AnomalyScenario> scenarios,
                                std::size_t steps) {
    cfg.validate();
    const auto schema = cfg.schema();
    const std::size_t n = schema.size();
    const std::size_t n_tanks = cfg.tanks.size();
    const std::size_t n_pumps = cfg.pumps.size();
    const std::size_t n_act = n_pumps + cfg.valves.size();

    // Resolve scenario targets up front: actuator index or channel index.
    std::vector<std::size_t> target(scenarios.size());
    for (std::size_t k = 0; k < scenarios.size(); ++k) {
        const auto& sc = scenarios[k];
        require(sc.duration >= 1, ErrorKind::invalid_scenario, "scenario duration must be >= 1");
        require(sc.end() <= steps, ErrorKind::invalid_scenario,
                "scenario on '" + sc.target + "' ends after the simulation horizon");
        if (sc.kind == ScenarioKind::force_on || sc.kind == ScenarioKind::force_off) {
            std::optional<std::size_t> idx;
            for (std::size_t i = 0; i < n_pumps; ++i)
                if (cfg.pumps[i].name == sc.target) idx = i;
            for (std::size_t i = 0; i < cfg.valves.size(); ++i)
                if (cfg.valves[i].name == sc.target) idx = n_pumps + i;
            require(idx.has_value(), ErrorKind::invalid_scenario,
                    "unknown actuator '" + sc.target + "'");
            target[k] = *idx;
        } else {
            const auto idx = schema.find(sc.target);
            require(idx.has_value(), ErrorKind::invalid_scenario, "unknown channel '" + sc.target + "'");
            target[k] = *idx;
        }
    }

    data::TimeSeries out;
    out.channels = n;
    out.interval_s = cfg.sampling_interval_s;
    out.values.resize(steps * n);
    out.labels.assign(steps, data::Label::safe);
    out.timestamps.reserve(steps);

    Rng rng(cfg.seed);
    const double dt = cfg.step_hours();
    std::vector<double> level(n_tanks);
    for (std::size_t i = 0; i < n_tanks; ++i) level[i] = cfg.tanks[i].initial_level;
    std::vector<bool> on(n_act, false);
    std::vector<double> flow(n_act);
    std::vector<double> net(n_tanks);
    std::vector<double> reported(n);
    std::vector<double> stuck_value(scenarios.size());

    for (std::size_t t = 0; t < steps; ++t) {
        // Controllers act on the true levels.
        for (std::size_t i = 0; i < n_pumps; ++i) {
            const auto& p = cfg.pumps[i];
            if (level[p.tank] < p.on_level) on[i] = true;
            else if (level[p.tank] > p.off_level) on[i] = false;
        }
        for (std::size_t i = 0; i < cfg.valves.size(); ++i) {
            const auto& v = cfg.valves[i];
            if (level[v.to] < v.open_level) on[n_pumps + i] = true;
            else if (level[v.to] > v.close_level) on[n_pumps + i] = false;
        }
        for (std::size_t k = 0; k < scenarios.size(); ++k) {
            const auto& sc = scenarios[k];
            if (t < sc.start || t >= sc.end()) continue;
            out.labels[t] = data::Label::under_attack;
            if (sc.kind == ScenarioKind::force_on) on[target[k]] = true;
            if (sc.kind == ScenarioKind::force_off) on[target[k]] = false;
        }

        std::fill(net.begin(), net.end(), 0.0);
        for (std::size_t i = 0; i < n_pumps; ++i) {
            const auto& p = cfg.pumps[i];
            const double rel = level[p.tank] / cfg.tanks[p.tank].max_level();
            flow[i] = on[i] ? p.flow_rate * (1.0 - p.head_loss * rel) : 0.0;
            net[p.tank] += flow[i];
        }
        for (std::size_t i = 0; i < cfg.valves.size(); ++i) {
            const auto& v = cfg.valves[i];
            const double rel = level[v.from] / cfg.tanks[v.from].max_level();
            const double available = level[v.from] * cfg.tanks[v.from].area / dt;
            const double q = on[n_pumps + i] ? std::min(v.flow_rate * std::sqrt(rel), available) : 0.0;
            flow[n_pumps + i] = q;
            net[v.from] -= q;
            net[v.to] += q;
        }
        const double hours = static_cast<double>(t) * dt;
        const double wave = std::sin(2.0 * std::numbers::pi * hours / cfg.demand.period_h);
        const double jitter = rng.uniform(-cfg.demand.noise, cfg.demand.noise);
        const double demand = std::max(0.0, cfg.demand.base + cfg.demand.amplitude * wave + jitter);
        for (std::size_t i = 0; i < n_tanks; ++i) {
            const auto& tank = cfg.tanks[i];
            net[i] -= demand * tank.demand_share;
            level[i] = std::clamp(level[i] + net[i] * dt / tank.area, 0.0, tank.max_level());
        }

        // Reported values; noise is drawn every step so that scenarios never
        // shift the random stream.
        std::size_t c = 0;
        for (std::size_t i = 0; i < n_tanks; ++i)
            reported[c++] = level[i] + rng.uniform(-cfg.level_noise, cfg.level_noise);
        for (std::size_t i = 0; i < n_act; ++i) {
            reported[c++] = flow[i] * (1.0 + rng.uniform(-cfg.flow_noise, cfg.flow_noise));
            reported[c++] = on[i] ? 1.0 : 0.0;
        }
        reported[c++] = demand;

        for (std::size_t k = 0; k < scenarios.size(); ++k) {
            const auto& sc = scenarios[k];
            if (sc.kind == ScenarioKind::stuck_sensor) {
                if (t + 1 == sc.start || (sc.start == 0 && t == 0)) stuck_value[k] = reported[target[k]];
                if (t >= sc.start && t < sc.end()) reported[target[k]] = stuck_value[k];
            } else if (sc.kind == ScenarioKind::sensor_offset && t >= sc.start && t < sc.end()) {
                reported[target[k]] += sc.magnitude;
            }
        }
        std::copy(reported.begin(), reported.end(), out.values.begin() + static_cast<std::ptrdiff_t>(t * n));
        out.timestamps.push_back(timestamp(t, cfg.sampling_interval_s));
    }
    return out;
}

data::TimeSeries simulate_normal(const PlantConfig& cfg, std::size_t steps) {
    return inject_anomaly(cfg, {}, steps);
}

std::vector<AnomalyScenario> actuator_scenarios(const PlantConfig& cfg, std::size_t steps,
                                                std::size_t count, std::size_t min_duration,
                                                std::size_t max_duration, std::size_t gap,
                                                std::uint64_t seed) {
    require(min_duration >= 1 && min_duration <= max_duration, ErrorKind::invalid_scenario,
            "scenario durations must satisfy 1 <= min <= max");
    std::vector<std::string> actuators;
    for (const auto& p : cfg.pumps) actuators.push_back(p.name);
    for (const auto& v : cfg.valves) actuators.push_back(v.name);
    require(!actuators.empty(), ErrorKind::invalid_scenario, "plant has no actuators");
    const std::size_t slot = max_duration + gap;
    require(gap + count * slot <= steps, ErrorKind::invalid_scenario,
            "horizon too short for the requested scenarios");
    Rng rng(seed);
    std::vector<AnomalyScenario> out;
    for (std::size_t k = 0; k < count; ++k) {
        AnomalyScenario s;
        s.kind = k % 2 == 0 ? ScenarioKind::force_on : ScenarioKind::force_off;
        s.target = actuators[(k / 2) % actuators.size()];
        s.duration = min_duration + rng.below(max_duration - min_duration + 1);
        s.start = gap + k * slot + rng.below(max_duration - s.duration + 1);
        out.push_back(s);
    }
    return out;
}

}  // namespace conceal::sim
