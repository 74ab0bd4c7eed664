#include <gtest/gtest.h>

#include <algorithm>
#include <set>

#include "conceal/process_sim.hpp"
#include "support/expect.hpp"

using namespace conceal;
using namespace conceal::sim;
using data::Label;

namespace {

/// One tank fed by one pump, no demand, no noise.
PlantConfig single_tank(double initial_level) {
    PlantConfig cfg;
    cfg.tanks = {{"T1", 100.0, 20.0, initial_level, 1.0, "PLC1"}};
    cfg.pumps = {{"PU1", 0, 30.0, 1.0, 4.0, 0.0, "PLC1"}};
    cfg.demand = {0.0, 0.0, 0.0, 24.0, "PLC1"};
    cfg.sampling_interval_s = 900.0;
    return cfg;
}

PlantConfig noiseless_default() {
    auto cfg = default_plant();
    cfg.level_noise = 0.0;
    cfg.flow_noise = 0.0;
    return cfg;
}

}  // namespace

TEST(Plant, DefaultLayout) {
    const auto cfg = default_plant();
    const auto schema = cfg.schema();
    ASSERT_EQ(schema.size(), 14u);
    EXPECT_EQ(schema.channels.front().name, "L_T1");
    EXPECT_EQ(schema.channels.back().name, "D_TOTAL");
    EXPECT_EQ(schema.plcs(), (std::vector<std::string>{"PLC1", "PLC2"}));
    const auto flow = schema.index_of("F_PU1");
    ASSERT_TRUE(schema.channels[flow].depends_on.has_value());
    EXPECT_EQ(*schema.channels[flow].depends_on, schema.index_of("S_PU1"));
    EXPECT_TRUE(schema.channels[schema.index_of("S_V2")].categorical());
}

TEST(Plant, InvalidConfigRejected) {
    auto cfg = single_tank(2.0);
    cfg.pumps[0].on_level = 5.0;
    EXPECT_ERROR_KIND(simulate_normal(cfg, 10), ErrorKind::invalid_config);
    cfg = single_tank(2.0);
    cfg.tanks[0].capacity = 0.0;
    EXPECT_ERROR_KIND(simulate_normal(cfg, 10), ErrorKind::invalid_config);
}

TEST(Plant, JsonRoundTrip) {
    const auto cfg = default_plant();
    const auto back = plant_from_json(plant_to_json(cfg));
    EXPECT_EQ(plant_to_json(back), plant_to_json(cfg));
    auto j = plant_to_json(cfg);
    j["pumps"][0]["flow"] = 3.0;
    EXPECT_ERROR_KIND(plant_from_json(j), ErrorKind::invalid_config);
}

TEST(Simulate, FixedPointWithoutDemand) {
    const auto cfg = single_tank(4.5);
    const auto s = simulate_normal(cfg, 500);
    for (std::size_t t = 0; t < s.rows(); ++t) ASSERT_EQ(s.at(t, 0), 4.5);
}

TEST(Simulate, MassConservationPerStep) {
    const auto cfg = noiseless_default();
    const auto schema = cfg.schema();
    const auto s = simulate_normal(cfg, 2000);
    const double dt = cfg.step_hours();
    const auto demand = schema.index_of("D_TOTAL");
    std::size_t checked = 0;
    for (std::size_t t = 1; t < s.rows(); ++t) {
        for (std::size_t i = 0; i < cfg.tanks.size(); ++i) {
            const auto& tank = cfg.tanks[i];
            const double level = s.at(t, i);
            if (level <= 0.0 || level >= tank.max_level()) continue;
            double inflow = -s.at(t, demand) * tank.demand_share;
            for (const auto& p : cfg.pumps)
                if (p.tank == i) inflow += s.at(t, schema.index_of("F_" + p.name));
            for (const auto& v : cfg.valves) {
                const double q = s.at(t, schema.index_of("F_" + v.name));
                if (v.from == i) inflow -= q;
                if (v.to == i) inflow += q;
            }
            EXPECT_NEAR((level - s.at(t - 1, i)) * tank.area, inflow * dt, 1e-9);
            ++checked;
        }
    }
    EXPECT_GT(checked, 5000u);
}

TEST(Simulate, PhysicsWithinCapacityAndPeriodic) {
    const auto cfg = noiseless_default();
    const auto s = simulate_normal(cfg, 3000);
    for (std::size_t t = 0; t < s.rows(); ++t)
        for (std::size_t i = 0; i < cfg.tanks.size(); ++i) {
            ASSERT_GE(s.at(t, i), 0.0);
            ASSERT_LE(s.at(t, i), cfg.tanks[i].max_level());
        }
    EXPECT_FALSE(s.has_attacks());
    EXPECT_EQ(s.timestamps[1], "2024-01-01 00:15:00");
}

TEST(Simulate, DeterministicPerSeed) {
    auto cfg = default_plant();
    const auto a = simulate_normal(cfg, 800);
    const auto b = simulate_normal(cfg, 800);
    EXPECT_EQ(a.values, b.values);
    cfg.seed = 99;
    EXPECT_NE(simulate_normal(cfg, 800).values, a.values);
}

TEST(Inject, EmptyScenariosEqualNormalBitwise) {
    const auto cfg = default_plant();
    const auto a = inject_anomaly(cfg, {}, 700);
    const auto b = simulate_normal(cfg, 700);
    EXPECT_EQ(a.values, b.values);
    EXPECT_EQ(a.timestamps, b.timestamps);
}

TEST(Inject, ForcePumpOnFillsTankToCapacity) {
    const auto cfg = single_tank(0.5);
    const std::vector<AnomalyScenario> sc{{ScenarioKind::force_on, "PU1", 0, 300, 0.0}};
    const auto s = inject_anomaly(cfg, sc, 300);
    for (std::size_t t = 1; t < s.rows(); ++t) ASSERT_GE(s.at(t, 0), s.at(t - 1, 0));
    EXPECT_EQ(s.at(299, 0), cfg.tanks[0].max_level());
}

TEST(Inject, ForceOffStopsPumpAndLabelsWindow) {
    const auto cfg = noiseless_default();
    const auto schema = cfg.schema();
    const std::vector<AnomalyScenario> sc{{ScenarioKind::force_off, "PU1", 100, 60, 0.0}};
    const auto s = inject_anomaly(cfg, sc, 400);
    const auto status = schema.index_of("S_PU1");
    const auto flow = schema.index_of("F_PU1");
    for (std::size_t t = 100; t < 160; ++t) {
        EXPECT_EQ(s.at(t, status), 0.0);
        EXPECT_EQ(s.at(t, flow), 0.0);
        EXPECT_EQ(s.labels[t], Label::under_attack);
    }
    EXPECT_EQ(s.labels[99], Label::safe);
    EXPECT_EQ(s.labels[160], Label::safe);
}

TEST(Inject, LabelCountEqualsSumOfDurations) {
    const auto cfg = default_plant();
    const auto sc = actuator_scenarios(cfg, 3000, 10, 40, 90, 120, 7);
    std::size_t total = 0;
    for (const auto& s : sc) total += s.duration;
    const auto s = inject_anomaly(cfg, sc, 3000);
    EXPECT_EQ(static_cast<std::size_t>(std::count(s.labels.begin(), s.labels.end(), Label::under_attack)), total);
}

TEST(Inject, StuckSensorHoldsWhileSiblingFlowVaries) {
    const auto cfg = default_plant();
    const auto schema = cfg.schema();
    const std::vector<AnomalyScenario> sc{{ScenarioKind::stuck_sensor, "L_T1", 200, 100, 0.0}};
    const auto s = inject_anomaly(cfg, sc, 400);
    const auto normal = simulate_normal(cfg, 400);
    const double frozen = normal.at(199, 0);
    std::set<double> flows;
    for (std::size_t t = 200; t < 300; ++t) {
        EXPECT_EQ(s.at(t, 0), frozen);
        flows.insert(s.at(t, schema.index_of("F_PU1")));
    }
    EXPECT_GT(flows.size(), 1u);
    EXPECT_EQ(s.at(300, 0), normal.at(300, 0));
}

TEST(Inject, SensorOffsetAddsMagnitude) {
    const auto cfg = default_plant();
    const std::vector<AnomalyScenario> sc{{ScenarioKind::sensor_offset, "L_T2", 50, 20, 1.5}};
    const auto s = inject_anomaly(cfg, sc, 100);
    const auto normal = simulate_normal(cfg, 100);
    for (std::size_t t = 50; t < 70; ++t) EXPECT_EQ(s.at(t, 1), normal.at(t, 1) + 1.5);
    EXPECT_EQ(s.at(70, 1), normal.at(70, 1));
}

TEST(Inject, UnknownTargetIsInvalidScenario) {
    const auto cfg = default_plant();
    const std::vector<AnomalyScenario> bad_actuator{{ScenarioKind::force_on, "PU9", 0, 5, 0.0}};
    EXPECT_ERROR_KIND(inject_anomaly(cfg, bad_actuator, 10), ErrorKind::invalid_scenario);
    const std::vector<AnomalyScenario> bad_channel{{ScenarioKind::stuck_sensor, "L_T9", 0, 5, 0.0}};
    EXPECT_ERROR_KIND(inject_anomaly(cfg, bad_channel, 10), ErrorKind::invalid_scenario);
    const std::vector<AnomalyScenario> too_late{{ScenarioKind::force_on, "PU1", 8, 5, 0.0}};
    EXPECT_ERROR_KIND(inject_anomaly(cfg, too_late, 10), ErrorKind::invalid_scenario);
}

TEST(ActuatorScenarios, SeparatedAndCycling) {
    const auto cfg = default_plant();
    const auto sc = actuator_scenarios(cfg, 3000, 10, 40, 90, 120, 7);
    ASSERT_EQ(sc.size(), 10u);
    EXPECT_GE(sc[0].start, 120u);
    for (std::size_t k = 1; k < sc.size(); ++k) EXPECT_GE(sc[k].start, sc[k - 1].end() + 120);
    EXPECT_EQ(sc[0].kind, ScenarioKind::force_on);
    EXPECT_EQ(sc[1].kind, ScenarioKind::force_off);
    EXPECT_EQ(sc[0].target, "PU1");
    EXPECT_EQ(sc[2].target, "PU2");
    EXPECT_EQ(sc, actuator_scenarios(cfg, 3000, 10, 40, 90, 120, 7));
    EXPECT_ERROR_KIND(actuator_scenarios(cfg, 500, 10, 40, 90, 120, 7), ErrorKind::invalid_scenario);
}

TEST(Scenario, JsonRoundTrip) {
    const AnomalyScenario s{ScenarioKind::sensor_offset, "L_T3", 12, 7, -0.5};
    EXPECT_EQ(scenario_from_json(scenario_to_json(s)), s);
    EXPECT_ERROR_KIND(parse_scenario_kind("explode"), ErrorKind::invalid_scenario);
}
