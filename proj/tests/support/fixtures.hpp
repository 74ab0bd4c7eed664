#pragma once

// Small seeded plant data and a quickly trained detector shared by suites.

#include "conceal/detector.hpp"
#include "conceal/process_sim.hpp"

namespace conceal::fixture {

struct Plant {
    sim::PlantConfig config;
    data::SensorSchema schema;
    data::TimeSeries normal;
    data::TimeSeries held_out;
    std::vector<sim::AnomalyScenario> scenarios;
    data::TimeSeries attacked;
};

inline const Plant& plant() {
    static const Plant p = [] {
        Plant out;
        out.config = sim::default_plant();
        out.schema = out.config.schema();
        out.config.seed = 1;
        out.normal = sim::simulate_normal(out.config, 3000);
        out.config.seed = 2;
        out.held_out = sim::simulate_normal(out.config, 1500);
        out.scenarios = sim::actuator_scenarios(out.config, 1500, 5, 40, 90, 120, 7);
        out.config.seed = 3;
        out.attacked = sim::inject_anomaly(out.config, out.scenarios, 1500);
        return out;
    }();
    return p;
}

inline nn::TrainConfig quick_train(std::uint64_t seed = 1, std::size_t epochs = 60) {
    nn::TrainConfig cfg;
    cfg.max_epochs = epochs;
    cfg.seed = seed;
    return cfg;
}

/// Autoencoder detector with W = 3 trained on plant().normal.
inline const detector::DetectorModel& autoencoder() {
    static const detector::DetectorModel model = [] {
        const auto& p = plant();
        const auto spec = detector::default_network(nn::Architecture::dense_autoencoder, p.schema.size(), 1);
        return detector::build_detector(spec, p.normal, quick_train(), 3);
    }();
    return model;
}

}  // namespace conceal::fixture
