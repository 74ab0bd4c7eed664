#include "conceal/config.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "conceal/error.hpp"
#include "conceal/model_io.hpp"

namespace conceal::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Read-only view over one config object that rejects unknown keys.
class Section {
public:
    Section(const json& j, std::string path, std::initializer_list<const char*> keys)
        : j_(j), path_(std::move(path)) {
        require(j.is_object(), ErrorKind::invalid_config, where() + " must be an object");
        for (const auto& [key, _] : j.items()) {
            const bool known = std::any_of(keys.begin(), keys.end(), [&](const char* k) { return key == k; });
            require(known, ErrorKind::invalid_config, "unknown key '" + at(key) + "'");
        }
    }

    bool has(const char* key) const { return j_.contains(key); }
    const json& raw(const char* key) const { return j_.at(key); }
    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    template <typename T>
    T get(const char* key, T fallback) const {
        if (!has(key)) return fallback;
        return convert<T>(j_.at(key), at(key));
    }

    template <typename T>
    T need(const char* key) const {
        require(has(key), ErrorKind::invalid_config, "missing key '" + at(key) + "'");
        return convert<T>(j_.at(key), at(key));
    }

    template <typename T>
    static T convert(const json& v, const std::string& where) {
        if constexpr (std::is_same_v<T, bool>) {
            require(v.is_boolean(), ErrorKind::invalid_config, where + ": expected true or false");
        } else if constexpr (std::is_integral_v<T>) {
            require(v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0),
                    ErrorKind::invalid_config, where + ": expected a non-negative integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            require(v.is_number(), ErrorKind::invalid_config, where + ": expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            require(v.is_string(), ErrorKind::invalid_config, where + ": expected a string");
        } else {
            require(v.is_array(), ErrorKind::invalid_config, where + ": expected a list");
            T out;
            for (std::size_t i = 0; i < v.size(); ++i)
                out.push_back(convert<typename T::value_type>(v[i], where + "[" + std::to_string(i) + "]"));
            return out;
        }
        return v.get<T>();
    }

private:
    std::string where() const { return path_.empty() ? "config" : path_; }
    json j_;
    std::string path_;
};

template <typename Fn>
auto rethrow_as_config(const std::string& where, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::invalid_config) throw;
        throw Error(ErrorKind::invalid_config, where + ": " + e.what());
    }
}

fs::path existing_file(const Section& s, const char* key, const fs::path& base) {
    fs::path p = s.need<std::string>(key);
    if (p.is_relative()) p = base / p;
    require(fs::is_regular_file(p), ErrorKind::invalid_config,
            s.at(key) + ": file not found: " + p.string());
    return p;
}

nn::TrainConfig parse_train(const json& j, const std::string& path, std::uint64_t default_seed) {
    Section s(j, path,
              {"learning_rate", "train_fraction", "early_stopping_patience", "plateau_patience",
               "plateau_factor", "min_learning_rate", "max_epochs", "batch_size", "seed"});
    nn::TrainConfig c;
    c.learning_rate = s.get("learning_rate", c.learning_rate);
    c.train_fraction = s.get("train_fraction", c.train_fraction);
    c.early_stopping_patience = s.get("early_stopping_patience", c.early_stopping_patience);
    c.plateau_patience = s.get("plateau_patience", c.plateau_patience);
    c.plateau_factor = s.get("plateau_factor", c.plateau_factor);
    c.min_learning_rate = s.get("min_learning_rate", c.min_learning_rate);
    c.max_epochs = s.get("max_epochs", c.max_epochs);
    c.batch_size = s.get("batch_size", c.batch_size);
    c.seed = s.get<std::uint64_t>("seed", default_seed);
    rethrow_as_config(path, [&] {
        c.validate();
        return 0;
    });
    return c;
}

SimulatorSource parse_simulator(const json& j, std::uint64_t seed) {
    Section s(j, "dataset.simulator",
              {"plant", "train_steps", "test_steps", "train_seed", "test_seed", "scenarios",
               "random_scenarios"});
    SimulatorSource src;
    src.plant = s.has("plant") ? rethrow_as_config("dataset.simulator.plant",
                                                    [&] { return sim::plant_from_json(s.raw("plant")); })
                               : sim::default_plant();
    src.train_steps = s.get("train_steps", src.train_steps);
    src.test_steps = s.get("test_steps", src.test_steps);
    src.train_seed = s.get<std::uint64_t>("train_seed", seed);
    src.test_seed = s.get<std::uint64_t>("test_seed", seed + 2);
    require(src.train_steps >= 2 && src.test_steps >= 1, ErrorKind::invalid_config,
            "dataset.simulator: step counts too small");
    if (s.has("scenarios")) {
        require(s.raw("scenarios").is_array(), ErrorKind::invalid_config,
                "dataset.simulator.scenarios: expected a list");
        for (const auto& sj : s.raw("scenarios"))
            src.scenarios.push_back(
                rethrow_as_config("dataset.simulator.scenarios", [&] { return sim::scenario_from_json(sj); }));
    }
    if (s.has("random_scenarios")) {
        Section r(s.raw("random_scenarios"), "dataset.simulator.random_scenarios",
                  {"count", "min_duration", "max_duration", "gap", "seed"});
        RandomScenarios rs;
        rs.count = r.get("count", rs.count);
        rs.min_duration = r.get("min_duration", rs.min_duration);
        rs.max_duration = r.get("max_duration", rs.max_duration);
        rs.gap = r.get("gap", rs.gap);
        rs.seed = r.get<std::uint64_t>("seed", rs.seed);
        src.random_scenarios = rs;
    }
    if (src.scenarios.empty() && !src.random_scenarios) src.random_scenarios = RandomScenarios{};
    return src;
}

ConstraintSection parse_constraint(const json& j) {
    Section s(j, "attack.constraint", {"mode", "write", "k", "plc", "full_reach", "data_fraction"});
    ConstraintSection c;
    c.mode = rethrow_as_config("attack.constraint.mode", [&] {
        return attacks::parse_constraint_mode(s.get<std::string>("mode", "unconstrained"));
    });
    c.write = s.get("write", c.write);
    c.k = s.get("k", c.k);
    c.plc = s.get("plc", c.plc);
    c.full_reach = s.get("full_reach", c.full_reach);
    c.data_fraction = s.get("data_fraction", c.data_fraction);
    require(c.data_fraction > 0.0 && c.data_fraction <= 1.0, ErrorKind::invalid_config,
            "attack.constraint.data_fraction must lie in (0, 1]");
    switch (c.mode) {
        case attacks::ConstraintMode::unconstrained:
            require(c.write.empty() && c.k == 0 && c.plc.empty(), ErrorKind::invalid_config,
                    "attack.constraint: unconstrained mode takes no write/k/plc");
            break;
        case attacks::ConstraintMode::partial:
        case attacks::ConstraintMode::full:
            require(c.write.empty() != (c.k == 0), ErrorKind::invalid_config,
                    "attack.constraint: give exactly one of 'write' or 'k'");
            break;
        case attacks::ConstraintMode::topology:
            require(!c.plc.empty(), ErrorKind::invalid_config, "attack.constraint: topology mode needs 'plc'");
            break;
    }
    return c;
}

}  // namespace

nlohmann::json train_config_to_json(const nn::TrainConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"train_fraction", c.train_fraction},
            {"early_stopping_patience", c.early_stopping_patience},
            {"plateau_patience", c.plateau_patience},
            {"plateau_factor", c.plateau_factor},
            {"min_learning_rate", c.min_learning_rate},
            {"max_epochs", c.max_epochs},
            {"batch_size", c.batch_size},
            {"seed", c.seed}};
}

std::string ExperimentConfig::run_id() const {
    std::ostringstream ss;
    ss << std::hex << std::setw(16) << std::setfill('0') << io::fnv1a(canonical.dump());
    return ss.str();
}

ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    Section root(j, "", {"seed", "output_dir", "dataset", "detector", "attack", "evaluation", "realtime"});
    ExperimentConfig cfg;
    cfg.seed = root.need<std::uint64_t>("seed");
    fs::path out = root.get<std::string>("output_dir", "runs");
    cfg.output_dir = out.is_relative() ? base_dir / out : out;

    {
        Section ds(root.has("dataset") ? root.raw("dataset") : json::object(), "dataset", {"simulator", "csv"});
        require(ds.has("simulator") != ds.has("csv"), ErrorKind::invalid_config,
                "dataset: give exactly one of 'simulator' or 'csv'");
        if (ds.has("simulator")) cfg.simulator = parse_simulator(ds.raw("simulator"), cfg.seed);
        if (ds.has("csv")) {
            Section cs(ds.raw("csv"), "dataset.csv", {"train", "test", "schema"});
            cfg.csv = CsvSource{existing_file(cs, "train", base_dir), existing_file(cs, "test", base_dir),
                                existing_file(cs, "schema", base_dir)};
        }
    }

    {
        Section d(root.has("detector") ? root.raw("detector") : json::object(), "detector",
                  {"kind", "window", "hidden", "filters", "steps", "train", "model"});
        auto& det = cfg.detector;
        det.kind = rethrow_as_config("detector.kind", [&] {
            return nn::parse_architecture(d.get<std::string>("kind", "autoencoder"));
        });
        det.window = d.get("window", det.window);
        require(det.window >= 1, ErrorKind::invalid_config, "detector.window must be >= 1");
        det.hidden = d.get("hidden", det.hidden);
        det.filters = d.get("filters", det.filters);
        det.steps = d.get("steps", det.steps);
        det.train = parse_train(d.has("train") ? d.raw("train") : json::object(), "detector.train", cfg.seed);
        if (d.has("model")) det.model = existing_file(d, "model", base_dir);
    }

    {
        Section a(root.has("attack") ? root.raw("attack") : json::object(), "attack",
                  {"kind", "constraint", "replay_offset", "patience", "budget", "grid", "generator",
                   "sample_mode"});
        auto& at = cfg.attack;
        at.kind = rethrow_as_config("attack.kind", [&] {
            return eval::parse_attack_kind(a.get<std::string>("kind", "learning"));
        });
        at.constraint = parse_constraint(a.has("constraint") ? a.raw("constraint") : json::object());
        at.replay_offset = a.get("replay_offset", at.replay_offset);
        at.budget.patience = a.get("patience", at.budget.patience);
        at.budget.budget = a.get("budget", at.budget.budget);
        at.budget.grid = a.get("grid", at.budget.grid);
        rethrow_as_config("attack", [&] {
            at.budget.validate();
            return 0;
        });
        at.generator = parse_train(a.has("generator") ? a.raw("generator") : json::object(),
                                   "attack.generator", cfg.seed + 1);
        at.sample_mode = rethrow_as_config("attack.sample_mode", [&] {
            return data::parse_sample_mode(a.get<std::string>("sample_mode", "prefix"));
        });
    }

    {
        Section e(root.has("evaluation") ? root.raw("evaluation") : json::object(), "evaluation",
                  {"attacks", "k_values", "selection", "full_reach", "repetitions", "data_fractions",
                   "fraction_repetitions"});
        auto& ev = cfg.evaluation;
        if (e.has("attacks")) {
            ev.attacks.clear();
            for (const auto& name : e.get<std::vector<std::string>>("attacks", {}))
                ev.attacks.push_back(rethrow_as_config("evaluation.attacks", [&] { return eval::parse_attack_kind(name); }));
        }
        ev.k_values = e.get("k_values", ev.k_values);
        ev.selection = rethrow_as_config("evaluation.selection", [&] {
            return eval::parse_selection(e.get<std::string>("selection", "best-case"));
        });
        ev.full_reach = e.get("full_reach", ev.full_reach);
        ev.repetitions = e.get("repetitions", ev.repetitions);
        ev.data_fractions = e.get("data_fractions", ev.data_fractions);
        ev.fraction_repetitions = e.get("fraction_repetitions", ev.fraction_repetitions);
        require(ev.repetitions >= 1 && ev.fraction_repetitions >= 1, ErrorKind::invalid_config,
                "evaluation: repetitions must be >= 1");
        for (double p : ev.data_fractions)
            require(p > 0.0 && p <= 1.0, ErrorKind::invalid_config,
                    "evaluation.data_fractions: values must lie in (0, 1]");
    }

    {
        Section r(root.has("realtime") ? root.raw("realtime") : json::object(), "realtime",
                  {"attack", "sampling_interval_s", "max_speed", "max_steps"});
        auto& rt = cfg.realtime;
        if (r.has("attack")) {
            const auto name = r.need<std::string>("attack");
            if (name == "none") rt.identity = true;
            else rt.attack = rethrow_as_config("realtime.attack", [&] { return eval::parse_attack_kind(name); });
        }
        rt.sampling_interval_s = r.get("sampling_interval_s", rt.sampling_interval_s);
        require(rt.sampling_interval_s > 0.0, ErrorKind::invalid_config,
                "realtime.sampling_interval_s must be > 0");
        rt.max_speed = r.get("max_speed", rt.max_speed);
        rt.max_steps = r.get("max_steps", rt.max_steps);
    }

    cfg.canonical = j;
    cfg.canonical.erase("output_dir");
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override,
                             std::optional<std::filesystem::path> out_override) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::invalid_config, "cannot open config file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::invalid_config, path.string() + ": not valid JSON: " + e.what());
    }
    if (seed_override) j["seed"] = *seed_override;
    const auto base = fs::absolute(path).parent_path();
    auto cfg = parse_config(j, base);
    if (out_override) cfg.output_dir = *out_override;
    return cfg;
}

}  // namespace conceal::cli
