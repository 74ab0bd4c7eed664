#include "conceal/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>
#include <thread>

#include "conceal/attacks.hpp"
#include "conceal/detector.hpp"
#include "conceal/error.hpp"
#include "conceal/eval.hpp"
#include "conceal/model_io.hpp"

namespace conceal::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr auto positive = data::Label::under_attack;

std::string fmt(double v) { return data::format_double(v); }

fs::path prepare_run_dir(const ExperimentConfig& cfg) {
    const auto dir = cfg.run_dir();
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorKind::io, "cannot create run directory " + dir.string() + ": " + ec.message());
    std::ofstream out(dir / "config.json");
    out << cfg.canonical.dump(2) << '\n';
    return dir;
}

std::ofstream open_output(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorKind::io, "cannot write " + path.string());
    return out;
}

void write_json(const fs::path& path, const json& j, std::ostream& log) {
    auto out = open_output(path);
    out << j.dump(2) << '\n';
    log << "wrote " << path.string() << '\n';
}

template <typename Fn>
void write_text(const fs::path& path, std::ostream& log, Fn&& fn) {
    auto out = open_output(path);
    fn(out);
    require(out.good(), ErrorKind::io, "failed writing " + path.string());
    log << "wrote " << path.string() << '\n';
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::vector<std::string> channel_names(const data::SensorSchema& schema) {
    std::vector<std::string> names;
    for (const auto& c : schema.channels) names.push_back(c.name);
    return names;
}

json names_of(const data::SensorSchema& schema, std::span<const std::size_t> indices) {
    auto out = json::array();
    for (auto i : indices) out.push_back(schema.channels[i].name);
    return out;
}

detector::DetectorModel load_trained_detector(const ExperimentConfig& cfg, const Dataset& dataset) {
    const auto path = cfg.detector.model.value_or(cfg.run_dir() / "detector.bin");
    require(fs::exists(path), ErrorKind::missing_artifact,
            path.string() + " not found; run train-detector with this config first");
    auto model = io::load_detector(path);
    require(model.channels() == dataset.schema.size(), ErrorKind::schema,
            "detector width does not match the dataset schema");
    return model;
}

nn::NetworkSpec detector_spec(const DetectorSection& d, std::size_t n) {
    const auto seed = d.train.seed;
    switch (d.kind) {
        case nn::Architecture::dense_autoencoder:
            if (d.hidden.empty()) return detector::default_network(d.kind, n, seed);
            return nn::autoencoder_spec(n, d.hidden, nn::Activation::tanh, nn::Activation::sigmoid, seed);
        case nn::Architecture::lstm_predictor:
            return d.steps == 0 ? detector::default_network(d.kind, n, seed) : nn::lstm_spec(n, d.steps, seed);
        case nn::Architecture::cnn_predictor: {
            auto spec = detector::default_network(d.kind, n, seed);
            if (d.steps == 0 && d.filters.empty()) return spec;
            return nn::cnn_spec(n, d.steps == 0 ? spec.steps : d.steps, seed,
                                d.filters.empty() ? spec.widths : d.filters, spec.dropout);
        }
    }
    fail(ErrorKind::invalid_config, "unknown detector kind");
}

/// Dataset, detector and attack context wired together for one command.
struct Session {
    Dataset dataset;
    detector::DetectorModel model;
    eval::AttackContext ctx;

    explicit Session(const ExperimentConfig& cfg)
        : dataset(resolve_dataset(cfg)), model(load_trained_detector(cfg, dataset)) {
        ctx.model = &model;
        ctx.schema = &dataset.schema;
        ctx.normal = &dataset.train;
        ctx.target = &dataset.test;
        ctx.replay_offset = replay_offset(cfg, dataset);
        ctx.budget = cfg.attack.budget;
        ctx.generator_cfg = cfg.attack.generator;
        ctx.sample_mode = cfg.attack.sample_mode;
        ctx.validate();
    }
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    std::size_t channels() const { return dataset.schema.size(); }
};

/// Per-channel modification counts of the unconstrained run that best-case
/// selection ranks. Replay copies every channel, so it borrows the
/// learning-based log.
std::vector<std::size_t> unconstrained_counts(const Session& s, eval::AttackKind kind, std::uint64_t seed) {
    if (kind == eval::AttackKind::replay) kind = eval::AttackKind::learning;
    const auto constraint = attacks::AttackConstraint::unconstrained(s.channels());
    return eval::run_attack(s.ctx, kind, constraint, seed).run.changes.counts(s.channels());
}

attacks::AttackConstraint resolve_constraint(const ExperimentConfig& cfg, const Session& s, eval::AttackKind kind) {
    const auto& c = cfg.attack.constraint;
    const std::size_t n = s.channels();
    using Mode = attacks::ConstraintMode;
    if (c.mode == Mode::unconstrained) return attacks::AttackConstraint::unconstrained(n, c.data_fraction);
    if (c.mode == Mode::topology)
        return attacks::topology_features(s.dataset.schema, c.plc, c.full_reach, c.data_fraction);

    std::vector<std::size_t> write;
    if (c.k > 0) {
        require(c.k <= n, ErrorKind::invalid_k, "k = " + std::to_string(c.k) + " exceeds " + std::to_string(n));
        write = attacks::select_best_case_features(unconstrained_counts(s, kind, cfg.seed), c.k);
    } else {
        for (const auto& name : c.write) {
            const auto idx = s.dataset.schema.find(name);
            require(idx.has_value(), ErrorKind::invalid_config,
                    "attack.constraint.write: unknown channel '" + name + "'");
            write.push_back(*idx);
        }
        std::sort(write.begin(), write.end());
        write.erase(std::unique(write.begin(), write.end()), write.end());
    }
    return c.mode == Mode::full ? attacks::AttackConstraint::full(write, c.data_fraction)
                                : attacks::AttackConstraint::partial(n, write, c.data_fraction);
}

void write_steps_csv(std::ostream& out, std::span<const attacks::StepRecord> steps) {
    out << "step,solved,iterations,epsilon_before,epsilon_after,seconds\n";
    for (const auto& s : steps)
        out << s.step << ',' << (s.solved ? 1 : 0) << ',' << s.iterations << ',' << fmt(s.epsilon_before) << ','
            << fmt(s.epsilon_after) << ',' << fmt(s.seconds) << '\n';
}

void write_train_log(std::ostream& out, const nn::TrainLog& log) {
    out << "epoch,train_loss,val_loss,learning_rate\n";
    for (const auto& e : log.epochs)
        out << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.val_loss) << ',' << fmt(e.learning_rate)
            << '\n';
}

json timing_json(const eval::TimingStats& t) {
    return {{"mean_s", t.mean_s}, {"std_s", t.std_s}, {"samples", t.samples}};
}

void evaluate_series(const fs::path& dir, const std::string& tag, const detector::DetectorModel& model,
                     const data::TimeSeries& series, const Dataset& dataset, json metadata, std::ostream& log) {
    auto report = eval::evaluate(model, series, dataset.test.labels);
    report.metadata = std::move(metadata);
    write_json(dir / ("report_" + tag + ".json"), report.to_json(), log);
    const auto trace = detector::detect_series(model, series);
    const auto names = channel_names(dataset.schema);
    write_text(dir / ("trace_" + tag + ".csv"), log, [&](std::ostream& out) {
        detector::write_trace_csv(out, trace, series.timestamps, model.threshold, names);
    });
}

}  // namespace

Dataset resolve_dataset(const ExperimentConfig& cfg) {
    Dataset d;
    if (cfg.simulator) {
        const auto& src = *cfg.simulator;
        auto plant = src.plant;
        d.schema = plant.schema();
        plant.seed = src.train_seed;
        d.train = sim::simulate_normal(plant, src.train_steps);
        d.scenarios = src.scenarios;
        if (src.random_scenarios) {
            const auto& r = *src.random_scenarios;
            auto generated = sim::actuator_scenarios(plant, src.test_steps, r.count, r.min_duration,
                                                     r.max_duration, r.gap, r.seed);
            d.scenarios.insert(d.scenarios.end(), generated.begin(), generated.end());
        }
        plant.seed = src.test_seed;
        d.test = sim::inject_anomaly(plant, d.scenarios, src.test_steps);
        d.period_steps = static_cast<std::size_t>(
            std::llround(plant.demand.period_h * 3600.0 / plant.sampling_interval_s));
    } else {
        require(cfg.csv.has_value(), ErrorKind::invalid_config, "config has no dataset source");
        d.schema = data::load_schema(cfg.csv->schema);
        data::LoadWarnings warnings;
        d.train = data::load_csv(cfg.csv->train, d.schema, &warnings);
        d.test = data::load_csv(cfg.csv->test, d.schema, &warnings);
        d.period_steps = static_cast<std::size_t>(std::llround(86400.0 / d.schema.sampling_interval_s));
    }
    require(!d.train.has_attacks(), ErrorKind::invalid_input, "training series contains attack labels");
    require(d.test.labeled(), ErrorKind::invalid_input, "test series has no ATT_FLAG labels");
    return d;
}

std::size_t replay_offset(const ExperimentConfig& cfg, const Dataset& dataset) {
    const auto offset = cfg.attack.replay_offset == 0 ? dataset.period_steps : cfg.attack.replay_offset;
    return std::max<std::size_t>(offset, 1);
}

void cmd_simulate(const ExperimentConfig& cfg, std::ostream& log) {
    require(cfg.simulator.has_value(), ErrorKind::invalid_config, "simulate needs dataset.simulator");
    const auto dataset = resolve_dataset(cfg);
    const auto dir = prepare_run_dir(cfg);
    data::save_csv(dataset.train, dataset.schema, dir / "train.csv");
    log << "wrote " << (dir / "train.csv").string() << '\n';
    data::save_csv(dataset.test, dataset.schema, dir / "test.csv");
    log << "wrote " << (dir / "test.csv").string() << '\n';
    data::save_schema(dataset.schema, dir / "schema.json");
    log << "wrote " << (dir / "schema.json").string() << '\n';
    auto scenarios = json::array();
    for (const auto& s : dataset.scenarios) scenarios.push_back(sim::scenario_to_json(s));
    write_json(dir / "scenarios.json", scenarios, log);
    write_json(dir / "plant.json", sim::plant_to_json(cfg.simulator->plant), log);
}

void cmd_train_detector(const ExperimentConfig& cfg, std::ostream& log) {
    const auto dataset = resolve_dataset(cfg);
    const auto dir = prepare_run_dir(cfg);
    const auto spec = detector_spec(cfg.detector, dataset.schema.size());
    nn::TrainLog train_log;
    const auto model = detector::build_detector(spec, dataset.train, cfg.detector.train, cfg.detector.window,
                                                &train_log);
    io::save_detector(model, dir / "detector.bin");
    log << "wrote " << (dir / "detector.bin").string() << '\n';
    write_text(dir / "train_log.csv", log, [&](std::ostream& out) { write_train_log(out, train_log); });
    write_json(dir / "detector.json",
               {{"kind", nn::to_string(spec.kind)},
                {"channels", spec.channels},
                {"steps", spec.steps},
                {"widths", spec.widths},
                {"window", model.window},
                {"threshold", model.threshold},
                {"epochs", train_log.epochs.size()},
                {"best_epoch", train_log.best_epoch},
                {"best_val_loss", train_log.best_val_loss},
                {"train", train_config_to_json(cfg.detector.train)}},
               log);
}

void cmd_attack(const ExperimentConfig& cfg, std::ostream& log) {
    const Session s(cfg);
    const auto dir = prepare_run_dir(cfg);
    const auto kind = cfg.attack.kind;
    const auto name = std::string(eval::to_string(kind));
    const auto constraint = resolve_constraint(cfg, s, kind);

    json meta{{"attack", name},
              {"constraint", attacks::to_string(constraint.mode)},
              {"read_set", names_of(s.dataset.schema, constraint.read_set)},
              {"write_set", names_of(s.dataset.schema, constraint.write_set)},
              {"data_fraction", constraint.data_fraction}};

    std::optional<attacks::GeneratorTraining> trained;
    if (kind == eval::AttackKind::learning) {
        trained = attacks::train_generator(s.dataset.train, s.dataset.schema, constraint, cfg.attack.generator,
                                           cfg.attack.sample_mode, cfg.seed);
        io::save_generator(trained->model, dir / "generator.bin");
        log << "wrote " << (dir / "generator.bin").string() << '\n';
        write_text(dir / "generator_log.csv", log,
                   [&](std::ostream& out) { write_train_log(out, trained->log); });
        meta["generator_rows"] = trained->rows_used;
        meta["insufficient_data"] = trained->insufficient_data;
        if (trained->insufficient_data)
            log << "warning: generator trained on fewer than 10 rows per read channel\n";
    }
    if (kind == eval::AttackKind::replay) {
        const auto replay = attacks::replay_attack(s.dataset.test, s.ctx.replay_offset, constraint.write_set);
        meta["replay_offset"] = s.ctx.replay_offset;
        meta["contaminated_steps"] = replay.contaminated_steps;
        if (replay.contaminated_steps > 0)
            log << "warning: " << replay.contaminated_steps << " replay sources carry attack labels\n";
    }

    const auto outcome =
        eval::run_attack(s.ctx, kind, constraint, cfg.seed, trained ? &trained->model : nullptr);
    data::save_csv(outcome.run.series, s.dataset.schema, dir / ("concealed_" + name + ".csv"));
    log << "wrote " << (dir / ("concealed_" + name + ".csv")).string() << '\n';
    write_text(dir / ("changes_" + name + ".csv"), log, [&](std::ostream& out) {
        attacks::write_change_log(out, outcome.run.changes, s.dataset.schema);
    });
    write_text(dir / ("steps_" + name + ".csv"), log,
               [&](std::ostream& out) { write_steps_csv(out, outcome.run.steps); });

    std::size_t solved = 0;
    for (const auto& step : outcome.run.steps) solved += step.solved;
    meta["original_recall"] = optional_json(eval::attack_recall(s.model, s.dataset.test, s.dataset.test.labels));
    meta["recall"] = optional_json(outcome.recall);
    meta["attacked_steps"] = outcome.run.steps.size();
    meta["changed_values"] = outcome.run.changes.records.size();
    if (kind == eval::AttackKind::iterative) meta["solved_steps"] = solved;
    meta["timing"] = timing_json(outcome.timing);
    write_json(dir / ("attack_" + name + ".json"), meta, log);
}

void cmd_evaluate(const ExperimentConfig& cfg, std::ostream& log) {
    const Session s(cfg);
    const auto dir = prepare_run_dir(cfg);
    evaluate_series(dir, "original", s.model, s.dataset.test, s.dataset, {{"attack", "none"}}, log);
    for (auto kind : cfg.evaluation.attacks) {
        const auto constraint = resolve_constraint(cfg, s, kind);
        // A generator saved by `attack` under this config is the one retraining would produce.
        std::optional<attacks::GeneratorModel> stored;
        if (kind == eval::AttackKind::learning && fs::exists(dir / "generator.bin")) {
            stored = io::load_generator(dir / "generator.bin");
            if (stored->read_set != constraint.read_set) stored.reset();
        }
        const auto outcome = eval::run_attack(s.ctx, kind, constraint, cfg.seed, stored ? &*stored : nullptr);
        json meta{{"attack", eval::to_string(kind)},
                  {"constraint", attacks::to_string(constraint.mode)},
                  {"write_set", names_of(s.dataset.schema, constraint.write_set)},
                  {"data_fraction", constraint.data_fraction}};
        evaluate_series(dir, std::string(eval::to_string(kind)), s.model, outcome.run.series, s.dataset,
                        std::move(meta), log);
    }
}

void cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
    const Session s(cfg);
    const auto dir = prepare_run_dir(cfg);
    const auto& ev = cfg.evaluation;
    const std::size_t n = s.channels();

    eval::SweepConfig sweep;
    sweep.attacks = ev.attacks;
    sweep.k_values = ev.k_values.empty() ? eval::default_k_values(n) : ev.k_values;
    sweep.selection = ev.selection;
    sweep.full_reach = ev.full_reach;
    sweep.repetitions = ev.repetitions;
    sweep.seed = cfg.seed;
    json selections = json::object();
    if (sweep.selection == eval::Selection::best_case) {
        for (auto kind : sweep.attacks) {
            if (kind == eval::AttackKind::replay) continue;
            sweep.change_counts.emplace_back(kind, unconstrained_counts(s, kind, cfg.seed));
        }
        const auto found = std::find_if(sweep.change_counts.begin(), sweep.change_counts.end(),
                                        [](const auto& p) { return p.first == eval::AttackKind::learning; });
        sweep.fallback_counts =
            found != sweep.change_counts.end() ? found->second : unconstrained_counts(s, eval::AttackKind::learning, cfg.seed);
        for (auto kind : sweep.attacks) {
            const auto& counts = [&]() -> const std::vector<std::size_t>& {
                for (const auto& [k, c] : sweep.change_counts)
                    if (k == kind) return c;
                return sweep.fallback_counts;
            }();
            json per_k = json::object();
            for (auto k : sweep.k_values)
                per_k[std::to_string(k)] = names_of(s.dataset.schema, attacks::select_best_case_features(counts, k));
            selections[std::string(eval::to_string(kind))] = per_k;
        }
    }

    const auto cells = eval::sweep_constraints(s.ctx, sweep);
    write_text(dir / "sweep.csv", log, [&](std::ostream& out) { eval::write_sweep_csv(out, cells); });

    json summary{{"original_recall",
                  optional_json(eval::attack_recall(s.model, s.dataset.test, s.dataset.test.labels))},
                 {"selection", eval::to_string(sweep.selection)},
                 {"full_reach", sweep.full_reach},
                 {"k_values", sweep.k_values},
                 {"cells", eval::summarize_sweep(cells)}};
    if (!selections.empty()) summary["best_case_features"] = selections;

    if (!ev.data_fractions.empty()) {
        const auto fractions = eval::sweep_data_fraction(s.ctx, ev.data_fractions, ev.fraction_repetitions, cfg.seed);
        write_text(dir / "fraction_sweep.csv", log,
                   [&](std::ostream& out) { eval::write_fraction_csv(out, fractions); });
        summary["data_fraction_cells"] = eval::summarize_sweep(fractions);
    }
    write_json(dir / "sweep_summary.json", summary, log);
}

void cmd_realtime(const ExperimentConfig& cfg, std::ostream& log) {
    const Session s(cfg);
    const auto dir = prepare_run_dir(cfg);
    const auto& rt = cfg.realtime;
    const auto& test = s.dataset.test;
    const std::size_t n = s.channels();
    const std::optional<eval::AttackKind> kind =
        rt.identity ? std::nullopt : std::optional(rt.attack.value_or(cfg.attack.kind));
    const std::string name = kind ? std::string(eval::to_string(*kind)) : "none";

    attacks::AttackConstraint constraint = attacks::AttackConstraint::unconstrained(n);
    if (kind) constraint = resolve_constraint(cfg, s, *kind);

    std::optional<attacks::GeneratorModel> generator;
    std::optional<attacks::MutationGrid> grid;
    std::unique_ptr<attacks::DetectorOracle> oracle;
    if (kind == eval::AttackKind::learning) {
        const auto path = cfg.run_dir() / "generator.bin";
        require(fs::exists(path), ErrorKind::missing_artifact,
                path.string() + " not found; run attack with the learning attack first");
        generator = io::load_generator(path);
        require(generator->read_set == constraint.read_set, ErrorKind::invalid_constraint,
                "stored generator was trained on a different read set");
    } else if (kind == eval::AttackKind::iterative) {
        grid = eval::attacker_grid(s.ctx, constraint, cfg.seed);
        oracle = std::make_unique<attacks::DetectorOracle>(s.model);
    } else if (kind == eval::AttackKind::replay) {
        // Validates the offset against every attacked step before streaming.
        attacks::replay_attack(test, s.ctx.replay_offset, constraint.write_set);
    }

    const std::size_t steps = rt.max_steps == 0 ? test.rows() : std::min(rt.max_steps, test.rows());
    const std::size_t lookback = s.model.lookback();
    detector::StreamingDetector stream(s.model);
    std::vector<double> emitted;  // streamed rows after the attack, steps x n
    emitted.reserve(steps * n);
    std::vector<double> attack_seconds;
    std::vector<double> step_seconds;
    std::vector<data::Label> predicted;
    std::size_t misses = 0;
    const auto deadline = std::chrono::duration<double>(rt.sampling_interval_s);
    const auto start_clock = Clock::now();

    write_text(dir / ("realtime_" + name + ".csv"), log, [&](std::ostream& out) {
        out << "step,timestamp,attacked,attack_latency_s,latency_s,deadline_miss,epsilon,epsilon_smoothed,label\n";
        std::vector<double> row(n);
        for (std::size_t t = 0; t < steps; ++t) {
            if (!rt.max_speed)
                std::this_thread::sleep_until(start_clock + std::chrono::duration_cast<Clock::duration>(deadline * t));
            const auto original = test.row(t);
            const bool attacked = kind && test.labels[t] == positive;
            const auto begin = Clock::now();
            std::copy(original.begin(), original.end(), row.begin());
            if (attacked) {
                switch (*kind) {
                    case eval::AttackKind::replay: {
                        const auto src = test.row(t - s.ctx.replay_offset);
                        for (auto c : constraint.write_set) row[c] = src[c];
                        break;
                    }
                    case eval::AttackKind::iterative: {
                        if (lookback > 0) {
                            const std::size_t first = t >= lookback ? t - lookback : 0;
                            oracle->set_history(
                                std::span<const double>(emitted).subspan(first * n, (t - first) * n));
                        }
                        row = attacks::iterative_conceal(*oracle, original, constraint, s.ctx.budget, *grid).sample;
                        break;
                    }
                    case eval::AttackKind::learning:
                        row = attacks::conceal_learning(*generator, original, constraint, s.dataset.schema);
                        break;
                }
            }
            const auto concealed = Clock::now();
            const auto result = stream.push(row);
            const auto end = Clock::now();
            emitted.insert(emitted.end(), row.begin(), row.end());

            const double attack_s = std::chrono::duration<double>(concealed - begin).count();
            const double step_s = std::chrono::duration<double>(end - begin).count();
            const bool miss = step_s > rt.sampling_interval_s;
            misses += miss;
            step_seconds.push_back(step_s);
            if (attacked) attack_seconds.push_back(attack_s);
            predicted.push_back(result.label);
            out << t << ',' << test.timestamps[t] << ',' << (attacked ? 1 : 0) << ',' << fmt(attacked ? attack_s : 0.0)
                << ',' << fmt(step_s) << ',' << (miss ? 1 : 0) << ',' << fmt(result.error.epsilon) << ','
                << fmt(result.smoothed) << ',' << static_cast<int>(result.label) << '\n';
        }
    });

    const std::span<const data::Label> truth(test.labels.data(), steps);
    json report{{"attack", name},
                {"steps", steps},
                {"attacked_steps", attack_seconds.size()},
                {"sampling_interval_s", rt.sampling_interval_s},
                {"max_speed", rt.max_speed},
                {"deadline_misses", misses},
                {"step_latency", timing_json(eval::timing_stats(step_seconds))},
                {"recall", optional_json(eval::recall_on_attacks(predicted, truth))}};
    report["attack_latency"] = attack_seconds.empty() ? json(nullptr) : timing_json(eval::timing_stats(attack_seconds));
    if (kind) report["write_set"] = names_of(s.dataset.schema, constraint.write_set);
    write_json(dir / ("realtime_report_" + name + ".json"), report, log);
}

const std::vector<std::string_view>& command_names() {
    static const std::vector<std::string_view> names{"simulate", "train-detector", "attack",
                                                     "evaluate", "sweep",          "realtime"};
    return names;
}

void run_command(std::string_view name, const ExperimentConfig& cfg, std::ostream& log) {
    if (name == "simulate") return cmd_simulate(cfg, log);
    if (name == "train-detector") return cmd_train_detector(cfg, log);
    if (name == "attack") return cmd_attack(cfg, log);
    if (name == "evaluate") return cmd_evaluate(cfg, log);
    if (name == "sweep") return cmd_sweep(cfg, log);
    if (name == "realtime") return cmd_realtime(cfg, log);
    fail(ErrorKind::invalid_config, "unknown command '" + std::string(name) + "'");
}

}  // namespace conceal::cli
