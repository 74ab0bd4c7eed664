// End-to-end acceptance checks. Prints one PASS / FAIL / SKIP line per
// criterion and exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "conceal/attacks.hpp"
#include "conceal/commands.hpp"
#include "conceal/config.hpp"
#include "conceal/detector.hpp"
#include "conceal/error.hpp"
#include "conceal/eval.hpp"
#include "conceal/process_sim.hpp"
#include "conceal/random.hpp"
#include "support/oracles.hpp"

using namespace conceal;
using eval::AttackKind;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Verdict& v) {
    std::printf("%s [%d] %s: %s\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.detail.c_str());
    std::fflush(stdout);
    failures += v.pass ? 0 : 1;
}

void skip(int id, const std::string& name, const std::string& why) {
    std::printf("SKIP [%d] %s: %s\n", id, name.c_str(), why.c_str());
    std::fflush(stdout);
}

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string num(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

std::string num(const std::optional<double>& v) { return v ? num(*v) : std::string("n/a"); }

/// Runs `check`, turning any escaped exception into a failed verdict.
void criterion(int id, const std::string& name, const std::function<Verdict()>& check) {
    try {
        report(id, name, check());
    } catch (const std::exception& e) {
        report(id, name, {false, std::string("exception: ") + e.what()});
    }
}

// ---------------------------------------------------------------- benchmark

constexpr std::size_t kTrainSteps = 10000;
constexpr std::size_t kTestSteps = 3000;
constexpr std::size_t kWindow = 3;

nn::TrainConfig training(std::uint64_t seed) {
    nn::TrainConfig cfg;
    cfg.max_epochs = 500;
    cfg.batch_size = 32;
    cfg.seed = seed;
    return cfg;
}

struct Benchmark {
    sim::PlantConfig plant;
    data::SensorSchema schema;
    data::TimeSeries normal;
    data::TimeSeries held_out;
    std::vector<sim::AnomalyScenario> scenarios;
    data::TimeSeries test;
    std::size_t period = 0;
    double setup_s = 0.0;
};

Benchmark make_benchmark() {
    const auto start = Clock::now();
    Benchmark b;
    b.plant = sim::default_plant();
    b.schema = b.plant.schema();
    b.plant.seed = 1;
    b.normal = sim::simulate_normal(b.plant, kTrainSteps);
    b.plant.seed = 2;
    b.held_out = sim::simulate_normal(b.plant, kTestSteps);
    b.scenarios = sim::actuator_scenarios(b.plant, kTestSteps, 10, 40, 90, 120, 7);
    b.plant.seed = 3;
    b.test = sim::inject_anomaly(b.plant, b.scenarios, kTestSteps);
    b.period = static_cast<std::size_t>(std::llround(b.plant.demand.period_h / b.plant.step_hours()));
    b.setup_s = seconds_since(start);
    return b;
}

struct Lab {
    const Benchmark& bench;
    detector::DetectorModel detector;
    double train_s = 0.0;
    std::optional<double> original_recall;
    eval::AttackContext ctx;

    explicit Lab(const Benchmark& b) : bench(b) {
        const auto start = Clock::now();
        const auto spec =
            detector::default_network(nn::Architecture::dense_autoencoder, b.schema.size(), 11);
        detector = detector::build_detector(spec, b.normal, training(11), kWindow);
        train_s = seconds_since(start);
        original_recall = eval::attack_recall(detector, b.test, b.test.labels);
        ctx.model = &detector;
        ctx.schema = &b.schema;
        ctx.normal = &b.normal;
        ctx.target = &b.test;
        ctx.replay_offset = b.period;
        ctx.budget = {15, 200, 50};
        ctx.generator_cfg = training(12);
        ctx.validate();
    }
};

// ---------------------------------------------------------------- criteria

Verdict gradient_correctness() {
    const auto start = Clock::now();
    Rng rng(2024);
    double worst = 0.0;
    std::size_t checked = 0;
    constexpr int instances = 100;
    for (int i = 0; i < instances; ++i) {
        const std::size_t n = 2 + rng.below(7);
        nn::NetworkSpec spec;
        switch (i % 3) {
            case 0:
                spec = detector::default_network(nn::Architecture::dense_autoencoder, n, rng.next());
                break;
            case 1: spec = detector::default_network(nn::Architecture::lstm_predictor, n, rng.next()); break;
            default: spec = nn::cnn_spec(n, 2, rng.next(), {8, 16, 32}, 0.0); break;
        }
        const auto params = nn::init_params(spec);
        std::vector<double> x(spec.input_size()), target(n);
        for (auto& v : x) v = rng.uniform();
        for (auto& v : target) v = rng.uniform();
        const auto analytic = nn::backward(spec, params, x, target);
        const auto r = oracle::finite_difference_check(spec, params, x, target, analytic);
        worst = std::max(worst, r.max_rel_error);
        checked += r.checked;
    }
    const double elapsed = seconds_since(start);
    return {worst < 1e-4 && elapsed < 60.0 && checked > 0,
            "max relative error " + num(worst) + " over " + std::to_string(instances) + " instances (" +
                std::to_string(checked) + " parameters; limit 1e-4), " + num(elapsed) + " s (limit 60 s)"};
}

Verdict detector_sanity(const Lab& lab) {
    const auto start = Clock::now();
    const auto held = eval::evaluate(lab.detector, lab.bench.held_out, lab.bench.held_out.labels);
    const double elapsed = lab.bench.setup_s + lab.train_s + seconds_since(start);
    const double fpr = held.overall.fpr.value_or(1.0);
    const double recall = lab.original_recall.value_or(0.0);
    return {fpr <= 0.05 && recall >= 0.5 && elapsed < 600.0,
            "held-out FPR " + num(fpr) + " (limit 0.05), attack Recall " + num(recall) + " (limit 0.5), " +
                num(elapsed) + " s (limit 600 s)"};
}

Verdict unconstrained_replay(const Lab& lab) {
    const auto start = Clock::now();
    const auto all = attacks::AttackConstraint::unconstrained(lab.bench.schema.size());
    const auto replay = attacks::replay_attack(lab.bench.test, lab.bench.period, all.write_set);
    const auto recall = eval::attack_recall(lab.detector, replay.series, lab.bench.test.labels);
    const double elapsed = seconds_since(start);
    return {recall && *recall <= 0.05 && replay.contaminated_steps == 0 && elapsed < 60.0,
            "Recall " + num(recall) + " (limit 0.05) at offset " + std::to_string(lab.bench.period) +
                ", contaminated sources " + std::to_string(replay.contaminated_steps) + ", " + num(elapsed) +
                " s (limit 60 s)"};
}

Verdict constrained_replay(const Lab& lab, const std::vector<std::size_t>& learning_counts) {
    const std::size_t n = lab.bench.schema.size();
    eval::SweepConfig cfg;
    cfg.attacks = {AttackKind::replay};
    for (auto k : eval::default_k_values(n))
        if (2 * k <= n) cfg.k_values.push_back(k);
    cfg.fallback_counts = learning_counts;
    const auto cells = eval::sweep_constraints(lab.ctx, cfg);
    const double original = lab.original_recall.value_or(1.0);
    std::string detail = "original Recall " + num(original) + "; k:Recall";
    bool found = false;
    for (const auto& c : cells) {
        detail += " " + std::to_string(c.k) + ":" + num(c.recall);
        found = found || (c.recall && *c.recall >= original);
    }
    return {found, detail + " (need some k <= " + std::to_string(n / 2) + " with Recall >= original)"};
}

Verdict iterative_guarantees(const Lab& lab, const eval::AttackOutcome& outcome) {
    const auto& target = lab.bench.test;
    const auto constraint = attacks::AttackConstraint::unconstrained(lab.bench.schema.size());
    const auto grid = eval::attacker_grid(lab.ctx, constraint, 0);
    const attacks::DetectorOracle oracle(lab.detector);
    const auto& budget = lab.ctx.budget;
    std::size_t violations = 0, solved = 0, attacked = 0;
    std::string first;
    auto violation = [&](std::size_t step, const std::string& what) {
        if (violations++ == 0) first = "step " + std::to_string(step) + ": " + what;
    };
    std::size_t next = 0;
    for (std::size_t t = 0; t < target.rows(); ++t) {
        const auto emitted = outcome.run.series.row(t);
        const auto original = target.row(t);
        if (target.labels[t] != data::Label::under_attack) {
            if (!std::equal(emitted.begin(), emitted.end(), original.begin()))
                violation(t, "unattacked row modified");
            continue;
        }
        ++attacked;
        if (next >= outcome.run.steps.size() || outcome.run.steps[next].step != t) {
            violation(t, "missing step record");
            continue;
        }
        const auto& rec = outcome.run.steps[next++];
        const double before = oracle.query(original).epsilon;
        const double after = oracle.query(emitted).epsilon;
        if (after > before) violation(t, "epsilon rose from " + num(before) + " to " + num(after));
        if (rec.solved) {
            ++solved;
            if (!(after < oracle.threshold())) violation(t, "solved sample not below threshold");
        }
        if (rec.iterations > budget.budget) violation(t, "budget exceeded");
        for (std::size_t c = 0; c < emitted.size(); ++c)
            if (emitted[c] != original[c] &&
                std::find(grid.values[c].begin(), grid.values[c].end(), emitted[c]) == grid.values[c].end())
                violation(t, "off-grid value on channel " + std::to_string(c));
        const auto again = attacks::iterative_conceal(oracle, original, constraint, budget, grid);
        if (again.longest_stall > budget.patience) violation(t, "patience exceeded");
        if (again.iterations != rec.iterations || again.solved != rec.solved ||
            !std::equal(again.sample.begin(), again.sample.end(), emitted.begin()))
            violation(t, "rerun disagrees with the emitted sample");
    }
    if (next != outcome.run.steps.size()) violation(target.rows(), "extra step records");
    return {violations == 0 && attacked > 0,
            std::to_string(attacked) + " attacked samples checked, " + std::to_string(solved) + " solved, " +
                std::to_string(violations) + " violations" + (first.empty() ? "" : " (first: " + first + ")")};
}

Verdict iterative_effectiveness(const Lab& lab, const eval::AttackOutcome& outcome, double elapsed) {
    const double original = lab.original_recall.value_or(0.0);
    const double recall = outcome.recall.value_or(1.0);
    return {recall <= 0.5 * original && elapsed < 600.0,
            "Recall " + num(original) + " -> " + num(recall) + " (limit " + num(0.5 * original) + "), " +
                num(elapsed) + " s (limit 600 s)"};
}

Verdict learning_effectiveness(const Lab& lab, const eval::AttackOutcome& full,
                               const eval::AttackOutcome& quarter) {
    const double original = lab.original_recall.value_or(0.0);
    const double p1 = full.recall.value_or(1.0);
    const double p25 = quarter.recall.value_or(1.0);
    return {p1 <= 0.75 * original && p25 <= p1 + 0.1,
            "Recall " + num(original) + " -> " + num(p1) + " at p=1 (limit " + num(0.75 * original) + "), " +
                num(p25) + " at p=0.25 (limit " + num(p1 + 0.1) + ")"};
}

Verdict transferability(const Lab& lab, const data::TimeSeries& concealed) {
    const auto& b = lab.bench;
    const std::size_t n = b.schema.size();
    struct Target {
        std::string name;
        nn::NetworkSpec spec;
    };
    const std::vector<Target> targets{
        {"autoencoder", detector::default_network(nn::Architecture::dense_autoencoder, n, 31)},
        {"lstm", detector::default_network(nn::Architecture::lstm_predictor, n, 32)},
        {"cnn", detector::default_network(nn::Architecture::cnn_predictor, n, 33)},
    };
    bool pass = true;
    std::string detail;
    for (const auto& t : targets) {
        const auto start = Clock::now();
        const auto model = detector::build_detector(t.spec, b.normal, training(t.spec.seed), kWindow);
        const auto before = eval::attack_recall(model, b.test, b.test.labels);
        const auto after = eval::attack_recall(model, concealed, b.test.labels);
        const bool reduced = before && after && *after < *before;
        pass = pass && reduced;
        if (!detail.empty()) detail += ", ";
        detail += t.name + " " + num(before) + " -> " + num(after) + " (" + num(seconds_since(start)) + " s)";
    }
    return {pass, detail + "; each must drop strictly"};
}

Verdict realtime_budget(const Lab& lab, const attacks::GeneratorModel& gen,
                        const eval::AttackOutcome& iterative) {
    constexpr double interval_s = 1.0;
    const auto& b = lab.bench;
    const auto constraint = attacks::AttackConstraint::unconstrained(b.schema.size());
    std::vector<std::size_t> rows;
    for (std::size_t t = 0; t < b.test.rows(); ++t)
        if (b.test.labels[t] == data::Label::under_attack) rows.push_back(t);
    std::vector<double> latency;
    latency.reserve(rows.size());
    for (auto t : rows) {
        const auto start = Clock::now();
        const auto out = attacks::conceal_learning(gen, b.test.row(t), constraint, b.schema);
        latency.push_back(seconds_since(start));
        if (out.size() != b.schema.size()) return {false, "generator output width mismatch"};
    }
    const auto stats = eval::timing_stats(latency);
    const auto misses = std::count_if(latency.begin(), latency.end(), [](double s) { return s > interval_s; });
    const double iter_mean = iterative.timing.mean_s;
    return {stats.mean_s < 0.05 && misses == 0,
            "learning mean " + num(stats.mean_s * 1e3) + " ms over " + std::to_string(stats.samples) +
                " steps (limit 50 ms), deadline misses " + std::to_string(misses) + " at " + num(interval_s) +
                " s; iterative mean " + num(iter_mean) + " s (" +
                (iter_mean < 2.0 * interval_s ? "below" : "above") + " 2x interval, reported only)"};
}

Verdict oracle_equivalences() {
    const auto start = Clock::now();
    Rng rng(77);
    double worst_pct = 0.0, worst_mean = 0.0;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> values(1 + rng.below(400));
        for (auto& v : values) v = rng.uniform(-50.0, 50.0);
        for (double q : {0.0, 0.5, 0.995, 1.0, rng.uniform()}) {
            const double ref = oracle::brute_percentile(values, q);
            worst_pct = std::max(worst_pct, std::abs(detector::percentile(values, q) - ref) /
                                                std::max(1.0, std::abs(ref)));
        }
        const std::size_t w = 1 + rng.below(20);
        const auto got = detector::trailing_mean(values, w);
        const auto ref = oracle::brute_trailing_mean(values, w);
        for (std::size_t t = 0; t < ref.size(); ++t)
            worst_mean = std::max(worst_mean, std::abs(got[t] - ref[t]) / std::max(1.0, std::abs(ref[t])));
    }

    std::size_t instances = 0, mismatches = 0;
    for (std::size_t g = 1; g <= 5; ++g) {
        for (std::size_t writable = 1; writable <= 3; ++writable) {
            for (int rep = 0; rep < 40; ++rep) {
                const std::size_t n = writable + rng.below(4);
                const auto spec = nn::autoencoder_spec(n, {n + 1}, nn::Activation::tanh,
                                                       nn::Activation::sigmoid, rng.next());
                const auto params = nn::init_params(spec);
                const double threshold = rng.uniform(0.0, 0.1);
                const attacks::FunctionOracle oracle(n, threshold, [&](std::span<const double> x) {
                    const auto out = nn::forward(spec, params, x);
                    std::vector<double> r(n);
                    for (std::size_t c = 0; c < n; ++c) r[c] = x[c] - out[c];
                    return r;
                });
                attacks::MutationGrid grid;
                grid.values.resize(n);
                for (auto& vals : grid.values) {
                    vals.resize(g);
                    for (auto& v : vals) v = rng.uniform(-0.5, 1.5);
                    if (g > 1 && rng.below(3) == 0) vals[g - 1] = vals[0];  // exercise ties
                }
                std::vector<double> x(n);
                for (auto& v : x) v = rng.uniform();
                for (std::size_t c = 0; c < writable; ++c) {
                    ++instances;
                    std::size_t best = 0;
                    double best_eps = 0.0;
                    for (std::size_t i = 0; i < g; ++i) {
                        auto probe = x;
                        probe[c] = grid.values[c][i];
                        const auto out = nn::forward(spec, params, probe);
                        double acc = 0.0;
                        for (std::size_t k = 0; k < n; ++k) acc += (probe[k] - out[k]) * (probe[k] - out[k]);
                        const double eps = acc / static_cast<double>(n);
                        if (i == 0 || eps < best_eps) best = i, best_eps = eps;
                    }
                    const auto got = attacks::find_best_mutation(oracle, x, c, grid);
                    if (got.index != best || got.value != grid.values[c][best] ||
                        std::abs(got.epsilon - best_eps) > 1e-12 * std::max(1.0, best_eps))
                        ++mismatches;
                }
            }
        }
    }
    const double elapsed = seconds_since(start);
    return {worst_pct <= 1e-12 && worst_mean <= 1e-12 && mismatches == 0 && elapsed < 60.0,
            "percentile max rel diff " + num(worst_pct) + ", trailing mean max rel diff " + num(worst_mean) +
                " over 1000 lists (limit 1e-12); best mutation " + std::to_string(mismatches) + "/" +
                std::to_string(instances) + " mismatches; " + num(elapsed) + " s (limit 60 s)"};
}

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (v == nullptr || *v == '\0') return std::nullopt;
    return std::string(v);
}

Verdict public_dataset(const std::string& train, const std::string& test) {
    nlohmann::json j{{"seed", 1},
                     {"dataset",
                      {{"csv",
                        {{"train", train},
                         {"test", test},
                         {"schema", std::string(CONCEAL_SOURCE_DIR) + "/configs/batadal_schema.json"}}}}},
                     {"detector", {{"window", 3}}}};
    const auto cfg = cli::parse_config(j, ".");
    const auto dataset = cli::resolve_dataset(cfg);
    const auto spec =
        detector::default_network(nn::Architecture::dense_autoencoder, dataset.schema.size(), cfg.seed);
    const auto model = detector::build_detector(spec, dataset.train, cfg.detector.train, 3);
    const auto report = eval::evaluate(model, dataset.test, dataset.test.labels);
    const double recall = report.attack_recall.value_or(0.0);
    const double fpr = report.overall.fpr.value_or(1.0);
    const auto all = attacks::AttackConstraint::unconstrained(dataset.schema.size());
    const auto replay = attacks::replay_attack(dataset.test, cli::replay_offset(cfg, dataset), all.write_set);
    const double replay_recall =
        eval::attack_recall(model, replay.series, dataset.test.labels).value_or(1.0);
    return {std::abs(recall - 0.60) <= 0.10 && fpr <= 0.03 && replay_recall <= 0.05,
            "Recall " + num(recall) + " (0.60 +- 0.10), FPR " + num(fpr) + " (limit 0.03), replay Recall " +
                num(replay_recall) + " (limit 0.05)"};
}

}  // namespace

int main() {
    criterion(1, "gradient correctness", gradient_correctness);

    std::optional<Benchmark> bench;
    std::optional<Lab> lab;
    try {
        bench.emplace(make_benchmark());
        lab.emplace(*bench);
    } catch (const std::exception& e) {
        for (int id : {2, 3, 4, 5, 6, 7, 8, 9}) report(id, "synthetic benchmark", {false, e.what()});
    }

    if (lab) {
        const std::size_t n = bench->schema.size();
        const auto unconstrained = attacks::AttackConstraint::unconstrained(n);
        criterion(2, "detector sanity", [&] { return detector_sanity(*lab); });
        criterion(3, "unconstrained replay", [&] { return unconstrained_replay(*lab); });

        std::optional<eval::AttackOutcome> iterative;
        double iterative_s = 0.0;
        try {
            const auto start = Clock::now();
            iterative.emplace(eval::run_attack(lab->ctx, AttackKind::iterative, unconstrained));
            iterative_s = seconds_since(start);
        } catch (const std::exception& e) {
            for (int id : {5, 6, 9}) report(id, "iterative attack", {false, e.what()});
        }

        std::optional<attacks::GeneratorModel> generator;
        std::optional<eval::AttackOutcome> learning;
        try {
            generator.emplace(
                attacks::train_generator(bench->normal, bench->schema, unconstrained, lab->ctx.generator_cfg).model);
            learning.emplace(eval::run_attack(lab->ctx, AttackKind::learning, unconstrained, 0, &*generator));
        } catch (const std::exception& e) {
            for (int id : {4, 7, 8, 9}) report(id, "learning attack", {false, e.what()});
        }

        if (learning)
            criterion(4, "constrained replay degradation",
                      [&] { return constrained_replay(*lab, learning->run.changes.counts(n)); });
        if (iterative) {
            criterion(5, "iterative guarantees", [&] { return iterative_guarantees(*lab, *iterative); });
            criterion(6, "iterative effectiveness",
                      [&] { return iterative_effectiveness(*lab, *iterative, iterative_s); });
        }
        if (learning) {
            criterion(7, "learning effectiveness", [&] {
                const auto quarter = eval::run_attack(lab->ctx, AttackKind::learning,
                                                      attacks::AttackConstraint::unconstrained(n, 0.25));
                return learning_effectiveness(*lab, *learning, quarter);
            });
            criterion(8, "transferability", [&] { return transferability(*lab, learning->run.series); });
        }
        if (learning && iterative)
            criterion(9, "real-time budget", [&] { return realtime_budget(*lab, *generator, *iterative); });
    }

    criterion(10, "oracle equivalences", oracle_equivalences);

    const auto train = env("CONCEAL_BATADAL_TRAIN");
    const auto test = env("CONCEAL_BATADAL_TEST");
    if (train && test)
        criterion(11, "public dataset", [&] { return public_dataset(*train, *test); });
    else
        skip(11, "public dataset", "set CONCEAL_BATADAL_TRAIN and CONCEAL_BATADAL_TEST to the CSV paths");

    std::printf("%d criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
