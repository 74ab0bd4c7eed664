#include "conceal/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <map>
#include <ostream>
#include <set>

#include "conceal/error.hpp"

namespace conceal::eval {

namespace {

constexpr auto positive = data::Label::under_attack;

std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

nlohmann::json optional_json(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string optional_csv(const std::optional<double>& v) {
    return v ? data::format_double(*v) : std::string();
}

const std::vector<std::size_t>& counts_for(const SweepConfig& cfg, AttackKind kind) {
    for (const auto& [k, counts] : cfg.change_counts)
        if (k == kind) return counts;
    return cfg.fallback_counts;
}

}  // namespace

Confusion confusion(std::span<const data::Label> predicted, std::span<const data::Label> truth) {
    require(predicted.size() == truth.size(), ErrorKind::invalid_input,
            "predicted and truth labels differ in length (" + std::to_string(predicted.size()) +
                " vs " + std::to_string(truth.size()) + ")");
    Confusion c;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        const bool p = predicted[t] == positive;
        const bool a = truth[t] == positive;
        if (p && a) ++c.tp;
        else if (p) ++c.fp;
        else if (a) ++c.fn;
        else ++c.tn;
    }
    return c;
}

Metrics metrics(const Confusion& c) {
    return {ratio(c.tp, c.tp + c.fn), ratio(c.tp, c.tp + c.fp), ratio(c.tp + c.tn, c.total()),
            ratio(c.fp, c.fp + c.tn)};
}

std::optional<double> recall_on_attacks(std::span<const data::Label> predicted,
                                        std::span<const data::Label> truth) {
    return metrics(confusion(predicted, truth)).recall;
}

std::optional<double> attack_recall(const detector::DetectorModel& model,
                                    const data::TimeSeries& concealed,
                                    std::span<const data::Label> truth) {
    require(concealed.rows() == truth.size(), ErrorKind::invalid_input,
            "concealed series and truth labels differ in length");
    return recall_on_attacks(detector::detect_series(model, concealed).labels, truth);
}

std::vector<Window> attack_windows(std::span<const data::Label> truth) {
    std::vector<Window> out;
    for (std::size_t t = 0; t < truth.size(); ++t) {
        if (truth[t] != positive) continue;
        if (out.empty() || out.back().end != t) out.push_back({t, t + 1});
        else out.back().end = t + 1;
    }
    return out;
}

std::vector<bool> windows_detected(std::span<const data::Label> predicted, std::span<const Window> windows) {
    std::vector<bool> out;
    for (const auto& w : windows) {
        require(w.end <= predicted.size(), ErrorKind::invalid_input, "window beyond the label sequence");
        out.push_back(std::any_of(predicted.begin() + static_cast<std::ptrdiff_t>(w.start),
                                  predicted.begin() + static_cast<std::ptrdiff_t>(w.end),
                                  [](data::Label l) { return l == positive; }));
    }
    return out;
}

TimingStats timing_stats(std::span<const double> seconds) {
    require(!seconds.empty(), ErrorKind::invalid_input, "no timing samples");
    TimingStats s;
    s.samples = seconds.size();
    double acc = 0.0;
    for (double v : seconds) acc += v;
    s.mean_s = acc / static_cast<double>(seconds.size());
    if (seconds.size() > 1) {
        double sq = 0.0;
        for (double v : seconds) sq += (v - s.mean_s) * (v - s.mean_s);
        s.std_s = std::sqrt(sq / static_cast<double>(seconds.size() - 1));
    }
    return s;
}

TimingStats measure_latency(const std::function<void(std::size_t)>& attack, std::size_t samples,
                            std::size_t warmup) {
    require(samples >= 1, ErrorKind::invalid_input, "latency needs at least one sample");
    for (std::size_t i = 0; i < warmup; ++i) attack(i % samples);
    std::vector<double> seconds(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        const auto start = std::chrono::steady_clock::now();
        attack(i);
        seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return timing_stats(seconds);
}

nlohmann::json EvalReport::to_json() const {
    const auto m = overall;
    nlohmann::json j;
    j["counts"] = {{"tp", counts.tp}, {"fp", counts.fp}, {"tn", counts.tn}, {"fn", counts.fn}};
    j["metrics"] = {{"recall", optional_json(m.recall)},
                    {"precision", optional_json(m.precision)},
                    {"accuracy", optional_json(m.accuracy)},
                    {"fpr", optional_json(m.fpr)}};
    j["attack_recall"] = optional_json(attack_recall);
    auto scenarios = nlohmann::json::array();
    std::size_t hits = 0;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        scenarios.push_back({{"start", windows[i].start}, {"end", windows[i].end}, {"detected", detected[i]}});
        hits += detected[i];
    }
    j["scenarios"] = scenarios;
    j["scenario_recall"] = optional_json(ratio(hits, windows.size()));
    j["timing"] = timing ? nlohmann::json{{"mean_s", timing->mean_s},
                                          {"std_s", timing->std_s},
                                          {"samples", timing->samples}}
                         : nlohmann::json(nullptr);
    j["metadata"] = metadata;
    return j;
}

EvalReport evaluate(const detector::DetectorModel& model, const data::TimeSeries& series,
                    std::span<const data::Label> truth) {
    require(series.rows() == truth.size(), ErrorKind::invalid_input,
            "series and truth labels differ in length");
    const auto trace = detector::detect_series(model, series);
    EvalReport r;
    r.counts = confusion(trace.labels, truth);
    r.overall = metrics(r.counts);
    r.attack_recall = r.overall.recall;
    r.windows = attack_windows(truth);
    r.detected = windows_detected(trace.labels, r.windows);
    return r;
}

std::string_view to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::replay: return "replay";
        case AttackKind::iterative: return "iterative";
        case AttackKind::learning: return "learning";
    }
    return "unknown";
}

AttackKind parse_attack_kind(std::string_view name) {
    for (auto k : {AttackKind::replay, AttackKind::iterative, AttackKind::learning})
        if (to_string(k) == name) return k;
    fail(ErrorKind::invalid_config, "unknown attack '" + std::string(name) + "'");
}

std::string_view to_string(Selection s) {
    return s == Selection::best_case ? "best-case" : "topology";
}

Selection parse_selection(std::string_view name) {
    if (name == "best-case") return Selection::best_case;
    if (name == "topology") return Selection::topology;
    fail(ErrorKind::invalid_config, "unknown selection '" + std::string(name) + "'");
}

void AttackContext::validate() const {
    require(model && schema && normal && target, ErrorKind::invalid_input, "attack context is incomplete");
    require(target->labeled(), ErrorKind::invalid_input, "attack target needs ground-truth labels");
    require(target->channels == schema->size() && normal->channels == schema->size(),
            ErrorKind::schema, "series width does not match schema");
}

attacks::MutationGrid attacker_grid(const AttackContext& ctx, const attacks::AttackConstraint& constraint,
                                    std::uint64_t sample_seed) {
    const auto eavesdropped =
        data::subsample_fraction(*ctx.normal, constraint.data_fraction, ctx.sample_mode, sample_seed);
    return attacks::MutationGrid::build(*ctx.schema, data::fit_normalizer(eavesdropped), ctx.budget.grid);
}

AttackOutcome run_attack(const AttackContext& ctx, AttackKind kind,
                         const attacks::AttackConstraint& constraint, std::uint64_t sample_seed,
                         const attacks::GeneratorModel* generator) {
    ctx.validate();
    constraint.validate(ctx.schema->size());
    AttackOutcome out;
    switch (kind) {
        case AttackKind::replay: {
            auto r = attacks::replay_attack(*ctx.target, ctx.replay_offset, constraint.write_set);
            out.run.series = std::move(r.series);
            out.run.changes = std::move(r.changes);
            // Copy cost only; timed per attacked row.
            std::vector<double> row(ctx.schema->size());
            for (std::size_t t = 0; t < ctx.target->rows(); ++t) {
                if (ctx.target->labels[t] != positive) continue;
                const auto start = std::chrono::steady_clock::now();
                const auto src = ctx.target->row(t - ctx.replay_offset);
                for (auto c : constraint.write_set) row[c] = src[c];
                const auto stop = std::chrono::steady_clock::now();
                out.run.steps.push_back({t, false, 0, 0.0, 0.0, std::chrono::duration<double>(stop - start).count()});
            }
            break;
        }
        case AttackKind::iterative: {
            if (constraint.write_set.empty()) {
                out.run.series = *ctx.target;
                break;
            }
            out.run = attacks::run_iterative(*ctx.model, *ctx.target, constraint, ctx.budget,
                                             attacker_grid(ctx, constraint, sample_seed));
            break;
        }
        case AttackKind::learning: {
            if (generator) {
                require(generator->read_set == constraint.read_set, ErrorKind::invalid_constraint,
                        "supplied generator was trained on a different read set");
                out.run = attacks::run_learning(*generator, *ctx.target, constraint, *ctx.schema);
            } else {
                const auto trained = attacks::train_generator(*ctx.normal, *ctx.schema, constraint,
                                                              ctx.generator_cfg, ctx.sample_mode, sample_seed);
                out.run = attacks::run_learning(trained.model, *ctx.target, constraint, *ctx.schema);
            }
            break;
        }
    }
    out.recall = attack_recall(*ctx.model, out.run.series, ctx.target->labels);
    std::vector<double> seconds;
    for (const auto& s : out.run.steps) seconds.push_back(s.seconds);
    if (!seconds.empty()) out.timing = timing_stats(seconds);
    return out;
}

std::vector<SweepCell> sweep_constraints(const AttackContext& ctx, const SweepConfig& cfg) {
    ctx.validate();
    const std::size_t n = ctx.schema->size();
    require(cfg.repetitions >= 1, ErrorKind::invalid_config, "sweep needs at least one repetition");
    for (auto k : cfg.k_values)
        require(k >= 1 && k <= n, ErrorKind::invalid_k,
                "k = " + std::to_string(k) + " outside 1.." + std::to_string(n));

    struct Plan {
        SweepCell cell;
        attacks::AttackConstraint constraint;
    };
    std::vector<Plan> plans;
    for (auto kind : cfg.attacks) {
        std::vector<std::pair<attacks::AttackConstraint, std::string>> constraints;
        if (cfg.selection == Selection::topology) {
            for (const auto& plc : ctx.schema->plcs())
                constraints.emplace_back(attacks::topology_features(*ctx.schema, plc, cfg.full_reach), plc);
        } else {
            const auto& counts = counts_for(cfg, kind);
            require(counts.size() == n, ErrorKind::invalid_input,
                    "best-case selection for " + std::string(to_string(kind)) +
                        " needs change counts from an unconstrained run");
            for (auto k : cfg.k_values) {
                auto write = attacks::select_best_case_features(counts, k);
                auto c = k == n ? attacks::AttackConstraint::unconstrained(n)
                         : cfg.full_reach ? attacks::AttackConstraint::full(write)
                                          : attacks::AttackConstraint::partial(n, write);
                constraints.emplace_back(std::move(c), std::string());
            }
        }
        for (const auto& [constraint, plc] : constraints)
            for (std::size_t r = 0; r < cfg.repetitions; ++r) {
                SweepCell cell;
                cell.attack = kind;
                cell.k = constraint.write_set.size();
                cell.plc = plc;
                cell.repetition = r;
                plans.push_back({cell, constraint});
            }
    }

    // Generators depend only on the read set and repetition, so cells sharing
    // them reuse one trained model.
    std::map<std::pair<std::vector<std::size_t>, std::size_t>, attacks::GeneratorModel> generators;
    for (const auto& plan : plans) {
        if (plan.cell.attack != AttackKind::learning) continue;
        const auto key = std::make_pair(plan.constraint.read_set, plan.cell.repetition);
        if (generators.count(key)) continue;
        generators.emplace(key, attacks::train_generator(*ctx.normal, *ctx.schema, plan.constraint,
                                                         ctx.generator_cfg, ctx.sample_mode,
                                                         cfg.seed + plan.cell.repetition)
                                    .model);
    }

    std::vector<SweepCell> cells(plans.size());
    std::exception_ptr error;
    const auto count = static_cast<std::ptrdiff_t>(plans.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            const auto& plan = plans[static_cast<std::size_t>(i)];
            const auto found = generators.find({plan.constraint.read_set, plan.cell.repetition});
            const auto outcome = run_attack(ctx, plan.cell.attack, plan.constraint,
                                            cfg.seed + plan.cell.repetition,
                                            found == generators.end() ? nullptr : &found->second);
            auto cell = plan.cell;
            cell.recall = outcome.recall;
            cell.mean_time_s = outcome.timing.mean_s;
            cell.std_time_s = outcome.timing.std_s;
            cells[static_cast<std::size_t>(i)] = cell;
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return cells;
}

std::vector<SweepCell> sweep_data_fraction(const AttackContext& ctx, std::span<const double> fractions,
                                           std::size_t repetitions, std::uint64_t seed) {
    ctx.validate();
    require(repetitions >= 1, ErrorKind::invalid_config, "sweep needs at least one repetition");
    const std::size_t n = ctx.schema->size();
    std::vector<SweepCell> cells;
    for (double p : fractions)
        for (std::size_t r = 0; r < repetitions; ++r) {
            SweepCell cell;
            cell.attack = AttackKind::learning;
            cell.k = n;
            cell.data_fraction = p;
            cell.repetition = r;
            cells.push_back(cell);
        }
    std::exception_ptr error;
    const auto count = static_cast<std::ptrdiff_t>(cells.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            auto& cell = cells[static_cast<std::size_t>(i)];
            auto local = ctx;
            local.generator_cfg.seed = ctx.generator_cfg.seed + cell.repetition;
            const auto outcome = run_attack(local, AttackKind::learning,
                                            attacks::AttackConstraint::unconstrained(n, cell.data_fraction),
                                            seed + cell.repetition);
            cell.recall = outcome.recall;
            cell.mean_time_s = outcome.timing.mean_s;
            cell.std_time_s = outcome.timing.std_s;
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return cells;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepCell> cells) {
    out << "attack,k,repetition,recall,mean_time_s,std_time_s\n";
    for (const auto& c : cells)
        out << to_string(c.attack) << ',' << c.k << ',' << c.repetition << ',' << optional_csv(c.recall)
            << ',' << data::format_double(c.mean_time_s) << ',' << data::format_double(c.std_time_s) << '\n';
}

void write_fraction_csv(std::ostream& out, std::span<const SweepCell> cells) {
    out << "attack,data_fraction,repetition,recall,mean_time_s,std_time_s\n";
    for (const auto& c : cells)
        out << to_string(c.attack) << ',' << data::format_double(c.data_fraction) << ',' << c.repetition
            << ',' << optional_csv(c.recall) << ',' << data::format_double(c.mean_time_s) << ','
            << data::format_double(c.std_time_s) << '\n';
}

nlohmann::json summarize_sweep(std::span<const SweepCell> cells) {
    using Key = std::tuple<std::string, std::size_t, std::string, double>;
    std::map<Key, std::vector<double>> groups;
    std::vector<Key> order;
    for (const auto& c : cells) {
        Key key{std::string(to_string(c.attack)), c.k, c.plc, c.data_fraction};
        if (!groups.count(key)) order.push_back(key);
        auto& g = groups[key];
        if (c.recall) g.push_back(*c.recall);
    }
    auto out = nlohmann::json::array();
    for (const auto& key : order) {
        const auto& values = groups[key];
        nlohmann::json row{{"attack", std::get<0>(key)}, {"k", std::get<1>(key)},
                           {"data_fraction", std::get<3>(key)}, {"repetitions", values.size()}};
        if (!std::get<2>(key).empty()) row["plc"] = std::get<2>(key);
        if (values.empty()) {
            row["recall_mean"] = nullptr;
            row["recall_std"] = nullptr;
        } else {
            const auto stats = timing_stats(values);
            row["recall_mean"] = stats.mean_s;
            row["recall_std"] = stats.std_s;
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<std::size_t> default_k_values(std::size_t channels) {
    std::set<std::size_t, std::greater<>> ks{channels};
    const std::size_t step = channels >= 60 ? 10 : 5;
    for (std::size_t k = (channels - 1) / step * step; k >= 10 && k > 0; k -= step) ks.insert(k);
    if (step == 10 && channels > 15) ks.insert(15);
    for (std::size_t k = 2; k <= std::min<std::size_t>(9, channels); ++k) ks.insert(k);
    if (channels == 1) ks.insert(1);
    return {ks.begin(), ks.end()};
}

}  // namespace conceal::eval
