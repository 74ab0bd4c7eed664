#include "conceal/attacks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "conceal/error.hpp"
#include "conceal/kernels.hpp"

namespace conceal::attacks {

namespace {

bool is_sorted_unique(std::span<const std::size_t> v) {
    return std::adjacent_find(v.begin(), v.end(), std::greater_equal<>()) == v.end();
}

std::vector<std::size_t> all_channels(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), std::size_t{0});
    return v;
}

std::vector<std::size_t> sorted_unique(std::vector<std::size_t> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

bool attacked(const data::TimeSeries& series, std::size_t t) {
    return !series.labeled() || series.labels[t] == data::Label::under_attack;
}

}  // namespace

std::string_view to_string(ConstraintMode mode) {
    switch (mode) {
        case ConstraintMode::unconstrained: return "unconstrained";
        case ConstraintMode::partial: return "partial";
        case ConstraintMode::full: return "full";
        case ConstraintMode::topology: return "topology";
    }
    return "unknown";
}

ConstraintMode parse_constraint_mode(std::string_view name) {
    for (auto m : {ConstraintMode::unconstrained, ConstraintMode::partial, ConstraintMode::full,
                   ConstraintMode::topology})
        if (to_string(m) == name) return m;
    fail(ErrorKind::invalid_config, "unknown constraint mode '" + std::string(name) + "'");
}

void AttackConstraint::validate(std::size_t channels) const {
    require(data_fraction > 0.0 && data_fraction <= 1.0, ErrorKind::invalid_constraint,
            "data fraction must lie in (0, 1]");
    require(is_sorted_unique(read_set) && is_sorted_unique(write_set), ErrorKind::invalid_constraint,
            "read and write sets must be ascending without duplicates");
    require(read_set.empty() || read_set.back() < channels, ErrorKind::invalid_constraint,
            "read set names a channel beyond the series width");
    require(std::includes(read_set.begin(), read_set.end(), write_set.begin(), write_set.end()),
            ErrorKind::invalid_constraint, "write set must be a subset of the read set");
    switch (mode) {
        case ConstraintMode::unconstrained:
            require(read_set.size() == channels && write_set.size() == channels,
                    ErrorKind::invalid_constraint, "unconstrained attacker must read and write everything");
            break;
        case ConstraintMode::partial:
            require(read_set.size() == channels, ErrorKind::invalid_constraint,
                    "partially constrained attacker must read every channel");
            break;
        case ConstraintMode::full:
            require(read_set == write_set, ErrorKind::invalid_constraint,
                    "fully constrained attacker reads exactly what it writes");
            break;
        case ConstraintMode::topology:
            require(read_set.size() == channels || read_set == write_set, ErrorKind::invalid_constraint,
                    "topology attacker reads everything or exactly its PLC");
            break;
    }
}

bool AttackConstraint::can_write(std::size_t channel) const {
    return std::binary_search(write_set.begin(), write_set.end(), channel);
}

AttackConstraint AttackConstraint::unconstrained(std::size_t channels, double data_fraction) {
    return {ConstraintMode::unconstrained, all_channels(channels), all_channels(channels), data_fraction};
}

AttackConstraint AttackConstraint::partial(std::size_t channels, std::vector<std::size_t> write,
                                           double data_fraction) {
    return {ConstraintMode::partial, all_channels(channels), sorted_unique(std::move(write)),
            data_fraction};
}

AttackConstraint AttackConstraint::full(std::vector<std::size_t> channels, double data_fraction) {
    auto set = sorted_unique(std::move(channels));
    return {ConstraintMode::full, set, set, data_fraction};
}

AttackConstraint topology_features(const data::SensorSchema& schema, std::string_view plc,
                                   bool full_reach, double data_fraction) {
    auto owned = schema.channels_of(plc);
    require(!owned.empty(), ErrorKind::invalid_id, "unknown plc '" + std::string(plc) + "'");
    AttackConstraint c;
    c.mode = ConstraintMode::topology;
    c.write_set = owned;
    c.read_set = full_reach ? owned : all_channels(schema.size());
    c.data_fraction = data_fraction;
    return c;
}

std::vector<std::size_t> select_best_case_features(std::span<const std::size_t> change_counts,
                                                   std::size_t k) {
    require(k <= change_counts.size(), ErrorKind::invalid_k,
            "k = " + std::to_string(k) + " exceeds the " + std::to_string(change_counts.size()) +
                " channels");
    auto order = all_channels(change_counts.size());
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return change_counts[a] > change_counts[b];
    });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<std::size_t> ChangeLog::counts(std::size_t channels) const {
    std::vector<std::size_t> out(channels, 0);
    for (const auto& r : records) {
        require(r.channel < channels, ErrorKind::invalid_input, "change log names an unknown channel");
        ++out[r.channel];
    }
    return out;
}

void ChangeLog::record_diff(std::size_t step, std::span<const double> before,
                            std::span<const double> after) {
    for (std::size_t c = 0; c < before.size(); ++c)
        if (before[c] != after[c]) records.push_back({step, c, before[c], after[c]});
}

void write_change_log(std::ostream& out, const ChangeLog& log, const data::SensorSchema& schema) {
    out << "step,channel,old_value,new_value\n";
    for (const auto& r : log.records)
        out << r.step << ',' << schema.channels.at(r.channel).name << ','
            << data::format_double(r.old_value) << ',' << data::format_double(r.new_value) << '\n';
}

ChangeLog read_change_log(std::istream& in, const data::SensorSchema& schema) {
    ChangeLog log;
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::parse, "change log is empty");
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string step, name, old_v, new_v;
        std::getline(ss, step, ',');
        std::getline(ss, name, ',');
        std::getline(ss, old_v, ',');
        std::getline(ss, new_v, ',');
        try {
            log.records.push_back({std::stoul(step), schema.index_of(name), std::stod(old_v),
                                   std::stod(new_v)});
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            fail(ErrorKind::parse, "change log row " + std::to_string(row) + " is malformed");
        }
    }
    return log;
}

ReplayResult replay_attack(const data::TimeSeries& series, std::size_t offset,
                           std::span<const std::size_t> write_set) {
    require(offset >= 1, ErrorKind::invalid_offset, "replay offset must be >= 1");
    for (auto c : write_set)
        require(c < series.channels, ErrorKind::invalid_constraint, "write set names an unknown channel");
    ReplayResult r;
    r.series = series;
    for (std::size_t t = 0; t < series.rows(); ++t) {
        if (!attacked(series, t)) continue;
        require(t >= offset, ErrorKind::invalid_offset,
                "replay at step " + std::to_string(t) + " reaches " + std::to_string(offset) +
                    " steps back, before the start of the recording");
        const std::size_t src = t - offset;
        if (series.labeled() && series.labels[src] == data::Label::under_attack) ++r.contaminated_steps;
        for (auto c : write_set) r.series.at(t, c) = series.at(src, c);
        r.changes.record_diff(t, series.row(t), r.series.row(t));
    }
    return r;
}

void Oracle::epsilon_batch(std::span<const double> samples, std::span<double> epsilon) const {
    const std::size_t n = channels();
    require(samples.size() == epsilon.size() * n, ErrorKind::dimension, "oracle batch has the wrong size");
    for (std::size_t i = 0; i < epsilon.size(); ++i) epsilon[i] = query(samples.subspan(i * n, n)).epsilon;
}

DetectorOracle::DetectorOracle(const detector::DetectorModel& model) : model_(model) {
    model.validate();
}

void DetectorOracle::set_history(std::span<const double> rows) {
    const std::size_t n = channels();
    require(rows.size() % n == 0, ErrorKind::dimension, "history is not a whole number of rows");
    history_.clear();
    const std::size_t m = model_.lookback();
    if (m == 0 || rows.empty()) return;
    const std::size_t count = rows.size() / n;
    std::vector<double> normalized(n);
    for (std::size_t k = 0; k < m; ++k) {
        // Pad short histories with their oldest row.
        const std::size_t src = count >= m ? count - m + k : (k + count >= m ? k + count - m : 0);
        model_.normalizer.normalize_row(rows.subspan(src * n, n), normalized);
        history_.insert(history_.end(), normalized.begin(), normalized.end());
    }
}

void DetectorOracle::fill_window(std::span<const double> sample, std::span<double> out) const {
    const std::size_t n = channels();
    const std::size_t m = model_.lookback();
    auto last = out.subspan(m * n, n);
    model_.normalizer.normalize_row(sample, last);
    if (m == 0) return;
    if (history_.empty()) {
        for (std::size_t k = 0; k < m; ++k) std::copy(last.begin(), last.end(), out.begin() + static_cast<std::ptrdiff_t>(k * n));
    } else {
        std::copy(history_.begin(), history_.end(), out.begin());
    }
}

OracleAnswer DetectorOracle::query(std::span<const double> sample) const {
    require(sample.size() == channels(), ErrorKind::dimension, "oracle sample has the wrong width");
    std::vector<double> window(model_.spec.input_size());
    fill_window(sample, window);
    auto r = detector::reconstruction_error(model_, window);
    return {std::move(r.residual), r.epsilon, model_.threshold};
}

void DetectorOracle::epsilon_batch(std::span<const double> samples, std::span<double> epsilon) const {
    const std::size_t n = channels();
    const std::size_t count = epsilon.size();
    require(samples.size() == count * n, ErrorKind::dimension, "oracle batch has the wrong size");
    const std::size_t in = model_.spec.input_size();
    std::vector<double> windows(count * in);
    std::vector<double> targets(count * n);
    for (std::size_t i = 0; i < count; ++i) {
        auto w = std::span<double>(windows).subspan(i * in, in);
        fill_window(samples.subspan(i * n, n), w);
        std::copy(w.end() - static_cast<std::ptrdiff_t>(n), w.end(),
                  targets.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    kernels::score_batch(model_.spec, model_.params, windows, targets, epsilon);
}

FunctionOracle::FunctionOracle(std::size_t channels, double threshold, ResidualFn fn)
    : channels_(channels), threshold_(threshold), fn_(std::move(fn)) {}

OracleAnswer FunctionOracle::query(std::span<const double> sample) const {
    require(sample.size() == channels_, ErrorKind::dimension, "oracle sample has the wrong width");
    OracleAnswer a;
    a.residual = fn_(sample);
    require(a.residual.size() == channels_, ErrorKind::dimension, "residual function returned the wrong width");
    double acc = 0.0;
    for (double r : a.residual) acc += r * r;
    a.epsilon = acc / static_cast<double>(channels_);
    a.threshold = threshold_;
    return a;
}

void IterativeBudget::validate() const {
    require(patience >= 1, ErrorKind::invalid_config, "patience must be >= 1");
    require(budget >= patience, ErrorKind::invalid_config, "budget must be >= patience");
    require(grid >= 2, ErrorKind::invalid_config, "mutation grid needs at least 2 values");
}

MutationGrid MutationGrid::build(const data::SensorSchema& schema, const data::Normalizer& ranges,
                                 std::size_t grid) {
    require(grid >= 2, ErrorKind::invalid_config, "mutation grid needs at least 2 values");
    require(ranges.channels() == schema.size(), ErrorKind::dimension,
            "mutation ranges do not cover the schema");
    MutationGrid g;
    g.values.resize(schema.size());
    for (std::size_t c = 0; c < schema.size(); ++c) {
        const auto& ch = schema.channels[c];
        if (ch.categorical()) {
            g.values[c] = ch.allowed;
            continue;
        }
        const double lo = ranges.min[c];
        const double hi = ranges.max[c];
        if (!(hi > lo)) {
            g.values[c] = {lo};
            continue;
        }
        g.values[c].resize(grid);
        for (std::size_t k = 0; k < grid; ++k)
            g.values[c][k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid - 1);
        g.values[c].back() = hi;
    }
    return g;
}

std::vector<double> compute_matrix_of_mutations(std::span<const double> x, std::size_t channel,
                                                const MutationGrid& grid) {
    require(channel < x.size() && channel < grid.values.size(), ErrorKind::invalid_constraint,
            "mutation channel out of range");
    const auto& values = grid.values[channel];
    std::vector<double> out;
    out.reserve(values.size() * x.size());
    for (double v : values) {
        out.insert(out.end(), x.begin(), x.end());
        out[out.size() - x.size() + channel] = v;
    }
    return out;
}

Mutation find_best_mutation(const Oracle& oracle, std::span<const double> x, std::size_t channel,
                            const MutationGrid& grid) {
    const auto candidates = compute_matrix_of_mutations(x, channel, grid);
    const std::size_t count = grid.values[channel].size();
    require(count >= 1, ErrorKind::invalid_config, "channel has no mutation candidates");
    std::vector<double> eps(count);
    oracle.epsilon_batch(candidates, eps);
    const auto best = static_cast<std::size_t>(std::min_element(eps.begin(), eps.end()) - eps.begin());
    return {grid.values[channel][best], eps[best], best};
}

IterativeResult iterative_conceal(const Oracle& oracle, std::span<const double> x,
                                  const AttackConstraint& constraint, const IterativeBudget& budget,
                                  const MutationGrid& grid) {
    budget.validate();
    const std::size_t n = oracle.channels();
    require(x.size() == n, ErrorKind::dimension, "sample width differs from the oracle");
    require(!constraint.write_set.empty(), ErrorKind::invalid_constraint, "write set is empty");
    require(constraint.write_set.back() < n, ErrorKind::invalid_constraint,
            "write set names an unknown channel");

    IterativeResult r;
    r.sample.assign(x.begin(), x.end());
    auto answer = oracle.query(r.sample);
    r.epsilon = r.initial_epsilon = answer.epsilon;
    const double threshold = oracle.threshold();
    if (r.epsilon < threshold) {
        r.solved = true;
        return r;
    }

    std::vector<bool> skipped(n, false);
    std::size_t stall = 0;
    while (r.iterations < budget.budget) {
        std::size_t pick = n;
        double worst = -1.0;
        for (auto c : constraint.write_set) {
            if (skipped[c]) continue;
            const double sq = answer.residual[c] * answer.residual[c];
            if (sq > worst) {
                worst = sq;
                pick = c;
            }
        }
        if (pick == n) break;
        ++r.iterations;
        const auto best = find_best_mutation(oracle, r.sample, pick, grid);
        if (best.epsilon < r.epsilon) {
            r.sample[pick] = best.value;
            answer = oracle.query(r.sample);
            r.epsilon = answer.epsilon;
            std::fill(skipped.begin(), skipped.end(), false);
            stall = 0;
            if (r.epsilon < threshold) {
                r.solved = true;
                break;
            }
        } else {
            skipped[pick] = true;
            ++stall;
            r.longest_stall = std::max(r.longest_stall, stall);
            if (stall >= budget.patience) break;
        }
    }
    return r;
}

AttackRun run_iterative(const detector::DetectorModel& model, const data::TimeSeries& series,
                        const AttackConstraint& constraint, const IterativeBudget& budget,
                        const MutationGrid& grid) {
    constraint.validate(series.channels);
    DetectorOracle oracle(model);
    const std::size_t n = series.channels;
    const std::size_t m = model.lookback();
    AttackRun run;
    run.series = series;
    for (std::size_t t = 0; t < series.rows(); ++t) {
        if (!attacked(series, t)) continue;
        const auto start = std::chrono::steady_clock::now();
        if (m > 0) {
            const std::size_t first = t >= m ? t - m : 0;
            oracle.set_history(std::span<const double>(run.series.values).subspan(first * n, (t - first) * n));
        }
        const auto result = iterative_conceal(oracle, series.row(t), constraint, budget, grid);
        std::copy(result.sample.begin(), result.sample.end(), run.series.row(t).begin());
        const auto stop = std::chrono::steady_clock::now();
        run.changes.record_diff(t, series.row(t), run.series.row(t));
        run.steps.push_back({t, result.solved, result.iterations, result.initial_epsilon,
                             result.epsilon, std::chrono::duration<double>(stop - start).count()});
    }
    return run;
}

void GeneratorModel::validate() const {
    spec.validate();
    require(spec.kind == nn::Architecture::dense_autoencoder && spec.steps == 1, ErrorKind::invalid_spec,
            "generator must be a single-step autoencoder");
    require(spec.channels == read_set.size() && normalizer.channels() == read_set.size() &&
                schema.size() == read_set.size(),
            ErrorKind::invalid_spec, "generator width differs from its read set");
    require(params.same_shape(nn::init_params(spec)), ErrorKind::invalid_spec,
            "generator parameters do not match the network spec");
}

nn::NetworkSpec generator_spec(std::size_t read_channels, std::uint64_t seed) {
    const std::size_t n = read_channels;
    return nn::autoencoder_spec(n, {2 * n, 4 * n, 2 * n}, nn::Activation::sigmoid,
                                nn::Activation::sigmoid, seed);
}

GeneratorTraining train_generator(const data::TimeSeries& normal, const data::SensorSchema& schema,
                                  const AttackConstraint& constraint, const nn::TrainConfig& cfg,
                                  data::SampleMode mode, std::uint64_t sample_seed) {
    require(!normal.has_attacks(), ErrorKind::invalid_input,
            "generator training data contains attack labels");
    require(normal.channels == schema.size(), ErrorKind::schema, "series width does not match schema");
    constraint.validate(schema.size());
    require(!constraint.read_set.empty(), ErrorKind::invalid_constraint, "read set is empty");

    const auto eavesdropped = data::subsample_fraction(normal, constraint.data_fraction, mode, sample_seed)
                                  .select_channels(constraint.read_set);
    GeneratorTraining out;
    out.rows_used = eavesdropped.rows();
    out.insufficient_data = eavesdropped.rows() < 10 * constraint.read_set.size();

    auto& gen = out.model;
    gen.read_set = constraint.read_set;
    gen.schema = schema.slice(constraint.read_set);
    gen.normalizer = data::fit_normalizer(eavesdropped);
    gen.spec = generator_spec(constraint.read_set.size(), cfg.seed);
    auto result = nn::train(gen.spec, data::window(gen.normalizer.normalize(eavesdropped), 0), cfg);
    gen.params = std::move(result.params);
    out.log = std::move(result.log);
    return out;
}

double round_to_allowed(const data::Channel& channel, double value) {
    require(!channel.allowed.empty(), ErrorKind::schema, "channel has no allowed values");
    double best = channel.allowed.front();
    for (double a : channel.allowed)
        if (std::abs(a - value) < std::abs(best - value)) best = a;
    return best;
}

std::vector<double> conceal_learning(const GeneratorModel& gen, std::span<const double> x,
                                     const AttackConstraint& constraint,
                                     const data::SensorSchema& schema) {
    require(x.size() == schema.size(), ErrorKind::dimension, "sample width differs from the schema");
    std::vector<double> out(x.begin(), x.end());
    if (constraint.write_set.empty()) return out;

    const std::size_t k = gen.read_set.size();
    std::vector<std::size_t> slot(constraint.write_set.size());
    for (std::size_t i = 0; i < slot.size(); ++i) {
        const auto pos = std::lower_bound(gen.read_set.begin(), gen.read_set.end(), constraint.write_set[i]);
        require(pos != gen.read_set.end() && *pos == constraint.write_set[i], ErrorKind::invalid_constraint,
                "write channel '" + schema.channels[constraint.write_set[i]].name +
                    "' is outside the generator's read set");
        slot[i] = static_cast<std::size_t>(pos - gen.read_set.begin());
    }

    std::vector<double> input(k);
    for (std::size_t i = 0; i < k; ++i) input[i] = gen.normalizer.normalize(i, x[gen.read_set[i]]);
    nn::Workspace ws;
    const auto generated = nn::forward(gen.spec, gen.params, input, ws);

    for (std::size_t i = 0; i < slot.size(); ++i) {
        const std::size_t c = constraint.write_set[i];
        double v = gen.normalizer.denormalize(slot[i], generated[slot[i]]);
        if (schema.channels[c].categorical()) v = round_to_allowed(schema.channels[c], v);
        out[c] = v;
    }
    for (auto c : constraint.write_set) {
        const auto dep = schema.channels[c].depends_on;
        if (dep && out[*dep] == schema.channels[*dep].allowed.front()) out[c] = 0.0;
    }
    return out;
}

AttackRun run_learning(const GeneratorModel& gen, const data::TimeSeries& series,
                       const AttackConstraint& constraint, const data::SensorSchema& schema) {
    constraint.validate(series.channels);
    gen.validate();
    AttackRun run;
    run.series = series;
    for (std::size_t t = 0; t < series.rows(); ++t) {
        if (!attacked(series, t)) continue;
        const auto start = std::chrono::steady_clock::now();
        const auto concealed = conceal_learning(gen, series.row(t), constraint, schema);
        std::copy(concealed.begin(), concealed.end(), run.series.row(t).begin());
        const auto stop = std::chrono::steady_clock::now();
        run.changes.record_diff(t, series.row(t), run.series.row(t));
        run.steps.push_back({t, false, 0, 0.0, 0.0, std::chrono::duration<double>(stop - start).count()});
    }
    return run;
}

}  // namespace conceal::attacks
