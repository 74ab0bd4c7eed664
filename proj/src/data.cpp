#include "conceal/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "conceal/error.hpp"
#include "conceal/random.hpp"

namespace conceal::data {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
    require(j.is_object(), ErrorKind::schema, where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        const bool ok = std::any_of(allowed.begin(), allowed.end(),
                                    [&](std::string_view a) { return a == key; });
        require(ok, ErrorKind::schema, where + ": unknown key '" + key + "'");
    }
}

}  // namespace

std::optional<std::size_t> SensorSchema::find(std::string_view name) const {
    for (std::size_t i = 0; i < channels.size(); ++i)
        if (channels[i].name == name) return i;
    return std::nullopt;
}

std::size_t SensorSchema::index_of(std::string_view name) const {
    const auto i = find(name);
    require(i.has_value(), ErrorKind::schema, "unknown channel '" + std::string(name) + "'");
    return *i;
}

std::vector<std::string> SensorSchema::plcs() const {
    std::vector<std::string> out;
    for (const auto& c : channels)
        if (std::find(out.begin(), out.end(), c.plc) == out.end()) out.push_back(c.plc);
    return out;
}

std::vector<std::size_t> SensorSchema::channels_of(std::string_view plc) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < channels.size(); ++i)
        if (channels[i].plc == plc) out.push_back(i);
    return out;
}

void SensorSchema::validate() const {
    require(!channels.empty(), ErrorKind::schema, "schema declares no channels");
    require(sampling_interval_s > 0.0, ErrorKind::schema, "sampling interval must be > 0");
    std::set<std::string> names;
    for (const auto& c : channels) {
        require(!c.name.empty(), ErrorKind::schema, "channel with empty name");
        require(names.insert(c.name).second, ErrorKind::schema, "duplicate channel '" + c.name + "'");
        require(!c.plc.empty(), ErrorKind::schema, "channel '" + c.name + "' has no owning plc");
        if (c.categorical()) {
            require(!c.allowed.empty(), ErrorKind::schema,
                    "categorical channel '" + c.name + "' has no allowed values");
            require(std::is_sorted(c.allowed.begin(), c.allowed.end()), ErrorKind::schema,
                    "allowed values of '" + c.name + "' must be ascending");
        }
        if (c.range)
            require(c.range->first <= c.range->second, ErrorKind::schema,
                    "range of '" + c.name + "' has min > max");
        if (c.depends_on) {
            require(*c.depends_on < channels.size(), ErrorKind::schema,
                    "dependency of '" + c.name + "' is out of range");
            require(channels[*c.depends_on].categorical(), ErrorKind::schema,
                    "dependency of '" + c.name + "' must reference a categorical channel");
        }
    }
}

SensorSchema SensorSchema::slice(std::span<const std::size_t> indices) const {
    SensorSchema out;
    out.sampling_interval_s = sampling_interval_s;
    for (auto i : indices) {
        Channel c = channels.at(i);
        if (c.depends_on) {
            auto pos = std::find(indices.begin(), indices.end(), *c.depends_on);
            c.depends_on = pos == indices.end()
                               ? std::nullopt
                               : std::optional<std::size_t>(static_cast<std::size_t>(pos - indices.begin()));
        }
        out.channels.push_back(std::move(c));
    }
    return out;
}

SensorSchema schema_from_json(const nlohmann::json& j) {
    check_keys(j, {"sampling_interval_s", "channels"}, "schema");
    SensorSchema s;
    s.sampling_interval_s = j.value("sampling_interval_s", 1.0);
    require(j.contains("channels") && j["channels"].is_array(), ErrorKind::schema,
            "schema needs a 'channels' array");
    std::vector<std::string> deps;
    for (const auto& cj : j["channels"]) {
        check_keys(cj, {"name", "kind", "allowed", "range", "plc", "depends_on"}, "schema channel");
        Channel c;
        c.name = cj.at("name").get<std::string>();
        const auto kind = cj.value("kind", std::string("continuous"));
        if (kind == "continuous") {
            c.kind = ChannelKind::continuous;
        } else if (kind == "categorical") {
            c.kind = ChannelKind::categorical;
            c.allowed = cj.value("allowed", std::vector<double>{0.0, 1.0});
            std::sort(c.allowed.begin(), c.allowed.end());
        } else {
            fail(ErrorKind::schema, "channel '" + c.name + "': unknown kind '" + kind + "'");
        }
        if (cj.contains("range")) {
            const auto r = cj["range"].get<std::vector<double>>();
            require(r.size() == 2, ErrorKind::schema, "range of '" + c.name + "' needs two values");
            c.range = std::make_pair(r[0], r[1]);
        }
        c.plc = cj.value("plc", std::string());
        deps.push_back(cj.value("depends_on", std::string()));
        s.channels.push_back(std::move(c));
    }
    for (std::size_t i = 0; i < deps.size(); ++i)
        if (!deps[i].empty()) s.channels[i].depends_on = s.index_of(deps[i]);
    s.validate();
    return s;
}

nlohmann::json schema_to_json(const SensorSchema& schema) {
    nlohmann::json j;
    j["sampling_interval_s"] = schema.sampling_interval_s;
    auto arr = nlohmann::json::array();
    for (const auto& c : schema.channels) {
        nlohmann::json cj;
        cj["name"] = c.name;
        cj["kind"] = c.categorical() ? "categorical" : "continuous";
        if (c.categorical()) cj["allowed"] = c.allowed;
        if (c.range) cj["range"] = {c.range->first, c.range->second};
        cj["plc"] = c.plc;
        if (c.depends_on) cj["depends_on"] = schema.channels[*c.depends_on].name;
        arr.push_back(std::move(cj));
    }
    j["channels"] = std::move(arr);
    return j;
}

SensorSchema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open schema file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, path.string() + ": " + e.what());
    }
    return schema_from_json(j);
}

void save_schema(const SensorSchema& schema, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "cannot write " + path.string());
    out << schema_to_json(schema).dump(2) << '\n';
}

bool TimeSeries::has_attacks() const {
    return std::any_of(labels.begin(), labels.end(),
                       [](Label l) { return l == Label::under_attack; });
}

TimeSeries TimeSeries::slice(std::size_t begin, std::size_t end) const {
    require(begin <= end && end <= rows(), ErrorKind::invalid_input, "slice out of range");
    TimeSeries out;
    out.channels = channels;
    out.interval_s = interval_s;
    out.values.assign(values.begin() + static_cast<std::ptrdiff_t>(begin * channels),
                      values.begin() + static_cast<std::ptrdiff_t>(end * channels));
    if (!timestamps.empty())
        out.timestamps.assign(timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                              timestamps.begin() + static_cast<std::ptrdiff_t>(end));
    if (labeled())
        out.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                          labels.begin() + static_cast<std::ptrdiff_t>(end));
    return out;
}

TimeSeries TimeSeries::select_rows(std::span<const std::size_t> idx) const {
    TimeSeries out;
    out.channels = channels;
    out.interval_s = interval_s;
    for (auto t : idx) {
        require(t < rows(), ErrorKind::invalid_input, "row index out of range");
        auto r = row(t);
        out.values.insert(out.values.end(), r.begin(), r.end());
        if (!timestamps.empty()) out.timestamps.push_back(timestamps[t]);
        if (labeled()) out.labels.push_back(labels[t]);
    }
    return out;
}

TimeSeries TimeSeries::select_channels(std::span<const std::size_t> idx) const {
    TimeSeries out;
    out.channels = idx.size();
    out.interval_s = interval_s;
    out.timestamps = timestamps;
    out.labels = labels;
    out.values.reserve(rows() * idx.size());
    for (std::size_t t = 0; t < rows(); ++t)
        for (auto c : idx) {
            require(c < channels, ErrorKind::invalid_input, "channel index out of range");
            out.values.push_back(at(t, c));
        }
    return out;
}

void TimeSeries::append(const TimeSeries& other) {
    require(other.channels == channels, ErrorKind::dimension, "append: channel count differs");
    require(labeled() == other.labeled() || rows() == 0, ErrorKind::invalid_input,
            "append: label presence differs");
    values.insert(values.end(), other.values.begin(), other.values.end());
    timestamps.insert(timestamps.end(), other.timestamps.begin(), other.timestamps.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

void TimeSeries::validate() const {
    require(channels > 0 && values.size() % channels == 0, ErrorKind::dimension,
            "value matrix is not rows x channels");
    require(labels.empty() || labels.size() == rows(), ErrorKind::dimension,
            "label count differs from row count");
    require(timestamps.empty() || timestamps.size() == rows(), ErrorKind::dimension,
            "timestamp count differs from row count");
    for (double v : values) require(std::isfinite(v), ErrorKind::numeric, "non-finite value in series");
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

TimeSeries parse_csv(std::istream& in, const SensorSchema& schema, LoadWarnings* warnings) {
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorKind::parse, "csv is empty");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
    const auto header = split_fields(line);

    std::optional<std::size_t> time_col;
    std::optional<std::size_t> flag_col;
    std::vector<std::optional<std::size_t>> column_of(schema.size());
    for (std::size_t i = 0; i < header.size(); ++i) {
        const auto key = lower(header[i]);
        if (key == "datetime" || key == "timestamp") {
            time_col = i;
            continue;
        }
        if (key == "att_flag") {
            flag_col = i;
            continue;
        }
        for (std::size_t c = 0; c < schema.size(); ++c)
            if (lower(schema.channels[c].name) == key) column_of[c] = i;
    }
    std::string missing;
    for (std::size_t c = 0; c < schema.size(); ++c)
        if (!column_of[c]) missing += (missing.empty() ? "" : ", ") + schema.channels[c].name;
    require(missing.empty(), ErrorKind::schema, "csv is missing channel columns: " + missing);

    TimeSeries s;
    s.channels = schema.size();
    s.interval_s = schema.sampling_interval_s;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (trim(line).empty()) continue;
        const auto fields = split_fields(line);
        require(fields.size() == header.size(), ErrorKind::parse,
                "row " + std::to_string(row) + ": expected " + std::to_string(header.size()) +
                    " fields, found " + std::to_string(fields.size()));
        for (std::size_t c = 0; c < schema.size(); ++c) {
            double v = 0.0;
            const auto col = *column_of[c];
            require(parse_double(fields[col], v), ErrorKind::parse,
                    "row " + std::to_string(row) + ", column " + std::to_string(col + 1) + " (" +
                        schema.channels[c].name + "): cannot parse '" + fields[col] + "'");
            s.values.push_back(v);
        }
        s.timestamps.push_back(time_col ? fields[*time_col] : std::to_string(s.timestamps.size()));
        if (flag_col) {
            double flag = 0.0;
            require(parse_double(fields[*flag_col], flag), ErrorKind::parse,
                    "row " + std::to_string(row) + ", column ATT_FLAG: cannot parse '" +
                        fields[*flag_col] + "'");
            if (flag == 1.0) {
                s.labels.push_back(Label::under_attack);
            } else if (flag == 0.0) {
                s.labels.push_back(Label::safe);
            } else if (flag == -999.0) {
                s.labels.push_back(Label::safe);
                if (warnings) ++warnings->unlabeled_rows;
            } else {
                fail(ErrorKind::parse, "row " + std::to_string(row) + ": ATT_FLAG must be 1, 0 or -999");
            }
        }
    }
    return s;
}

TimeSeries load_csv(const std::filesystem::path& path, const SensorSchema& schema,
                    LoadWarnings* warnings) {
    std::ifstream in(path);
    require(in.good(), ErrorKind::io, "cannot open " + path.string());
    try {
        return parse_csv(in, schema, warnings);
    } catch (const Error& e) {
        throw Error(e.kind(), path.string() + ": " + e.what());
    }
}

void write_csv(std::ostream& out, const TimeSeries& series, const SensorSchema& schema) {
    require(series.channels == schema.size(), ErrorKind::schema,
            "series width does not match schema");
    out << "DATETIME";
    for (const auto& c : schema.channels) out << ',' << c.name;
    if (series.labeled()) out << ",ATT_FLAG";
    out << '\n';
    for (std::size_t t = 0; t < series.rows(); ++t) {
        out << (series.timestamps.empty() ? std::to_string(t) : series.timestamps[t]);
        for (double v : series.row(t)) out << ',' << format_double(v);
        if (series.labeled()) out << ',' << (series.labels[t] == Label::under_attack ? 1 : 0);
        out << '\n';
    }
}

void save_csv(const TimeSeries& series, const SensorSchema& schema,
              const std::filesystem::path& path) {
    std::ofstream out(path);
    require(out.good(), ErrorKind::io, "cannot write " + path.string());
    write_csv(out, series, schema);
}

double Normalizer::normalize(std::size_t c, double v) const {
    if (is_constant(c)) return 0.5;
    return (v - min[c]) / (max[c] - min[c]);
}

double Normalizer::denormalize(std::size_t c, double v) const {
    if (is_constant(c)) return min[c];
    return min[c] + v * (max[c] - min[c]);
}

void Normalizer::normalize_row(std::span<const double> in, std::span<double> out) const {
    require(in.size() == channels() && out.size() == channels(), ErrorKind::dimension,
            "normalize_row: width mismatch");
    for (std::size_t c = 0; c < in.size(); ++c) out[c] = normalize(c, in[c]);
}

TimeSeries Normalizer::normalize(const TimeSeries& series) const {
    require(series.channels == channels(), ErrorKind::dimension,
            "normalizer covers " + std::to_string(channels()) + " channels, series has " +
                std::to_string(series.channels));
    TimeSeries out = series;
    for (std::size_t t = 0; t < series.rows(); ++t) normalize_row(series.row(t), out.row(t));
    return out;
}

Normalizer Normalizer::slice(std::span<const std::size_t> indices) const {
    Normalizer out;
    for (auto i : indices) {
        out.min.push_back(min.at(i));
        out.max.push_back(max.at(i));
    }
    return out;
}

Normalizer fit_normalizer(const TimeSeries& train) {
    require(train.rows() >= 1, ErrorKind::invalid_input, "cannot fit a normalizer on an empty series");
    Normalizer n;
    n.min.assign(train.row(0).begin(), train.row(0).end());
    n.max = n.min;
    for (std::size_t t = 1; t < train.rows(); ++t)
        for (std::size_t c = 0; c < train.channels; ++c) {
            n.min[c] = std::min(n.min[c], train.at(t, c));
            n.max[c] = std::max(n.max[c], train.at(t, c));
        }
    return n;
}

nn::SampleSet window(const TimeSeries& series, std::size_t m) {
    require(series.rows() >= m + 1, ErrorKind::invalid_input,
            "series has " + std::to_string(series.rows()) + " rows, window needs " +
                std::to_string(m + 1));
    nn::SampleSet s;
    const std::size_t n = series.channels;
    s.input_size = (m + 1) * n;
    s.target_size = n;
    const std::size_t count = series.rows() - m;
    s.inputs.reserve(count * s.input_size);
    s.targets.reserve(count * n);
    for (std::size_t j = 0; j < count; ++j) {
        s.inputs.insert(s.inputs.end(), series.values.begin() + static_cast<std::ptrdiff_t>(j * n),
                        series.values.begin() + static_cast<std::ptrdiff_t>((j + m + 1) * n));
        auto target = series.row(j + m);
        s.targets.insert(s.targets.end(), target.begin(), target.end());
    }
    return s;
}

void window_at(const TimeSeries& series, std::size_t t, std::size_t m, std::span<double> out) {
    const std::size_t n = series.channels;
    require(out.size() == (m + 1) * n, ErrorKind::dimension, "window buffer has the wrong size");
    require(t < series.rows(), ErrorKind::invalid_input, "window end beyond series");
    for (std::size_t k = 0; k <= m; ++k) {
        const std::size_t src = t + k >= m ? t + k - m : 0;
        auto r = series.row(src);
        std::copy(r.begin(), r.end(), out.begin() + static_cast<std::ptrdiff_t>(k * n));
    }
}

std::pair<TimeSeries, TimeSeries> split_train_val(const TimeSeries& series, double ratio) {
    require(ratio > 0.0 && ratio < 1.0, ErrorKind::invalid_split, "split ratio must lie in (0, 1)");
    const auto cut = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(series.rows()) + 1e-9));
    require(cut >= 1 && cut < series.rows(), ErrorKind::invalid_split,
            "split leaves an empty side (" + std::to_string(series.rows()) + " rows)");
    return {series.slice(0, cut), series.slice(cut, series.rows())};
}

SampleMode parse_sample_mode(std::string_view name) {
    if (name == "prefix") return SampleMode::prefix;
    if (name == "random") return SampleMode::random;
    fail(ErrorKind::invalid_config, "unknown sampling mode '" + std::string(name) + "'");
}

TimeSeries subsample_fraction(const TimeSeries& series, double p, SampleMode mode,
                              std::uint64_t seed) {
    require(p > 0.0 && p <= 1.0, ErrorKind::invalid_input, "data fraction must lie in (0, 1]");
    const auto keep = static_cast<std::size_t>(std::ceil(p * static_cast<double>(series.rows()) - 1e-9));
    require(keep >= 1, ErrorKind::invalid_input, "data fraction leaves no rows");
    if (mode == SampleMode::prefix || keep == series.rows()) return series.slice(0, keep);
    std::vector<std::size_t> idx(series.rows());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < keep; ++i) {
        const auto j = i + rng.below(idx.size() - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(keep);
    std::sort(idx.begin(), idx.end());
    return series.select_rows(idx);
}

}  // namespace conceal::data
