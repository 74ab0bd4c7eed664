#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "conceal/data.hpp"
#include "conceal/random.hpp"
#include "support/expect.hpp"

using namespace conceal;
using namespace conceal::data;

namespace {

SensorSchema small_schema() {
    SensorSchema s;
    s.channels = {
        {"L_T1", ChannelKind::continuous, {}, std::make_pair(0.0, 5.0), "PLC1", std::nullopt},
        {"S_PU1", ChannelKind::categorical, {0.0, 1.0}, std::nullopt, "PLC1", std::nullopt},
        {"F_PU1", ChannelKind::continuous, {}, std::nullopt, "PLC1", 1},
        {"L_T2", ChannelKind::continuous, {}, std::nullopt, "PLC2", std::nullopt},
    };
    s.sampling_interval_s = 900.0;
    return s;
}

TimeSeries random_series(std::size_t rows, std::size_t channels, std::uint64_t seed, bool labeled) {
    Rng rng(seed);
    TimeSeries s;
    s.channels = channels;
    for (std::size_t t = 0; t < rows; ++t) {
        s.timestamps.push_back("t" + std::to_string(t));
        for (std::size_t c = 0; c < channels; ++c) s.values.push_back(rng.uniform(-1e3, 1e3) / 7.0);
        if (labeled) s.labels.push_back(rng.uniform() < 0.3 ? Label::under_attack : Label::safe);
    }
    return s;
}

}  // namespace

TEST(Schema, JsonRoundTrip) {
    const auto s = small_schema();
    s.validate();
    const auto back = schema_from_json(schema_to_json(s));
    ASSERT_EQ(back.size(), s.size());
    EXPECT_EQ(back.channels[2].depends_on, std::optional<std::size_t>(1));
    EXPECT_TRUE(back.channels[1].categorical());
    EXPECT_EQ(back.channels[0].range, s.channels[0].range);
    EXPECT_DOUBLE_EQ(back.sampling_interval_s, 900.0);
}

TEST(Schema, RejectsBadDeclarations) {
    auto dup = small_schema();
    dup.channels[3].name = "L_T1";
    EXPECT_ERROR_KIND(dup.validate(), ErrorKind::schema);

    auto dep = small_schema();
    dep.channels[2].depends_on = 0;  // continuous target
    EXPECT_ERROR_KIND(dep.validate(), ErrorKind::schema);

    auto empty = small_schema();
    empty.channels[1].allowed.clear();
    EXPECT_ERROR_KIND(empty.validate(), ErrorKind::schema);

    nlohmann::json j = schema_to_json(small_schema());
    j["channels"][0]["colour"] = "red";
    EXPECT_ERROR_KIND(schema_from_json(j), ErrorKind::schema);
}

TEST(Schema, PlcOwnershipPartitionsChannels) {
    const auto s = small_schema();
    EXPECT_EQ(s.plcs(), (std::vector<std::string>{"PLC1", "PLC2"}));
    EXPECT_EQ(s.channels_of("PLC1"), (std::vector<std::size_t>{0, 1, 2}));
    EXPECT_EQ(s.channels_of("PLC2"), (std::vector<std::size_t>{3}));
}

TEST(Schema, SliceRemapsDependencies) {
    const auto s = small_schema();
    const std::vector<std::size_t> keep{1, 2};
    auto sliced = s.slice(keep);
    EXPECT_EQ(sliced.channels[1].depends_on, std::optional<std::size_t>(0));
    const std::vector<std::size_t> drop{2, 3};
    EXPECT_FALSE(s.slice(drop).channels[0].depends_on.has_value());
}

TEST(Schema, BatadalSchemaHas43Channels) {
    const auto s = load_schema(CONCEAL_SOURCE_DIR "/configs/batadal_schema.json");
    EXPECT_EQ(s.size(), 43u);
    std::size_t categorical = 0;
    for (const auto& c : s.channels) categorical += c.categorical();
    EXPECT_EQ(categorical, 12u);
    std::size_t covered = 0;
    for (const auto& plc : s.plcs()) covered += s.channels_of(plc).size();
    EXPECT_EQ(covered, 43u);
}

TEST(Csv, RoundTripIsLossless) {
    const auto schema = small_schema();
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        for (bool labeled : {false, true}) {
            const auto s = random_series(37, schema.size(), seed, labeled);
            std::stringstream buf;
            write_csv(buf, s, schema);
            const auto back = parse_csv(buf, schema);
            EXPECT_EQ(back.values, s.values);
            EXPECT_EQ(back.labels, s.labels);
            EXPECT_EQ(back.timestamps, s.timestamps);
        }
    }
}

TEST(Csv, AttackFlagMapping) {
    const auto schema = small_schema();
    std::stringstream in(
        " DATETIME , l_t1 ,S_PU1,F_PU1,L_T2, ATT_FLAG\n"
        "a,1,0,0,2,0\n"
        "b,1,1,3.5,2,1\n"
        "\n"
        "c,1,1,3.5,2,-999\n");
    LoadWarnings w;
    const auto s = parse_csv(in, schema, &w);
    ASSERT_EQ(s.rows(), 3u);
    EXPECT_EQ(s.labels, (std::vector<Label>{Label::safe, Label::under_attack, Label::safe}));
    EXPECT_EQ(w.unlabeled_rows, 1u);
    EXPECT_DOUBLE_EQ(s.at(1, 2), 3.5);
    EXPECT_EQ(s.timestamps[2], "c");
}

TEST(Csv, MissingColumnsAreListed) {
    std::stringstream in("DATETIME,L_T1,S_PU1\nx,1,0\n");
    try {
        parse_csv(in, small_schema());
        FAIL() << "expected schema error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::schema);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("F_PU1"), std::string::npos);
        EXPECT_NE(msg.find("L_T2"), std::string::npos);
    }
}

TEST(Csv, ParseErrorIsAddressed) {
    std::stringstream in("L_T1,S_PU1,F_PU1,L_T2\n1,0,0,2\n1,0,oops,2\n");
    try {
        parse_csv(in, small_schema());
        FAIL() << "expected parse error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("row 3"), std::string::npos);
        EXPECT_NE(msg.find("column 3"), std::string::npos);
    }
}

TEST(Normalizer, ConventionsAndInverse) {
    TimeSeries s;
    s.channels = 2;
    s.values = {1.0, 4.0, 3.0, 4.0, 2.0, 4.0};
    const auto n = fit_normalizer(s);
    EXPECT_FALSE(n.is_constant(0));
    EXPECT_TRUE(n.is_constant(1));
    EXPECT_DOUBLE_EQ(n.normalize(1, 4.0), 0.5);
    EXPECT_DOUBLE_EQ(n.normalize(1, 100.0), 0.5);
    EXPECT_DOUBLE_EQ(n.normalize(0, 2.0), 0.5);
    EXPECT_DOUBLE_EQ(n.normalize(0, 5.0), 2.0);  // not clamped
    for (double v : {1.0, 1.7, 2.9, -3.0}) EXPECT_NEAR(n.denormalize(0, n.normalize(0, v)), v, 1e-12);

    const auto norm = n.normalize(s);
    for (double v : norm.values) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    EXPECT_ERROR_KIND(fit_normalizer(TimeSeries{}), ErrorKind::invalid_input);
}

TEST(Window, CountsAndAlignment) {
    const auto s = random_series(100, 3, 5, false);
    EXPECT_EQ(window(s, 0).count(), 100u);
    const auto w = window(s, 7);
    ASSERT_EQ(w.count(), 93u);
    for (std::size_t j = 0; j < w.count(); ++j) {
        const auto in = w.input(j);
        const auto last = s.row(j + 7);
        for (std::size_t c = 0; c < 3; ++c) {
            EXPECT_EQ(in[7 * 3 + c], last[c]);
            EXPECT_EQ(w.target(j)[c], last[c]);
        }
    }
    for (std::size_t m = 0; m < 20; ++m) EXPECT_EQ(window(s.slice(0, 20), m).count(), 20 - m);
    EXPECT_ERROR_KIND(window(s.slice(0, 5), 5), ErrorKind::invalid_input);
}

TEST(Window, WindowAtPadsWithFirstRow) {
    const auto s = random_series(10, 2, 9, false);
    std::vector<double> buf(3 * 2);
    window_at(s, 1, 2, buf);
    EXPECT_EQ(buf[0], s.at(0, 0));
    EXPECT_EQ(buf[2], s.at(0, 0));
    EXPECT_EQ(buf[4], s.at(1, 0));
    window_at(s, 5, 2, buf);
    EXPECT_EQ(buf[0], s.at(3, 0));
    EXPECT_EQ(buf[5], s.at(5, 1));
}

TEST(Split, ContiguousAndExhaustive) {
    const auto s = random_series(300, 2, 3, true);
    auto [train, val] = split_train_val(s, 2.0 / 3.0);
    EXPECT_EQ(train.rows(), 200u);
    EXPECT_EQ(val.rows(), 100u);
    auto joined = train;
    joined.append(val);
    EXPECT_EQ(joined.values, s.values);
    EXPECT_EQ(joined.labels, s.labels);
    EXPECT_EQ(train.timestamps.back(), "t199");
    EXPECT_EQ(val.timestamps.front(), "t200");
    EXPECT_ERROR_KIND(split_train_val(s, 1.0), ErrorKind::invalid_split);
    EXPECT_ERROR_KIND(split_train_val(s.slice(0, 1), 0.5), ErrorKind::invalid_split);
}

TEST(Subsample, PrefixAndRandomModes) {
    const auto s = random_series(1280, 2, 4, false);  // 320 h at 15 min
    EXPECT_EQ(subsample_fraction(s, 1.0, SampleMode::prefix, 0).values, s.values);
    const auto five = subsample_fraction(s, 0.05, SampleMode::prefix, 0);
    EXPECT_EQ(five.rows(), 64u);  // 16 h
    EXPECT_EQ(five.values, s.slice(0, 64).values);

    const auto a = subsample_fraction(s, 0.25, SampleMode::random, 11);
    const auto b = subsample_fraction(s, 0.25, SampleMode::random, 11);
    const auto c = subsample_fraction(s, 0.25, SampleMode::random, 12);
    EXPECT_EQ(a.rows(), 320u);
    EXPECT_EQ(a.values, b.values);
    EXPECT_NE(a.values, c.values);
    for (std::size_t t = 1; t < a.rows(); ++t)
        EXPECT_LT(std::stoi(a.timestamps[t - 1].substr(1)), std::stoi(a.timestamps[t].substr(1)));
    EXPECT_ERROR_KIND(subsample_fraction(s, 0.0, SampleMode::prefix, 0), ErrorKind::invalid_input);
}
