#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "adformer/data/demand.hpp"
#include "adformer/data/timeutil.hpp"
#include "adformer/data/trips.hpp"
#include "adformer/io/container.hpp"
#include "support/testutil.hpp"

using namespace adformer;
namespace tu = adformer::timeutil;

namespace {

DemandTensor ramp_tensor(std::size_t steps, std::size_t regions,
                         std::int64_t start = 4 * 86400 /* 1970-01-05, a Monday */) {
    DemandTensor t;
    t.values = Array::zeros({steps, regions, 1});
    for (std::size_t i = 0; i < t.values.numel(); ++i) {
        t.values.data()[i] = static_cast<double>(i % 23);
    }
    t.timestamps.resize(steps);
    t.bin_width_sec = 1800;
    for (std::size_t i = 0; i < steps; ++i) {
        t.timestamps[i] = start + static_cast<std::int64_t>(i) * t.bin_width_sec;
    }
    t.region_ids.resize(regions);
    for (std::size_t r = 0; r < regions; ++r) t.region_ids[r] = "R" + std::to_string(r);
    return t;
}

std::string tmp_path(const std::string &name) {
    auto dir = std::filesystem::path(ADFORMER_TEST_TMP);
    std::filesystem::create_directories(dir);
    return (dir / name).string();
}

}  // namespace

TEST_CASE("timestamp parsing and formatting", "[pipeline]") {
    REQUIRE(tu::parse_timestamp("1970-01-01 00:00:00", 0) == 0);
    REQUIRE(tu::parse_timestamp("1970-01-02 00:00:30", 0) == 86430);
    REQUIRE(tu::parse_timestamp("2024-03-01 12:00:00", 0) ==
            tu::days_from_civil(2024, 3, 1) * 86400 + 12 * 3600);
    // RFC 3339: the instant is converted into the configured local clock.
    REQUIRE(tu::parse_timestamp("1970-01-01T01:00:00Z", 0) == 3600);
    REQUIRE(tu::parse_timestamp("1970-01-01T01:00:00+01:00", 0) == 0);
    REQUIRE(tu::parse_timestamp("1970-01-01T00:00:00-02:30", 0) == 9000);
    REQUIRE(tu::parse_timestamp("1970-01-01T01:00:00.250Z", 0) == 3600);
    REQUIRE(tu::parse_timestamp("1970-01-01T06:00:00Z", -300) == 6 * 3600 - 300 * 60);

    for (const auto *bad : {"1970/01/01 00:00:00", "1970-01-01", "1970-13-01 00:00:00",
                            "1970-01-01 25:00:00", "1970-01-01T00:00:00", "junk",
                            "1970-01-01T00:00:00+1:00", "1970-01-01 00:00:00Z!"}) {
        REQUIRE_THROWS_AS(tu::parse_timestamp(bad, 0), std::invalid_argument);
    }

    REQUIRE(tu::format_timestamp(0) == "1970-01-01 00:00:00");
    REQUIRE(tu::format_timestamp(tu::parse_timestamp("2031-12-09 23:59:58", 0)) ==
            "2031-12-09 23:59:58");
    // 1970-01-05 was a Monday.
    REQUIRE(tu::day_of_week(4 * 86400) == 0);
    REQUIRE(tu::day_of_week(3 * 86400) == 6);
}

TEST_CASE("time features: clock fractions and one-hot weekday", "[pipeline]") {
    const std::int64_t monday = 4 * 86400;
    std::vector<std::int64_t> ts{monday, monday + 43200, monday + 64800};
    auto tf = build_time_features(ts, 2);
    REQUIRE(tf.time_of_day.shape() == Shape{3, 2, 1});
    REQUIRE(tf.day_of_week.shape() == Shape{3, 2, 7});
    REQUIRE(tf.time_of_day[0] == 0.0);
    REQUIRE(tf.time_of_day[2] == 0.5);
    REQUIRE(tf.time_of_day[4] == 0.75);  // 64800 / 86400
    for (std::size_t step = 0; step < 3; ++step) {
        for (std::size_t r = 0; r < 2; ++r) {
            double sum = 0.0;
            for (std::size_t d = 0; d < 7; ++d) sum += tf.day_of_week[(step * 2 + r) * 7 + d];
            REQUIRE(sum == 1.0);
            REQUIRE(tf.day_of_week[(step * 2 + r) * 7 + 0] == 1.0);  // Monday slot
        }
    }
}

TEST_CASE("trip ingestion bins, conserves mass, sorts regions", "[pipeline]") {
    std::vector<TripRecord> recs;
    auto at = [](const char *s) { return tu::parse_timestamp(s, 0); };
    recs.push_back({at("1970-01-05 00:05:00"), "A", 1.0});
    recs.push_back({at("1970-01-05 00:10:00"), "A", 1.0});
    recs.push_back({at("1970-01-05 00:29:59"), "A", 1.0});
    recs.push_back({at("1970-01-05 00:30:00"), "A", 1.0});  // boundary → later bin
    recs.push_back({at("1970-01-05 01:15:00"), "B", 2.5});
    auto t = ingest_trips(recs, 1800);
    REQUIRE(t.region_ids == std::vector<std::string>{"A", "B"});
    REQUIRE(t.steps() == 3);  // 00:00, 00:30, 01:00
    REQUIRE(t.timestamps.front() == at("1970-01-05 00:00:00"));
    REQUIRE(t.values[0 * 2 + 0] == 3.0);
    REQUIRE(t.values[1 * 2 + 0] == 1.0);
    REQUIRE(t.values[2 * 2 + 0] == 0.0);  // empty bin stays zero
    REQUIRE(t.values[2 * 2 + 1] == 2.5);
    double mass = 0.0;
    for (std::size_t i = 0; i < t.values.numel(); ++i) mass += t.values[i];
    REQUIRE(mass == 6.5);

    REQUIRE_THROWS_AS(ingest_trips({}, 1800), std::runtime_error);
    REQUIRE_THROWS_AS(ingest_trips(recs, 7 * 60), std::invalid_argument);
}

TEST_CASE("trips CSV: header, count column, row-numbered errors", "[pipeline]") {
    {
        std::istringstream in("timestamp,region_id\n"
                              "1970-01-05 00:00:00,west\n"
                              "1970-01-05 00:40:00,east\n");
        auto recs = read_trips_csv(in, 0);
        REQUIRE(recs.size() == 2);
        REQUIRE(recs[0].count == 1.0);
        REQUIRE(recs[1].region_id == "east");
    }
    {
        std::istringstream in("timestamp,region_id,count\n"
                              "1970-01-05 00:00:00,west,3\n");
        REQUIRE(read_trips_csv(in, 0)[0].count == 3.0);
    }
    {
        std::istringstream in("timestamp,region_id\n"
                              "1970-01-05 00:00:00,west\n"
                              "not-a-time,west\n");
        try {
            read_trips_csv(in, 0);
            FAIL("expected parse failure");
        } catch (const std::runtime_error &e) {
            REQUIRE(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
    {
        std::istringstream in("time,region\n1,2\n");
        REQUIRE_THROWS_AS(read_trips_csv(in, 0), std::runtime_error);
    }
    {
        std::istringstream in("timestamp,region_id,count\n1970-01-05 00:00:00,west,-2\n");
        REQUIRE_THROWS_AS(read_trips_csv(in, 0), std::runtime_error);
    }
    {
        std::istringstream in("timestamp,region_id\n");
        REQUIRE_THROWS_AS(read_trips_csv(in, 0), std::runtime_error);
    }
}

TEST_CASE("chronological split: floor sizes, no leakage", "[pipeline]") {
    auto check_sizes = [](std::size_t total, std::size_t a, std::size_t b, std::size_t c) {
        auto s = chronological_split(ramp_tensor(total, 2));
        REQUIRE(s.train.steps() == a);
        REQUIRE(s.val.steps() == b);
        REQUIRE(s.test.steps() == c);
        REQUIRE(s.train.timestamps.back() < s.val.timestamps.front());
        REQUIRE(s.val.timestamps.back() < s.test.timestamps.front());
    };
    check_sizes(100, 70, 10, 20);
    check_sizes(10, 7, 1, 2);
    check_sizes(103, 72, 10, 21);
    REQUIRE_THROWS_AS(chronological_split(ramp_tensor(9, 2)), std::runtime_error);
}

TEST_CASE("normalizer: z-score, floor, round trip", "[pipeline]") {
    auto flat = ramp_tensor(10, 1);
    for (std::size_t i = 0; i < flat.values.numel(); ++i) flat.values.data()[i] = 4.25;
    auto nz_flat = fit_normalizer(flat);
    auto normed = nz_flat.normalize(flat.values);
    for (std::size_t i = 0; i < normed.numel(); ++i) REQUIRE(normed[i] == 0.0);

    auto two = ramp_tensor(10, 1);
    for (std::size_t i = 0; i < 10; ++i) two.values.data()[i] = (i % 2 == 0) ? 0.0 : 10.0;
    auto nz = fit_normalizer(two);
    REQUIRE(nz.mean[0] == 5.0);
    REQUIRE(nz.stddev[0] == 5.0);
    auto z = nz.normalize(two.values);
    REQUIRE(z[0] == -1.0);
    REQUIRE(z[1] == 1.0);

    auto ramp = ramp_tensor(50, 3);
    auto nz2 = fit_normalizer(ramp);
    auto round = nz2.denormalize(nz2.normalize(ramp.values));
    REQUIRE(testutil::max_abs_diff(round, ramp.values) < 1e-9);
}

TEST_CASE("windows: counts, raw targets, features", "[pipeline]") {
    auto t100 = ramp_tensor(100, 2);
    auto nz = fit_normalizer(t100);
    REQUIRE(make_windows(t100, nz, 6, 6).sample_count() == 89);
    REQUIRE(make_windows(ramp_tensor(12, 2), nz, 6, 6).sample_count() == 1);
    REQUIRE(make_windows(t100, nz, 6, 1).sample_count() == 94);
    REQUIRE_THROWS_AS(make_windows(ramp_tensor(11, 2), nz, 6, 6), std::runtime_error);

    auto ds = make_windows(t100, nz, 6, 3);
    auto batch = ds.assemble({0, 41});
    REQUIRE(batch.inputs.shape() == Shape{2, 6, 2, 1});
    REQUIRE(batch.targets.shape() == Shape{2, 3, 2, 1});
    // Targets are bit-identical raw slices; inputs are normalized copies.
    for (std::size_t s = 0; s < 2; ++s) {
        const std::size_t start = (s == 0) ? 0 : 41;
        for (std::size_t i = 0; i < 3 * 2; ++i) {
            REQUIRE(batch.targets[s * 6 + i] == t100.values[(start + 6) * 2 + i]);
        }
        for (std::size_t i = 0; i < 6 * 2; ++i) {
            REQUIRE(batch.inputs_raw[s * 12 + i] == t100.values[start * 2 + i]);
            REQUIRE(batch.inputs[s * 12 + i] ==
                    (t100.values[start * 2 + i] - nz.mean[0]) / nz.stddev[0]);
        }
        REQUIRE(batch.target_start[s] == t100.timestamps[start + 6]);
    }
    // Per-sample time features line up with the split timeline.
    auto tf = build_time_features(t100.timestamps, 2);
    for (std::size_t i = 0; i < 6 * 2; ++i) {
        REQUIRE(batch.input_tod[12 + i] == tf.time_of_day[41 * 2 + i]);
    }
    REQUIRE_THROWS_AS(ds.assemble({1000}), std::invalid_argument);
}

TEST_CASE("ADF1 demand archive round-trips bit-exactly", "[pipeline]") {
    auto t = ramp_tensor(40, 3);
    t.values.data()[7] = 0.1 + 0.2;  // a value with a non-terminating binary expansion
    const auto p1 = tmp_path("demand_a.adf1");
    const auto p2 = tmp_path("demand_b.adf1");
    write_demand_archive(p1, t);
    auto back = read_demand_archive(p1);
    REQUIRE(back.steps() == t.steps());
    REQUIRE(back.region_ids == t.region_ids);
    REQUIRE(back.timestamps == t.timestamps);
    REQUIRE(back.bin_width_sec == t.bin_width_sec);
    for (std::size_t i = 0; i < t.values.numel(); ++i) REQUIRE(back.values[i] == t.values[i]);

    write_demand_archive(p2, back);
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    REQUIRE(b1 == b2);

    REQUIRE_THROWS_AS(read_demand_archive(tmp_path("missing.adf1")), std::runtime_error);
    std::ofstream junk(tmp_path("junk.adf1"), std::ios::binary);
    junk << "NOPE";
    junk.close();
    REQUIRE_THROWS_AS(read_demand_archive(tmp_path("junk.adf1")), std::runtime_error);
}
