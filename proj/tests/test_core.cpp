#include <doctest.h>

#include <algorithm>
#include <set>

#include "mamkl/core.hpp"
#include "mamkl/csv.hpp"
#include "test_util.hpp"

using namespace mamkl;
using nlohmann::json;
using testutil::TempDir;
using testutil::write_file;

namespace {

json channel(const std::string& name, int dim) { return json{{"name", name}, {"dim", dim}, {"kernel", "linear"}}; }

// Three linear channels (dims 2, 1, 3) over four samples.
void write_small(const TempDir& dir) {
    write_file(dir / "a.csv", "sample_id,v0,v1\nx1,1,2\nx2,3,\nx3,,\nx4,7,8\n");
    write_file(dir / "b.csv", "sample_id,v0\nx1,5\nx3,6\n");
    write_file(dir / "c.csv", "sample_id,v0,v1,v2\nx1,1,1,1\nx2,2,2,2\nx3,3,3,3\n");
    write_file(dir / "labels.csv", "sample_id,label\nx1,1\nx2,-1\nx3,1\nx4,-1\nx5,1\n");
    write_file(dir / "groups.csv", "sample_id,group_id\nx1,0\nx2,1\nx3,1\nx4,0\nx5,0\n");
    const json m{{"name", "small"},
                 {"num_groups", 2},
                 {"channels", {channel("a", 2), channel("b", 1), channel("c", 3)}},
                 {"files",
                  {{"channels", {{"a", "a.csv"}, {"b", "b.csv"}, {"c", "c.csv"}}},
                   {"labels", "labels.csv"},
                   {"groups", "groups.csv"}}},
                 {"concat", nullptr}};
    write_file(dir / "manifest.json", m.dump());
}

}  // namespace

TEST_SUITE("core") {

TEST_CASE("sixteen declared channels plus auto concat give seventeen kernels") {
    json chans = json::array();
    for (int m = 0; m < 16; ++m) chans.push_back(channel("ch" + std::to_string(m), 3));
    const auto manifest = manifest_from_json(json{{"channels", chans}, {"concat", "auto"}});
    CHECK(manifest.num_channels() == 16);
    CHECK(manifest.total_kernels() == 17);
    REQUIRE(manifest.concat);
    CHECK(manifest.concat->dim == 48);
    CHECK(manifest.concat->kernel == KernelKind::rbf);
}

TEST_CASE("single channel without concat") {
    const auto manifest = manifest_from_json(json{{"channels", {channel("only", 2)}}});
    CHECK(manifest.num_channels() == 1);
    CHECK_FALSE(manifest.concat.has_value());
    CHECK(manifest.total_kernels() == 1);
}

TEST_CASE("manifest errors") {
    CHECK_THROWS_AS(manifest_from_json(json{{"channels", {channel("weather", 2), channel("weather", 3)}}}), DataError);
    CHECK_THROWS_AS(manifest_from_json(json{{"channels", {channel("a", 0)}}}), DataError);
    CHECK_THROWS_AS(manifest_from_json(json{{"channels", {channel("a", -2)}}}), DataError);
    json rbf{{"name", "r"}, {"dim", 2}, {"kernel", "rbf"}, {"bandwidth", -1.0}, {"feature_dim", 8}};
    CHECK_THROWS_AS(manifest_from_json(json{{"channels", {rbf}}}), DataError);
    rbf["bandwidth"] = 1.0;
    rbf["feature_dim"] = 7;
    CHECK_THROWS_AS(manifest_from_json(json{{"channels", {rbf}}}), DataError);
    json bad_concat{{"name", "cc"}, {"dim", 5}, {"kernel", "rbf"}, {"feature_dim", 8}};
    CHECK_THROWS_AS(manifest_from_json(json{{"channels", {channel("a", 2)}}, {"concat", bad_concat}}), DataError);
    TempDir dir("badjson");
    write_file(dir / "m.json", "{ not json");
    CHECK_THROWS_AS(load_manifest(dir / "m.json"), DataError);
    CHECK_THROWS_AS(load_manifest(dir / "missing.json"), DataError);
}

TEST_CASE("load joins channel files on sample_id") {
    TempDir dir("load");
    write_small(dir);
    const auto ds = load_dataset(load_manifest(dir / "manifest.json"));
    // x5 appears in no channel file and is rejected.
    REQUIRE(ds.size() == 4);
    CHECK(ds.rejected_ids == std::vector<std::string>{"x5"});
    const auto& x1 = ds.samples[0];
    CHECK(x1.presence() == std::vector<bool>{true, true, true});
    const auto& x2 = ds.samples[1];
    CHECK(x2.presence() == std::vector<bool>{true, false, true});
    CHECK(x2.channels[0]->partially_missing());
    CHECK(x2.channels[0]->missing[1]);
    CHECK(x2.channels[0]->values[0] == 3.0);
    // all-empty row marks the channel absent
    CHECK(ds.samples[2].presence() == std::vector<bool>{false, true, true});
    CHECK(ds.samples[3].presence() == std::vector<bool>{true, false, false});
    CHECK(ds.samples[1].group_id == 1);
    CHECK(ds.samples[3].label == -1);
    // means over observed entries: a = [(1+3+7)/3, (2+8)/2]
    CHECK(ds.channel_means[0][0] == doctest::Approx(11.0 / 3.0));
    CHECK(ds.channel_means[0][1] == doctest::Approx(5.0));
    CHECK(ds.channel_means[1][0] == doctest::Approx(5.5));
}

TEST_CASE("load errors name the offending line") {
    TempDir dir("loaderr");
    write_small(dir);
    write_file(dir / "c.csv", "sample_id,v0,v1,v2\nx1,1,1,1\nx2,2,2\n");
    try {
        load_dataset(load_manifest(dir / "manifest.json"));
        FAIL("expected a data error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("c.csv:3") != std::string::npos);
    }
    write_small(dir);
    write_file(dir / "labels.csv", "sample_id,label\nx1,1\nx2,0\n");
    CHECK_THROWS_AS(load_dataset(load_manifest(dir / "manifest.json")), DataError);
    write_small(dir);
    write_file(dir / "groups.csv", "sample_id,group_id\nx1,0\nx2,2\nx3,1\nx4,0\nx5,0\n");
    try {
        load_dataset(load_manifest(dir / "manifest.json"));
        FAIL("expected a data error");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("groups.csv:3") != std::string::npos);
    }
    write_small(dir);
    write_file(dir / "a.csv", "sample_id,v0,v1\nx1,1,abc\n");
    CHECK_THROWS_AS(load_dataset(load_manifest(dir / "manifest.json")), DataError);
}

TEST_CASE("write then load round-trips samples, masks, labels and groups") {
    auto ds = testutil::random_dataset(3, 40, 4, 3, 0.3);
    ds.samples[0].channels[0]->missing[1] = true;
    ds.samples[0].channels[0]->values[1] = std::nan("");
    TempDir dir("roundtrip");
    write_dataset(ds, dir.path());
    const auto back = load_dataset(load_manifest(dir / "manifest.json"));
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& a = ds.samples[i];
        const auto& b = back.samples[i];
        CHECK(a.sample_id == b.sample_id);
        CHECK(a.label == b.label);
        CHECK(a.group_id == b.group_id);
        REQUIRE(a.presence() == b.presence());
        for (std::size_t m = 0; m < a.channels.size(); ++m) {
            if (!a.present(m)) continue;
            CHECK((a.channels[m]->missing == b.channels[m]->missing).all());
            for (Index r = 0; r < a.channels[m]->values.size(); ++r) {
                if (!a.channels[m]->missing[r]) CHECK(a.channels[m]->values[r] == b.channels[m]->values[r]);
            }
        }
    }
}

TEST_CASE("split sizes, determinism, partition and training-only means") {
    const auto ds = testutil::random_dataset(5, 100, 3, 2);
    const auto a = split_dataset(ds, {0.6, 0.2, 0.2}, 7);
    CHECK(a.train.size() == 60);
    CHECK(a.val.size() == 20);
    CHECK(a.test.size() == 20);
    const auto b = split_dataset(ds, {0.6, 0.2, 0.2}, 7);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < a.train.size(); ++i) CHECK(a.train.samples[i].sample_id == b.train.samples[i].sample_id);
    for (const auto* part : {&a.train, &a.val, &a.test}) {
        for (const auto& s : part->samples) ids.insert(s.sample_id);
    }
    CHECK(ids.size() == 100);
    const auto means = compute_channel_means(a.train.manifest, a.train.samples);
    for (std::size_t m = 0; m < means.size(); ++m) {
        CHECK(means[m] == a.train.channel_means[m]);
        CHECK(a.val.channel_means[m] == a.train.channel_means[m]);
        CHECK(a.test.channel_means[m] == a.train.channel_means[m]);
    }
    // rewriting rows outside the training split leaves the means bit-identical
    std::set<std::string> train_ids;
    for (const auto& smp : a.train.samples) train_ids.insert(smp.sample_id);
    auto altered = ds;
    for (auto& smp : altered.samples) {
        if (train_ids.count(smp.sample_id)) continue;
        for (auto& c : smp.channels) {
            if (c) c->values *= -17.0;
        }
    }
    const auto c = split_dataset(altered, {0.6, 0.2, 0.2}, 7);
    for (std::size_t m = 0; m < means.size(); ++m) CHECK(c.train.channel_means[m] == a.train.channel_means[m]);
    auto other = split_dataset(ds, {0.6, 0.2, 0.2}, 8);
    CHECK(other.train.samples[0].sample_id != a.train.samples[0].sample_id);
    CHECK_THROWS_AS(split_dataset(ds, {0.8, 0.0, 0.2}, 7), DataError);
    CHECK_THROWS_AS(split_dataset(ds, {0.5, 0.2, 0.2}, 7), DataError);
}

TEST_CASE("validation report") {
    auto full = testutil::random_dataset(9, 50, 3, 2, 0.0);
    auto report = validate_dataset(full);
    for (const auto r : report.missing_rate) CHECK(r == 0.0);
    CHECK(report.incomplete_fraction == 0.0);

    auto ds = testutil::random_dataset(9, 100, 3, 2, 0.0);
    for (std::size_t i = 0; i < 25; ++i) ds.samples[i * 4].channels[2].reset();
    report = validate_dataset(ds);
    CHECK(report.missing_rate[2] == doctest::Approx(0.25));
    CHECK(report.n_pos + report.n_neg == 100);
    std::size_t groups = 0;
    for (const auto c : report.group_counts) groups += c;
    CHECK(groups == 100);

    for (auto& s : ds.samples) s.label = 1;
    report = validate_dataset(ds);
    CHECK_FALSE(report.warnings.empty());
}

TEST_CASE("csv helpers") {
    CHECK(csv::split("a,,b,") == std::vector<std::string>{"a", "", "b", ""});
    for (const double v : {0.1, 1.0 / 3.0, -2.5e-300, 12345678.9}) CHECK(std::stod(csv::format_double(v)) == v);
}

}
