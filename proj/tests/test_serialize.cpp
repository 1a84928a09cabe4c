#include <doctest.h>

#include "mamkl/serialize.hpp"
#include "test_util.hpp"

using namespace mamkl;
using testutil::TempDir;

TEST_SUITE("serialize") {

TEST_CASE("model files round-trip exactly") {
    auto ds = testutil::random_dataset(21, 30, 4, 3, 0.3, true);
    const auto mapper = FeatureMapper::build(ds.manifest, ds.channel_means);
    const auto data = mapper.map_dataset(ds);
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 8;
    c.learning_rate = 0.013;
    c.seed = 99;
    const auto model = train(c, data, Mode::samkl, mapper).model;
    TempDir dir("model");
    save_model(dir / "m.json", model, {{"note", "x"}});
    nlohmann::json meta;
    const auto back = load_model(dir / "m.json", &meta);
    CHECK(meta.at("note") == "x");
    CHECK(back.mode == Mode::samkl);
    CHECK(back.V == model.V);
    CHECK(back.A == model.A);
    CHECK(back.bias == model.bias);
    CHECK(back.seen_groups == model.seen_groups);
    CHECK(back.config.learning_rate == 0.013);
    CHECK(back.config.seed == 99);
    for (std::size_t m = 0; m < model.num_kernels(); ++m) CHECK(back.omegas[m] == model.omegas[m]);
    CHECK(predict(back, ds) == predict(model, ds));
    // writing the loaded model again gives the same bytes
    save_model(dir / "m2.json", back, meta);
    CHECK(testutil::read_file(dir / "m.json") == testutil::read_file(dir / "m2.json"));
}

TEST_CASE("mapper sidecar round-trip") {
    auto ds = testutil::random_dataset(22, 10, 3, 2, 0.2, true);
    const auto mapper = FeatureMapper::build(ds.manifest, ds.channel_means, AbsentFill::mean);
    TempDir dir("mapper");
    save_mapper(dir / "mapper.json", mapper);
    const auto back = load_mapper(dir / "mapper.json");
    CHECK(back.fill() == AbsentFill::mean);
    const auto a = mapper.map_dataset(ds), b = back.map_dataset(ds);
    for (std::size_t m = 0; m < a.num_kernels(); ++m) CHECK(a.features[m] == b.features[m]);
}

TEST_CASE("matrices keep shape and order") {
    Matrix M(2, 3);
    M << 1, 2, 3, 4, 5, 6.000000000000001;
    const auto j = matrix_to_json(M);
    CHECK(j.at("data")[1] == 4.0);
    CHECK(matrix_from_json(nlohmann::json::parse(j.dump())) == M);
    auto bad = j;
    bad["rows"] = 4;
    CHECK_THROWS_AS(matrix_from_json(bad), DataError);
}

TEST_CASE("malformed files are data errors") {
    TempDir dir("bad");
    testutil::write_file(dir / "x.json", R"({"format":"mamkl","version":1,"kind":"mapper"})");
    CHECK_THROWS_AS(load_model(dir / "x.json"), DataError);
    testutil::write_file(dir / "y.json", R"({"format":"other"})");
    CHECK_THROWS_AS(load_mapper(dir / "y.json"), DataError);
    testutil::write_file(dir / "z.json", "[1,");
    CHECK_THROWS_AS(read_json(dir / "z.json"), DataError);
    CHECK_THROWS_AS(load_model(dir / "missing.json"), DataError);

    auto ds = testutil::random_dataset(23, 10, 2, 1);
    const auto mapper = FeatureMapper::build(ds.manifest, ds.channel_means);
    auto j = model_to_json(init_model(mapper, 1, Mode::samkl, TrainConfig{}));
    j["omegas"][0] = {1.0};
    CHECK_THROWS_AS(model_from_json(j), DataError);
}

}
