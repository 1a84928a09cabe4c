#include <doctest.h>

#include <cmath>
#include <numeric>

#include "mamkl/metrics.hpp"
#include "mamkl/oracle.hpp"
#include "mamkl/synthetic.hpp"
#include "mamkl/trainer.hpp"
#include "test_util.hpp"

using namespace mamkl;

namespace {

struct Fixture {
    Dataset dataset;
    FeatureMapper mapper;
    MappedDataset data;
};

Fixture make_fixture(std::uint64_t seed, int n = 30, int s = 3, int T = 2, AbsentFill fill = AbsentFill::none) {
    Fixture f;
    f.dataset = testutil::random_dataset(seed, n, s, T, 0.3);
    f.mapper = FeatureMapper::build(f.dataset.manifest, f.dataset.channel_means, fill);
    f.data = f.mapper.map_dataset(f.dataset);
    return f;
}

void randomize(MklModel& model, Rng& rng, double scale = 0.3) {
    for (auto& w : model.omegas) {
        for (auto& x : w) x = scale * rng.normal();
    }
    model.bias = scale * rng.normal();
    for (Index i = 0; i < model.V.size(); ++i) model.V.data()[i] = rng.uniform(-1, 1);
    for (Index i = 0; i < model.A.size(); ++i) model.A.data()[i] = rng.uniform(0, 2);
}

// Primal objective summed term by term with explicit loops.
double reference_objective(const MklModel& model, const MappedDataset& data, const TrainConfig& c) {
    const auto s = static_cast<Index>(model.num_kernels());
    double total = 0.0;
    for (Index i = data.size() - 1; i >= 0; --i) {
        const Vector p = data.patterns.col(i);
        double f = model.bias;
        for (Index m = 0; m < s; ++m) {
            double eta = 0.0;
            if (model.mode == Mode::fixed_weight) {
                eta = std::sqrt(model.fixed_eta[m]);
            } else {
                for (Index j = 0; j < 2 * s; ++j) {
                    const double a = model.mode == Mode::samkl ? model.A(j, data.groups[i]) : 1.0;
                    eta += model.V.col(m).dot(model.V.col(j)) * p[j] * a;
                }
            }
            double dot = 0.0;
            const auto& w = model.omegas[static_cast<std::size_t>(m)];
            for (Index r = 0; r < w.size(); ++r) dot += w[r] * data.features[static_cast<std::size_t>(m)](r, i);
            f += eta * dot;
        }
        total += c.c1 * std::max(0.0, 1.0 - data.labels[i] * f);
    }
    for (const auto& w : model.omegas) {
        for (const double x : w) total += 0.5 * x * x;
    }
    if (model.mode != Mode::fixed_weight) {
        for (Index i = 0; i < model.V.size(); ++i) total += c.c2 * model.V.data()[i] * model.V.data()[i];
    }
    if (model.mode == Mode::samkl) {
        for (Index i = 0; i < model.A.size(); ++i) total += c.c3 * (model.A.data()[i] - 1) * (model.A.data()[i] - 1);
    }
    return total;
}

std::vector<Index> iota_rows(Index n) {
    std::vector<Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
    return rows;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("decision examples") {
    auto f = make_fixture(1);
    TrainConfig c;
    auto model = init_model(f.mapper, 2, Mode::samkl, c);
    CHECK(decision(model, f.data, 0, f.data.groups[0]) == 0.0);
    model.bias = 0.7;
    CHECK(decision(model, f.data, 3, f.data.groups[3]) == 0.7);

    // one present rbf channel, V = identity, a = 1, omega = phi(x)
    MultiChannelSample sample = f.dataset.samples[0];
    for (auto& ch : sample.channels) ch.reset();
    Vector x(f.dataset.manifest.channels[1].dim);
    x.setConstant(0.25);
    sample.channels[1] = ChannelValue(x);
    const auto mapped = f.mapper.map_sample(sample);
    model.V = Matrix::Identity(6, 6);
    model.omegas[1] = mapped.features[1];
    CHECK(decision(model, mapped, 0) == doctest::Approx(1.0 + 0.7).epsilon(1e-12));
    CHECK_THROWS_AS(decision(model, mapped, 2), ShapeError);
}

TEST_CASE("objective examples") {
    auto f = make_fixture(2);
    TrainConfig c;
    c.c1 = 2.5;
    auto model = init_model(f.mapper, 2, Mode::samkl, c);
    model.V.setZero();
    CHECK(objective(model, f.data, c) == doctest::Approx(2.5 * 30));
    auto flipped = f.data;
    flipped.labels = -flipped.labels;
    CHECK(objective(model, flipped, c) == objective(model, f.data, c));
    Rng rng(3);
    for (const auto mode : {Mode::samkl, Mode::mamkl}) {
        for (int t = 0; t < 5; ++t) {
            auto m = init_model(f.mapper, 2, mode, c);
            randomize(m, rng);
            if (mode == Mode::mamkl) m.A.setOnes();
            c.c2 = rng.uniform(0, 2);
            c.c3 = rng.uniform(0, 2);
            const double ref = reference_objective(m, f.data, c);
            CHECK(std::abs(objective(m, f.data, c) - ref) <= 1e-10 * std::max(1.0, std::abs(ref)));
        }
    }
}

TEST_CASE("gradients with an empty support set are the regularizer terms") {
    auto f = make_fixture(4);
    TrainConfig c;
    c.c2 = 0.3;
    c.c3 = 0.7;
    Rng rng(5);
    auto model = init_model(f.mapper, 2, Mode::samkl, c);
    randomize(model, rng);
    // A huge bias pushes every margin of the positive rows past 1.
    model.bias = 1e6;
    std::vector<Index> pos;
    for (Index i = 0; i < f.data.size(); ++i) {
        if (f.data.labels[i] > 0) pos.push_back(i);
    }
    const auto g = gradients(model, f.data, pos, c);
    CHECK(g.support_size == 0);
    for (std::size_t m = 0; m < model.num_kernels(); ++m) CHECK(g.omegas[m] == model.omegas[m]);
    CHECK(g.bias == 0.0);
    CHECK((g.V - 2 * 0.3 * model.V).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK((g.A - 2 * 0.7 * (model.A.array() - 1).matrix()).cwiseAbs().maxCoeff() <= 1e-15);
    const auto half = gradients(model, f.data, pos, c, 0.5);
    CHECK((half.omegas[0] - 0.5 * model.omegas[0]).cwiseAbs().maxCoeff() <= 1e-15);

    auto mam = init_model(f.mapper, 2, Mode::mamkl, c);
    randomize(mam, rng);
    mam.A.setOnes();
    CHECK(gradients(mam, f.data, iota_rows(f.data.size()), c).A.isZero(0.0));
}

TEST_CASE("gradients match central differences of an independent objective") {
    auto f = make_fixture(6, 24, 3, 2);
    Rng rng(7);
    TrainConfig c;
    c.c1 = 0.8;
    c.c2 = 0.2;
    c.c3 = 0.4;
    for (const auto mode : {Mode::samkl, Mode::mamkl}) {
        auto model = init_model(f.mapper, 2, mode, c);
        randomize(model, rng, 0.2);
        if (mode == Mode::mamkl) model.A.setOnes();
        const auto rows = iota_rows(f.data.size());
        const auto g = gradients(model, f.data, rows, c);
        // hand-rolled central differences on the bias and a few V entries
        const double h = 1e-6;
        auto perturbed = [&](auto&& setter, double delta) {
            auto m = model;
            setter(m, delta);
            return reference_objective(m, f.data, c);
        };
        const double db = (perturbed([](MklModel& m, double d) { m.bias += d; }, h) -
                           perturbed([](MklModel& m, double d) { m.bias += d; }, -h)) /
                          (2 * h);
        CHECK(std::abs(db - g.bias) <= 1e-5 * std::max(1.0, std::abs(db)));
        for (const auto& [r, col] : {std::pair<Index, Index>{0, 0}, {1, 4}, {2, 5}}) {
            const double dv = (perturbed([&](MklModel& m, double d) { m.V(r, col) += d; }, h) -
                               perturbed([&](MklModel& m, double d) { m.V(r, col) += d; }, -h)) /
                              (2 * h);
            CHECK(std::abs(dv - g.V(r, col)) <= 1e-5 * std::max(1.0, std::abs(dv)));
        }
        if (mode == Mode::samkl) {
            const double da = (perturbed([](MklModel& m, double d) { m.A(1, 1) += d; }, h) -
                               perturbed([](MklModel& m, double d) { m.A(1, 1) += d; }, -h)) /
                              (2 * h);
            CHECK(std::abs(da - g.A(1, 1)) <= 1e-5 * std::max(1.0, std::abs(da)));
        }
    }
}

TEST_CASE("oracle gradient check on random kink-free states") {
    Rng rng(8);
    for (const auto mode : {Mode::samkl, Mode::mamkl}) {
        for (int t = 0; t < 3; ++t) {
            const auto inst = oracle::random_grad_instance(rng, 32, 4, 3, 3, mode);
            const auto report = oracle::check_gradients(inst.model, inst.data, iota_rows(inst.data.size()), inst.config);
            CHECK(report.min_margin_gap > 1e-3);
            CHECK(report.max_rel_error() <= 1e-4);
        }
    }
}

TEST_CASE("a huge group penalty turns samkl into mamkl") {
    auto f = make_fixture(17, 60, 3, 3);
    TrainConfig c;
    c.epochs = 6;
    c.batch_size = 8;
    c.learning_rate = 0.01;
    const auto ma = train(c, f.data, Mode::mamkl, f.mapper);
    c.c3 = 1e12;
    const auto sa = train(c, f.data, Mode::samkl, f.mapper);
    REQUIRE(ma.history.size() == sa.history.size());
    for (std::size_t e = 0; e < ma.history.size(); ++e) {
        CHECK(std::abs(ma.history[e].objective - sa.history[e].objective) <= 1e-6);
    }
    CHECK((sa.model.A.array() - 1.0).abs().maxCoeff() <= 1e-6);
    CHECK((predict(ma.model, f.data) - predict(sa.model, f.data)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("zero epochs return the initial model") {
    auto f = make_fixture(9);
    TrainConfig c;
    c.epochs = 0;
    c.seed = 5;
    const auto r = train(c, f.data, Mode::samkl, f.mapper);
    const auto init = init_model(f.mapper, 2, Mode::samkl, c);
    CHECK(r.history.empty());
    CHECK(r.model.bias == 0.0);
    CHECK((r.model.A.array() == 1.0).all());
    CHECK(r.model.V == init.V);
    for (const auto& w : r.model.omegas) CHECK(w.isZero(0.0));
}

TEST_CASE("one epoch follows the update schedule step by step") {
    auto f = make_fixture(10, 10, 3, 2);
    TrainConfig c;
    c.epochs = 1;
    c.batch_size = 4;  // H = 2 batches, two rows dropped
    c.learning_rate = 0.05;
    c.seed = 3;
    const auto r = train(c, f.data, Mode::mamkl, f.mapper);

    auto model = init_model(f.mapper, 2, Mode::mamkl, c);
    std::vector<Index> order = iota_rows(10);
    Rng shuffle(derive_seed(c.seed, "shuffle"));
    shuffle.shuffle(order);
    for (int b = 0; b < 2; ++b) {
        const std::vector<Index> batch(order.begin() + 4 * b, order.begin() + 4 * b + 4);
        const auto g = gradients(model, f.data, batch, c);
        model.V -= c.learning_rate * g.V;
        model.bias -= c.learning_rate * g.bias;
        for (std::size_t m = 0; m < model.num_kernels(); ++m) model.omegas[m] -= c.learning_rate * g.omegas[m];
    }
    CHECK(r.model.V == model.V);
    CHECK(r.model.bias == model.bias);
    for (std::size_t m = 0; m < model.num_kernels(); ++m) CHECK(r.model.omegas[m] == model.omegas[m]);
    REQUIRE(r.history.size() == 1);
    CHECK(r.history[0].objective == objective(model, f.data, c));

    // fewer rows than one batch: a single batch of all rows
    c.batch_size = 64;
    const auto whole = train(c, f.data, Mode::mamkl, f.mapper);
    auto one = init_model(f.mapper, 2, Mode::mamkl, c);
    const auto g = gradients(one, f.data, iota_rows(10), c);
    CHECK(whole.model.bias == doctest::Approx(-c.learning_rate * g.bias).epsilon(1e-12));
}

TEST_CASE("training is deterministic and lowers the objective") {
    SyntheticConfig sc;
    sc.n_samples = 400;
    sc.seed = 4;
    const auto synth = generate_synthetic(sc);
    const auto mapper = FeatureMapper::build(synth.dataset.manifest, synth.dataset.channel_means);
    const auto data = mapper.map_dataset(synth.dataset);
    TrainConfig c;
    c.learning_rate = 1e-3;
    c.batch_size = 32;
    c.epochs = 50;
    c.seed = 2;
    const auto init = init_model(mapper, sc.T, Mode::samkl, c);
    const auto a = train(c, data, Mode::samkl, mapper);
    const auto b = train(c, data, Mode::samkl, mapper);
    CHECK(a.model.V == b.model.V);
    CHECK(a.model.A == b.model.A);
    CHECK(a.model.bias == b.model.bias);
    CHECK(predict(a.model, data) == predict(b.model, data));
    CHECK(a.history.back().objective < objective(init, data, c));
    CHECK(auroc(predict(a.model, data), data.labels) > 0.5);
    // scoring the training set again reproduces the final-epoch objective
    CHECK(objective(a.model, data, c) == a.history.back().objective);
}

TEST_CASE("sequential updates coincide with simultaneous ones for fixed weights") {
    auto f = make_fixture(11, 40, 3, 2, AbsentFill::zero);
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 8;
    c.learning_rate = 0.01;
    const Vector eta = Vector::Constant(3, 1.0 / 3.0);
    const auto simul = train_fixed(c, f.data, f.mapper, eta);
    c.sequential_updates = true;
    const auto seq = train_fixed(c, f.data, f.mapper, eta);
    CHECK(simul.model.bias == seq.model.bias);
    for (std::size_t m = 0; m < 3; ++m) CHECK(simul.model.omegas[m] == seq.model.omegas[m]);
    // adaptive blocks see each other's updates, so the paths differ
    auto g = make_fixture(11, 40, 3, 2);
    const auto s1 = train(c, g.data, Mode::samkl, g.mapper);
    c.sequential_updates = false;
    const auto s2 = train(c, g.data, Mode::samkl, g.mapper);
    CHECK(s1.model.V != s2.model.V);
}

TEST_CASE("divergence raises a numeric error") {
    auto f = make_fixture(12);
    TrainConfig c;
    c.learning_rate = 1e6;
    c.c1 = 1e6;
    c.epochs = 20;
    c.batch_size = 4;
    CHECK_THROWS_AS(train(c, f.data, Mode::samkl, f.mapper), NumericError);
}

TEST_CASE("invalid configs are rejected") {
    auto f = make_fixture(13);
    TrainConfig c;
    c.c1 = -1;
    CHECK_THROWS_AS(train(c, f.data, Mode::samkl, f.mapper), ShapeError);
    c = TrainConfig{};
    c.batch_size = 0;
    CHECK_THROWS_AS(train(c, f.data, Mode::samkl, f.mapper), ShapeError);
    c = TrainConfig{};
    c.learning_rate = 0;
    CHECK_THROWS_AS(c.validate(), ShapeError);
    CHECK_THROWS_AS(train(TrainConfig{}, f.data, Mode::fixed_weight, f.mapper), ShapeError);
    const auto j = to_json(TrainConfig{});
    CHECK(j.at("learning_rate") == 1e-4);
    CHECK(j.at("batch_size") == 256);
    CHECK(j.at("epochs") == 50);
}

TEST_CASE("unseen groups score like the pattern-only model") {
    auto f = make_fixture(14, 30, 3, 3);
    for (Index i = 0; i < f.data.size(); ++i) f.data.groups[i] = static_cast<int>(i % 2);  // group 2 unseen
    TrainConfig c;
    c.epochs = 5;
    c.batch_size = 8;
    c.learning_rate = 0.01;
    auto model = train(c, f.data, Mode::samkl, f.mapper).model;
    CHECK_FALSE(model.seen_groups[2]);
    model.A.col(2).setConstant(5.0);  // would matter if it were used
    auto as_mamkl = model;
    as_mamkl.mode = Mode::mamkl;
    auto probe = f.data;
    for (Index i = 0; i < probe.size(); ++i) probe.groups[i] = 2;
    const Vector s = predict(model, probe);
    const Vector m = predict(as_mamkl, probe);
    CHECK(s == m);
}

TEST_CASE("sparse samples give finite scores") {
    auto f = make_fixture(15, 20, 4, 2);
    TrainConfig c;
    c.epochs = 2;
    c.batch_size = 4;
    c.learning_rate = 0.01;
    const auto model = train(c, f.data, Mode::samkl, f.mapper).model;
    auto ds = f.dataset;
    for (auto& smp : ds.samples) {
        for (std::size_t m = 1; m < smp.channels.size(); ++m) smp.channels[m].reset();
        if (!smp.channels[0]) smp.channels[0] = ChannelValue(Vector::Ones(ds.manifest.channels[0].dim));
    }
    CHECK(predict(model, ds).allFinite());
    auto wrong = ds;
    wrong.manifest.channels[0].name = "other";
    CHECK_THROWS_AS(predict(model, wrong), ShapeError);
}

TEST_CASE("absent channel contents never change predictions") {
    auto ds = testutil::random_dataset(16, 40, 4, 2, 0.4, true);
    const auto mapper = FeatureMapper::build(ds.manifest, ds.channel_means);
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 8;
    c.learning_rate = 0.01;
    const auto model = train(c, mapper.map_dataset(ds), Mode::samkl, mapper).model;
    const Vector before = predict(model, ds);
    Rng rng(2);
    for (auto& smp : ds.samples) {
        for (std::size_t m = 0; m < smp.channels.size(); ++m) {
            if (smp.present(m)) continue;
            Vector junk(ds.manifest.channels[m].dim);
            for (auto& v : junk) v = 1e3 * rng.normal();
            smp.channels[m] = ChannelValue(junk, Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(junk.size(), true));
        }
    }
    CHECK(predict(model, ds) == before);
}

TEST_CASE("lp closed form") {
    // equal norms: uniform on the unit lp-sphere
    for (const double p : {1.0, 10.0, 1e4}) {
        const Vector eta = lp_kernel_weights(Vector::Constant(4, 2.0), p);
        CHECK((eta.array() - eta[0]).abs().maxCoeff() <= 1e-12);
        CHECK(std::pow(eta.array().pow(p).sum(), 1.0 / p) == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(lp_kernel_weights((Vector(3) << 1, 0, 0).finished(), 1.0) == (Vector(3) << 1, 0, 0).finished());
    CHECK(lp_kernel_weights(Vector::Zero(4), 1.0) == Vector::Constant(4, 0.25));
    CHECK_THROWS_AS(lp_kernel_weights(Vector::Ones(2), 0.5), ShapeError);
}

TEST_CASE("lp closed form minimizes the weighted norm on the lp-sphere") {
    // min_eta sum n_m^2 / eta_m over eta >= 0, |eta|_p = 1, by grid search over eta_1
    const Vector norms = (Vector(2) << 2, 1).finished();
    for (const double p : {1.0, 2.0, 10.0}) {
        double best = INFINITY, best_eta1 = 0.0;
        const int grid = 200000;
        for (int k = 1; k < grid; ++k) {
            const double e1 = static_cast<double>(k) / grid;
            const double e2 = std::pow(1.0 - std::pow(e1, p), 1.0 / p);
            if (!(e2 > 0)) continue;
            const double val = norms[0] * norms[0] / e1 + norms[1] * norms[1] / e2;
            if (val < best) {
                best = val;
                best_eta1 = e1;
            }
        }
        const Vector eta = lp_kernel_weights(norms, p);
        CHECK(std::abs(eta[0] - best_eta1) <= 1e-4);
    }
    CHECK(lp_kernel_weights(norms, 1.0)[0] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("lp baseline keeps weights feasible") {
    for (const auto fill : {AbsentFill::zero, AbsentFill::mean}) {
        auto f = make_fixture(17, 40, 3, 2, fill);
        for (const double p : {1.0, 10.0, 100.0}) {
            TrainConfig c;
            c.epochs = 3;
            c.batch_size = 8;
            c.learning_rate = 0.01;
            c.p_norm = p;
            c.outer_rounds = 4;
            const auto r = train_lp_baseline(c, f.data, f.mapper);
            const Vector& eta = r.model.fixed_eta;
            CHECK((eta.array() >= 0).all());
            CHECK(std::abs(std::pow(eta.array().pow(p).sum(), 1.0 / p) - 1.0) <= 1e-9);
            CHECK(r.history.size() == 12);
            const double ref = reference_objective(r.model, f.data, c);
            CHECK(std::abs(objective(r.model, f.data, c) - ref) <= 1e-10 * std::max(1.0, ref));
        }
    }
    auto f = make_fixture(17, 40, 3, 2);
    CHECK_THROWS_AS(train_lp_baseline(TrainConfig{}, f.data, f.mapper), ShapeError);
}

TEST_CASE("bandwidth selection scans powers of the pooled std") {
    SyntheticConfig sc;
    sc.n_samples = 300;
    sc.s = 2;
    sc.kernels = {"rbf", "rbf"};
    sc.rbf_feature_dim = 64;
    const auto synth = generate_synthetic(sc);
    const auto parts = split_dataset(synth.dataset, {}, 1);
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 16;
    c.learning_rate = 0.01;
    const auto choice = select_bandwidth(parts.train, parts.val, {0, 1}, c);
    REQUIRE(choice.candidates.size() == 5);
    for (int e = -2; e <= 2; ++e) {
        CHECK(choice.candidates[static_cast<std::size_t>(e + 2)] == doctest::Approx(std::pow(choice.base_sigma, e)));
    }
    CHECK(std::find(choice.candidates.begin(), choice.candidates.end(), choice.best) != choice.candidates.end());
    CHECK(choice.val_auroc.size() == 5);
}

}
