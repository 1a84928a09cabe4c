#include "mamkl/synthetic.hpp"

#include <cmath>
#include <cstdio>

#include "mamkl/metrics.hpp"
#include "mamkl/random.hpp"
#include "mamkl/serialize.hpp"

namespace mamkl {

using nlohmann::json;

void SyntheticConfig::normalize() {
    if (n_samples < 2) throw DataError("synthetic: n_samples must be at least 2");
    if (s < 1 || T < 1) throw DataError("synthetic: s and T must be positive");
    const auto channels = static_cast<std::size_t>(s);
    if (dims.empty()) dims.assign(channels, 4);
    if (missing_rates.empty()) missing_rates.assign(channels, 0.2);
    if (kernels.empty()) kernels.assign(channels, "linear");
    if (dims.size() != channels || missing_rates.size() != channels || kernels.size() != channels) {
        throw DataError("synthetic: per-channel lists must have s entries");
    }
    for (const auto d : dims) {
        if (d < 1) throw DataError("synthetic: dims must be >= 1");
    }
    for (const auto r : missing_rates) {
        if (!(r >= 0.0 && r < 1.0)) throw DataError("synthetic: missing rates must lie in [0, 1)");
    }
    for (const auto& k : kernels) kernel_kind_from_string(k);
    approx_kind_from_string(approx);
    if (!(partial_rate >= 0.0 && partial_rate < 1.0)) throw DataError("synthetic: partial_rate must lie in [0, 1)");
    if (!(noise >= 0.0) || !(coupling >= 0.0) || !(heterogeneity >= 0.0)) {
        throw DataError("synthetic: noise, coupling and heterogeneity must be nonnegative");
    }
    if (!(bandwidth > 0.0)) throw DataError("synthetic: bandwidth must be positive");
    if (rbf_feature_dim < 2 || rbf_feature_dim % 2 != 0) throw DataError("synthetic: rbf_feature_dim must be even");
}

json to_json(const SyntheticConfig& c) {
    return json{{"n_samples", c.n_samples}, {"s", c.s},
                {"T", c.T},                 {"dims", c.dims},
                {"missing_rates", c.missing_rates},
                {"kernels", c.kernels},     {"bandwidth", c.bandwidth},
                {"rbf_feature_dim", c.rbf_feature_dim},
                {"approx", c.approx},       {"partial_rate", c.partial_rate},
                {"coupling", c.coupling},   {"heterogeneity", c.heterogeneity},
                {"noise", c.noise},         {"concat", c.concat},
                {"seed", c.seed}};
}

SyntheticConfig synthetic_config_from_json(const json& j) {
    SyntheticConfig c;
    try {
        c.n_samples = j.value("n_samples", c.n_samples);
        c.s = j.value("s", c.s);
        c.T = j.value("T", c.T);
        c.dims = j.value("dims", c.dims);
        c.missing_rates = j.value("missing_rates", c.missing_rates);
        if (j.contains("missing_rate")) {
            c.missing_rates.assign(static_cast<std::size_t>(c.s), j.at("missing_rate").get<double>());
        }
        c.kernels = j.value("kernels", c.kernels);
        c.bandwidth = j.value("bandwidth", c.bandwidth);
        c.rbf_feature_dim = j.value("rbf_feature_dim", c.rbf_feature_dim);
        c.approx = j.value("approx", c.approx);
        c.partial_rate = j.value("partial_rate", c.partial_rate);
        c.coupling = j.value("coupling", c.coupling);
        c.heterogeneity = j.value("heterogeneity", c.heterogeneity);
        c.noise = j.value("noise", c.noise);
        c.concat = j.value("concat", c.concat);
        c.seed = j.value("seed", c.seed);
    } catch (const json::exception& e) {
        throw DataError(std::string("synthetic config: ") + e.what());
    }
    c.normalize();
    return c;
}

SyntheticData generate_synthetic(SyntheticConfig config, std::optional<std::uint64_t> sample_seed) {
    config.normalize();
    const auto s = static_cast<std::size_t>(config.s);

    // Generator parameters.
    Rng param_rng(derive_seed(config.seed, "synthetic params"));
    std::vector<Vector> concepts;
    for (std::size_t m = 0; m < s; ++m) {
        Vector w(config.dims[m]);
        for (Index r = 0; r < w.size(); ++r) w[r] = param_rng.normal();
        concepts.push_back(w / w.norm());
    }
    Matrix alpha(config.T, config.s);
    for (Index t = 0; t < alpha.rows(); ++t) {
        for (Index m = 0; m < alpha.cols(); ++m) alpha(t, m) = 1.0 + config.heterogeneity * param_rng.uniform(-1.0, 1.0);
    }
    const double flip = 4.0 * config.coupling;
    auto partner = [&](std::size_t m) { return (m + 1) % s; };

    SyntheticData out;
    auto& ds = out.dataset;
    auto& manifest = ds.manifest;
    manifest.name = "synthetic";
    manifest.num_groups = config.T;
    for (std::size_t m = 0; m < s; ++m) {
        ChannelSpec spec;
        spec.id = static_cast<int>(m);
        spec.name = "ch" + std::to_string(m);
        spec.dim = config.dims[m];
        spec.kernel = kernel_kind_from_string(config.kernels[m]);
        if (spec.kernel == KernelKind::linear) {
            spec.feature_dim = spec.dim;
        } else {
            spec.bandwidth = config.bandwidth;
            spec.feature_dim = config.rbf_feature_dim;
            spec.approx = approx_kind_from_string(config.approx);
            spec.map_seed = derive_seed(config.seed, "map " + spec.name);
        }
        manifest.channels.push_back(spec);
    }
    if (config.concat) manifest.concat = make_auto_concat(manifest.channels, config.seed);
    manifest.validate();

    Rng rng(derive_seed(sample_seed.value_or(config.seed), "synthetic samples"));
    out.bayes_score.resize(config.n_samples);
    ds.samples.reserve(static_cast<std::size_t>(config.n_samples));
    std::size_t n_pos = 0;
    for (int i = 0; i < config.n_samples; ++i) {
        MultiChannelSample sample;
        char id[32];
        std::snprintf(id, sizeof(id), "s%06d", i);
        sample.sample_id = id;
        sample.group_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.T)));
        std::vector<bool> present(s);
        bool any = false;
        for (std::size_t m = 0; m < s; ++m) {
            present[m] = rng.uniform() >= config.missing_rates[m];
            any = any || present[m];
        }
        if (!any) present[static_cast<std::size_t>(rng.below(s))] = true;

        double score = 0.0;
        sample.channels.resize(s);
        for (std::size_t m = 0; m < s; ++m) {
            Vector x(config.dims[m]);
            for (Index r = 0; r < x.size(); ++r) x[r] = rng.normal();
            if (!present[m]) continue;
            const double weight = alpha(sample.group_id, static_cast<Index>(m)) - (present[partner(m)] ? 0.0 : flip);
            score += weight * concepts[m].dot(x);
            Eigen::Array<bool, Eigen::Dynamic, 1> missing(x.size());
            for (Index r = 0; r < x.size(); ++r) missing[r] = config.partial_rate > 0.0 && rng.uniform() < config.partial_rate;
            if (missing.all()) missing[0] = false;
            for (Index r = 0; r < x.size(); ++r) {
                if (missing[r]) x[r] = std::nan("");
            }
            sample.channels[m] = ChannelValue(std::move(x), std::move(missing));
        }
        out.bayes_score[i] = score;
        sample.label = score + config.noise * rng.normal() > 0.0 ? 1 : -1;
        n_pos += sample.label > 0 ? 1 : 0;
        ds.samples.push_back(std::move(sample));
    }
    if (n_pos == 0 || n_pos == ds.samples.size()) {
        throw DataError("synthetic: configuration produced a single label class");
    }
    ds.channel_means = compute_channel_means(manifest, ds.samples);

    json concept_json = json::array();
    for (const auto& w : concepts) concept_json.push_back(std::vector<double>(w.data(), w.data() + w.size()));
    json scores = json::object();
    for (std::size_t i = 0; i < ds.samples.size(); ++i) scores[ds.samples[i].sample_id] = out.bayes_score[static_cast<Index>(i)];
    std::vector<int> partners;
    for (std::size_t m = 0; m < s; ++m) partners.push_back(static_cast<int>(partner(m)));
    out.truth = json{{"format", "mamkl"},
                     {"version", kFormatVersion},
                     {"kind", "synthetic_truth"},
                     {"config", to_json(config)},
                     {"description",
                      "label = sign(sum over present m of c_m * w_m'x_m + noise * N(0,1)); "
                      "c_m = alpha[group][m] - 4 * coupling * [partner(m) absent]"},
                     {"concepts", concept_json},
                     {"alpha", matrix_to_json(alpha)},
                     {"partner", partners},
                     {"bayes_score", scores}};
    return out;
}

void write_synthetic(const SyntheticData& data, const std::filesystem::path& dir) {
    write_dataset(data.dataset, dir);
    write_json(dir / "truth.json", data.truth);
}

double bayes_auroc(const SyntheticConfig& config, int n_draws, std::uint64_t mc_seed) {
    SyntheticConfig draw = config;
    draw.n_samples = n_draws;
    const auto data = generate_synthetic(draw, mc_seed);
    Vector labels(data.dataset.size());
    for (std::size_t i = 0; i < data.dataset.size(); ++i) labels[static_cast<Index>(i)] = data.dataset.samples[i].label;
    return auroc(data.bayes_score, labels);
}

}  // namespace mamkl
