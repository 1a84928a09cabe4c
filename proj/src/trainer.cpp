#include "mamkl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mamkl/metrics.hpp"
#include "mamkl/random.hpp"
#include "mamkl/weights.hpp"

namespace mamkl {

using nlohmann::json;

std::string to_string(Mode mode) {
    switch (mode) {
        case Mode::mamkl: return "mamkl";
        case Mode::samkl: return "samkl";
        case Mode::fixed_weight: return "fixed_weight";
    }
    return "samkl";
}

Mode mode_from_string(const std::string& text) {
    if (text == "mamkl") return Mode::mamkl;
    if (text == "samkl") return Mode::samkl;
    if (text == "fixed_weight") return Mode::fixed_weight;
    throw DataError("unknown mode '" + text + "'");
}

void TrainConfig::validate() const {
    auto bad = [](const std::string& what) { throw ShapeError("invalid training config: " + what); };
    if (!(c1 >= 0) || !(c2 >= 0) || !(c3 >= 0)) bad("C1, C2, C3 must be nonnegative");
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) bad("learning rate must be positive");
    if (batch_size < 1) bad("batch size must be positive");
    if (epochs < 0) bad("epochs must be nonnegative");
    if (latent_k < 1) bad("latent dimension must be positive");
    if (!(p_norm >= 1) || !std::isfinite(p_norm)) bad("p must be >= 1");
    if (outer_rounds < 0) bad("outer rounds must be nonnegative");
}

json to_json(const TrainConfig& c) {
    return json{{"c1", c.c1},
                {"c2", c.c2},
                {"c3", c.c3},
                {"learning_rate", c.learning_rate},
                {"batch_size", c.batch_size},
                {"epochs", c.epochs},
                {"latent_k", c.latent_k},
                {"seed", c.seed},
                {"scale_reg_by_batches", c.scale_reg_by_batches},
                {"sequential_updates", c.sequential_updates},
                {"p_norm", c.p_norm},
                {"outer_rounds", c.outer_rounds}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.c1 = j.value("c1", c.c1);
    c.c2 = j.value("c2", c.c2);
    c.c3 = j.value("c3", c.c3);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.latent_k = j.value("latent_k", c.latent_k);
    c.seed = j.value("seed", c.seed);
    c.scale_reg_by_batches = j.value("scale_reg_by_batches", c.scale_reg_by_batches);
    c.sequential_updates = j.value("sequential_updates", c.sequential_updates);
    c.p_norm = j.value("p_norm", c.p_norm);
    c.outer_rounds = j.value("outer_rounds", c.outer_rounds);
    return c;
}

MklModel init_model(const FeatureMapper& mapper, int num_groups, Mode mode, const TrainConfig& config) {
    MklModel model;
    model.mode = mode;
    model.mapper = mapper;
    model.config = config;
    const auto s = static_cast<Index>(mapper.num_kernels());
    for (const auto& spec : mapper.kernels()) model.omegas.push_back(Vector::Zero(spec.feature_dim));
    if (mode == Mode::fixed_weight) {
        model.fixed_eta = Vector::Constant(s, 1.0 / static_cast<double>(s));
    } else {
        auto params = init_params(s, config.latent_k, num_groups, derive_seed(config.seed, "V init"));
        model.V = std::move(params.V);
        model.A = std::move(params.A);
    }
    model.seen_groups.assign(static_cast<std::size_t>(std::max(num_groups, 1)), false);
    return model;
}

Vector kernel_weights(const MklModel& model, const Eigen::Ref<const Vector>& pattern, int group) {
    switch (model.mode) {
        case Mode::fixed_weight: return model.fixed_eta.cwiseSqrt();
        case Mode::mamkl: return eta_mamkl(pattern, model.V);
        case Mode::samkl:
            if (group < 0) return eta_samkl(pattern, model.V, Vector::Ones(pattern.size()));
            if (group >= model.A.cols()) throw ShapeError("group id outside the model's group range");
            return eta_samkl(pattern, model.V, model.A.col(group));
    }
    return {};
}

namespace {

// Inner products <omega_m, phi_m(x_i)> for one sample.
Vector channel_scores(const MklModel& model, const MappedDataset& data, Index i) {
    const auto s = model.num_kernels();
    Vector z(static_cast<Index>(s));
    for (std::size_t m = 0; m < s; ++m) z[static_cast<Index>(m)] = data.features[m].col(i).dot(model.omegas[m]);
    return z;
}

void check_data(const MklModel& model, const MappedDataset& data) {
    if (data.num_kernels() != model.num_kernels()) throw ShapeError("mapped data and model differ in kernel count");
    for (std::size_t m = 0; m < model.num_kernels(); ++m) {
        if (data.features[m].rows() != model.omegas[m].size()) {
            throw ShapeError("mapped data and model differ in feature dimension of kernel " + std::to_string(m));
        }
    }
}

std::vector<Index> all_rows(Index n) {
    std::vector<Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
    return rows;
}

bool finite(const MklModel& model) {
    if (!std::isfinite(model.bias)) return false;
    for (const auto& w : model.omegas) {
        if (!w.allFinite()) return false;
    }
    return model.V.allFinite() && model.A.allFinite() && model.fixed_eta.allFinite();
}

}  // namespace

double decision(const MklModel& model, const MappedDataset& data, Index i, int group) {
    const Vector eta = kernel_weights(model, data.patterns.col(i), group);
    return eta.dot(channel_scores(model, data, i)) + model.bias;
}

double decision(const MklModel& model, const MappedSample& sample, int group) {
    if (sample.features.size() != model.num_kernels()) throw ShapeError("sample and model differ in kernel count");
    const Vector eta = kernel_weights(model, sample.pattern, group);
    double f = model.bias;
    for (std::size_t m = 0; m < model.num_kernels(); ++m) {
        f += eta[static_cast<Index>(m)] * sample.features[m].dot(model.omegas[m]);
    }
    return f;
}

double objective(const MklModel& model, const MappedDataset& data, const TrainConfig& config,
                 const std::vector<Index>& rows) {
    check_data(model, data);
    const auto& use = rows.empty() ? all_rows(data.size()) : rows;
    double loss = 0.0;
    for (const auto i : use) {
        const double f = decision(model, data, i, data.groups[i]);
        loss += std::max(0.0, 1.0 - data.labels[i] * f);
    }
    double reg = 0.0;
    for (const auto& w : model.omegas) reg += 0.5 * w.squaredNorm();
    double total = reg + config.c1 * loss;
    if (model.mode != Mode::fixed_weight) total += config.c2 * model.V.squaredNorm();
    if (model.mode == Mode::samkl) total += config.c3 * (model.A.array() - 1.0).matrix().squaredNorm();
    return total;
}

namespace {

std::vector<bool> support_set(const MklModel& model, const MappedDataset& data, const std::vector<Index>& batch) {
    std::vector<bool> support(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Index i = batch[b];
        support[b] = 1.0 - data.labels[i] * decision(model, data, i, data.groups[i]) > 0.0;
    }
    return support;
}

Gradients gradients_on_support(const MklModel& model, const MappedDataset& data, const std::vector<Index>& batch,
                               const std::vector<bool>& support, const TrainConfig& config, double reg_scale) {
    const auto s = static_cast<Index>(model.num_kernels());
    const double c1 = config.c1;
    const bool adaptive = model.mode != Mode::fixed_weight;
    const bool sample_adaptive = model.mode == Mode::samkl;

    Gradients g;
    g.omegas.reserve(model.num_kernels());
    for (const auto& w : model.omegas) g.omegas.push_back(reg_scale * w);
    g.V = adaptive ? Matrix(2.0 * config.c2 * reg_scale * model.V) : Matrix();
    g.A = sample_adaptive ? Matrix(2.0 * config.c3 * reg_scale * (model.A.array() - 1.0).matrix())
                          : Matrix::Zero(model.A.rows(), model.A.cols());

    Matrix outer = Matrix::Zero(2 * s, 2 * s);
    const Matrix gram = adaptive ? Matrix(model.V.transpose() * model.V) : Matrix();
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (!support[b]) continue;
        ++g.support_size;
        const Index i = batch[b];
        const double y = data.labels[i];
        const int group = data.groups[i];
        const Vector eta = kernel_weights(model, data.patterns.col(i), group);
        g.bias -= c1 * y;
        for (Index m = 0; m < s; ++m) {
            g.omegas[static_cast<std::size_t>(m)].noalias() -= (c1 * y * eta[m]) * data.features[static_cast<std::size_t>(m)].col(i);
        }
        if (!adaptive) continue;
        // d f / d V = V (z u' + u z') with z the padded channel scores and
        // u = p o a; d f / d a = (V'V z) o p.
        Vector z = Vector::Zero(2 * s);
        z.head(s) = y * channel_scores(model, data, i);
        Vector u = data.patterns.col(i);
        if (sample_adaptive) u.array() *= model.A.col(group).array();
        outer.noalias() += z * u.transpose();
        outer.noalias() += u * z.transpose();
        if (sample_adaptive) {
            g.A.col(group).array() -= c1 * (gram * z).array() * data.patterns.col(i).array();
        }
    }
    if (adaptive) g.V.noalias() -= c1 * model.V * outer;
    return g;
}

}  // namespace

Gradients gradients(const MklModel& model, const MappedDataset& data, const std::vector<Index>& batch,
                    const TrainConfig& config, double reg_scale) {
    check_data(model, data);
    return gradients_on_support(model, data, batch, support_set(model, data, batch), config, reg_scale);
}

namespace {

// Proximal step on the C3 |A - 1|^2 term: exact minimizer of the linearized
// loss plus the quadratic, stable for any C3 * learning rate.
void update_group_factors(MklModel& model, const Matrix& grad_a, const TrainConfig& config, double reg_scale) {
    const double beta = config.learning_rate;
    const double reg = 2.0 * config.c3 * reg_scale;
    const Matrix loss_grad = grad_a - reg * (model.A.array() - 1.0).matrix();
    model.A = ((model.A - beta * loss_grad).array() + beta * reg) / (1.0 + beta * reg);
}

void apply_step(MklModel& model, const MappedDataset& data, const std::vector<Index>& batch,
                const TrainConfig& config, double reg_scale) {
    const double beta = config.learning_rate;
    if (!config.sequential_updates) {
        const auto g = gradients(model, data, batch, config, reg_scale);
        if (model.mode != Mode::fixed_weight) model.V -= beta * g.V;
        if (model.mode == Mode::samkl) update_group_factors(model, g.A, config, reg_scale);
        model.bias -= beta * g.bias;
        for (std::size_t m = 0; m < model.num_kernels(); ++m) model.omegas[m] -= beta * g.omegas[m];
        return;
    }
    // Support set stays fixed at the batch-start iterate; each block sees
    // the blocks updated before it.
    const auto support = support_set(model, data, batch);
    if (model.mode != Mode::fixed_weight) {
        model.V -= beta * gradients_on_support(model, data, batch, support, config, reg_scale).V;
    }
    if (model.mode == Mode::samkl) {
        update_group_factors(model, gradients_on_support(model, data, batch, support, config, reg_scale).A, config,
                             reg_scale);
    }
    auto g = gradients_on_support(model, data, batch, support, config, reg_scale);
    model.bias -= beta * g.bias;
    for (std::size_t m = 0; m < model.num_kernels(); ++m) model.omegas[m] -= beta * g.omegas[m];
}

std::optional<double> validation_auroc(const MklModel& model, const MappedDataset* validation) {
    if (!validation || validation->size() == 0) return std::nullopt;
    const Vector scores = predict(model, *validation);
    const Index pos = (validation->labels.array() > 0).count();
    if (pos == 0 || pos == validation->size()) return std::nullopt;
    return auroc(scores, validation->labels);
}

// Runs `epochs` epochs of mini-batch descent on `model`, appending to history.
void run_epochs(MklModel& model, const MappedDataset& data, const TrainConfig& config, int epochs, Rng& shuffle_rng,
                std::vector<EpochRecord>& history, const MappedDataset* validation, const EpochCallback& on_epoch) {
    const Index n = data.size();
    if (n == 0) throw DataError("training data is empty");
    const auto h = static_cast<Index>(config.batch_size);
    // With fewer samples than one batch the whole set forms a single batch.
    const Index num_batches = std::max<Index>(n / h, 1);
    const Index batch_len = std::min(h, n);
    const double reg_scale = config.scale_reg_by_batches ? 1.0 / static_cast<double>(num_batches) : 1.0;
    std::vector<Index> order = all_rows(n);
    std::vector<Index> batch(static_cast<std::size_t>(batch_len));
    for (int e = 0; e < epochs; ++e) {
        shuffle_rng.shuffle(order);
        for (Index b = 0; b < num_batches; ++b) {
            std::copy_n(order.begin() + b * batch_len, batch_len, batch.begin());
            apply_step(model, data, batch, config, reg_scale);
            if (!finite(model)) {
                throw NumericError("non-finite parameters after epoch " + std::to_string(history.size() + 1) +
                                   "; lower the learning rate or C1");
            }
        }
        EpochRecord rec;
        rec.epoch = static_cast<int>(history.size()) + 1;
        rec.objective = objective(model, data, config);
        rec.val_auroc = validation_auroc(model, validation);
        history.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
}

void mark_seen_groups(MklModel& model, const MappedDataset& data) {
    for (Index i = 0; i < data.size(); ++i) {
        const auto g = static_cast<std::size_t>(data.groups[i]);
        if (g < model.seen_groups.size()) model.seen_groups[g] = true;
    }
}

}  // namespace

TrainResult train(const TrainConfig& config, const MappedDataset& data, Mode mode, const FeatureMapper& mapper,
                  const MappedDataset* validation, const EpochCallback& on_epoch) {
    config.validate();
    if (mode == Mode::fixed_weight) throw ShapeError("use train_fixed or train_lp_baseline for fixed weights");
    if (data.groups.size() > 0 && data.groups.maxCoeff() >= data.num_groups) {
        throw DataError("group id outside [0, num_groups)");
    }
    TrainResult result{init_model(mapper, data.num_groups, mode, config), {}};
    check_data(result.model, data);
    mark_seen_groups(result.model, data);
    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    run_epochs(result.model, data, config, config.epochs, shuffle_rng, result.history, validation, on_epoch);
    return result;
}

void check_channels(const MklModel& model, const DatasetManifest& manifest) {
    const auto& declared = manifest.channels;
    if (declared.size() != model.mapper.num_declared()) throw ShapeError("dataset and model differ in channel count");
    for (std::size_t m = 0; m < declared.size(); ++m) {
        const auto& spec = model.mapper.kernels()[m];
        if (declared[m].name != spec.name || declared[m].dim != spec.dim) {
            throw ShapeError("channel '" + declared[m].name + "' does not match model channel '" + spec.name + "'");
        }
    }
}

int effective_group(const MklModel& model, int group) {
    if (model.mode != Mode::samkl) return group;
    const auto g = static_cast<std::size_t>(group);
    if (group < 0 || g >= model.seen_groups.size() || !model.seen_groups[g]) return -1;
    return group;
}

Vector predict(const MklModel& model, const MappedDataset& data) {
    check_data(model, data);
    Vector scores(data.size());
    for (Index i = 0; i < data.size(); ++i) scores[i] = decision(model, data, i, effective_group(model, data.groups[i]));
    return scores;
}

Vector predict(const MklModel& model, const Dataset& dataset) {
    check_channels(model, dataset.manifest);
    return predict(model, model.mapper.map_dataset(dataset));
}

Vector lp_kernel_weights(const Eigen::Ref<const Vector>& norms, double p) {
    if (!(p >= 1)) throw ShapeError("lp weights: p must be >= 1");
    if (norms.size() == 0) throw ShapeError("lp weights: no kernels");
    if ((norms.array() < 0).any() || !norms.allFinite()) throw ShapeError("lp weights: norms must be finite and >= 0");
    const auto s = static_cast<double>(norms.size());
    if ((norms.array() == 0).all()) return Vector::Constant(norms.size(), std::pow(s, -1.0 / p));
    const Vector numer = norms.array().pow(2.0 / (p + 1.0));
    const double denom = std::pow(norms.array().pow(2.0 * p / (p + 1.0)).sum(), 1.0 / p);
    return numer / denom;
}

TrainResult train_fixed(const TrainConfig& config, const MappedDataset& data, const FeatureMapper& mapper,
                        const Vector& eta, const MappedDataset* validation) {
    config.validate();
    TrainResult result{init_model(mapper, data.num_groups, Mode::fixed_weight, config), {}};
    if (eta.size() != static_cast<Index>(mapper.num_kernels())) throw ShapeError("fixed weights: wrong length");
    result.model.fixed_eta = eta;
    check_data(result.model, data);
    mark_seen_groups(result.model, data);
    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    run_epochs(result.model, data, config, config.epochs, shuffle_rng, result.history, validation, {});
    return result;
}

TrainResult train_lp_baseline(const TrainConfig& config, const MappedDataset& data, const FeatureMapper& mapper,
                              const MappedDataset* validation, const EpochCallback& on_epoch) {
    config.validate();
    if (mapper.fill() == AbsentFill::none) throw ShapeError("lp baseline needs a zero- or mean-filling mapper");
    TrainResult result{init_model(mapper, data.num_groups, Mode::fixed_weight, config), {}};
    auto& model = result.model;
    const auto s = static_cast<Index>(model.num_kernels());
    model.fixed_eta = Vector::Constant(s, std::pow(static_cast<double>(s), -1.0 / config.p_norm));
    check_data(model, data);
    mark_seen_groups(model, data);
    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    for (int round = 0; round < config.outer_rounds; ++round) {
        run_epochs(model, data, config, config.epochs, shuffle_rng, result.history, validation, on_epoch);
        // Per-kernel weight vectors of the combined kernel are sqrt(eta_m) omega_m.
        Vector norms(s);
        for (Index m = 0; m < s; ++m) norms[m] = std::sqrt(model.fixed_eta[m]) * model.omegas[static_cast<std::size_t>(m)].norm();
        const Vector updated = lp_kernel_weights(norms, config.p_norm);
        for (Index m = 0; m < s; ++m) {
            auto& w = model.omegas[static_cast<std::size_t>(m)];
            w = updated[m] > 0 ? Vector(w * std::sqrt(model.fixed_eta[m] / updated[m])) : Vector::Zero(w.size());
        }
        model.fixed_eta = updated;
    }
    return result;
}

namespace {

Dataset select_channels(const Dataset& dataset, const std::vector<std::size_t>& channels, double bandwidth) {
    Dataset out;
    out.manifest = dataset.manifest;
    out.manifest.channels.clear();
    out.manifest.concat.reset();
    for (std::size_t c = 0; c < channels.size(); ++c) {
        auto spec = dataset.manifest.channels.at(channels[c]);
        spec.id = static_cast<int>(c);
        if (spec.kernel == KernelKind::rbf) spec.bandwidth = bandwidth;
        out.manifest.channels.push_back(spec);
        out.channel_means.push_back(dataset.channel_means.at(channels[c]));
    }
    out.samples.reserve(dataset.size());
    for (const auto& sample : dataset.samples) {
        MultiChannelSample s = sample;
        s.channels.clear();
        for (const auto c : channels) s.channels.push_back(sample.channels[c]);
        out.samples.push_back(std::move(s));
    }
    return out;
}

}  // namespace

BandwidthChoice select_bandwidth(const Dataset& train, const Dataset& val, const std::vector<std::size_t>& channels,
                                 const TrainConfig& config) {
    if (channels.empty()) throw ShapeError("select_bandwidth: no channels given");
    double sum = 0.0, sum_sq = 0.0;
    std::size_t count = 0;
    for (const auto& sample : train.samples) {
        for (const auto c : channels) {
            if (!sample.present(c)) continue;
            const auto& cv = *sample.channels[c];
            for (Index r = 0; r < cv.values.size(); ++r) {
                if (cv.missing[r]) continue;
                sum += cv.values[r];
                sum_sq += cv.values[r] * cv.values[r];
                ++count;
            }
        }
    }
    BandwidthChoice choice;
    if (count > 1) {
        const double mean = sum / static_cast<double>(count);
        const double var = std::max(0.0, sum_sq / static_cast<double>(count) - mean * mean);
        if (var > 0) choice.base_sigma = std::sqrt(var);
    }
    double best_auc = -1.0;
    for (int e = -2; e <= 2; ++e) {
        const double sigma = std::pow(choice.base_sigma, e);
        const auto tr = select_channels(train, channels, sigma);
        const auto va = select_channels(val, channels, sigma);
        const auto mapper = FeatureMapper::build(tr.manifest, tr.channel_means);
        const auto mapped_train = mapper.map_dataset(tr);
        const auto mapped_val = mapper.map_dataset(va);
        const auto s = static_cast<Index>(mapper.num_kernels());
        const auto fit = train_fixed(config, mapped_train, mapper, Vector::Constant(s, 1.0 / static_cast<double>(s)));
        const double auc = auroc(predict(fit.model, mapped_val), mapped_val.labels);
        choice.candidates.push_back(sigma);
        choice.val_auroc.push_back(auc);
        if (auc > best_auc) {
            best_auc = auc;
            choice.best = sigma;
        }
    }
    return choice;
}

}  // namespace mamkl
