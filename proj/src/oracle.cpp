#include "mamkl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mamkl/weights.hpp"

namespace mamkl::oracle {

KernelInputs kernel_inputs(const FeatureMapper& mapper, const std::vector<MultiChannelSample>& samples) {
    KernelInputs out;
    out.channels = mapper.kernels();
    const auto n = static_cast<Index>(samples.size());
    const auto s = mapper.num_kernels();
    for (const auto& spec : out.channels) out.raw.emplace_back(spec.dim, n);
    out.patterns.resize(2 * static_cast<Index>(s), n);
    out.groups.resize(n);
    for (Index i = 0; i < n; ++i) {
        const auto& sample = samples[static_cast<std::size_t>(i)];
        const auto inputs = mapper.raw_inputs(sample);
        for (std::size_t m = 0; m < s; ++m) out.raw[m].col(i) = inputs.raw[m];
        out.patterns.col(i) = encode_pattern(inputs.present);
        out.groups[i] = sample.group_id;
    }
    return out;
}

Matrix base_kernel(const ChannelSpec& spec, const Matrix& raw, const Matrix& patterns, Index channel) {
    const Index n = raw.cols();
    Matrix K = Matrix::Zero(n, n);
    const double inv_two_sigma2 = 1.0 / (2.0 * spec.bandwidth * spec.bandwidth);
    for (Index i = 0; i < n; ++i) {
        if (patterns(channel, i) == 0.0) continue;
        for (Index j = 0; j <= i; ++j) {
            if (patterns(channel, j) == 0.0) continue;
            const double value = spec.kernel == KernelKind::linear
                                     ? raw.col(i).dot(raw.col(j))
                                     : std::exp(-(raw.col(i) - raw.col(j)).squaredNorm() * inv_two_sigma2);
            K(i, j) = value;
            K(j, i) = value;
        }
    }
    return K;
}

ExactKernel exact_kernel_matrix(const KernelInputs& inputs, const Matrix& V, const Matrix& A) {
    const Index n = inputs.size();
    const auto s = static_cast<Index>(inputs.channels.size());
    if (n > kMaxExactSamples) throw ShapeError("exact kernel: too many samples for a dense matrix");
    if (inputs.patterns.rows() != 2 * s || V.cols() != 2 * s) throw ShapeError("exact kernel: shape mismatch");
    if (A.size() > 0 && A.rows() != 2 * s) throw ShapeError("exact kernel: A must have 2s rows");

    Matrix scaled = inputs.patterns;
    if (A.size() > 0) {
        for (Index i = 0; i < n; ++i) {
            const int g = inputs.groups[i];
            if (g < 0 || g >= A.cols()) throw ShapeError("exact kernel: group outside A");
            scaled.col(i).array() *= A.col(g).array();
        }
    }
    const Matrix W = ((V.transpose() * V) * scaled).cwiseProduct(inputs.patterns);

    ExactKernel out;
    out.K_eta = Matrix::Zero(n, n);
    for (Index m = 0; m < s; ++m) {
        out.base.push_back(base_kernel(inputs.channels[static_cast<std::size_t>(m)], inputs.raw[static_cast<std::size_t>(m)],
                                       inputs.patterns, m));
        const Matrix outer = W.row(m).transpose() * W.row(m);
        out.K_eta += outer.cwiseProduct(out.base.back());
    }
    return out;
}

PsdResult check_psd(const Matrix& K, double tol) {
    if (K.rows() != K.cols()) throw ShapeError("check_psd: matrix is not square");
    const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
    if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw ShapeError("check_psd: matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix> solver(K, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericError("check_psd: eigensolver failed");
    PsdResult r;
    r.min_eigenvalue = solver.eigenvalues().minCoeff();
    r.max_eigenvalue = solver.eigenvalues().maxCoeff();
    r.pass = r.min_eigenvalue >= -tol * std::max(1.0, r.max_eigenvalue);
    return r;
}

Vector finite_diff_grad(const Objective& f, const Vector& params, double step) {
    Vector grad(params.size());
    Vector probe = params;
    for (Index i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + step;
        const double up = f(probe);
        probe[i] = params[i] - step;
        const double down = f(probe);
        probe[i] = params[i];
        grad[i] = (up - down) / (2.0 * step);
    }
    return grad;
}

namespace {

void check_metric_input(const Vector& scores, const Vector& labels) {
    if (scores.size() != labels.size()) throw ShapeError("metric oracle: length mismatch");
    const Index pos = (labels.array() > 0).count();
    if (pos == 0 || pos == labels.size()) throw DataError("metric oracle: need both classes");
}

}  // namespace

double brute_auroc(const Vector& scores, const Vector& labels) {
    check_metric_input(scores, labels);
    double credit = 0.0;
    double pairs = 0.0;
    for (Index i = 0; i < scores.size(); ++i) {
        if (labels[i] <= 0) continue;
        for (Index j = 0; j < scores.size(); ++j) {
            if (labels[j] > 0) continue;
            pairs += 1.0;
            if (scores[i] > scores[j]) {
                credit += 1.0;
            } else if (scores[i] == scores[j]) {
                credit += 0.5;
            }
        }
    }
    return credit / pairs;
}

double brute_auprc(const Vector& scores, const Vector& labels) {
    check_metric_input(scores, labels);
    const std::set<double, std::greater<>> thresholds(scores.data(), scores.data() + scores.size());
    const double n_pos = static_cast<double>((labels.array() > 0).count());
    double area = 0.0;
    double prev_recall = 0.0;
    for (const double t : thresholds) {
        double tp = 0.0, fp = 0.0;
        for (Index i = 0; i < scores.size(); ++i) {
            if (scores[i] < t) continue;
            if (labels[i] > 0) {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
        }
        const double recall = tp / n_pos;
        area += (recall - prev_recall) * (tp / (tp + fp));
        prev_recall = recall;
    }
    return area;
}

Vector flatten(const MklModel& model) {
    Index total = 1 + model.V.size() + model.A.size();
    for (const auto& w : model.omegas) total += w.size();
    Vector out(total);
    Index at = 0;
    for (const auto& w : model.omegas) {
        out.segment(at, w.size()) = w;
        at += w.size();
    }
    out[at++] = model.bias;
    out.segment(at, model.V.size()) = model.V.reshaped();
    at += model.V.size();
    out.segment(at, model.A.size()) = model.A.reshaped();
    return out;
}

void unflatten(MklModel& model, const Vector& params) {
    Index at = 0;
    for (auto& w : model.omegas) {
        w = params.segment(at, w.size());
        at += w.size();
    }
    model.bias = params[at++];
    model.V.reshaped() = params.segment(at, model.V.size());
    at += model.V.size();
    model.A.reshaped() = params.segment(at, model.A.size());
}

double GradCheckReport::max_rel_error() const {
    return std::max({omega_rel_error, v_rel_error, a_rel_error, bias_rel_error});
}

namespace {

double rel_error(const Vector& analytic, const Vector& numeric) {
    const double scale = std::max({analytic.norm(), numeric.norm(), 1e-12});
    const double diff = (analytic - numeric).norm();
    return diff <= 1e-12 ? 0.0 : diff / scale;
}

}  // namespace

GradCheckReport check_gradients(const MklModel& model, const MappedDataset& data, const std::vector<Index>& batch,
                                const TrainConfig& config, double step) {
    const auto analytic = gradients(model, data, batch, config);
    MklModel probe = model;
    const auto f = [&](const Vector& theta) {
        unflatten(probe, theta);
        return objective(probe, data, config, batch);
    };
    const Vector numeric = finite_diff_grad(f, flatten(model), step);

    GradCheckReport report;
    Index at = 0;
    Index omega_len = 0;
    for (const auto& w : model.omegas) omega_len += w.size();
    Vector analytic_omega(omega_len);
    for (const auto& g : analytic.omegas) {
        analytic_omega.segment(at, g.size()) = g;
        at += g.size();
    }
    report.omega_rel_error = rel_error(analytic_omega, numeric.head(omega_len));
    report.bias_rel_error = rel_error(Vector::Constant(1, analytic.bias), numeric.segment(omega_len, 1));
    at = omega_len + 1;
    if (model.V.size() > 0) {
        report.v_rel_error = rel_error(analytic.V.reshaped(), numeric.segment(at, model.V.size()));
    }
    at += model.V.size();
    if (model.A.size() > 0) {
        report.a_rel_error = rel_error(analytic.A.reshaped(), numeric.segment(at, model.A.size()));
    }

    report.min_margin_gap = std::numeric_limits<double>::infinity();
    for (const auto i : batch) {
        const double gap = std::abs(1.0 - data.labels[i] * decision(model, data, i, data.groups[i]));
        report.min_margin_gap = std::min(report.min_margin_gap, gap);
    }
    return report;
}

GradInstance random_grad_instance(Rng& rng, Index n, Index s, Index k, Index T, Mode mode, double gap) {
    std::vector<ChannelSpec> specs;
    std::vector<Vector> means;
    for (Index m = 0; m < s; ++m) {
        ChannelSpec spec;
        spec.id = static_cast<int>(m);
        spec.name = "c" + std::to_string(m);
        spec.dim = 2 + static_cast<int>(rng.below(4));
        spec.kernel = KernelKind::linear;
        spec.feature_dim = spec.dim;
        specs.push_back(spec);
        means.push_back(Vector::Zero(spec.dim));
    }
    GradInstance inst;
    inst.config.c1 = rng.uniform(0.5, 2.0);
    inst.config.c2 = rng.uniform(0.1, 1.0);
    inst.config.c3 = rng.uniform(0.1, 1.0);
    inst.config.latent_k = static_cast<int>(k);
    inst.config.seed = rng.below(1u << 30);
    const FeatureMapper mapper(specs, specs.size(), means);

    auto& data = inst.data;
    data.num_groups = static_cast<int>(T);
    for (const auto& spec : specs) data.features.push_back(Matrix::Zero(spec.feature_dim, n));
    data.patterns.resize(2 * s, n);
    data.labels.resize(n);
    data.groups.resize(n);
    for (Index i = 0; i < n; ++i) {
        std::vector<bool> present(static_cast<std::size_t>(s));
        bool any = false;
        for (Index m = 0; m < s; ++m) {
            present[static_cast<std::size_t>(m)] = rng.uniform() >= 0.3;
            any = any || present[static_cast<std::size_t>(m)];
        }
        if (!any) present[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(s)))] = true;
        for (Index m = 0; m < s; ++m) {
            if (!present[static_cast<std::size_t>(m)]) continue;
            auto col = data.features[static_cast<std::size_t>(m)].col(i);
            for (Index r = 0; r < col.size(); ++r) col[r] = rng.normal();
            col /= std::max(col.norm(), 1e-3);
        }
        data.patterns.col(i) = encode_pattern(present);
        data.labels[i] = rng.uniform() < 0.5 ? 1.0 : -1.0;
        data.groups[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
        data.ids.push_back("r" + std::to_string(i));
    }

    std::vector<Index> rows(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(i)] = i;
    for (int attempt = 0; attempt < 1000; ++attempt) {
        auto model = init_model(mapper, static_cast<int>(T), mode, inst.config);
        for (auto& w : model.omegas) {
            for (Index r = 0; r < w.size(); ++r) w[r] = rng.normal();
        }
        model.bias = rng.normal() * 0.5;
        for (Index r = 0; r < model.V.size(); ++r) model.V.reshaped()[r] = rng.normal() * 0.7;
        if (mode == Mode::samkl) {
            for (Index r = 0; r < model.A.size(); ++r) model.A.reshaped()[r] = 1.0 + 0.4 * rng.normal();
        }
        bool ok = true;
        for (const auto i : rows) {
            if (std::abs(1.0 - data.labels[i] * decision(model, data, i, data.groups[i])) <= gap) {
                ok = false;
                break;
            }
        }
        if (ok) {
            inst.model = std::move(model);
            return inst;
        }
    }
    throw NumericError("random_grad_instance: could not keep margins away from the hinge kink");
}

KernelInputs random_kernel_inputs(Rng& rng, Index n, Index s, Index T, double max_missing_rate) {
    KernelInputs out;
    std::vector<double> rates;
    for (Index m = 0; m < s; ++m) {
        ChannelSpec spec;
        spec.id = static_cast<int>(m);
        spec.name = "c" + std::to_string(m);
        spec.dim = 1 + static_cast<int>(rng.below(5));
        if (m % 2 == 0) {
            spec.kernel = KernelKind::rbf;
            spec.bandwidth = rng.uniform(0.5, 2.0);
            spec.feature_dim = 2;
        } else {
            spec.kernel = KernelKind::linear;
            spec.feature_dim = spec.dim;
        }
        out.channels.push_back(spec);
        Matrix raw(spec.dim, n);
        for (Index r = 0; r < raw.size(); ++r) raw.reshaped()[r] = rng.normal();
        out.raw.push_back(std::move(raw));
        rates.push_back(rng.uniform(0.0, max_missing_rate));
    }
    out.patterns.resize(2 * s, n);
    out.groups.resize(n);
    for (Index i = 0; i < n; ++i) {
        std::vector<bool> present(static_cast<std::size_t>(s));
        bool any = false;
        for (Index m = 0; m < s; ++m) {
            present[static_cast<std::size_t>(m)] = rng.uniform() >= rates[static_cast<std::size_t>(m)];
            any = any || present[static_cast<std::size_t>(m)];
        }
        if (!any) present[static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(s)))] = true;
        out.patterns.col(i) = encode_pattern(present);
        out.groups[i] = static_cast<int>(rng.below(static_cast<std::uint64_t>(T)));
    }
    return out;
}

}  // namespace mamkl::oracle
