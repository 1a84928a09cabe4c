#include "mamkl/featmap.hpp"

#include "mamkl/weights.hpp"

namespace mamkl {

using nlohmann::json;

std::string to_string(AbsentFill fill) {
    switch (fill) {
        case AbsentFill::none: return "none";
        case AbsentFill::zero: return "zero";
        case AbsentFill::mean: return "mean";
    }
    return "none";
}

AbsentFill absent_fill_from_string(const std::string& text) {
    if (text == "none") return AbsentFill::none;
    if (text == "zero") return AbsentFill::zero;
    if (text == "mean") return AbsentFill::mean;
    throw DataError("unknown fill '" + text + "' (expected none, zero or mean)");
}

namespace {

ChannelMapKind make_map(const ChannelSpec& spec) {
    if (spec.kernel == KernelKind::linear) return IdentityMap{};
    if (spec.approx == ApproxKind::rff) {
        return sample_rff_params<double>(spec.dim, spec.num_frequencies(), spec.bandwidth, spec.map_seed);
    }
    return build_fastfood<double>(spec.dim, spec.num_frequencies(), spec.bandwidth, spec.map_seed);
}

}  // namespace

FeatureMapper::FeatureMapper(std::vector<ChannelSpec> kernels, std::size_t num_declared, std::vector<Vector> means,
                             AbsentFill fill)
    : kernels_(std::move(kernels)), num_declared_(num_declared), means_(std::move(means)), fill_(fill) {
    if (num_declared_ == 0 || num_declared_ > kernels_.size() || kernels_.size() > num_declared_ + 1) {
        throw ShapeError("mapper: expected declared channels plus at most one concatenated channel");
    }
    if (means_.size() != num_declared_) throw ShapeError("mapper: one mean vector per declared channel required");
    for (std::size_t m = 0; m < num_declared_; ++m) {
        if (means_[m].size() != kernels_[m].dim) throw ShapeError("mapper: mean length differs from channel dim");
    }
    maps_.reserve(kernels_.size());
    for (const auto& spec : kernels_) {
        spec.validate();
        maps_.push_back(make_map(spec));
    }
}

FeatureMapper FeatureMapper::build(const DatasetManifest& manifest, std::vector<Vector> means, AbsentFill fill) {
    return FeatureMapper(manifest.all_channels(), manifest.channels.size(), std::move(means), fill);
}

Vector FeatureMapper::apply(std::size_t m, const Eigen::Ref<const Vector>& raw) const {
    return std::visit(
        [&](const auto& params) -> Vector {
            using T = std::decay_t<decltype(params)>;
            if constexpr (std::is_same_v<T, IdentityMap>) {
                if (raw.size() != kernels_[m].dim) throw ShapeError("identity map: dimension mismatch");
                return raw;
            } else if constexpr (std::is_same_v<T, RffParams<double>>) {
                return map_rff(raw, params);
            } else {
                return map_fastfood(raw, params);
            }
        },
        maps_[m]);
}

FeatureMapper::RawInputs FeatureMapper::raw_inputs(const MultiChannelSample& sample) const {
    if (sample.channels.size() != num_declared_) throw ShapeError("sample channel count differs from mapper");
    RawInputs out;
    out.raw.resize(kernels_.size());
    out.present.assign(kernels_.size(), false);
    bool any_present = false;
    for (std::size_t m = 0; m < num_declared_; ++m) {
        const auto& spec = kernels_[m];
        if (sample.present(m)) {
            const auto& cv = *sample.channels[m];
            if (cv.values.size() != spec.dim) throw ShapeError("channel '" + spec.name + "': dimension mismatch");
            out.raw[m] = impute_partial(cv.values, cv.missing, means_[m]);
            out.present[m] = true;
            any_present = true;
        } else if (fill_ == AbsentFill::zero) {
            out.raw[m] = Vector::Zero(spec.dim);
            out.present[m] = true;
        } else {
            // Mean-filled raw values also feed the concatenated channel.
            out.raw[m] = means_[m];
            out.present[m] = fill_ == AbsentFill::mean;
        }
    }
    if (has_concat()) {
        const std::size_t c = num_declared_;
        out.present[c] = any_present || fill_ != AbsentFill::none;
        Vector joined(kernels_[c].dim);
        Index offset = 0;
        for (std::size_t m = 0; m < num_declared_; ++m) {
            joined.segment(offset, out.raw[m].size()) = out.raw[m];
            offset += out.raw[m].size();
        }
        out.raw[c] = std::move(joined);
    }
    return out;
}

MappedSample FeatureMapper::map_sample(const MultiChannelSample& sample) const {
    auto inputs = raw_inputs(sample);
    MappedSample out;
    out.features.resize(kernels_.size());
    for (std::size_t m = 0; m < kernels_.size(); ++m) {
        out.features[m] = inputs.present[m] ? apply(m, inputs.raw[m]) : Vector::Zero(kernels_[m].feature_dim);
    }
    out.present = std::move(inputs.present);
    out.pattern = encode_pattern(out.present);
    return out;
}

MappedDataset FeatureMapper::map_dataset(const Dataset& dataset) const {
    const auto n = static_cast<Index>(dataset.size());
    MappedDataset out;
    out.num_groups = dataset.manifest.num_groups;
    out.features.reserve(kernels_.size());
    for (const auto& spec : kernels_) out.features.emplace_back(spec.feature_dim, n);
    out.patterns.resize(2 * static_cast<Index>(kernels_.size()), n);
    out.labels.resize(n);
    out.groups.resize(n);
    out.ids.reserve(dataset.size());
    for (Index i = 0; i < n; ++i) {
        const auto& sample = dataset.samples[static_cast<std::size_t>(i)];
        auto mapped = map_sample(sample);
        for (std::size_t m = 0; m < kernels_.size(); ++m) out.features[m].col(i) = mapped.features[m];
        out.patterns.col(i) = mapped.pattern;
        out.labels[i] = sample.label;
        out.groups[i] = sample.group_id;
        out.ids.push_back(sample.sample_id);
    }
    return out;
}

json FeatureMapper::to_json() const {
    json kernels = json::array();
    for (const auto& spec : kernels_) kernels.push_back(mamkl::to_json(spec));
    json means = json::array();
    for (const auto& m : means_) means.push_back(std::vector<double>(m.data(), m.data() + m.size()));
    return json{{"kernels", kernels},
                {"num_declared", num_declared_},
                {"means", means},
                {"fill", to_string(fill_)}};
}

FeatureMapper FeatureMapper::from_json(const json& j) {
    try {
        std::vector<ChannelSpec> kernels;
        const auto& ks = j.at("kernels");
        for (std::size_t i = 0; i < ks.size(); ++i) kernels.push_back(channel_spec_from_json(ks[i], static_cast<int>(i)));
        std::vector<Vector> means;
        for (const auto& m : j.at("means")) {
            const auto values = m.get<std::vector<double>>();
            means.push_back(Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size())));
        }
        return FeatureMapper(std::move(kernels), j.at("num_declared").get<std::size_t>(), std::move(means),
                             absent_fill_from_string(j.value("fill", std::string("none"))));
    } catch (const json::exception& e) {
        throw DataError(std::string("mapper: ") + e.what());
    }
}

}  // namespace mamkl
