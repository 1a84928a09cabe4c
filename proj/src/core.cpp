#include "mamkl/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "mamkl/csv.hpp"
#include "mamkl/random.hpp"

namespace mamkl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(KernelKind kind) { return kind == KernelKind::linear ? "linear" : "rbf"; }
std::string to_string(ApproxKind kind) { return kind == ApproxKind::rff ? "rff" : "fastfood"; }

KernelKind kernel_kind_from_string(const std::string& text) {
    if (text == "linear") return KernelKind::linear;
    if (text == "rbf") return KernelKind::rbf;
    throw DataError("unknown kernel '" + text + "' (expected linear or rbf)");
}

ApproxKind approx_kind_from_string(const std::string& text) {
    if (text == "rff") return ApproxKind::rff;
    if (text == "fastfood") return ApproxKind::fastfood;
    throw DataError("unknown approximation '" + text + "' (expected rff or fastfood)");
}

void ChannelSpec::validate() const {
    const std::string tag = "channel '" + name + "': ";
    if (name.empty()) throw DataError("channel " + std::to_string(id) + ": empty name");
    if (dim <= 0) throw DataError(tag + "dim must be positive");
    if (kernel == KernelKind::linear) {
        if (feature_dim != dim) throw DataError(tag + "linear channel needs feature_dim == dim");
    } else {
        if (feature_dim < 2 || feature_dim % 2 != 0) {
            throw DataError(tag + "rbf channel needs an even feature_dim >= 2");
        }
        if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) throw DataError(tag + "bandwidth must be positive");
    }
}

json to_json(const ChannelSpec& spec) {
    json j{{"name", spec.name},
           {"dim", spec.dim},
           {"kernel", to_string(spec.kernel)},
           {"feature_dim", spec.feature_dim}};
    if (spec.kernel == KernelKind::rbf) {
        j["bandwidth"] = spec.bandwidth;
        j["approx"] = to_string(spec.approx);
        j["map_seed"] = spec.map_seed;
    }
    return j;
}

ChannelSpec channel_spec_from_json(const json& j, int id) {
    if (!j.is_object()) throw DataError("channel entry must be an object");
    ChannelSpec spec;
    spec.id = id;
    try {
        spec.name = j.at("name").get<std::string>();
        spec.dim = j.at("dim").get<int>();
        spec.kernel = kernel_kind_from_string(j.value("kernel", std::string("linear")));
        if (spec.kernel == KernelKind::linear) {
            spec.feature_dim = j.value("feature_dim", spec.dim);
        } else {
            spec.bandwidth = j.value("bandwidth", 1.0);
            spec.feature_dim = j.value("feature_dim", 2 * 1024);
            spec.approx = approx_kind_from_string(j.value("approx", std::string("rff")));
            spec.map_seed = j.value("map_seed", std::uint64_t{0});
        }
    } catch (const json::exception& e) {
        throw DataError("channel " + std::to_string(id) + ": " + e.what());
    }
    spec.validate();
    return spec;
}

std::vector<bool> MultiChannelSample::presence() const {
    std::vector<bool> out(channels.size());
    for (std::size_t m = 0; m < channels.size(); ++m) out[m] = present(m);
    return out;
}

std::vector<ChannelSpec> DatasetManifest::all_channels() const {
    auto out = channels;
    if (concat) out.push_back(*concat);
    return out;
}

int DatasetManifest::total_dim() const {
    int total = 0;
    for (const auto& c : channels) total += c.dim;
    return total;
}

void DatasetManifest::validate() const {
    if (channels.empty()) throw DataError("manifest '" + name + "': no channels");
    std::set<std::string> names;
    for (const auto& c : channels) {
        c.validate();
        if (!names.insert(c.name).second) throw DataError("duplicate channel name '" + c.name + "'");
    }
    if (concat) {
        concat->validate();
        if (concat->kernel != KernelKind::rbf) throw DataError("concatenated channel must use an rbf kernel");
        if (concat->dim != total_dim()) throw DataError("concatenated channel dim must equal the sum of channel dims");
        if (names.count(concat->name)) throw DataError("duplicate channel name '" + concat->name + "'");
    }
    if (num_groups < 1) throw DataError("num_groups must be at least 1");
}

ChannelSpec make_auto_concat(const std::vector<ChannelSpec>& channels, std::uint64_t seed_hint) {
    ChannelSpec spec;
    spec.id = static_cast<int>(channels.size());
    spec.name = "concat";
    for (const auto& c : channels) spec.dim += c.dim;
    spec.kernel = KernelKind::rbf;
    spec.bandwidth = std::sqrt(static_cast<double>(spec.dim));
    spec.feature_dim = 2 * 2048;
    spec.approx = ApproxKind::fastfood;
    spec.map_seed = derive_seed(seed_hint, "concat");
    return spec;
}

DatasetManifest manifest_from_json(const json& j, const fs::path& base_dir) {
    DatasetManifest m;
    m.base_dir = base_dir;
    try {
        m.name = j.value("name", std::string("dataset"));
        m.num_groups = j.value("num_groups", 1);
        const auto& chans = j.at("channels");
        if (!chans.is_array()) throw DataError("'channels' must be an array");
        for (std::size_t i = 0; i < chans.size(); ++i) {
            m.channels.push_back(channel_spec_from_json(chans[i], static_cast<int>(i)));
        }
        if (j.contains("files")) {
            const auto& files = j.at("files");
            if (files.contains("channels")) {
                for (const auto& [key, value] : files.at("channels").items()) {
                    m.files.channels[key] = value.get<std::string>();
                }
            }
            m.files.labels = files.value("labels", std::string());
            m.files.groups = files.value("groups", std::string());
        }
        // Validate declared channels before synthesizing the concatenated one.
        std::set<std::string> names;
        for (const auto& c : m.channels) {
            if (!names.insert(c.name).second) throw DataError("duplicate channel name '" + c.name + "'");
        }
        if (j.contains("concat") && !j.at("concat").is_null()) {
            const auto& c = j.at("concat");
            if (c.is_string()) {
                if (c.get<std::string>() != "auto") throw DataError("concat must be \"auto\", an object, or null");
                m.concat = make_auto_concat(m.channels, j.value("seed", std::uint64_t{0}));
            } else {
                json spec = c;
                if (!spec.contains("name")) spec["name"] = "concat";
                if (!spec.contains("dim")) spec["dim"] = m.total_dim();
                if (!spec.contains("kernel")) spec["kernel"] = "rbf";
                m.concat = channel_spec_from_json(spec, static_cast<int>(m.channels.size()));
            }
        }
    } catch (const json::exception& e) {
        throw DataError(std::string("manifest: ") + e.what());
    }
    m.validate();
    return m;
}

json to_json(const DatasetManifest& manifest) {
    json chans = json::array();
    for (const auto& c : manifest.channels) chans.push_back(to_json(c));
    json files_channels = json::object();
    for (const auto& [k, v] : manifest.files.channels) files_channels[k] = v.generic_string();
    json j{{"name", manifest.name},
           {"num_groups", manifest.num_groups},
           {"channels", chans},
           {"files",
            {{"channels", files_channels},
             {"labels", manifest.files.labels.generic_string()},
             {"groups", manifest.files.groups.generic_string()}}}};
    j["concat"] = manifest.concat ? to_json(*manifest.concat) : json(nullptr);
    return j;
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("manifest " + path.string() + ": " + e.what());
    }
    return manifest_from_json(j, path.parent_path());
}

std::vector<Vector> compute_channel_means(const DatasetManifest& manifest,
                                          const std::vector<MultiChannelSample>& samples) {
    std::vector<Vector> means;
    means.reserve(manifest.channels.size());
    for (std::size_t m = 0; m < manifest.channels.size(); ++m) {
        const int dim = manifest.channels[m].dim;
        Vector sum = Vector::Zero(dim);
        Eigen::VectorXi count = Eigen::VectorXi::Zero(dim);
        for (const auto& s : samples) {
            if (!s.channels[m]) continue;
            const auto& cv = *s.channels[m];
            for (Index r = 0; r < dim; ++r) {
                if (cv.missing[r]) continue;
                sum[r] += cv.values[r];
                ++count[r];
            }
        }
        Vector mean(dim);
        for (Index r = 0; r < dim; ++r) mean[r] = count[r] > 0 ? sum[r] / count[r] : 0.0;
        means.push_back(std::move(mean));
    }
    return means;
}

namespace {

fs::path resolve(const DatasetManifest& manifest, const fs::path& p) {
    if (p.empty() || p.is_absolute()) return p;
    return manifest.base_dir / p;
}

}  // namespace

Dataset load_dataset(const DatasetManifest& manifest) {
    manifest.validate();
    if (manifest.files.labels.empty()) throw DataError("manifest has no labels file");
    if (manifest.files.groups.empty()) throw DataError("manifest has no groups file");

    Dataset ds;
    ds.manifest = manifest;

    const auto labels = csv::read(resolve(manifest, manifest.files.labels));
    const auto label_col = labels.column("label");
    const auto label_id_col = labels.column("sample_id");
    std::unordered_map<std::string, std::size_t> index;
    std::vector<MultiChannelSample> samples;
    for (const auto& row : labels.rows) {
        if (row.cells.size() != labels.header.size()) {
            throw DataError(labels.path.string() + ":" + std::to_string(row.line) + ": wrong number of cells");
        }
        MultiChannelSample s;
        s.sample_id = row.cells[label_id_col];
        const auto y = csv::parse_int(row.cells[label_col], labels, row);
        if (y != 1 && y != -1) {
            throw DataError(labels.path.string() + ":" + std::to_string(row.line) + ": label must be 1 or -1");
        }
        s.label = static_cast<int>(y);
        s.group_id = -1;
        s.channels.resize(manifest.channels.size());
        if (!index.emplace(s.sample_id, samples.size()).second) {
            throw DataError(labels.path.string() + ": duplicate sample_id '" + s.sample_id + "'");
        }
        samples.push_back(std::move(s));
    }

    const auto groups = csv::read(resolve(manifest, manifest.files.groups));
    const auto group_col = groups.column("group_id");
    const auto group_id_col = groups.column("sample_id");
    for (const auto& row : groups.rows) {
        const auto it = index.find(row.cells.at(group_id_col));
        if (it == index.end()) continue;
        const auto g = csv::parse_int(row.cells.at(group_col), groups, row);
        if (g < 0 || g >= manifest.num_groups) {
            throw DataError(groups.path.string() + ":" + std::to_string(row.line) + ": group_id " +
                            std::to_string(g) + " outside [0, " + std::to_string(manifest.num_groups) + ")");
        }
        samples[it->second].group_id = static_cast<int>(g);
    }
    for (const auto& s : samples) {
        if (s.group_id < 0) throw DataError("sample '" + s.sample_id + "' has no group_id");
    }

    for (std::size_t m = 0; m < manifest.channels.size(); ++m) {
        const auto& spec = manifest.channels[m];
        const auto it = manifest.files.channels.find(spec.name);
        if (it == manifest.files.channels.end()) {
            throw DataError("manifest lists no file for channel '" + spec.name + "'");
        }
        const auto table = csv::read(resolve(manifest, it->second));
        if (table.header.size() != static_cast<std::size_t>(spec.dim) + 1) {
            throw DataError(table.path.string() + ": header has " + std::to_string(table.header.size() - 1) +
                            " value columns, channel '" + spec.name + "' declares dim " + std::to_string(spec.dim));
        }
        std::vector<bool> seen(samples.size(), false);
        for (const auto& row : table.rows) {
            if (row.cells.size() != table.header.size()) {
                throw DataError(table.path.string() + ":" + std::to_string(row.line) + ": row has " +
                                std::to_string(row.cells.size() - 1) + " values, expected " +
                                std::to_string(spec.dim));
            }
            const auto found = index.find(row.cells[0]);
            if (found == index.end()) continue;
            if (seen[found->second]) {
                throw DataError(table.path.string() + ":" + std::to_string(row.line) + ": duplicate sample_id '" +
                                row.cells[0] + "'");
            }
            seen[found->second] = true;
            Vector values(spec.dim);
            Eigen::Array<bool, Eigen::Dynamic, 1> missing(spec.dim);
            for (int r = 0; r < spec.dim; ++r) {
                bool empty = false;
                values[r] = csv::parse_double(row.cells[r + 1], table, row, &empty);
                missing[r] = empty;
            }
            if (missing.all()) continue;  // all cells empty: channel absent
            samples[found->second].channels[m] = ChannelValue(std::move(values), std::move(missing));
        }
    }

    for (auto& s : samples) {
        const auto flags = s.presence();
        const bool any = std::find(flags.begin(), flags.end(), true) != flags.end();
        if (any) {
            ds.samples.push_back(std::move(s));
        } else {
            ds.rejected_ids.push_back(s.sample_id);
        }
    }
    ds.channel_means = compute_channel_means(manifest, ds.samples);
    return ds;
}

void write_dataset(const Dataset& dataset, const fs::path& dir) {
    fs::create_directories(dir);
    DatasetManifest manifest = dataset.manifest;
    manifest.files.channels.clear();
    for (const auto& spec : manifest.channels) manifest.files.channels[spec.name] = "channel_" + spec.name + ".csv";
    manifest.files.labels = "labels.csv";
    manifest.files.groups = "groups.csv";

    {
        std::ofstream out(dir / "manifest.json");
        out << to_json(manifest).dump(2) << '\n';
    }
    for (std::size_t m = 0; m < manifest.channels.size(); ++m) {
        const auto& spec = manifest.channels[m];
        std::ofstream out(dir / manifest.files.channels.at(spec.name));
        out << "sample_id";
        for (int r = 0; r < spec.dim; ++r) out << ",v" << r;
        out << '\n';
        for (const auto& s : dataset.samples) {
            if (!s.present(m)) continue;
            const auto& cv = *s.channels[m];
            out << s.sample_id;
            for (int r = 0; r < spec.dim; ++r) {
                out << ',';
                if (!cv.missing[r]) out << csv::format_double(cv.values[r]);
            }
            out << '\n';
        }
    }
    std::ofstream labels(dir / "labels.csv");
    std::ofstream groups(dir / "groups.csv");
    labels << "sample_id,label\n";
    groups << "sample_id,group_id\n";
    for (const auto& s : dataset.samples) {
        labels << s.sample_id << ',' << s.label << '\n';
        groups << s.sample_id << ',' << s.group_id << '\n';
    }
}

Dataset subset(const Dataset& dataset, const std::vector<std::size_t>& rows) {
    Dataset out;
    out.manifest = dataset.manifest;
    out.channel_means = dataset.channel_means;
    out.samples.reserve(rows.size());
    for (const auto r : rows) out.samples.push_back(dataset.samples.at(r));
    return out;
}

DatasetSplits split_dataset(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed, bool stratify) {
    if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0) throw DataError("split ratios must be nonnegative");
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) throw DataError("split ratios must sum to 1");

    const std::size_t n = dataset.size();
    std::vector<std::vector<std::size_t>> strata;
    if (stratify) {
        strata.resize(2);
        for (std::size_t i = 0; i < n; ++i) strata[dataset.samples[i].label > 0 ? 0 : 1].push_back(i);
    } else {
        strata.emplace_back(n);
        std::iota(strata[0].begin(), strata[0].end(), std::size_t{0});
    }

    Rng rng(derive_seed(seed, "split"));
    std::vector<std::size_t> train, val, test;
    for (auto& rows : strata) {
        rng.shuffle(rows);
        const auto count = rows.size();
        const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(count) * ratios.train));
        const auto n_val = std::min(count - n_train,
                                    static_cast<std::size_t>(std::llround(static_cast<double>(count) * ratios.val)));
        train.insert(train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
        val.insert(val.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train),
                   rows.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
        test.insert(test.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), rows.end());
    }
    if (train.empty() || val.empty() || test.empty()) {
        throw DataError("split produced an empty partition (sizes " + std::to_string(train.size()) + "/" +
                        std::to_string(val.size()) + "/" + std::to_string(test.size()) + ")");
    }

    DatasetSplits out{subset(dataset, train), subset(dataset, val), subset(dataset, test)};
    out.train.channel_means = compute_channel_means(dataset.manifest, out.train.samples);
    out.val.channel_means = out.train.channel_means;
    out.test.channel_means = out.train.channel_means;
    return out;
}

ValidationReport validate_dataset(const Dataset& dataset) {
    ValidationReport r;
    const auto s = dataset.manifest.channels.size();
    r.n_samples = dataset.size();
    r.rejected = dataset.rejected_ids.size();
    r.missing_rate.assign(s, 0.0);
    r.partial_count.assign(s, 0);
    r.group_counts.assign(static_cast<std::size_t>(dataset.manifest.num_groups), 0);
    std::vector<std::size_t> absent(s, 0);
    std::size_t incomplete = 0;
    for (const auto& sample : dataset.samples) {
        (sample.label > 0 ? r.n_pos : r.n_neg)++;
        if (sample.group_id >= 0 && static_cast<std::size_t>(sample.group_id) < r.group_counts.size()) {
            ++r.group_counts[static_cast<std::size_t>(sample.group_id)];
        }
        bool any_absent = false;
        for (std::size_t m = 0; m < s; ++m) {
            if (!sample.present(m)) {
                ++absent[m];
                any_absent = true;
            } else if (sample.channels[m]->partially_missing()) {
                ++r.partial_count[m];
            }
        }
        if (any_absent) ++incomplete;
    }
    if (r.n_samples > 0) {
        for (std::size_t m = 0; m < s; ++m) r.missing_rate[m] = static_cast<double>(absent[m]) / r.n_samples;
        r.incomplete_fraction = static_cast<double>(incomplete) / r.n_samples;
    }
    if (r.n_samples == 0) r.warnings.emplace_back("dataset is empty");
    if (r.n_pos == 0 || r.n_neg == 0) r.warnings.emplace_back("labels contain a single class");
    if (r.rejected > 0) r.warnings.push_back(std::to_string(r.rejected) + " samples rejected: every channel absent");
    return r;
}

json ValidationReport::to_json(const DatasetManifest& manifest) const {
    json channels = json::array();
    for (std::size_t m = 0; m < missing_rate.size(); ++m) {
        channels.push_back({{"name", manifest.channels[m].name},
                            {"missing_rate", missing_rate[m]},
                            {"partially_missing", partial_count[m]}});
    }
    return json{{"n_samples", n_samples},     {"n_pos", n_pos},
                {"n_neg", n_neg},             {"channels", channels},
                {"incomplete_fraction", incomplete_fraction},
                {"group_counts", group_counts}, {"rejected", rejected},
                {"warnings", warnings}};
}

}  // namespace mamkl
