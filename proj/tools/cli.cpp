#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mamkl/core.hpp"
#include "mamkl/csv.hpp"
#include "mamkl/metrics.hpp"
#include "mamkl/oracle.hpp"
#include "mamkl/pipeline.hpp"
#include "mamkl/random.hpp"
#include "mamkl/serialize.hpp"
#include "mamkl/synthetic.hpp"
#include "mamkl/trainer.hpp"

namespace mamkl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

fs::path manifest_path(const fs::path& data) {
    return fs::is_directory(data) ? data / "manifest.json" : data;
}

Dataset load_data(const fs::path& data) { return load_dataset(load_manifest(manifest_path(data))); }

json envelope(const std::string& kind) { return json{{"format", "mamkl"}, {"version", kFormatVersion}, {"kind", kind}}; }

SplitRatios ratios_from_json(const json& j) {
    SplitRatios r;
    r.train = j.at("train").get<double>();
    r.val = j.at("val").get<double>();
    r.test = j.at("test").get<double>();
    return r;
}

// Named split of a dataset, reproduced from the seed stored with a model.
Dataset pick_split(const Dataset& dataset, const std::string& split, const json& metadata) {
    if (split == "all") return dataset;
    if (!metadata.contains("split_seed")) throw DataError("model metadata has no split seed; use --split all");
    auto parts = split_dataset(dataset, ratios_from_json(metadata.at("split")), metadata.at("split_seed").get<std::uint64_t>(),
                               metadata.value("stratify", false));
    if (split == "train") return std::move(parts.train);
    if (split == "val") return std::move(parts.val);
    return std::move(parts.test);
}

// ---- gen

struct GenOptions {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
};

int cmd_gen(const GenOptions& o, std::ostream& out) {
    if (!fs::exists(o.config)) throw UsageError("config file not found: " + o.config);
    json j = read_json(o.config);
    if (j.contains("synthetic")) j = j.at("synthetic");
    auto config = synthetic_config_from_json(j);
    if (o.seed) config.seed = *o.seed;
    const auto data = generate_synthetic(config);
    write_synthetic(data, o.out);
    out << "wrote " << data.dataset.size() << " samples to " << o.out << "\n";
    return kOk;
}

// ---- featurize

struct FeaturizeOptions {
    std::string sources;
    std::string start;
    int weeks = 0;
    int utc_offset_minutes = 0;
    std::string out;
    std::uint64_t seed = 0;
    bool no_concat = false;
    int movement_frequencies = 1024;
    int weather_frequencies = 2048;
    int concat_frequencies = 2048;
};

int cmd_featurize(const FeaturizeOptions& o, std::ostream& out, std::ostream& err) {
    pipeline::PipelineConfig config;
    config.calendar = pipeline::Calendar(pipeline::parse_date(o.start), o.weeks, o.utc_offset_minutes);
    config.seed = o.seed;
    config.concat = !o.no_concat;
    config.movement_frequencies = o.movement_frequencies;
    config.weather_frequencies = o.weather_frequencies;
    config.concat_frequencies = o.concat_frequencies;
    const auto sources = pipeline::read_sources(o.sources);
    auto result = pipeline::aggregate_weekly(sources, config);
    for (const auto& w : result.warnings) err << "warning: " << w << "\n";
    if (result.dataset.samples.empty()) throw DataError("no samples produced");
    write_dataset(result.dataset, o.out);
    std::size_t pos = 0;
    for (const auto& s : result.dataset.samples) pos += s.label > 0 ? 1 : 0;
    out << "wrote " << result.dataset.size() << " samples (" << pos << " positive) to " << o.out << "\n";
    return kOk;
}

// ---- train

struct TrainOptions {
    std::string data;
    std::string out;
    std::string log;
    std::string mode = "samkl";
    std::string fill;
    TrainConfig config;
    double train_ratio = 0.6;
    double val_ratio = 0.2;
    double test_ratio = 0.2;
    bool stratify = false;
};

struct ModeChoice {
    Mode mode = Mode::samkl;
    bool baseline = false;
    AbsentFill fill = AbsentFill::none;
};

ModeChoice resolve_mode(const TrainOptions& o) {
    ModeChoice c;
    if (o.mode == "samkl" || o.mode == "mamkl") {
        c.mode = mode_from_string(o.mode);
        if (!o.fill.empty() && o.fill != "none") throw UsageError("--fill applies to the lp baselines only");
        return c;
    }
    c.mode = Mode::fixed_weight;
    c.baseline = true;
    c.fill = o.mode == "lp-zf" ? AbsentFill::zero : AbsentFill::mean;
    if (!o.fill.empty() && absent_fill_from_string(o.fill) != c.fill) {
        throw UsageError("--fill " + o.fill + " conflicts with --mode " + o.mode);
    }
    return c;
}

fs::path sidecar(const fs::path& model, const std::string& suffix) {
    auto p = model;
    p.replace_extension();
    return p.string() + suffix;
}

int cmd_train(const TrainOptions& o, std::ostream& out) {
    const auto choice = resolve_mode(o);
    try {
        o.config.validate();
    } catch (const ShapeError& e) {
        throw UsageError(e.what());
    }
    const SplitRatios ratios{o.train_ratio, o.val_ratio, o.test_ratio};
    const auto dataset = load_data(o.data);
    const auto splits = split_dataset(dataset, ratios, o.config.seed, o.stratify);
    const auto mapper = FeatureMapper::build(splits.train.manifest, splits.train.channel_means, choice.fill);
    const auto train_data = mapper.map_dataset(splits.train);
    const auto val_data = mapper.map_dataset(splits.val);

    const fs::path log_path = o.log.empty() ? sidecar(o.out, ".log.csv") : fs::path(o.log);
    if (log_path.has_parent_path()) fs::create_directories(log_path.parent_path());
    std::ofstream log(log_path);
    if (!log) throw DataError("cannot write " + log_path.string());
    log << "epoch,objective,val_auroc\n";
    const auto on_epoch = [&log](const EpochRecord& r) {
        log << r.epoch << "," << csv::format_double(r.objective) << ","
            << (r.val_auroc ? csv::format_double(*r.val_auroc) : std::string()) << "\n";
    };
    const auto result = choice.baseline ? train_lp_baseline(o.config, train_data, mapper, &val_data, on_epoch)
                                        : train(o.config, train_data, choice.mode, mapper, &val_data, on_epoch);

    const json metadata{{"cli_mode", o.mode},
                        {"dataset", dataset.manifest.name},
                        {"split_seed", o.config.seed},
                        {"stratify", o.stratify},
                        {"split", {{"train", ratios.train}, {"val", ratios.val}, {"test", ratios.test}}},
                        {"n_train", splits.train.size()},
                        {"n_val", splits.val.size()},
                        {"n_test", splits.test.size()}};
    save_model(o.out, result.model, metadata);
    save_mapper(sidecar(o.out, ".mapper.json"), mapper);
    out << "trained " << o.mode << " on " << splits.train.size() << " samples";
    if (!result.history.empty()) {
        out << "; final objective " << result.history.back().objective;
        if (result.history.back().val_auroc) out << ", val AUROC " << *result.history.back().val_auroc;
    }
    out << "\n";
    return kOk;
}

// ---- eval / predict

struct EvalOptions {
    std::string model;
    std::string data;
    std::string split = "test";
    std::string out;
};

json eta_summary(const MklModel& model, const MappedDataset& data) {
    json kernels = json::array();
    for (std::size_t m = 0; m < model.num_kernels(); ++m) {
        double sum = 0.0, lo = INFINITY, hi = -INFINITY;
        std::size_t count = 0;
        for (Index i = 0; i < data.size(); ++i) {
            if (!data.present(m, i)) continue;
            double eta = 0.0;
            if (model.mode == Mode::fixed_weight) {
                eta = model.fixed_eta[static_cast<Index>(m)];
            } else {
                eta = kernel_weights(model, data.patterns.col(i), effective_group(model, data.groups[i]))[static_cast<Index>(m)];
            }
            sum += eta;
            lo = std::min(lo, eta);
            hi = std::max(hi, eta);
            ++count;
        }
        json k{{"kernel", model.mapper.kernels()[m].name}, {"n_present", count}};
        if (count > 0) {
            k["mean"] = sum / static_cast<double>(count);
            k["min"] = lo;
            k["max"] = hi;
        }
        kernels.push_back(k);
    }
    return kernels;
}

int cmd_eval(const EvalOptions& o, std::ostream& out) {
    json metadata;
    const auto model = load_model(o.model, &metadata);
    const auto part = pick_split(load_data(o.data), o.split, metadata);
    check_channels(model, part.manifest);
    const auto mapped = model.mapper.map_dataset(part);
    const Vector scores = predict(model, mapped);
    Index n_pos = 0;
    for (Index i = 0; i < mapped.size(); ++i) n_pos += mapped.labels[i] > 0 ? 1 : 0;

    json metrics = envelope("metrics");
    metrics["mode"] = metadata.value("cli_mode", to_string(model.mode));
    metrics["split"] = o.split;
    metrics["seed"] = model.config.seed;
    metrics["n"] = mapped.size();
    metrics["n_pos"] = n_pos;
    metrics["auroc"] = auroc(scores, mapped.labels);
    metrics["auprc"] = auprc(scores, mapped.labels);
    metrics["eta"] = eta_summary(model, mapped);
    if (!o.out.empty()) write_json(o.out, metrics);
    out << "auroc " << metrics["auroc"].get<double>() << "  auprc " << metrics["auprc"].get<double>() << "  n "
        << mapped.size() << "\n";
    return kOk;
}

int cmd_predict(const EvalOptions& o, std::ostream& out) {
    json metadata;
    const auto model = load_model(o.model, &metadata);
    const auto part = pick_split(load_data(o.data), o.split, metadata);
    const Vector scores = predict(model, part);
    std::ofstream file;
    std::ostream* sink = &out;
    if (!o.out.empty()) {
        const fs::path path(o.out);
        if (path.has_parent_path()) fs::create_directories(path.parent_path());
        file.open(path);
        if (!file) throw DataError("cannot write " + o.out);
        sink = &file;
    }
    *sink << "sample_id,score\n";
    for (std::size_t i = 0; i < part.size(); ++i) {
        *sink << part.samples[i].sample_id << "," << csv::format_double(scores[static_cast<Index>(i)]) << "\n";
    }
    return kOk;
}

// ---- gradcheck

struct GradcheckOptions {
    std::uint64_t seed = 0;
    int n = 64;
    int s = 4;
    int k = 3;
    int T = 3;
    int instances = 5;
    int psd_instances = 20;
    double tol = 1e-4;
};

int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out) {
    if (o.n < 2 || o.s < 1 || o.k < 1 || o.T < 1 || o.instances < 0 || o.psd_instances < 0) {
        throw UsageError("gradcheck sizes must be positive");
    }
    Rng rng(derive_seed(o.seed, "gradcheck"));
    double worst = 0.0;
    for (const auto mode : {Mode::samkl, Mode::mamkl}) {
        for (int r = 0; r < o.instances; ++r) {
            const auto inst = oracle::random_grad_instance(rng, o.n, o.s, o.k, o.T, mode);
            std::vector<Index> rows(static_cast<std::size_t>(inst.data.size()));
            for (Index i = 0; i < inst.data.size(); ++i) rows[static_cast<std::size_t>(i)] = i;
            const auto report = oracle::check_gradients(inst.model, inst.data, rows, inst.config);
            worst = std::max(worst, report.max_rel_error());
        }
    }
    Rng psd_rng(derive_seed(o.seed, "psd"));
    double worst_psd = 0.0;
    int psd_failures = 0;
    for (int r = 0; r < o.psd_instances; ++r) {
        const Index n = 5 + psd_rng.below(static_cast<std::uint64_t>(std::max(1, o.n - 4)));
        const auto inputs = oracle::random_kernel_inputs(psd_rng, n, o.s, o.T, 0.5);
        Matrix V(o.k, 2 * o.s), A(2 * o.s, o.T);
        for (Index i = 0; i < V.size(); ++i) V.data()[i] = psd_rng.uniform(-1.0, 1.0);
        for (Index i = 0; i < A.size(); ++i) A.data()[i] = psd_rng.uniform(0.0, 2.0);
        const auto psd = oracle::check_psd(oracle::exact_kernel_matrix(inputs, V, A).K_eta, 1e-8);
        if (!psd.pass) ++psd_failures;
        worst_psd = std::min(worst_psd, psd.min_eigenvalue);
    }
    const bool pass = worst <= o.tol && psd_failures == 0;
    out << (pass ? "PASS" : "FAIL") << " max_rel_error=" << worst << " psd_failures=" << psd_failures
        << " min_eigenvalue=" << worst_psd << "\n";
    return pass ? kOk : kNumericError;
}

// ---- validate

int cmd_validate(const std::string& data, std::ostream& out) {
    const auto dataset = load_data(data);
    const auto report = validate_dataset(dataset);
    out << report.to_json(dataset.manifest).dump(1) << "\n";
    return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Missing-pattern adaptive multiple kernel learning"};
    app.require_subcommand(1);

    GenOptions gen;
    std::uint64_t gen_seed = 0;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic benchmark dataset");
    gen_cmd->add_option("--config", gen.config, "Generator config JSON")->required();
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();
    auto* gen_seed_opt = gen_cmd->add_option("--seed", gen_seed, "Override the config seed");

    FeaturizeOptions feat;
    auto* feat_cmd = app.add_subcommand("featurize", "Aggregate raw sources into weekly samples");
    feat_cmd->add_option("--sources", feat.sources, "Directory with the source CSVs")->required();
    feat_cmd->add_option("--start", feat.start, "First calendar day, YYYY-MM-DD")->required();
    feat_cmd->add_option("--weeks", feat.weeks, "Number of calendar weeks")->required()->check(CLI::PositiveNumber);
    feat_cmd->add_option("--utc-offset-minutes", feat.utc_offset_minutes, "Local time offset from UTC");
    feat_cmd->add_option("--out", feat.out, "Output dataset directory")->required();
    feat_cmd->add_option("--seed", feat.seed, "Seed for the random feature maps");
    feat_cmd->add_flag("--no-concat", feat.no_concat, "Omit the concatenated channel");
    feat_cmd->add_option("--movement-frequencies", feat.movement_frequencies)->check(CLI::PositiveNumber);
    feat_cmd->add_option("--weather-frequencies", feat.weather_frequencies)->check(CLI::PositiveNumber);
    feat_cmd->add_option("--concat-frequencies", feat.concat_frequencies)->check(CLI::PositiveNumber);

    TrainOptions tr;
    auto* train_cmd = app.add_subcommand("train", "Train a model");
    train_cmd->add_option("--data", tr.data, "Dataset directory or manifest")->required();
    train_cmd->add_option("--out", tr.out, "Model file")->required();
    train_cmd->add_option("--log", tr.log, "Training log CSV (default: next to the model)");
    train_cmd->add_option("--mode", tr.mode)->check(CLI::IsMember({"samkl", "mamkl", "lp-zf", "lp-mf"}));
    train_cmd->add_option("--fill", tr.fill)->check(CLI::IsMember({"none", "zero", "mean"}));
    train_cmd->add_option("--seed", tr.config.seed);
    train_cmd->add_option("--epochs", tr.config.epochs);
    train_cmd->add_option("--batch-size", tr.config.batch_size);
    train_cmd->add_option("--lr", tr.config.learning_rate);
    train_cmd->add_option("--c1", tr.config.c1);
    train_cmd->add_option("--c2", tr.config.c2);
    train_cmd->add_option("--c3", tr.config.c3);
    train_cmd->add_option("--latent-k", tr.config.latent_k);
    train_cmd->add_option("--p", tr.config.p_norm);
    train_cmd->add_option("--outer-rounds", tr.config.outer_rounds);
    train_cmd->add_flag("--scale-reg-by-batches", tr.config.scale_reg_by_batches);
    train_cmd->add_flag("--sequential-updates", tr.config.sequential_updates);
    train_cmd->add_option("--train-ratio", tr.train_ratio);
    train_cmd->add_option("--val-ratio", tr.val_ratio);
    train_cmd->add_option("--test-ratio", tr.test_ratio);
    train_cmd->add_flag("--stratify", tr.stratify, "Split each class separately");

    EvalOptions ev;
    auto* eval_cmd = app.add_subcommand("eval", "Compute metrics on a dataset split");
    eval_cmd->add_option("--model", ev.model)->required();
    eval_cmd->add_option("--data", ev.data)->required();
    eval_cmd->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test", "all"}));
    eval_cmd->add_option("--out", ev.out, "Metrics JSON");

    EvalOptions pr;
    pr.split = "all";
    auto* predict_cmd = app.add_subcommand("predict", "Write decision scores as CSV");
    predict_cmd->add_option("--model", pr.model)->required();
    predict_cmd->add_option("--data", pr.data)->required();
    predict_cmd->add_option("--split", pr.split)->check(CLI::IsMember({"train", "val", "test", "all"}));
    predict_cmd->add_option("--out", pr.out, "Scores CSV (default: stdout)");

    GradcheckOptions gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference and PSD self-check");
    gc_cmd->add_option("--seed", gc.seed);
    gc_cmd->add_option("--n", gc.n);
    gc_cmd->add_option("--s", gc.s);
    gc_cmd->add_option("--k", gc.k);
    gc_cmd->add_option("--T", gc.T);
    gc_cmd->add_option("--instances", gc.instances);
    gc_cmd->add_option("--psd-instances", gc.psd_instances);
    gc_cmd->add_option("--tol", gc.tol);

    std::string validate_data;
    auto* validate_cmd = app.add_subcommand("validate", "Report missingness and label statistics");
    validate_cmd->add_option("--data", validate_data)->required();

    std::vector<const char*> argv{"mamkl"};
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*gen_cmd) {
            if (*gen_seed_opt) gen.seed = gen_seed;
            return cmd_gen(gen, out);
        }
        if (*feat_cmd) return cmd_featurize(feat, out, err);
        if (*train_cmd) return cmd_train(tr, out);
        if (*eval_cmd) return cmd_eval(ev, out);
        if (*predict_cmd) return cmd_predict(pr, out);
        if (*gc_cmd) return cmd_gradcheck(gc, out);
        if (*validate_cmd) return cmd_validate(validate_data, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return kNumericError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kDataError;
    }
    return kUsage;
}

}  // namespace mamkl::cli
