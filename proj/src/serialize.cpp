#include "mamkl/serialize.hpp"

#include <fstream>

namespace mamkl {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json envelope(const std::string& kind) {
    return json{{"format", "mamkl"}, {"version", kFormatVersion}, {"kind", kind}};
}

void check_envelope(const json& j, const std::string& kind) {
    if (!j.is_object() || j.value("format", std::string()) != "mamkl") throw DataError("not a mamkl file");
    if (j.value("version", 0) != kFormatVersion) throw DataError("unsupported file version");
    if (j.value("kind", std::string()) != kind) throw DataError("expected a " + kind + " file");
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace

json matrix_to_json(const Matrix& m) {
    return json{{"rows", m.rows()}, {"cols", m.cols()},
                {"data", std::vector<double>(m.data(), m.data() + m.size())}};  // column-major
}

Matrix matrix_from_json(const json& j) {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Index>(data.size()) != rows * cols) throw DataError("matrix data length mismatch");
    return Eigen::Map<const Matrix>(data.data(), rows, cols);
}

json model_to_json(const MklModel& model, const json& metadata) {
    json j = envelope("model");
    j["mode"] = to_string(model.mode);
    j["mapper"] = model.mapper.to_json();
    json omegas = json::array();
    for (const auto& w : model.omegas) omegas.push_back(vector_to_json(w));
    j["omegas"] = omegas;
    j["bias"] = model.bias;
    j["V"] = matrix_to_json(model.V);
    j["A"] = matrix_to_json(model.A);
    j["fixed_eta"] = vector_to_json(model.fixed_eta);
    j["seen_groups"] = model.seen_groups;
    j["train_config"] = to_json(model.config);
    j["metadata"] = metadata;
    return j;
}

MklModel model_from_json(const json& j) {
    check_envelope(j, "model");
    try {
        MklModel model;
        model.mode = mode_from_string(j.at("mode").get<std::string>());
        model.mapper = FeatureMapper::from_json(j.at("mapper"));
        for (const auto& w : j.at("omegas")) model.omegas.push_back(vector_from_json(w));
        model.bias = j.at("bias").get<double>();
        model.V = matrix_from_json(j.at("V"));
        model.A = matrix_from_json(j.at("A"));
        model.fixed_eta = vector_from_json(j.at("fixed_eta"));
        model.seen_groups = j.at("seen_groups").get<std::vector<bool>>();
        model.config = train_config_from_json(j.at("train_config"));
        if (model.omegas.size() != model.mapper.num_kernels()) throw DataError("model: omega count differs from kernels");
        for (std::size_t m = 0; m < model.omegas.size(); ++m) {
            if (model.omegas[m].size() != model.mapper.kernels()[m].feature_dim) {
                throw DataError("model: omega length differs from feature_dim");
            }
        }
        const auto s2 = 2 * static_cast<Index>(model.omegas.size());
        if (model.mode != Mode::fixed_weight && (model.V.cols() != s2 || model.A.rows() != s2)) {
            throw DataError("model: V or A shape does not match the kernel count");
        }
        return model;
    } catch (const json::exception& e) {
        throw DataError(std::string("model: ") + e.what());
    }
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

void save_model(const fs::path& path, const MklModel& model, const json& metadata) {
    write_json(path, model_to_json(model, metadata));
}

MklModel load_model(const fs::path& path, json* metadata) {
    const auto j = read_json(path);
    auto model = model_from_json(j);
    if (metadata) *metadata = j.value("metadata", json::object());
    return model;
}

void save_mapper(const fs::path& path, const FeatureMapper& mapper) {
    json j = envelope("mapper");
    j["mapper"] = mapper.to_json();
    write_json(path, j);
}

FeatureMapper load_mapper(const fs::path& path) {
    const auto j = read_json(path);
    check_envelope(j, "mapper");
    return FeatureMapper::from_json(j.at("mapper"));
}

}  // namespace mamkl
