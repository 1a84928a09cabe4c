#pragma once

#include <filesystem>

#include <nlohmann/json.hpp>

#include "mamkl/featmap.hpp"
#include "mamkl/trainer.hpp"

namespace mamkl {

// Files share one envelope: {"format": "mamkl", "version": 1, "kind": ...}.
inline constexpr int kFormatVersion = 1;

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const MklModel& model, const nlohmann::json& metadata = nlohmann::json::object());
MklModel model_from_json(const nlohmann::json& j);

void save_model(const std::filesystem::path& path, const MklModel& model,
                const nlohmann::json& metadata = nlohmann::json::object());
MklModel load_model(const std::filesystem::path& path, nlohmann::json* metadata = nullptr);

void save_mapper(const std::filesystem::path& path, const FeatureMapper& mapper);
FeatureMapper load_mapper(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace mamkl
