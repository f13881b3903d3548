#pragma once

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "softply/control.hpp"
#include "softply/dataset.hpp"
#include "softply/training.hpp"

namespace softply::config {

using nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Strict view of one JSON object: every access is recorded, finish() rejects
// keys that were never read. Errors carry the dotted field path.
class Fields {
public:
    Fields(const json& j, std::string path);

    template <typename T>
    T req(const std::string& key) {
        return as<T>(req_json(key), key);
    }
    template <typename T>
    T opt(const std::string& key, T fallback) {
        const json* v = opt_json(key);
        return v ? as<T>(*v, key) : fallback;
    }
    const json& req_json(const std::string& key);
    const json* opt_json(const std::string& key);
    std::string path(const std::string& key) const { return path_ + "." + key; }
    void finish() const;

private:
    template <typename T>
    T as(const json& v, const std::string& key) const {
        try {
            if constexpr (std::is_arithmetic_v<T> && !std::is_same_v<T, bool>) {
                if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
                if constexpr (std::is_integral_v<T>) {
                    if (!v.is_number_integer() && !v.is_number_unsigned()) {
                        throw ConfigError(path(key) + ": expected an integer");
                    }
                    if constexpr (std::is_unsigned_v<T>) {
                        if (v.is_number_integer() && v.get<std::int64_t>() < 0) {
                            throw ConfigError(path(key) + ": expected a non-negative integer");
                        }
                    }
                }
            }
            return v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path(key) + ": " + e.what());
        }
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

json material_to_json(const plysim::PlyMaterialSpec& m);
plysim::PlyMaterialSpec material_from_json(const json& j, const std::string& path);

json grasps_to_json(const std::vector<plysim::GraspConfig>& g);
std::vector<plysim::GraspConfig> grasps_from_json(const json& j, const std::string& path);

// Camera pose either as {"eye", "target", "down"} or {"rotation", "translation"};
// written in the second, exact form.
json camera_to_json(const render::CameraModel& c);
render::CameraModel camera_from_json(const json& j, const std::string& path);
render::CameraModel default_camera();

// Rotation axes are in degrees unless "unit": "rad" is given.
json grid_to_json(const geometry::PoseGridSpec& g, bool rotation_in_degrees);
geometry::PoseGridSpec grid_from_json(const json& j, const std::string& path);

json preprocess_to_json(const preprocess::PreprocessSpec& p);
preprocess::PreprocessSpec preprocess_from_json(const json& j, const std::string& path);

json generation_to_json(const dataset::GenerationConfig& g);
dataset::GenerationConfig generation_from_json(const json& j, const std::string& path);

json split_plan_to_json(const dataset::SplitPlan& p);
dataset::SplitPlan split_plan_from_json(const json& j, const std::string& path);

json schedule_to_json(const training::TrainSchedule& s);
training::TrainSchedule schedule_from_json(const json& j, const std::string& path);

// Deadband rotations in degrees.
json controller_to_json(const control::ControllerSpec& c);
control::ControllerSpec controller_from_json(const json& j, const std::string& path);

struct Seeds {
    std::uint64_t dataset = 1;
    std::uint64_t split = 2;
    std::uint64_t training = 3;
    std::uint64_t closed_loop = 4;
};

struct ClosedLoopSettings {
    int grasp_id = 0;
    double duration = 10.0;
    geometry::RestConfiguration rest;
};

struct RunConfig {
    static constexpr int kSchemaVersion = 1;

    dataset::GenerationConfig generation;  // master_seed mirrors seeds.dataset
    dataset::SplitPlan split;              // seed mirrors seeds.split
    std::string architecture = "conv-small";
    int ensemble_size = 1;
    double train_subsample = 1.0;
    training::TrainSchedule schedule;
    nn::OptimizerSpec optimizer;
    control::ControllerSpec controller;
    ClosedLoopSettings closed_loop;
    training::AblationConfig ablation;
    Seeds seeds;
};

json to_json(const RunConfig& c);
RunConfig run_config_from_json(const json& j);
RunConfig load_run_config(const std::string& path);

// 5^5 poses over the full ranges, 9 grasp configurations, 1 image per pose.
RunConfig desk_config();
// 8 x 8 x 8 x 9 x 9 poses, 2 images per pose.
RunConfig full_config();

}  // namespace softply::config
