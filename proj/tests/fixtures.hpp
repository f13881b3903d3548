#pragma once

#include <filesystem>
#include <string>

#include "softply/config.hpp"

namespace fixture {

// 3 x 1 x 1 x 3 x 1 poses on the first three desk grasps.
inline softply::config::RunConfig tiny_config() {
    using softply::geometry::deg2rad;
    auto c = softply::config::desk_config();
    auto& g = c.generation;
    g.grasps.resize(3);
    g.grid.x = {0.0, 0.0525, 0.0525};
    g.grid.y = {0.6, 0.0, 1.0};
    g.grid.z = {0.0, 0.0, 1.0};
    g.grid.theta = {0.0, deg2rad(10), deg2rad(10)};
    g.grid.gamma = {0.0, 0.0, 1.0};
    c.split.unused_pose_fraction = 0.2;
    auto id = [&](int i) { return static_cast<std::uint32_t>(g.grasps[static_cast<std::size_t>(i)].id); };
    c.split.held_out_grasp_ids = {id(2)};
    c.ablation.grasp_order = {id(0), id(1), id(2)};
    c.ablation.grasp_counts = {3, 2};
    return c;
}

inline std::string temp_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("softply_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p.string();
}

}  // namespace fixture
