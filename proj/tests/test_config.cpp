#include <doctest.h>

#include <fstream>

#include "fixtures.hpp"
#include "softply/config.hpp"

using namespace softply;
using namespace softply::config;

TEST_SUITE("config") {

TEST_CASE("run config json roundtrip") {
    for (const auto& c : {desk_config(), full_config(), fixture::tiny_config()}) {
        const auto j = to_json(c);
        const auto back = run_config_from_json(j);
        CHECK(to_json(back) == j);
    }
}

TEST_CASE("shipped config files load") {
    const std::string root = SOFTPLY_SOURCE_DIR;
    const auto desk = load_run_config(root + "/configs/desk.json");
    const auto full = load_run_config(root + "/configs/full.json");
    CHECK(desk.generation.grid.pose_count() == 3125);
    CHECK(full.generation.grid.pose_count() == 41472);
    CHECK(desk.generation.grasps.size() == 9);
    CHECK(desk.split.held_out_grasp_ids.size() == 3);
    // The file must describe exactly the built-in desk setup.
    CHECK(generation_to_json(desk.generation) == generation_to_json(desk_config().generation));
}

TEST_CASE("unknown fields are rejected with their path") {
    auto j = to_json(desk_config());
    j["material"]["colour"] = "blue";
    CHECK_THROWS_WITH_AS(run_config_from_json(j), doctest::Contains("colour"), ConfigError);
}

TEST_CASE("type errors name the field") {
    auto j = to_json(desk_config());
    j["material"]["width"] = "wide";
    CHECK_THROWS_WITH_AS(run_config_from_json(j), doctest::Contains("width"), ConfigError);
}

TEST_CASE("cross references are checked") {
    auto c = desk_config();
    c.split.held_out_grasp_ids.insert(42);
    CHECK_THROWS_AS(run_config_from_json(to_json(c)), ConfigError);
    auto j = to_json(desk_config());
    j["schema_version"] = 99;
    CHECK_THROWS_AS(run_config_from_json(j), ConfigError);
}

TEST_CASE("grid units") {
    const auto g = grid_from_json(nlohmann::json::parse(R"({
        "x": {"center": 0, "half_range": 0.1, "step": 0.05},
        "y": {"center": 0.6, "half_range": 0, "step": 1},
        "z": {"center": 0, "half_range": 0, "step": 1},
        "theta": {"center": 0, "half_range": 20, "step": 10},
        "gamma": {"center": 0, "half_range": 0.1, "step": 0.1, "unit": "rad"}})"),
                                  "grid");
    CHECK(g.theta.half_range == doctest::Approx(geometry::deg2rad(20)));
    CHECK(g.gamma.half_range == 0.1);
    CHECK(g.pose_count() == 5 * 5 * 3);
}

TEST_CASE("camera can be given by eye and target") {
    const auto c = camera_from_json(nlohmann::json::parse(R"({
        "fx": 140, "fy": 140, "cx": 80, "cy": 60, "width": 160, "height": 120,
        "eye": [0, -0.2, 1], "target": [0, 0.5, 0], "down": [0, -1, 0]})"),
                                    "camera");
    CHECK(c.pose.translation.isApprox(geometry::Vec3(0, -0.2, 1)));
    const auto again = camera_from_json(camera_to_json(c), "camera");
    CHECK((again.pose.rotation - c.pose.rotation).norm() < 1e-12);
}

TEST_CASE("missing config file") {
    CHECK_THROWS(load_run_config("/nonexistent/config.json"));
}

}
