#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "softply/config.hpp"
#include "softply/render.hpp"

using namespace softply;
using namespace softply::render;

namespace {

CameraModel bare_camera() {
    CameraModel c;
    c.pose = RigidTransform::identity();
    return c;
}

}  // namespace

TEST_SUITE("render") {

TEST_CASE("projection of known points") {
    const CameraModel c = bare_camera();
    const auto p = project(c, Vec3(0.0, 0.0, 1.0));
    CHECK(p.u == 80.0);
    CHECK(p.v == 60.0);
    const auto q = project(c, Vec3(0.5, -0.25, 2.0));
    CHECK(std::abs(q.u - (140.0 * 0.25 + 80.0)) < 1e-12);
    CHECK(std::abs(q.v - (140.0 * -0.125 + 60.0)) < 1e-12);
    CHECK(q.depth == 2.0);
    CHECK_THROWS_AS(project(c, Vec3(0, 0, 0)), RenderError);
    CHECK_THROWS_AS(project(c, Vec3(0, 0, -1)), RenderError);
}

TEST_CASE("look_at builds an orthonormal frame facing the target") {
    const auto t = look_at(Vec3(0, -0.2, 1), Vec3(0, 0.5, 0), Vec3(0, -1, 0));
    CHECK(t.is_valid());
    const Vec3 fwd = (Vec3(0, 0.5, 0) - Vec3(0, -0.2, 1)).normalized();
    CHECK((t.rotation.col(2) - fwd).norm() < 1e-12);
    // Target projects to the principal point.
    CameraModel c;
    c.pose = t;
    const auto p = project(c, world_to_camera(c, RigidTransform::identity(), Vec3(0, 0.5, 0)));
    CHECK(std::abs(p.u - 80.0) < 1e-9);
    CHECK(std::abs(p.v - 60.0) < 1e-9);
    CHECK_THROWS_AS(look_at(Vec3(0, 0, 0), Vec3(0, 0, 1), Vec3(0, 0, 1)), RenderError);
}

TEST_CASE("fronto-parallel plane renders constant depth") {
    const CameraModel c = bare_camera();
    const std::vector<Triangle> tris{{Vec3(-5, -5, 1.25), Vec3(5, -5, 1.25), Vec3(5, 5, 1.25)},
                                     {Vec3(-5, -5, 1.25), Vec3(5, 5, 1.25), Vec3(-5, 5, 1.25)}};
    const auto img = rasterize_triangles(c, tris);
    for (float z : img.values) CHECK(z == 1.25f);
}

TEST_CASE("nearer triangle wins and out-of-range depth is dropped") {
    const CameraModel c = bare_camera();
    const std::vector<Triangle> far{{Vec3(-5, -5, 2.0), Vec3(5, -5, 2.0), Vec3(0, 5, 2.0)}};
    std::vector<Triangle> both = far;
    both.push_back({Vec3(-5, -5, 1.0), Vec3(5, -5, 1.0), Vec3(0, 5, 1.0)});
    const auto img = rasterize_triangles(c, both);
    CHECK(img.at(80, 60) == 1.0f);
    const std::vector<Triangle> beyond{{Vec3(-9, -9, 3.0), Vec3(9, -9, 3.0), Vec3(0, 9, 3.0)}};
    CHECK(rasterize_triangles(c, beyond).at(80, 60) == 0.0f);
}

TEST_CASE("half-pixel sampling convention") {
    const CameraModel c = bare_camera();
    // Vertical edge at u = 80.6, just right of the column-80 center.
    const double x_edge = (80.6 - 80.0) / 140.0;
    const std::vector<Triangle> tris{{Vec3(x_edge, -5, 1), Vec3(5, -5, 1), Vec3(5, 5, 1)},
                                     {Vec3(x_edge, -5, 1), Vec3(5, 5, 1), Vec3(x_edge, 5, 1)}};
    const auto img = rasterize_triangles(c, tris);
    CHECK(img.at(79, 60) == 0.0f);
    CHECK(img.at(80, 60) == 0.0f);  // center 80.5 < 80.6
    CHECK(img.at(81, 60) == 1.0f);
}

TEST_CASE("random patches match the ray-cast oracle") {
    const CameraModel c = bare_camera();
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const auto tris = oracle::random_patch(seed, 4);
        const auto img = rasterize_triangles(c, tris);
        const auto d = oracle::compare_with_ray_cast(c, tris, img);
        CHECK(d.max_abs < 1e-5);
        CHECK(d.compared > 1000);
    }
}

TEST_CASE("noise is deterministic, scaled and clamped") {
    DepthImage img(32, 32, 1.0f);
    img.at(0, 0) = 0.0f;
    NoiseModel nm{0.002, 0.1, 42};
    const auto a = apply_noise(img, nm, 0.2, 2.5);
    const auto b = apply_noise(img, nm, 0.2, 2.5);
    CHECK(a == b);
    CHECK(a.at(0, 0) == 0.0f);
    int dropped = 0;
    double sum = 0.0, sq = 0.0;
    int kept = 0;
    for (float z : a.values) {
        if (z == 0.0f) {
            ++dropped;
            continue;
        }
        sum += z;
        sq += (z - 1.0) * (z - 1.0);
        ++kept;
    }
    CHECK(dropped > 50);
    CHECK(dropped < 160);
    CHECK(std::abs(sum / kept - 1.0) < 0.001);
    CHECK(std::sqrt(sq / kept) == doctest::Approx(0.002).epsilon(0.2));
    nm.seed = 43;
    CHECK(!(apply_noise(img, nm, 0.2, 2.5) == a));
    const auto c = apply_noise(DepthImage(8, 8, 2.5f), {1.0, 0.0, 1}, 0.2, 2.5);
    for (float z : c.values) CHECK(z <= 2.5f);
}

TEST_CASE("ply at rest is visible and anchors land in the image") {
    const auto cfg = config::desk_config().generation;
    plysim::PlyMesh m = plysim::build_mesh(cfg.material, cfg.grasps[0]);
    plysim::set_boundary(m, {0, 0.6, 0, 0, 0});
    plysim::reset_free_nodes(m);
    const auto img = rasterize(cfg.camera, m);
    int hits = 0;
    for (float z : img.values) hits += z > 0.0f;
    CHECK(hits > 2000);
    const auto anchors = project_anchors(cfg.camera, m);
    for (const auto& a : anchors) {
        CHECK(a.u > 0.0);
        CHECK(a.u < 160.0);
        CHECK(a.v > 0.0);
        CHECK(a.v < 120.0);
    }
    CHECK(anchors[0].u < anchors[1].u);
}

TEST_CASE("pgm output") {
    DepthImage img(3, 2, 0.0f);
    img.at(1, 0) = 1.234f;
    const auto path = (std::filesystem::temp_directory_path() / "softply_test.pgm").string();
    write_pgm(img, path);
    std::ifstream is(path, std::ios::binary);
    std::string magic;
    int w = 0, h = 0, maxv = 0;
    is >> magic >> w >> h >> maxv;
    is.get();
    CHECK(magic == "P5");
    CHECK(w == 3);
    CHECK(h == 2);
    CHECK(maxv == 65535);
    unsigned char px[4];
    is.read(reinterpret_cast<char*>(px), 4);
    CHECK(((px[2] << 8) | px[3]) == 1234);
    std::remove(path.c_str());
}

}
