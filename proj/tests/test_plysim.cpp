#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "softply/config.hpp"
#include "softply/plysim.hpp"

using namespace softply;
using namespace softply::plysim;

namespace {

PlyMesh rest_mesh(const GraspConfig& g = {}) {
    PlyMesh m = build_mesh({}, g);
    set_boundary(m, {0.0, 0.6, 0.0, 0.0, 0.0});
    reset_free_nodes(m);
    return m;
}

}  // namespace

TEST_SUITE("plysim") {

TEST_CASE("default mesh topology and mass") {
    const PlyMesh m = build_mesh({}, {});
    CHECK(m.node_count() == 19 * 13);
    // 18*13 + 19*12 structural, 2*18*12 shear
    CHECK(m.springs.size() == 234 + 228 + 432);
    double mass = 0.0;
    for (double x : m.masses) mass += x;
    CHECK(mass == doctest::Approx(0.3 * 0.9 * 0.6).epsilon(1e-12));
    int robot = 0, human = 0;
    for (auto f : m.flags) {
        robot += f == NodeFlag::robot_clamped;
        human += f == NodeFlag::human_clamped;
    }
    CHECK(robot == 19);
    CHECK(human == 19);
    CHECK(m.left_anchor() == m.node(0, 12));
    CHECK(m.right_anchor() == m.node(18, 12));
}

TEST_CASE("corner nodes carry a quarter cell, interior nodes a full cell") {
    const PlyMesh m = build_mesh({}, {});
    const double cell = 0.3 * (0.9 / 18) * (0.6 / 12);
    CHECK(m.masses[m.node(0, 0)] == doctest::Approx(0.25 * cell));
    CHECK(m.masses[m.node(5, 0)] == doctest::Approx(0.5 * cell));
    CHECK(m.masses[m.node(5, 5)] == doctest::Approx(cell));
}

TEST_CASE("narrow grasp clamps only the clip span") {
    const PlyMesh m = build_mesh({}, {3, -0.1, 0.1});
    CHECK(m.clip_left_col == 7);
    CHECK(m.clip_right_col == 11);
    int human = 0;
    for (auto f : m.flags) human += f == NodeFlag::human_clamped;
    CHECK(human == 5);
}

TEST_CASE("bad grasps are rejected") {
    CHECK_THROWS_AS(build_mesh({}, {0, -0.6, 0.2}), SimError);
    CHECK_THROWS_AS(build_mesh({}, {0, 0.2, -0.2}), SimError);
    CHECK_THROWS_AS(build_mesh({}, {0, 0.0, 0.01}), SimError);
    PlyMaterialSpec bad;
    bad.areal_density = 0.0;
    CHECK_THROWS_AS(build_mesh(bad, {}), SimError);
}

TEST_CASE("springs are tension only") {
    CHECK(spring_force(0.1, 0.09, 400) == 0.0);
    CHECK(spring_force(0.1, 0.1, 400) == 0.0);
    CHECK(spring_force(0.1, 0.11, 400) == doctest::Approx(4.0));
}

TEST_CASE("node forces agree with direct summation") {
    PlyMesh m = rest_mesh();
    std::mt19937_64 rng(3);
    std::normal_distribution<double> jitter(0.0, 0.01);
    for (std::size_t n = 0; n < m.node_count(); ++n) {
        if (!m.clamped(n)) m.positions[n] += Vec3(jitter(rng), jitter(rng), jitter(rng));
    }
    const auto ours = node_forces(m, 9.81);
    const auto ref = oracle::spring_forces(m, 9.81);
    for (std::size_t n = 0; n < ours.size(); ++n) CHECK((ours[n] - ref[n]).norm() < 1e-12);
}

TEST_CASE("boundary places clamped nodes in their frames") {
    PlyMesh m = build_mesh({}, {});
    const geometry::DeformationState s{0.05, 0.55, -0.02, 0.1, -0.05};
    set_boundary(m, s);
    const auto h = geometry::to_transform(s);
    CHECK((m.positions[m.left_anchor()] - h.apply(Vec3(-0.45, 0, 0))).norm() < 1e-15);
    CHECK((m.positions[m.node(4, 0)] - Vec3(-0.45 + 4 * 0.05, 0, 0)).norm() < 1e-15);
}

TEST_CASE("solver reaches the residual tolerance and never raises the energy") {
    PlyMesh m = rest_mesh();
    std::vector<double> trace;
    const auto r = solve_equilibrium(m, 9.81, 1e-6, 200000, &trace);
    CHECK(r.converged);
    CHECK(r.residual <= 1e-6);
    CHECK(oracle::residual(m, 9.81) <= 1e-6);
    REQUIRE(trace.size() > 1);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
    // Hanging under gravity, so the middle sags.
    CHECK(m.positions[m.node(9, 6)].z() < -0.001);
}

TEST_CASE("three-mass chain matches an energy scan") {
    PlyMesh m;
    const double span = 1.0, rest = 0.25, k = 50.0, mass = 0.1;
    for (int i = 0; i < 5; ++i) {
        m.positions.emplace_back(i * 0.25, 0.0, 0.0);
        m.masses.push_back(i == 0 || i == 4 ? 0.0 : mass);
        m.flags.push_back(i == 0 || i == 4 ? NodeFlag::robot_clamped : NodeFlag::free);
    }
    m.velocities.assign(5, Vec3::Zero());
    m.home = m.positions;
    for (std::uint32_t i = 0; i < 4; ++i) m.springs.push_back({i, i + 1, rest, k});
    const auto r = solve_equilibrium(m, 9.81, 1e-9, 200000);
    REQUIRE(r.converged);
    const auto ref = oracle::chain_sag_scan(span, rest, k, mass, 9.81);
    CHECK(std::abs(m.positions[1].x() - ref.outer_x) < 1e-4);
    CHECK(std::abs(m.positions[1].z() - ref.outer_z) < 1e-4);
    CHECK(std::abs(m.positions[2].z() - ref.middle_z) < 1e-4);
    CHECK(std::abs(m.positions[3].z() - ref.outer_z) < 1e-4);
}

TEST_CASE("dynamics settle toward the static solution") {
    PlyMesh a = rest_mesh();
    PlyMesh b = a;
    solve_equilibrium(a, 9.81, 1e-7, 200000);
    for (int i = 0; i < 20000; ++i) step_dynamics(b, 9.81, 0.0005, 10.0);
    double worst = 0.0;
    for (std::size_t n = 0; n < a.node_count(); ++n) worst = std::max(worst, (a.positions[n] - b.positions[n]).norm());
    CHECK(worst < 1e-3);
}

TEST_CASE("dump_points writes one line per node") {
    const PlyMesh m = build_mesh({}, {});
    std::ostringstream os;
    dump_points(m, os);
    const std::string s = os.str();
    CHECK(std::count(s.begin(), s.end(), '\n') == static_cast<long>(m.node_count()));
}

}
