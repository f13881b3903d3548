#pragma once

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "softply/geometry.hpp"

namespace softply::plysim {

using geometry::DeformationState;
using geometry::RigidTransform;
using geometry::Vec3;

struct PlyMaterialSpec {
    double width = 0.9;   // robot-edge length, m
    double length = 0.6;  // robot-to-human extent, m
    int grid_nu = 19;     // nodes along the width
    int grid_nv = 13;     // nodes along the length
    double areal_density = 0.3;     // kg/m^2
    double spring_stiffness = 400;  // N/m
    double shear_stiffness = 200;   // N/m

    void validate() const;
};

// Two human-side clips, offsets measured along the human edge from its
// midpoint. Everything between them is treated as rigid.
struct GraspConfig {
    int id = 0;
    double clip_left_offset = -0.45;
    double clip_right_offset = 0.45;
};

enum class NodeFlag : std::uint8_t { free, robot_clamped, human_clamped };

struct Spring {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    double rest = 0.0;
    double k = 0.0;
};

struct PlyMesh {
    int nu = 0;  // grid size; 0 for meshes not built by build_mesh
    int nv = 0;
    int clip_left_col = -1;
    int clip_right_col = -1;

    std::vector<Vec3> positions;   // world frame
    std::vector<Vec3> velocities;
    std::vector<Vec3> home;        // clamped nodes: coordinates in their owning frame
    std::vector<double> masses;
    std::vector<NodeFlag> flags;
    std::vector<Spring> springs;

    RigidTransform robot_pose;  // gripper frame in world
    RigidTransform human_pose;  // H_gp frame in world

    std::size_t node_count() const { return positions.size(); }
    std::size_t node(int i, int j) const { return static_cast<std::size_t>(j * nu + i); }
    bool clamped(std::size_t n) const { return flags[n] != NodeFlag::free; }

    // Human-clip endpoint nodes (the synthetic fiducials).
    std::size_t left_anchor() const { return node(clip_left_col, nv - 1); }
    std::size_t right_anchor() const { return node(clip_right_col, nv - 1); }
};

class SimError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Regular nu x nv grid: structural springs on 4-neighbours, shear springs on
// both cell diagonals, no bending springs. Row j = 0 is the robot edge; row
// nv-1 is the human edge, clamped between (and including) the clip columns.
PlyMesh build_mesh(const PlyMaterialSpec& mat, const GraspConfig& grasp);

// Tension-only Hooke law.
double spring_force(double rest, double current_length, double k);

// Places clamped nodes for the relative state `state` with the robot at the
// world origin.
void set_boundary(PlyMesh& mesh, const DeformationState& state);

// Places clamped nodes for arbitrary world poses of both grasp frames.
void set_boundary_world(PlyMesh& mesh, const RigidTransform& robot, const RigidTransform& human);

// Initial guess for free nodes: straight interpolation between the robot row
// and the human row. Only valid for grid meshes.
void reset_free_nodes(PlyMesh& mesh);

double total_energy(const PlyMesh& mesh, double gravity);

// Net force on every node (zero on clamped nodes).
std::vector<Vec3> node_forces(const PlyMesh& mesh, double gravity);

double max_residual(const PlyMesh& mesh, double gravity);

struct SolveResult {
    bool converged = false;
    int iterations = 0;
    double residual = 0.0;  // max free-node force norm, N
    double energy = 0.0;
};

// Damped gradient descent on the total energy with an adaptive step. A step
// that raises the energy is rejected and the step shrinks. When
// `energy_trace` is given, the energy after every accepted iteration is
// appended.
SolveResult solve_equilibrium(PlyMesh& mesh, double gravity, double tol, int max_iters,
                              std::vector<double>* energy_trace = nullptr);

// One semi-implicit Euler step of the free nodes under spring, gravity and
// viscous damping forces.
void step_dynamics(PlyMesh& mesh, double gravity, double dt, double damping);

// Plain-text point list, one "x y z flag" line per node.
void dump_points(const PlyMesh& mesh, std::ostream& os);

}  // namespace softply::plysim
