#include "softply/plysim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace softply::plysim {

void PlyMaterialSpec::validate() const {
    if (!(width > 0 && length > 0 && areal_density > 0 && spring_stiffness > 0 && shear_stiffness > 0)) {
        throw SimError("material parameters must be positive");
    }
    if (grid_nu < 2 || grid_nv < 2) throw SimError("material grid needs at least 2x2 nodes");
}

PlyMesh build_mesh(const PlyMaterialSpec& mat, const GraspConfig& grasp) {
    mat.validate();
    const double half = 0.5 * mat.width;
    const double slack = 1e-9;
    if (grasp.clip_left_offset < -half - slack || grasp.clip_right_offset > half + slack) {
        throw SimError("grasp " + std::to_string(grasp.id) + ": clip offsets outside the ply edge");
    }
    if (!(grasp.clip_left_offset < grasp.clip_right_offset)) {
        throw SimError("grasp " + std::to_string(grasp.id) + ": left clip must be left of right clip");
    }

    PlyMesh m;
    m.nu = mat.grid_nu;
    m.nv = mat.grid_nv;
    const double dx = mat.width / (m.nu - 1);
    const double dy = mat.length / (m.nv - 1);
    m.clip_left_col = static_cast<int>(std::lround((grasp.clip_left_offset + half) / dx));
    m.clip_right_col = static_cast<int>(std::lround((grasp.clip_right_offset + half) / dx));
    if (m.clip_left_col == m.clip_right_col) {
        throw SimError("grasp " + std::to_string(grasp.id) + ": both clips round to column " +
                       std::to_string(m.clip_left_col));
    }

    const std::size_t n = static_cast<std::size_t>(m.nu) * static_cast<std::size_t>(m.nv);
    m.positions.resize(n);
    m.velocities.assign(n, Vec3::Zero());
    m.home.assign(n, Vec3::Zero());
    m.masses.assign(n, 0.0);
    m.flags.assign(n, NodeFlag::free);

    for (int j = 0; j < m.nv; ++j) {
        for (int i = 0; i < m.nu; ++i) {
            m.positions[m.node(i, j)] = Vec3(-half + i * dx, j * dy, 0.0);
        }
    }

    // Lumped mass: each cell hands a quarter of its mass to each corner.
    const double cell_mass = mat.areal_density * dx * dy;
    for (int j = 0; j + 1 < m.nv; ++j) {
        for (int i = 0; i + 1 < m.nu; ++i) {
            for (auto nd : {m.node(i, j), m.node(i + 1, j), m.node(i, j + 1), m.node(i + 1, j + 1)}) {
                m.masses[nd] += 0.25 * cell_mass;
            }
        }
    }

    for (int i = 0; i < m.nu; ++i) {
        const std::size_t r = m.node(i, 0);
        m.flags[r] = NodeFlag::robot_clamped;
        m.home[r] = Vec3(-half + i * dx, 0.0, 0.0);
    }
    for (int i = m.clip_left_col; i <= m.clip_right_col; ++i) {
        const std::size_t h = m.node(i, m.nv - 1);
        m.flags[h] = NodeFlag::human_clamped;
        m.home[h] = Vec3(-half + i * dx, 0.0, 0.0);
    }

    auto add = [&m](std::size_t a, std::size_t b, double k) {
        const double rest = (m.positions[a] - m.positions[b]).norm();
        m.springs.push_back({static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), rest, k});
    };
    for (int j = 0; j < m.nv; ++j) {
        for (int i = 0; i < m.nu; ++i) {
            if (i + 1 < m.nu) add(m.node(i, j), m.node(i + 1, j), mat.spring_stiffness);
            if (j + 1 < m.nv) add(m.node(i, j), m.node(i, j + 1), mat.spring_stiffness);
        }
    }
    for (int j = 0; j + 1 < m.nv; ++j) {
        for (int i = 0; i + 1 < m.nu; ++i) {
            add(m.node(i, j), m.node(i + 1, j + 1), mat.shear_stiffness);
            add(m.node(i + 1, j), m.node(i, j + 1), mat.shear_stiffness);
        }
    }

    m.robot_pose = RigidTransform::identity();
    m.human_pose.translation = Vec3(0.0, mat.length, 0.0);
    return m;
}

double spring_force(double rest, double current_length, double k) {
    return current_length > rest ? k * (current_length - rest) : 0.0;
}

void set_boundary_world(PlyMesh& mesh, const RigidTransform& robot, const RigidTransform& human) {
    mesh.robot_pose = robot;
    mesh.human_pose = human;
    for (std::size_t n = 0; n < mesh.node_count(); ++n) {
        switch (mesh.flags[n]) {
            case NodeFlag::robot_clamped:
                mesh.positions[n] = robot.apply(mesh.home[n]);
                mesh.velocities[n].setZero();
                break;
            case NodeFlag::human_clamped:
                mesh.positions[n] = human.apply(mesh.home[n]);
                mesh.velocities[n].setZero();
                break;
            case NodeFlag::free:
                break;
        }
    }
}

void set_boundary(PlyMesh& mesh, const DeformationState& state) {
    set_boundary_world(mesh, RigidTransform::identity(), geometry::to_transform(state));
}

void reset_free_nodes(PlyMesh& mesh) {
    if (mesh.nu < 2 || mesh.nv < 2) throw SimError("reset_free_nodes needs a grid mesh");
    for (int i = 0; i < mesh.nu; ++i) {
        const double lx = mesh.home[mesh.node(i, 0)].x();
        const Vec3 a = mesh.robot_pose.apply(Vec3(lx, 0.0, 0.0));
        const Vec3 b = mesh.human_pose.apply(Vec3(lx, 0.0, 0.0));
        for (int j = 0; j < mesh.nv; ++j) {
            const std::size_t n = mesh.node(i, j);
            if (mesh.clamped(n)) continue;
            const double s = static_cast<double>(j) / (mesh.nv - 1);
            mesh.positions[n] = (1.0 - s) * a + s * b;
            mesh.velocities[n].setZero();
        }
    }
}

double total_energy(const PlyMesh& mesh, double gravity) {
    double e = 0.0;
    for (const Spring& s : mesh.springs) {
        const double len = (mesh.positions[s.a] - mesh.positions[s.b]).norm();
        const double stretch = len - s.rest;
        if (stretch > 0.0) e += 0.5 * s.k * stretch * stretch;
    }
    for (std::size_t n = 0; n < mesh.node_count(); ++n) {
        if (!mesh.clamped(n)) e += mesh.masses[n] * gravity * mesh.positions[n].z();
    }
    return e;
}

namespace {

void accumulate_forces(const PlyMesh& mesh, double gravity, std::vector<Vec3>& f) {
    f.assign(mesh.node_count(), Vec3::Zero());
    for (const Spring& s : mesh.springs) {
        const Vec3 d = mesh.positions[s.b] - mesh.positions[s.a];
        const double len = d.norm();
        const double t = spring_force(s.rest, len, s.k);
        if (t == 0.0) continue;
        const Vec3 pull = (t / len) * d;
        f[s.a] += pull;
        f[s.b] -= pull;
    }
    for (std::size_t n = 0; n < mesh.node_count(); ++n) {
        if (mesh.clamped(n)) {
            f[n].setZero();
        } else {
            f[n].z() -= mesh.masses[n] * gravity;
        }
    }
}

double max_norm(const std::vector<Vec3>& f) {
    double r = 0.0;
    for (const Vec3& v : f) r = std::max(r, v.norm());
    return r;
}

}  // namespace

std::vector<Vec3> node_forces(const PlyMesh& mesh, double gravity) {
    std::vector<Vec3> f;
    accumulate_forces(mesh, gravity, f);
    return f;
}

double max_residual(const PlyMesh& mesh, double gravity) { return max_norm(node_forces(mesh, gravity)); }

SolveResult solve_equilibrium(PlyMesh& mesh, double gravity, double tol, int max_iters,
                              std::vector<double>* energy_trace) {
    if (!(tol > 0.0)) throw SimError("solve_equilibrium: tol must be positive");
    const std::size_t n_nodes = mesh.node_count();
    const std::size_t n_springs = mesh.springs.size();

    // Fictitious-time step bound with the physical masses, scaled from the
    // stiffest node's sqrt(m / sum k). Larger factors oscillate.
    double min_ratio = 1.0;
    {
        std::vector<double> k_sum(n_nodes, 0.0);
        for (const Spring& s : mesh.springs) {
            k_sum[s.a] += s.k;
            k_sum[s.b] += s.k;
        }
        bool any = false;
        for (std::size_t n = 0; n < n_nodes; ++n) {
            if (mesh.clamped(n) || k_sum[n] <= 0.0) continue;
            const double r = mesh.masses[n] / k_sum[n];
            min_ratio = any ? std::min(min_ratio, r) : r;
            any = true;
        }
    }
    const double dt_max = 1.4 * std::sqrt(min_ratio);
    constexpr double kAlpha0 = 0.1;
    constexpr int kMinPositive = 5;

    std::vector<Vec3> force;
    accumulate_forces(mesh, gravity, force);
    SolveResult res;
    res.energy = total_energy(mesh, gravity);
    res.residual = max_norm(force);
    if (res.residual <= tol) {
        res.converged = true;
        return res;
    }

    // Per-spring state at the accepted configuration. The energy change of a
    // trial step is accumulated from the displacements rather than by
    // differencing two totals, which keeps it accurate far below the
    // round-off level of the total energy.
    std::vector<Vec3> seg(n_springs), seg_trial(n_springs);
    std::vector<double> len(n_springs), len_trial(n_springs);
    for (std::size_t i = 0; i < n_springs; ++i) {
        seg[i] = mesh.positions[mesh.springs[i].b] - mesh.positions[mesh.springs[i].a];
        len[i] = seg[i].norm();
    }

    std::vector<Vec3> vel(n_nodes, Vec3::Zero()), vel_trial(n_nodes), disp(n_nodes), force_trial(n_nodes);
    double dt = 0.1 * dt_max;
    double alpha = kAlpha0;
    int positive_steps = 0;

    auto restart = [&] {
        for (auto& v : vel) v.setZero();
        positive_steps = 0;
        dt *= 0.5;
        alpha = kAlpha0;
    };

    for (int it = 1; it <= max_iters; ++it) {
        res.iterations = it;
        double power = 0.0, vnorm2 = 0.0, fnorm2 = 0.0;
        for (std::size_t n = 0; n < n_nodes; ++n) {
            power += force[n].dot(vel[n]);
            vnorm2 += vel[n].squaredNorm();
            fnorm2 += force[n].squaredNorm();
        }
        if (power > 0.0) {
            const double scale = std::sqrt(vnorm2 / fnorm2);
            for (std::size_t n = 0; n < n_nodes; ++n) vel[n] = (1.0 - alpha) * vel[n] + alpha * scale * force[n];
            if (++positive_steps > kMinPositive) {
                dt = std::min(dt * 1.1, dt_max);
                alpha *= 0.99;
            }
        } else {
            restart();
        }

        double d_energy = 0.0;
        for (std::size_t n = 0; n < n_nodes; ++n) {
            if (mesh.clamped(n)) {
                vel_trial[n].setZero();
                disp[n].setZero();
                force_trial[n].setZero();
                continue;
            }
            vel_trial[n] = vel[n] + (dt / mesh.masses[n]) * force[n];
            disp[n] = dt * vel_trial[n];
            d_energy += mesh.masses[n] * gravity * disp[n].z();
            force_trial[n] = Vec3(0.0, 0.0, -mesh.masses[n] * gravity);
        }
        for (std::size_t i = 0; i < n_springs; ++i) {
            const Spring& s = mesh.springs[i];
            const Vec3 dd = disp[s.b] - disp[s.a];
            seg_trial[i] = seg[i] + dd;
            const double l_new = seg_trial[i].norm();
            len_trial[i] = l_new;
            const double s_old = len[i] - s.rest;
            const double s_new = l_new - s.rest;
            if (s_old > 0.0 && s_new > 0.0) {
                const double dl = dd.dot(2.0 * seg[i] + dd) / (l_new + len[i]);
                d_energy += 0.5 * s.k * dl * (s_new + s_old);
            } else {
                d_energy += 0.5 * s.k * (std::max(s_new, 0.0) * std::max(s_new, 0.0) -
                                         std::max(s_old, 0.0) * std::max(s_old, 0.0));
            }
            if (s_new > 0.0) {
                const Vec3 pull = (s.k * s_new / l_new) * seg_trial[i];
                force_trial[s.a] += pull;
                force_trial[s.b] -= pull;
            }
        }
        for (std::size_t n = 0; n < n_nodes; ++n) {
            if (mesh.clamped(n)) force_trial[n].setZero();
        }

        if (!(d_energy <= 0.0)) {
            if (!std::isfinite(d_energy)) throw SimError("solve_equilibrium diverged");
            restart();
            if (dt < 1e-12 * dt_max) break;  // no descent left at round-off level
            continue;
        }

        for (std::size_t n = 0; n < n_nodes; ++n) mesh.positions[n] += disp[n];
        vel.swap(vel_trial);
        force.swap(force_trial);
        seg.swap(seg_trial);
        len.swap(len_trial);
        res.energy += d_energy;
        if (energy_trace != nullptr) energy_trace->push_back(res.energy);
        res.residual = max_norm(force);
        if (res.residual <= tol) {
            res.converged = true;
            break;
        }
    }
    // Report the exactly recomputed residual rather than the incremental one.
    res.residual = max_residual(mesh, gravity);
    res.converged = res.residual <= tol;
    return res;
}

void step_dynamics(PlyMesh& mesh, double gravity, double dt, double damping) {
    if (!(dt > 0.0)) throw SimError("step_dynamics: dt must be positive");
    std::vector<Vec3> force;
    accumulate_forces(mesh, gravity, force);
    for (std::size_t n = 0; n < mesh.node_count(); ++n) {
        if (mesh.clamped(n)) continue;
        const Vec3 acc = force[n] / mesh.masses[n] - damping * mesh.velocities[n];
        mesh.velocities[n] += dt * acc;
        mesh.positions[n] += dt * mesh.velocities[n];
    }
}

void dump_points(const PlyMesh& mesh, std::ostream& os) {
    for (std::size_t n = 0; n < mesh.node_count(); ++n) {
        const Vec3& p = mesh.positions[n];
        os << p.x() << ' ' << p.y() << ' ' << p.z() << ' ' << static_cast<int>(mesh.flags[n]) << '\n';
    }
}

}  // namespace softply::plysim
