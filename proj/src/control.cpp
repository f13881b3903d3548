#include "softply/control.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "softply/config.hpp"
#include "softply/preprocess.hpp"
#include "softply/random.hpp"
#include "softply/training.hpp"

namespace softply::control {

void ControllerSpec::validate() const {
    for (std::size_t i = 0; i < 5; ++i) {
        if (!(gains[i] >= 0.0) || !std::isfinite(gains[i])) throw ControlError("controller gains must be >= 0");
        if (!(deadband[i] >= 0.0)) throw ControlError("controller deadband must be >= 0");
    }
    if (!(max_linear > 0.0) || !(max_angular > 0.0)) throw ControlError("controller saturation must be > 0");
    if (!(control_rate > 0.0) || !(estimator_rate > 0.0)) throw ControlError("controller rates must be > 0");
}

TwistCommand control_law(const DeformationState& estimated, const geometry::RestConfiguration& rest,
                         const ControllerSpec& spec) {
    const auto d = geometry::delta(estimated, rest.desired);
    std::array<double, 5> u{};
    for (std::size_t i = 0; i < 5; ++i) {
        if (std::abs(d[i]) <= spec.deadband[i]) continue;
        const double lim = i < 3 ? spec.max_linear : spec.max_angular;
        u[i] = std::clamp(spec.gains[i] * d[i], -lim, lim);
    }
    TwistCommand tw;
    tw.linear = Vec3(u[0], u[1], u[2]);
    tw.angular = Vec3(0.0, u[3], u[4]);
    return tw;
}

RigidTransform integrate_robot(const RigidTransform& pose, const TwistCommand& twist, double dt) {
    if (!(dt > 0.0)) throw ControlError("integrate_robot needs dt > 0");
    RigidTransform out = pose;
    out.translation += pose.rotation * twist.linear * dt;
    const double angle = twist.angular.norm() * dt;
    if (angle > 0.0) {
        out.rotation = pose.rotation * Eigen::AngleAxisd(angle, twist.angular.normalized()).toRotationMatrix();
    }
    return out;
}

// ---- human trajectory ---------------------------------------------------------

void HumanTrajectory::validate() const {
    if (waypoints.empty()) throw ControlError("trajectory has no waypoints");
    for (std::size_t i = 0; i < waypoints.size(); ++i) {
        const auto& w = waypoints[i];
        if (!std::isfinite(w.t) || !w.pose.is_finite()) {
            throw ControlError("trajectory waypoint " + std::to_string(i) + " is not finite");
        }
        if (i == 0) continue;
        const auto& p = waypoints[i - 1];
        if (!(w.t > p.t)) throw ControlError("trajectory times must be strictly increasing at waypoint " + std::to_string(i));
        if (max_speed > 0.0) {
            const double dist = std::hypot(w.pose.x - p.pose.x, w.pose.y - p.pose.y, w.pose.z - p.pose.z);
            if (dist / (w.t - p.t) > max_speed * (1.0 + 1e-9)) {
                throw ControlError("trajectory segment ending at waypoint " + std::to_string(i) +
                                   " exceeds the max speed");
            }
        }
    }
}

DeformationState HumanTrajectory::pose_at(double t) const {
    if (waypoints.empty()) throw ControlError("trajectory has no waypoints");
    if (t <= waypoints.front().t) return waypoints.front().pose;
    if (t >= waypoints.back().t) return waypoints.back().pose;
    const auto it = std::upper_bound(waypoints.begin(), waypoints.end(), t,
                                     [](double v, const Waypoint& w) { return v < w.t; });
    const Waypoint& b = *it;
    const Waypoint& a = *(it - 1);
    const double s = (t - a.t) / (b.t - a.t);
    const auto pa = a.pose.as_array(), pb = b.pose.as_array();
    std::array<double, 5> r{};
    for (std::size_t i = 0; i < 5; ++i) r[i] = pa[i] + s * (pb[i] - pa[i]);
    return DeformationState::from_array(r);
}

RigidTransform HumanTrajectory::transform_at(double t) const { return geometry::to_transform(pose_at(t)); }

namespace {

Waypoint waypoint_from_json(const nlohmann::json& j, const std::string& path) {
    config::Fields f(j, path);
    Waypoint w;
    w.t = f.req<double>("t");
    w.pose.x = f.req<double>("x");
    w.pose.y = f.req<double>("y");
    w.pose.z = f.req<double>("z");
    w.pose.theta = geometry::deg2rad(f.req<double>("theta_deg"));
    w.pose.gamma = geometry::deg2rad(f.req<double>("gamma_deg"));
    f.finish();
    return w;
}

}  // namespace

HumanTrajectory trajectory_from_json(const nlohmann::json& j) {
    HumanTrajectory tr;
    const nlohmann::json* list = &j;
    std::unique_ptr<config::Fields> f;
    if (j.is_object()) {
        f = std::make_unique<config::Fields>(j, "trajectory");
        tr.max_speed = f->opt<double>("max_speed", 0.0);
        list = &f->req_json("waypoints");
    }
    if (!list->is_array()) throw config::ConfigError("trajectory: expected a list of waypoints");
    for (std::size_t i = 0; i < list->size(); ++i) {
        tr.waypoints.push_back(waypoint_from_json((*list)[i], "trajectory[" + std::to_string(i) + "]"));
    }
    if (f) f->finish();
    tr.validate();
    return tr;
}

HumanTrajectory load_trajectory(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ControlError("cannot open trajectory " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw ControlError(path + ": " + e.what());
    }
    return trajectory_from_json(j);
}

HumanTrajectory stationary(const DeformationState& pose, double duration) {
    HumanTrajectory tr;
    tr.waypoints = {{0.0, pose}, {std::max(duration, 1e-3), pose}};
    return tr;
}

// ---- estimators -------------------------------------------------------------

DeformationState true_state(const RigidTransform& robot, const RigidTransform& human) {
    return geometry::project_transform(robot.inverse() * human);
}

DeformationState ground_truth_estimator(const SimSnapshot& snap) { return true_state(snap.robot, snap.human); }

DeformationState GroundTruthEstimator::estimate(const SimSnapshot& snap) { return ground_truth_estimator(snap); }

CnnEstimator::CnnEstimator(std::vector<nn::Model<float>> ensemble, render::CameraModel camera,
                           dataset::NoiseSettings noise, preprocess::PreprocessSpec preprocess, std::uint64_t seed)
    : ensemble_(std::move(ensemble)),
      camera_(std::move(camera)),
      noise_(noise),
      preprocess_(preprocess),
      seed_(seed) {
    if (ensemble_.empty()) throw ControlError("CNN estimator needs at least one model");
    if (ensemble_.front().spec.input.h != preprocess_.out_size) {
        throw ControlError("model input size differs from the preprocessing output size");
    }
}

DeformationState CnnEstimator::estimate(const SimSnapshot& snap) {
    if (!snap.mesh) throw ControlError("CNN estimator needs the simulated mesh");
    const auto clean = render::rasterize(camera_, *snap.mesh);
    const auto anchors = render::project_anchors(camera_, *snap.mesh);
    const render::NoiseModel nm{noise_.sigma_per_meter, noise_.dropout_prob,
                                derive_seed(seed_, {static_cast<std::uint64_t>(snap.tick)})};
    const auto noisy = render::apply_noise(clean, nm, camera_.z_near, camera_.z_far);
    const auto grid = preprocess::pipeline(noisy, anchors, preprocess_);
    const auto p = training::predict_ensemble(ensemble_, grid.values, ws_);
    const DeformationState s = DeformationState::from_array(p);
    if (!s.is_finite()) throw ControlError("CNN estimate is not finite");
    return s;
}

// ---- closed loop --------------------------------------------------------------

int tick_count(double duration, double rate) {
    if (!(duration >= 0.0) || !(rate > 0.0)) throw ControlError("tick_count needs duration >= 0 and rate > 0");
    return static_cast<int>(std::ceil(duration * rate - 1e-9));
}

namespace {

bool mesh_finite(const plysim::PlyMesh& mesh) {
    for (const auto& p : mesh.positions) {
        if (!p.allFinite()) return false;
    }
    return true;
}

}  // namespace

RunLog run_closed_loop(Estimator& estimator, const ClosedLoopConfig& cfg, const HumanTrajectory& trajectory,
                       const ControllerSpec& spec) {
    spec.validate();
    trajectory.validate();
    if (!(cfg.duration > 0.0)) throw ControlError("closed loop duration must be > 0");
    if (!(cfg.sim.dt > 0.0)) throw ControlError("closed loop needs a positive physics step");

    RunLog log;
    const int n_ctrl = tick_count(cfg.duration, spec.control_rate);
    const int n_est = tick_count(cfg.duration, spec.estimator_rate);

    plysim::PlyMesh mesh = plysim::build_mesh(cfg.material, cfg.grasp);
    RigidTransform robot = RigidTransform::identity();
    RigidTransform human = trajectory.transform_at(0.0);
    plysim::set_boundary_world(mesh, robot, human);
    plysim::reset_free_nodes(mesh);
    const auto eq = plysim::solve_equilibrium(mesh, cfg.sim.gravity, cfg.sim.tol, cfg.sim.max_iters);
    if (!eq.converged) {
        log.aborted = true;
        log.error = "initial equilibrium did not converge";
        return log;
    }

    double t = 0.0;
    int ic = 0, ie = 0;
    DeformationState latched = cfg.rest.desired;
    TwistCommand twist;
    auto abort = [&](double when, const std::string& why) {
        log.aborted = true;
        log.abort_time = when;
        log.error = why;
    };

    while (ic < n_ctrl || ie < n_est) {
        const double tc = ic < n_ctrl ? ic / spec.control_rate : INFINITY;
        const double te = ie < n_est ? ie / spec.estimator_rate : INFINITY;
        const double t_next = std::min(tc, te);

        // Physics up to the next event in equal substeps no longer than dt.
        if (t_next > t) {
            const int n_sub = std::max(1, static_cast<int>(std::ceil((t_next - t) / cfg.sim.dt - 1e-9)));
            const double h = (t_next - t) / n_sub;
            for (int s = 1; s <= n_sub; ++s) {
                robot = integrate_robot(robot, twist, h);
                human = trajectory.transform_at(s == n_sub ? t_next : t + s * h);
                plysim::set_boundary_world(mesh, robot, human);
                plysim::step_dynamics(mesh, cfg.sim.gravity, h, cfg.sim.damping);
            }
            t = t_next;
            if (!mesh_finite(mesh)) {
                abort(t, "physics diverged");
                break;
            }
        }

        if (te <= t_next) {
            try {
                latched = estimator.estimate(SimSnapshot{t, ie, &mesh, robot, human});
            } catch (const std::exception& e) {
                abort(t, std::string("estimator failed: ") + e.what());
                break;
            }
            ++ie;
            ++log.estimator_ticks;
        }
        if (tc <= t_next) {
            twist = control_law(latched, cfg.rest, spec);
            log.rows.push_back({t, true_state(robot, human), latched, twist});
            ++ic;
            ++log.control_ticks;
        }
    }
    return log;
}

void write_run_log_csv(const RunLog& log, std::ostream& os) {
    os << "t,true_x,true_y,true_z,true_th,true_ga,est_x,est_y,est_z,est_th,est_ga,vx,vy,vz,wy,wz\n";
    os << std::setprecision(17);
    for (const auto& r : log.rows) {
        os << r.t;
        for (double v : r.true_state.as_array()) os << ',' << v;
        for (double v : r.estimate.as_array()) os << ',' << v;
        os << ',' << r.twist.linear.x() << ',' << r.twist.linear.y() << ',' << r.twist.linear.z() << ','
           << r.twist.angular.y() << ',' << r.twist.angular.z() << '\n';
    }
}

}  // namespace softply::control
