#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "softply/dataset.hpp"
#include "softply/geometry.hpp"
#include "softply/plysim.hpp"
#include "softply/render.hpp"
#include "softply/tinynn.hpp"

namespace softply::control {

using geometry::DeformationState;
using geometry::RigidTransform;
using geometry::Vec3;

struct TwistCommand {
    Vec3 linear = Vec3::Zero();   // m/s, gripper frame
    Vec3 angular = Vec3::Zero();  // rad/s, gripper frame; x is always 0
};

struct ControllerSpec {
    std::array<double, 5> gains{0.8, 0.8, 0.8, 0.8, 0.8};  // 1/s
    std::array<double, 5> deadband{0.005, 0.005, 0.005, geometry::deg2rad(0.5), geometry::deg2rad(0.5)};
    double max_linear = 0.1;   // m/s
    double max_angular = 0.3;  // rad/s
    double control_rate = 20.0;    // Hz
    double estimator_rate = 30.0;  // Hz

    void validate() const;
};

class ControlError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

TwistCommand control_law(const DeformationState& estimated, const geometry::RestConfiguration& rest,
                         const ControllerSpec& spec);

// Free-flying gripper: translation += R * v * dt, R <- R * exp([w] dt).
RigidTransform integrate_robot(const RigidTransform& pose, const TwistCommand& twist, double dt);

struct Waypoint {
    double t = 0.0;
    DeformationState pose;  // H_gp in the world frame, same parameterization as the state
};

struct HumanTrajectory {
    std::vector<Waypoint> waypoints;
    double max_speed = 0.0;  // m/s, 0 = unchecked

    void validate() const;
    // Linear interpolation, held constant outside the waypoint span.
    DeformationState pose_at(double t) const;
    RigidTransform transform_at(double t) const;
};

// Trajectory JSON: [{t, x, y, z, theta_deg, gamma_deg}, ...] or
// {"max_speed": s, "waypoints": [...]}.
HumanTrajectory trajectory_from_json(const nlohmann::json& j);
HumanTrajectory load_trajectory(const std::string& path);

// Holds the human still at `pose` for `duration` seconds.
HumanTrajectory stationary(const DeformationState& pose, double duration);

struct SimSnapshot {
    double t = 0.0;
    int tick = 0;  // estimator tick index
    const plysim::PlyMesh* mesh = nullptr;
    RigidTransform robot;
    RigidTransform human;
};

// Relative state robot^-1 * human, with the (nominally zero) rotation about
// x dropped.
DeformationState true_state(const RigidTransform& robot, const RigidTransform& human);

class Estimator {
public:
    virtual ~Estimator() = default;
    virtual DeformationState estimate(const SimSnapshot& snap) = 0;
};

class GroundTruthEstimator : public Estimator {
public:
    DeformationState estimate(const SimSnapshot& snap) override;
};

DeformationState ground_truth_estimator(const SimSnapshot& snap);

// Render -> noise -> preprocess -> ensemble mean.
class CnnEstimator : public Estimator {
public:
    CnnEstimator(std::vector<nn::Model<float>> ensemble, render::CameraModel camera, dataset::NoiseSettings noise,
                 preprocess::PreprocessSpec preprocess, std::uint64_t seed);
    DeformationState estimate(const SimSnapshot& snap) override;

private:
    std::vector<nn::Model<float>> ensemble_;
    render::CameraModel camera_;
    dataset::NoiseSettings noise_;
    preprocess::PreprocessSpec preprocess_;
    std::uint64_t seed_;
    nn::Workspace<float> ws_;
};

struct ClosedLoopConfig {
    plysim::PlyMaterialSpec material;
    plysim::GraspConfig grasp;
    dataset::SimSettings sim;
    geometry::RestConfiguration rest;
    double duration = 10.0;  // s
};

struct LogRow {
    double t = 0.0;
    DeformationState true_state;
    DeformationState estimate;
    TwistCommand twist;
};

struct RunLog {
    std::vector<LogRow> rows;
    int control_ticks = 0;
    int estimator_ticks = 0;
    bool aborted = false;
    double abort_time = 0.0;
    std::string error;
};

// Tick k of a rate-r clock fires at k / r for k / r < duration.
int tick_count(double duration, double rate);

// Discrete-event loop in simulated time. Failures end the run early with
// `aborted` set; rows logged up to that point are kept.
RunLog run_closed_loop(Estimator& estimator, const ClosedLoopConfig& cfg, const HumanTrajectory& trajectory,
                       const ControllerSpec& spec);

void write_run_log_csv(const RunLog& log, std::ostream& os);

}  // namespace softply::control
