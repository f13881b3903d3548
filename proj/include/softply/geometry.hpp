#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace softply::geometry {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Relative roto-translation between the robot grasp frame and the human
// grasp proxy frame. The rotation about x is always zero and is not stored.
struct DeformationState {
    double x = 0.0;      // m
    double y = 0.0;      // m
    double z = 0.0;      // m
    double theta = 0.0;  // rad, about y
    double gamma = 0.0;  // rad, about z

    static constexpr std::size_t kDims = 5;

    std::array<double, kDims> as_array() const { return {x, y, z, theta, gamma}; }
    static DeformationState from_array(const std::array<double, kDims>& a) {
        return {a[0], a[1], a[2], a[3], a[4]};
    }
    double operator[](std::size_t i) const { return as_array()[i]; }
    bool is_finite() const;

    friend bool operator==(const DeformationState&, const DeformationState&) = default;
};

using DeltaState = std::array<double, DeformationState::kDims>;

struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    RigidTransform inverse() const;
    RigidTransform operator*(const RigidTransform& rhs) const;

    // Orthonormal with det +1, within tol.
    bool is_valid(double tol = 1e-9) const;
};

struct RestConfiguration {
    DeformationState desired{0.0, 0.6, 0.0, 0.0, 0.0};
};

// Lattice definition for one axis: {center - half_range, ..., center + half_range}.
struct AxisGrid {
    double center = 0.0;
    double half_range = 0.0;
    double step = 1.0;

    std::vector<double> values() const;
};

struct PoseGridSpec {
    AxisGrid x, y, z, theta, gamma;  // meters and radians

    std::array<const AxisGrid*, 5> axes() const { return {&x, &y, &z, &theta, &gamma}; }
    std::size_t pose_count() const;
};

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Mat3 rot_x(double a);
Mat3 rot_y(double a);
Mat3 rot_z(double a);

RigidTransform to_transform(const DeformationState& s);

// Inverse of to_transform. Throws GeometryError when the rotation carries an
// x-Euler component larger than x_tol.
DeformationState from_transform(const RigidTransform& t, double x_tol = 1e-6);

// Same decomposition, but the x-Euler component is dropped instead of
// rejected. Returned through `x_residual` when non-null.
DeformationState project_transform(const RigidTransform& t, double* x_residual = nullptr);

DeltaState delta(const DeformationState& current, const DeformationState& desired);

std::vector<DeformationState> enumerate_grid(const PoseGridSpec& spec);

// Inverse of enumerate_grid's ordering: per-axis indices of pose `index`.
std::array<std::size_t, 5> grid_indices(const PoseGridSpec& spec, std::size_t index);

}  // namespace softply::geometry
