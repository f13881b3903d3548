#include "softply/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace softply::geometry {

bool DeformationState::is_finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) && std::isfinite(theta) &&
           std::isfinite(gamma);
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
    RigidTransform out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
}

bool RigidTransform::is_valid(double tol) const {
    const Mat3 gram = rotation.transpose() * rotation;
    return (gram - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
}

Mat3 rot_x(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << 1, 0, 0, 0, c, -s, 0, s, c;
    return r;
}

Mat3 rot_y(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << c, 0, s, 0, 1, 0, -s, 0, c;
    return r;
}

Mat3 rot_z(double a) {
    const double c = std::cos(a), s = std::sin(a);
    Mat3 r;
    r << c, -s, 0, s, c, 0, 0, 0, 1;
    return r;
}

RigidTransform to_transform(const DeformationState& s) {
    RigidTransform t;
    t.rotation = rot_y(s.theta) * rot_z(s.gamma);
    t.translation = Vec3(s.x, s.y, s.z);
    return t;
}

// R = Rx(a) Ry(b) Rz(c):
//   R(0,2) = sin b, R(0,0) = cos b cos c, R(0,1) = -cos b sin c,
//   R(1,2) = -sin a cos b, R(2,2) = cos a cos b.
DeformationState project_transform(const RigidTransform& t, double* x_residual) {
    const Mat3& r = t.rotation;
    const double sb = std::clamp(r(0, 2), -1.0, 1.0);
    DeformationState s;
    s.x = t.translation.x();
    s.y = t.translation.y();
    s.z = t.translation.z();
    s.theta = std::asin(sb);
    s.gamma = std::atan2(-r(0, 1), r(0, 0));
    if (x_residual != nullptr) *x_residual = std::atan2(-r(1, 2), r(2, 2));
    return s;
}

DeformationState from_transform(const RigidTransform& t, double x_tol) {
    double alpha = 0.0;
    const DeformationState s = project_transform(t, &alpha);
    if (!(std::abs(alpha) <= x_tol)) {
        throw GeometryError("non-recoverable rotation: x-Euler component " + std::to_string(alpha) +
                            " rad exceeds " + std::to_string(x_tol));
    }
    return s;
}

DeltaState delta(const DeformationState& current, const DeformationState& desired) {
    const auto a = current.as_array();
    const auto b = desired.as_array();
    DeltaState d{};
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

std::vector<double> AxisGrid::values() const {
    if (!(half_range >= 0.0) || !(step > 0.0)) {
        throw GeometryError("axis grid needs half_range >= 0 and step > 0");
    }
    if (half_range == 0.0) return {center};
    if (step > 2.0 * half_range * (1.0 + 1e-9)) {
        throw GeometryError("axis grid step exceeds the full range");
    }
    // Relative slack absorbs the binary representation of decimal steps
    // (0.21 / 0.03 evaluates just below 7).
    const double span = 2.0 * half_range / step;
    const auto intervals = static_cast<std::size_t>(std::floor(span + 1e-9));
    std::vector<double> out;
    out.reserve(intervals + 1);
    const double lo = center - half_range;
    for (std::size_t i = 0; i <= intervals; ++i) out.push_back(lo + static_cast<double>(i) * step);
    return out;
}

std::size_t PoseGridSpec::pose_count() const {
    std::size_t n = 1;
    for (const AxisGrid* a : axes()) n *= a->values().size();
    return n;
}

std::vector<DeformationState> enumerate_grid(const PoseGridSpec& spec) {
    const auto vx = spec.x.values(), vy = spec.y.values(), vz = spec.z.values();
    const auto vt = spec.theta.values(), vg = spec.gamma.values();
    std::vector<DeformationState> poses;
    poses.reserve(vx.size() * vy.size() * vz.size() * vt.size() * vg.size());
    for (double x : vx)
        for (double y : vy)
            for (double z : vz)
                for (double t : vt)
                    for (double g : vg) poses.push_back({x, y, z, t, g});
    return poses;
}

std::array<std::size_t, 5> grid_indices(const PoseGridSpec& spec, std::size_t index) {
    std::array<std::size_t, 5> counts{};
    const auto axes = spec.axes();
    for (std::size_t i = 0; i < 5; ++i) counts[i] = axes[i]->values().size();
    std::array<std::size_t, 5> idx{};
    for (std::size_t i = 5; i-- > 0;) {
        idx[i] = index % counts[i];
        index /= counts[i];
    }
    return idx;
}

}  // namespace softply::geometry
