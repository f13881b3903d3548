#include "softply/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "softply/random.hpp"

namespace softply::render {

void CameraModel::validate() const {
    if (!(fx > 0 && fy > 0)) throw RenderError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw RenderError("camera resolution must be positive");
    if (!(z_near > 0 && z_near < z_far)) throw RenderError("camera needs 0 < z_near < z_far");
}

RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& down) {
    const Vec3 z = (target - eye).normalized();
    Vec3 y = down - down.dot(z) * z;
    if (y.norm() < 1e-12) throw RenderError("look_at: down vector parallel to viewing direction");
    y.normalize();
    const Vec3 x = y.cross(z);
    RigidTransform t;
    t.rotation.col(0) = x;
    t.rotation.col(1) = y;
    t.rotation.col(2) = z;
    t.translation = eye;
    return t;
}

Projection project(const CameraModel& cam, const Vec3& p) {
    if (!(p.z() > 0.0)) throw RenderError("point behind camera (z = " + std::to_string(p.z()) + ")");
    return {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy, p.z()};
}

Vec3 world_to_camera(const CameraModel& cam, const RigidTransform& robot_pose, const Vec3& p) {
    const RigidTransform cam_in_world = robot_pose * cam.pose;
    return cam_in_world.rotation.transpose() * (p - cam_in_world.translation);
}

std::vector<Triangle> mesh_triangles(const CameraModel& cam, const plysim::PlyMesh& mesh) {
    if (mesh.nu < 2 || mesh.nv < 2) throw RenderError("mesh_triangles needs a grid mesh");
    const RigidTransform world_to_cam = (mesh.robot_pose * cam.pose).inverse();
    std::vector<Vec3> pc(mesh.node_count());
    for (std::size_t n = 0; n < pc.size(); ++n) pc[n] = world_to_cam.apply(mesh.positions[n]);
    std::vector<Triangle> tris;
    tris.reserve(static_cast<std::size_t>(2 * (mesh.nu - 1) * (mesh.nv - 1)));
    for (int j = 0; j + 1 < mesh.nv; ++j) {
        for (int i = 0; i + 1 < mesh.nu; ++i) {
            const Vec3& a = pc[mesh.node(i, j)];
            const Vec3& b = pc[mesh.node(i + 1, j)];
            const Vec3& c = pc[mesh.node(i, j + 1)];
            const Vec3& d = pc[mesh.node(i + 1, j + 1)];
            tris.push_back({a, b, d});
            tris.push_back({a, d, c});
        }
    }
    return tris;
}

DepthImage rasterize_triangles(const CameraModel& cam, const std::vector<Triangle>& tris) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> zbuf(static_cast<std::size_t>(cam.width) * cam.height, kInf);

    for (const Triangle& t : tris) {
        constexpr double kMinZ = 1e-9;
        if (t.a.z() <= kMinZ || t.b.z() <= kMinZ || t.c.z() <= kMinZ) continue;
        const Projection p0 = project(cam, t.a), p1 = project(cam, t.b), p2 = project(cam, t.c);
        const double area = (p1.u - p0.u) * (p2.v - p0.v) - (p1.v - p0.v) * (p2.u - p0.u);
        if (std::abs(area) < 1e-12) continue;

        const double umin = std::min({p0.u, p1.u, p2.u}), umax = std::max({p0.u, p1.u, p2.u});
        const double vmin = std::min({p0.v, p1.v, p2.v}), vmax = std::max({p0.v, p1.v, p2.v});
        const int u_lo = std::max(0, static_cast<int>(std::floor(umin - 0.5)));
        const int u_hi = std::min(cam.width - 1, static_cast<int>(std::ceil(umax - 0.5)));
        const int v_lo = std::max(0, static_cast<int>(std::floor(vmin - 0.5)));
        const int v_hi = std::min(cam.height - 1, static_cast<int>(std::ceil(vmax - 0.5)));
        const double inv_area = 1.0 / area;

        for (int v = v_lo; v <= v_hi; ++v) {
            const double sv = v + 0.5;
            for (int u = u_lo; u <= u_hi; ++u) {
                const double su = u + 0.5;
                const double b0 = ((p1.u - su) * (p2.v - sv) - (p1.v - sv) * (p2.u - su)) * inv_area;
                const double b1 = ((p2.u - su) * (p0.v - sv) - (p2.v - sv) * (p0.u - su)) * inv_area;
                const double b2 = 1.0 - b0 - b1;
                if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) continue;
                // 1/z is affine in screen space.
                const double depth = 1.0 / (b0 / p0.depth + b1 / p1.depth + b2 / p2.depth);
                double& slot = zbuf[static_cast<std::size_t>(v) * cam.width + u];
                if (depth < slot) slot = depth;
            }
        }
    }

    DepthImage img(cam.width, cam.height);
    for (std::size_t i = 0; i < zbuf.size(); ++i) {
        const double z = zbuf[i];
        if (z >= cam.z_near && z <= cam.z_far) img.values[i] = static_cast<float>(z);
    }
    return img;
}

DepthImage rasterize(const CameraModel& cam, const plysim::PlyMesh& mesh) {
    return rasterize_triangles(cam, mesh_triangles(cam, mesh));
}

DepthImage apply_noise(const DepthImage& img, const NoiseModel& noise, double z_near, double z_far) {
    DepthImage out = img;
    const CounterStream stream(mix64(noise.seed));
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const float z = out.values[i];
        if (z == 0.0f) continue;
        // Three draws per pixel: dropout, then the Gaussian pair.
        const std::uint64_t base = 3 * static_cast<std::uint64_t>(i);
        if (noise.dropout_prob > 0.0 && stream.uniform(base) < noise.dropout_prob) {
            out.values[i] = 0.0f;
            continue;
        }
        if (noise.sigma_per_meter > 0.0) {
            const double noisy = z + noise.sigma_per_meter * z * stream.gaussian(base + 1);
            out.values[i] = static_cast<float>(std::clamp(noisy, z_near, z_far));
        }
    }
    return out;
}

std::array<PixelPoint, 2> project_anchors(const CameraModel& cam, const plysim::PlyMesh& mesh) {
    std::array<PixelPoint, 2> out;
    const std::size_t nodes[2] = {mesh.left_anchor(), mesh.right_anchor()};
    for (int k = 0; k < 2; ++k) {
        const Projection p = project(cam, world_to_camera(cam, mesh.robot_pose, mesh.positions[nodes[k]]));
        out[k] = {p.u, p.v};
    }
    return out;
}

void write_pgm(const DepthImage& img, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw RenderError("cannot open " + path);
    os << "P5\n" << img.width << ' ' << img.height << "\n65535\n";
    for (float z : img.values) {
        const long mm = std::clamp(std::lround(static_cast<double>(z) * 1000.0), 0L, 65535L);
        const unsigned char be[2] = {static_cast<unsigned char>(mm >> 8), static_cast<unsigned char>(mm & 0xff)};
        os.write(reinterpret_cast<const char*>(be), 2);
    }
}

}  // namespace softply::render
