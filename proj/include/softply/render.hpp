#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "softply/geometry.hpp"
#include "softply/plysim.hpp"

namespace softply::render {

using geometry::RigidTransform;
using geometry::Vec3;

// Pinhole camera; camera frame is z forward, x right, y down. `pose` places
// the camera in the robot gripper frame.
struct CameraModel {
    double fx = 140.0;
    double fy = 140.0;
    double cx = 80.0;
    double cy = 60.0;
    int width = 160;
    int height = 120;
    RigidTransform pose;
    double z_near = 0.2;
    double z_far = 2.5;

    void validate() const;
};

// Builds a camera pose at `eye` looking at `target`; image rows run along
// the projection of `down` onto the image plane.
RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& down);

struct DepthImage {
    int width = 0;
    int height = 0;
    std::vector<float> values;  // row-major meters, 0 = no return

    DepthImage() = default;
    DepthImage(int w, int h, float fill = 0.0f)
        : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

    float& at(int u, int v) { return values[static_cast<std::size_t>(v) * width + u]; }
    float at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }

    friend bool operator==(const DepthImage&, const DepthImage&) = default;
};

struct NoiseModel {
    double sigma_per_meter = 0.002;
    double dropout_prob = 0.005;
    std::uint64_t seed = 0;
};

struct PixelPoint {
    double u = 0.0;
    double v = 0.0;

    friend bool operator==(const PixelPoint&, const PixelPoint&) = default;
};

struct Projection {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
};

struct Triangle {
    Vec3 a, b, c;  // camera frame
};

class RenderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Point given in the camera frame.
Projection project(const CameraModel& cam, const Vec3& point);

// World point to camera frame for a camera riding on `robot_pose`.
Vec3 world_to_camera(const CameraModel& cam, const RigidTransform& robot_pose, const Vec3& p);

// Two triangles per grid cell, diagonal from (i, j) to (i+1, j+1), in the
// camera frame of `cam` mounted on the mesh's robot pose.
std::vector<Triangle> mesh_triangles(const CameraModel& cam, const plysim::PlyMesh& mesh);

// Z-buffered rasterization with perspective-correct depth. Pixel (u, v)
// samples the continuous point (u + 0.5, v + 0.5). Triangles with a vertex
// at or behind the camera plane are skipped.
DepthImage rasterize_triangles(const CameraModel& cam, const std::vector<Triangle>& tris);

DepthImage rasterize(const CameraModel& cam, const plysim::PlyMesh& mesh);

// Per-pixel noise from counter-based streams keyed by (seed, pixel index).
DepthImage apply_noise(const DepthImage& img, const NoiseModel& noise, double z_near, double z_far);

// Pixel positions of the left and right human-clip endpoint nodes.
std::array<PixelPoint, 2> project_anchors(const CameraModel& cam, const plysim::PlyMesh& mesh);

// 16-bit binary PGM in millimeters.
void write_pgm(const DepthImage& img, const std::string& path);

}  // namespace softply::render
