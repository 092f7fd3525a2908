#pragma once

#include <cmath>

#include "hicp/errors.hpp"
#include "hicp/se3.hpp"

namespace hicp {

/// Pinhole intrinsics. Pixel (u, v) has its centre at image coordinates (u, v).
struct CameraIntrinsics {
    double fx = 525.0;
    double fy = 525.0;
    double cx = 319.5;
    double cy = 239.5;
    int width = 640;
    int height = 480;

    static CameraIntrinsics default_camera() { return {}; }

    void validate() const {
        if (!(fx > 0.0) || !(fy > 0.0) || width <= 0 || height <= 0)
            throw ConfigError("camera intrinsics must have positive focal lengths and image size");
    }

    /// Unit-depth ray through pixel centre (u, v).
    Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }

    Vec3 backproject(double u, double v, double depth) const { return depth * ray(u, v); }

    /// Continuous image coordinates of a camera-frame point (z must be > 0).
    Eigen::Vector2d project(const Vec3& p) const { return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy}; }

    /// Nearest pixel of a camera-frame point; false when behind the camera or off-image.
    bool project_to_pixel(const Vec3& p, int& u, int& v) const {
        if (!(p.z() > 0.0)) return false;
        const Eigen::Vector2d uv = project(p);
        const double ur = std::round(uv.x());
        const double vr = std::round(uv.y());
        if (ur < 0.0 || vr < 0.0 || ur >= width || vr >= height) return false;
        u = static_cast<int>(ur);
        v = static_cast<int>(vr);
        return true;
    }

    friend bool operator==(const CameraIntrinsics&, const CameraIntrinsics&) = default;
};

}  // namespace hicp
