#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "hicp/camera.hpp"
#include "hicp/errors.hpp"
#include "hicp/image.hpp"
#include "hicp/mesh.hpp"
#include "hicp/se3.hpp"

namespace hicp {

/// Depth along the optical axis in metres; 0 marks an invalid pixel.
using DepthImage = Image<double>;
using SegmentationMask = Mask;

/// Image-organised points with validity flags.
struct VertexMap {
    Image<Vec3> points;
    Mask valid;

    int width() const noexcept { return points.width(); }
    int height() const noexcept { return points.height(); }
};

/// Image-organised unit normals with validity flags.
struct NormalMap {
    Image<Vec3> normals;
    Mask valid;
};

struct RenderResult {
    DepthImage depth;
    SegmentationMask mask;
};

/// Triangles with a vertex closer than this to the camera plane are skipped.
inline constexpr double kNearPlane = 1e-3;

namespace detail {

struct ScreenVertex {
    double x, y;    // image coordinates
    double inv_z;   // 1 / depth
};

inline bool lex_less(const ScreenVertex& a, const ScreenVertex& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
}

// Edge function (b - a) x (p - a), evaluated with the endpoints in a canonical
// order so that triangles sharing an edge see exactly negated values.
inline double edge(const ScreenVertex& a, const ScreenVertex& b, double px, double py) {
    if (lex_less(b, a)) return -edge(b, a, px, py);
    return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

// Boundary ownership for an edge traversed a -> b in a positively oriented triangle.
inline bool owns_boundary(const ScreenVertex& a, const ScreenVertex& b) {
    const double dx = b.x - a.x;
    const double dy = b.y - a.y;
    return dy > 0.0 || (dy == 0.0 && dx < 0.0);
}

inline bool inside(double w, bool owner) { return w > 0.0 || (w == 0.0 && owner); }

}  // namespace detail

/// Z-buffered rasterisation of every triangle of `mesh` placed at `pose`.
///
/// Coverage uses half-plane tests at pixel centres with a top-left style
/// ownership rule; depth is interpolated perspective-correctly (1/z is affine
/// in screen space), so every covered pixel's depth is the exact ray/plane
/// intersection of the nearest triangle.
inline RenderResult render_depth(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& cam) {
    RenderResult out{DepthImage(cam.width, cam.height, 0.0), SegmentationMask(cam.width, cam.height, 0)};
    std::vector<detail::ScreenVertex> sv(mesh.vertices.size());
    std::vector<std::uint8_t> usable(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3 p = pose * mesh.vertices[i];
        usable[i] = p.z() > kNearPlane;
        if (usable[i]) sv[i] = {cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy, 1.0 / p.z()};
    }

    bool any = false;
    for (const auto& t : mesh.triangles) {
        if (!usable[t[0]] || !usable[t[1]] || !usable[t[2]]) continue;
        const detail::ScreenVertex* a = &sv[t[0]];
        const detail::ScreenVertex* b = &sv[t[1]];
        const detail::ScreenVertex* c = &sv[t[2]];
        double area = detail::edge(*a, *b, c->x, c->y);
        if (area == 0.0 || !std::isfinite(area)) continue;
        if (area < 0.0) {
            std::swap(b, c);
            area = -area;
        }
        const double min_x = std::min({a->x, b->x, c->x});
        const double max_x = std::max({a->x, b->x, c->x});
        const double min_y = std::min({a->y, b->y, c->y});
        const double max_y = std::max({a->y, b->y, c->y});
        const int u0 = std::max(0, static_cast<int>(std::ceil(std::max(min_x, -1.0))));
        const int u1 = std::min(cam.width - 1, static_cast<int>(std::floor(std::min(max_x, double(cam.width)))));
        const int v0 = std::max(0, static_cast<int>(std::ceil(std::max(min_y, -1.0))));
        const int v1 = std::min(cam.height - 1, static_cast<int>(std::floor(std::min(max_y, double(cam.height)))));
        if (u0 > u1 || v0 > v1) continue;

        const bool own_bc = detail::owns_boundary(*b, *c);
        const bool own_ca = detail::owns_boundary(*c, *a);
        const bool own_ab = detail::owns_boundary(*a, *b);
        const double inv_area = 1.0 / area;
        for (int v = v0; v <= v1; ++v) {
            for (int u = u0; u <= u1; ++u) {
                const double w0 = detail::edge(*b, *c, u, v);
                if (!detail::inside(w0, own_bc)) continue;
                const double w1 = detail::edge(*c, *a, u, v);
                if (!detail::inside(w1, own_ca)) continue;
                const double w2 = detail::edge(*a, *b, u, v);
                if (!detail::inside(w2, own_ab)) continue;
                const double inv_z = (w0 * a->inv_z + w1 * b->inv_z + w2 * c->inv_z) * inv_area;
                if (!(inv_z > 0.0)) continue;
                const double z = 1.0 / inv_z;
                double& d = out.depth(u, v);
                if (d == 0.0 || z < d) {
                    d = z;
                    out.mask(u, v) = 1;
                    any = true;
                }
            }
        }
    }
    if (!any) throw EmptyRender();
    return out;
}

/// Masked, valid pixels lifted to camera-frame points: depth * ((u-cx)/fx, (v-cy)/fy, 1).
inline VertexMap backproject(const DepthImage& depth, const CameraIntrinsics& cam, const SegmentationMask& mask) {
    if (!depth.same_shape(mask)) throw ConfigError("depth image and mask dimensions differ");
    VertexMap vm{Image<Vec3>(depth.width(), depth.height(), Vec3::Zero()), Mask(depth.width(), depth.height(), 0)};
    for (int v = 0; v < depth.height(); ++v)
        for (int u = 0; u < depth.width(); ++u) {
            const double z = depth(u, v);
            if (mask(u, v) && z > 0.0 && std::isfinite(z)) {
                vm.points(u, v) = cam.backproject(u, v, z);
                vm.valid(u, v) = 1;
            }
        }
    return vm;
}

/// Normals from the cross product of horizontal and vertical differences of
/// neighbouring valid vertices (central where both neighbours exist, one-sided
/// otherwise), oriented towards the camera (n . p <= 0). Pixels missing a valid
/// neighbour in either direction are invalid.
inline NormalMap compute_normals(const VertexMap& vm) {
    const int w = vm.width();
    const int h = vm.height();
    NormalMap nm{Image<Vec3>(w, h, Vec3::Zero()), Mask(w, h, 0)};
    auto ok = [&](int u, int v) { return vm.valid.contains(u, v) && vm.valid(u, v); };
    auto diff = [&](int u, int v, int du, int dv, Vec3& d) {
        const bool fwd = ok(u + du, v + dv);
        const bool bwd = ok(u - du, v - dv);
        if (fwd && bwd)
            d = vm.points(u + du, v + dv) - vm.points(u - du, v - dv);
        else if (fwd)
            d = vm.points(u + du, v + dv) - vm.points(u, v);
        else if (bwd)
            d = vm.points(u, v) - vm.points(u - du, v - dv);
        else
            return false;
        return true;
    };
    for (int v = 0; v < h; ++v)
        for (int u = 0; u < w; ++u) {
            if (!ok(u, v)) continue;
            Vec3 dx, dy;
            if (!diff(u, v, 1, 0, dx) || !diff(u, v, 0, 1, dy)) continue;
            Vec3 n = dx.cross(dy);
            const double len = n.norm();
            if (!(len > 1e-20)) continue;
            n /= len;
            if (n.dot(vm.points(u, v)) > 0.0) n = -n;
            nm.normals(u, v) = n;
            nm.valid(u, v) = 1;
        }
    return nm;
}

/// Pixels that carry both a valid vertex and a valid normal, flattened in row-major order.
inline OrientedPointCloud flatten(const VertexMap& vm, const NormalMap& nm) {
    OrientedPointCloud cloud;
    for (int v = 0; v < vm.height(); ++v)
        for (int u = 0; u < vm.width(); ++u)
            if (vm.valid(u, v) && nm.valid(u, v)) {
                cloud.points.push_back(vm.points(u, v));
                cloud.normals.push_back(nm.normals(u, v));
            }
    return cloud;
}

inline std::size_t count_valid(const Mask& m) {
    return static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](std::uint8_t x) { return x != 0; }));
}

}  // namespace hicp
