#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "hicp/errors.hpp"
#include "hicp/se3.hpp"

namespace hicp {

/// Triangle mesh in the object frame. Triangles wind counter-clockwise when
/// seen from outside, so (b - a) x (c - a) points outwards.
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec3> vertex_normals;

    void validate() const {
        if (triangles.empty()) throw MeshFormatError("mesh has no triangles");
        const int n = static_cast<int>(vertices.size());
        for (const auto& t : triangles)
            for (int i : t)
                if (i < 0 || i >= n) throw MeshFormatError("triangle index out of range");
        if (vertex_normals.size() != vertices.size()) throw MeshFormatError("vertex normal count mismatch");
    }
};

/// Oriented samples; normals are unit length.
struct OrientedPointCloud {
    std::vector<Vec3> points;
    std::vector<Vec3> normals;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
};

inline Vec3 face_normal_area(const TriangleMesh& m, const std::array<int, 3>& t) {
    const Vec3& a = m.vertices[t[0]];
    const Vec3& b = m.vertices[t[1]];
    const Vec3& c = m.vertices[t[2]];
    return 0.5 * (b - a).cross(c - a);
}

inline double triangle_area(const TriangleMesh& m, const std::array<int, 3>& t) {
    return face_normal_area(m, t).norm();
}

/// Area-weighted average of incident face normals. Isolated vertices get +z.
inline void compute_vertex_normals(TriangleMesh& mesh) {
    std::vector<Vec3> acc(mesh.vertices.size(), Vec3::Zero());
    for (const auto& t : mesh.triangles) {
        const Vec3 n = face_normal_area(mesh, t);
        for (int i : t) acc[i] += n;
    }
    mesh.vertex_normals.resize(mesh.vertices.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
        const double len = acc[i].norm();
        mesh.vertex_normals[i] = len > 0.0 ? Vec3(acc[i] / len) : Vec3::UnitZ();
    }
}

inline TriangleMesh transform_mesh(const TriangleMesh& mesh, const Pose& pose) {
    TriangleMesh out = mesh;
    for (auto& v : out.vertices) v = pose * v;
    for (auto& n : out.vertex_normals) n = pose.rotation * n;
    return out;
}

/// Largest distance between any two vertices (exact, quadratic in vertex count).
inline double mesh_diameter(const TriangleMesh& mesh) {
    std::vector<Vec3> pts = mesh.vertices;
    std::sort(pts.begin(), pts.end(), [](const Vec3& a, const Vec3& b) {
        return std::lexicographical_compare(a.data(), a.data() + 3, b.data(), b.data() + 3);
    });
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    double best = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = i + 1; j < pts.size(); ++j) best = std::max(best, (pts[i] - pts[j]).squaredNorm());
    return std::sqrt(best);
}

// ---------------------------------------------------------------------------
// Built-in primitives

namespace detail {

// Appends an (nu x nv) grid spanning origin + s*eu + t*ev, s,t in [0,1], with flat normals.
inline void add_grid(TriangleMesh& m, const Vec3& origin, const Vec3& eu, const Vec3& ev, int nu, int nv) {
    const int base = static_cast<int>(m.vertices.size());
    const Vec3 n = eu.cross(ev).normalized();
    for (int j = 0; j <= nv; ++j)
        for (int i = 0; i <= nu; ++i) {
            m.vertices.push_back(origin + (double(i) / nu) * eu + (double(j) / nv) * ev);
            m.vertex_normals.push_back(n);
        }
    const int stride = nu + 1;
    for (int j = 0; j < nv; ++j)
        for (int i = 0; i < nu; ++i) {
            const int a = base + j * stride + i;
            m.triangles.push_back({a, a + 1, a + stride + 1});
            m.triangles.push_back({a, a + stride + 1, a + stride});
        }
}

}  // namespace detail

/// UV sphere centred at the origin with analytic normals.
inline TriangleMesh make_sphere(double radius, int stacks = 32, int slices = 64) {
    TriangleMesh m;
    for (int i = 0; i <= stacks; ++i) {
        const double theta = std::numbers::pi * i / stacks;
        for (int j = 0; j <= slices; ++j) {
            const double phi = 2.0 * std::numbers::pi * j / slices;
            const Vec3 n(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta));
            m.vertices.push_back(radius * n);
            m.vertex_normals.push_back(n);
        }
    }
    const int stride = slices + 1;
    for (int i = 0; i < stacks; ++i)
        for (int j = 0; j < slices; ++j) {
            const int a = i * stride + j;
            const int b = a + stride;
            if (i != 0) m.triangles.push_back({a, b, a + 1});
            if (i != stacks - 1) m.triangles.push_back({a + 1, b, b + 1});
        }
    return m;
}

/// Axis-aligned box centred at the origin; faces carry their own vertices.
inline TriangleMesh make_box(double sx, double sy, double sz, int subdivisions = 8) {
    TriangleMesh m;
    const Vec3 h(sx / 2, sy / 2, sz / 2);
    const int n = subdivisions;
    detail::add_grid(m, {-h.x(), -h.y(), h.z()}, {sx, 0, 0}, {0, sy, 0}, n, n);    // +z
    detail::add_grid(m, {-h.x(), h.y(), -h.z()}, {sx, 0, 0}, {0, -sy, 0}, n, n);   // -z
    detail::add_grid(m, {h.x(), -h.y(), -h.z()}, {0, sy, 0}, {0, 0, sz}, n, n);    // +x
    detail::add_grid(m, {-h.x(), h.y(), -h.z()}, {0, -sy, 0}, {0, 0, sz}, n, n);   // -x
    detail::add_grid(m, {h.x(), h.y(), -h.z()}, {-sx, 0, 0}, {0, 0, sz}, n, n);    // +y
    detail::add_grid(m, {-h.x(), -h.y(), -h.z()}, {sx, 0, 0}, {0, 0, sz}, n, n);   // -y
    return m;
}

/// Cylinder along z centred at the origin, with flat caps.
inline TriangleMesh make_cylinder(double radius, double height, int slices = 64, int rings = 8) {
    TriangleMesh m;
    const double hz = height / 2;
    for (int r = 0; r <= rings; ++r) {
        const double z = -hz + height * r / rings;
        for (int j = 0; j <= slices; ++j) {
            const double phi = 2.0 * std::numbers::pi * j / slices;
            const Vec3 n(std::cos(phi), std::sin(phi), 0.0);
            m.vertices.push_back(Vec3(radius * n.x(), radius * n.y(), z));
            m.vertex_normals.push_back(n);
        }
    }
    const int stride = slices + 1;
    for (int r = 0; r < rings; ++r)
        for (int j = 0; j < slices; ++j) {
            const int a = r * stride + j;
            m.triangles.push_back({a, a + 1, a + stride + 1});
            m.triangles.push_back({a, a + stride + 1, a + stride});
        }
    for (int side = 0; side < 2; ++side) {
        const double z = side == 0 ? hz : -hz;
        const Vec3 n(0, 0, side == 0 ? 1.0 : -1.0);
        const int centre = static_cast<int>(m.vertices.size());
        m.vertices.push_back(Vec3(0, 0, z));
        m.vertex_normals.push_back(n);
        for (int j = 0; j <= slices; ++j) {
            const double phi = 2.0 * std::numbers::pi * j / slices;
            m.vertices.push_back(Vec3(radius * std::cos(phi), radius * std::sin(phi), z));
            m.vertex_normals.push_back(n);
        }
        for (int j = 0; j < slices; ++j) {
            const int a = centre + 1 + j;
            if (side == 0)
                m.triangles.push_back({centre, a, a + 1});
            else
                m.triangles.push_back({centre, a + 1, a});
        }
    }
    return m;
}

/// Thin rectangular plate (a flat box).
inline TriangleMesh make_plate(double sx, double sy, double thickness) { return make_box(sx, sy, thickness, 12); }

/// Single-sided spherical cap of the given curvature radius, facing +z and
/// centred on the z axis with its apex at the origin.
inline TriangleMesh make_spherical_cap(double curvature_radius, double half_angle, int rings = 24, int slices = 64) {
    TriangleMesh m;
    const Vec3 centre(0, 0, -curvature_radius);
    m.vertices.push_back(Vec3::Zero());
    m.vertex_normals.push_back(Vec3::UnitZ());
    for (int r = 1; r <= rings; ++r) {
        const double a = half_angle * r / rings;
        for (int j = 0; j < slices; ++j) {
            const double phi = 2.0 * std::numbers::pi * j / slices;
            const Vec3 n(std::sin(a) * std::cos(phi), std::sin(a) * std::sin(phi), std::cos(a));
            m.vertices.push_back(centre + curvature_radius * n);
            m.vertex_normals.push_back(n);
        }
    }
    for (int j = 0; j < slices; ++j) m.triangles.push_back({0, 1 + j, 1 + (j + 1) % slices});
    for (int r = 1; r < rings; ++r)
        for (int j = 0; j < slices; ++j) {
            const int a = 1 + (r - 1) * slices + j;
            const int b = 1 + (r - 1) * slices + (j + 1) % slices;
            const int c = a + slices;
            const int d = b + slices;
            m.triangles.push_back({a, c, d});
            m.triangles.push_back({a, d, b});
        }
    return m;
}

/// Square of side `size` in the z = 0 plane facing -z (towards a camera at the origin
/// looking down +z once translated forward).
inline TriangleMesh make_quad(double size) {
    TriangleMesh m;
    const double h = size / 2;
    detail::add_grid(m, {-h, -h, 0}, {0, size, 0}, {size, 0, 0}, 1, 1);
    return m;
}

/// Builtin objects addressable by name from experiment configs.
inline TriangleMesh make_builtin(const std::string& name) {
    if (name == "sphere") return make_sphere(0.05);
    if (name == "box") return make_box(0.12, 0.08, 0.05);
    if (name == "cylinder") return make_cylinder(0.04, 0.12);
    if (name == "plate") return make_plate(0.15, 0.10, 0.005);
    throw ConfigError("unknown builtin mesh '" + name + "'");
}

inline bool is_builtin(const std::string& name) {
    return name == "sphere" || name == "box" || name == "cylinder" || name == "plate";
}

// ---------------------------------------------------------------------------
// Sampling and corruption

/// Area-weighted uniform surface samples with interpolated normals.
template <typename Rng>
OrientedPointCloud sample_mesh_points(const TriangleMesh& mesh, std::size_t n, Rng& rng) {
    std::vector<double> cdf;
    cdf.reserve(mesh.triangles.size());
    double total = 0.0;
    for (const auto& t : mesh.triangles) {
        total += triangle_area(mesh, t);
        cdf.push_back(total);
    }
    if (!(total > 0.0)) throw MeshFormatError("mesh has zero surface area");

    std::uniform_real_distribution<double> uni(0.0, 1.0);
    OrientedPointCloud out;
    out.points.reserve(n);
    out.normals.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double pick = uni(rng) * total;
        auto it = std::upper_bound(cdf.begin(), cdf.end(), pick);
        if (it == cdf.end()) --it;
        const auto& t = mesh.triangles[static_cast<std::size_t>(it - cdf.begin())];
        const double r1 = std::sqrt(uni(rng));
        const double r2 = uni(rng);
        const double wa = 1.0 - r1;
        const double wb = r1 * (1.0 - r2);
        const double wc = r1 * r2;
        out.points.push_back(wa * mesh.vertices[t[0]] + wb * mesh.vertices[t[1]] + wc * mesh.vertices[t[2]]);
        Vec3 nrm = wa * mesh.vertex_normals[t[0]] + wb * mesh.vertex_normals[t[1]] + wc * mesh.vertex_normals[t[2]];
        const double len = nrm.norm();
        if (len > 1e-12)
            nrm /= len;
        else
            nrm = face_normal_area(mesh, t).normalized();
        out.normals.push_back(nrm);
    }
    return out;
}

/// Synthetic reconstruction error: every vertex moves along its normal by
/// level * 0.5 mm of bias plus Gaussian jitter with the same standard deviation.
/// Level 0 returns the mesh unchanged.
template <typename Rng>
TriangleMesh corrupt_mesh(const TriangleMesh& mesh, int level, Rng& rng) {
    if (level < 0 || level > 4) throw ConfigError("model noise level must be in 0..4");
    if (level == 0) return mesh;
    const double sigma = level * 0.0005;
    std::normal_distribution<double> normal(0.0, sigma);
    TriangleMesh out = mesh;
    for (std::size_t i = 0; i < out.vertices.size(); ++i) out.vertices[i] += mesh.vertex_normals[i] * (sigma + normal(rng));
    compute_vertex_normals(out);
    return out;
}

}  // namespace hicp
