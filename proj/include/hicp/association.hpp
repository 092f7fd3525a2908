#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "hicp/camera.hpp"
#include "hicp/errors.hpp"
#include "hicp/mesh.hpp"
#include "hicp/render.hpp"
#include "hicp/se3.hpp"
#include "hicp/spatial_index.hpp"

namespace hicp {

enum class Association { nn, projective };

inline const char* to_string(Association a) { return a == Association::nn ? "nn" : "projective"; }

/// Correspondence rejection gates.
struct AssociationConfig {
    double tau_max = 0.025;                  // metres
    double theta_max = deg2rad(60.0);        // radians
    /// NN only, opt-in: skip model points whose transformed normal faces away
    /// from the camera. Off by default so NN matches its textbook form; hidden
    /// samples then pull a single-view model toward the visible surface.
    bool cull_back_faces = false;

    /// tau_max = 0.25 * diameter, theta_max = 60 degrees, no culling.
    static AssociationConfig for_diameter(double diameter) { return {0.25 * diameter, deg2rad(60.0), false}; }

    void validate() const {
        if (!(tau_max > 0.0)) throw ConfigError("tau_max must be positive");
        if (!(theta_max > 0.0) || theta_max > std::numbers::pi) throw ConfigError("theta_max must lie in (0, pi]");
    }
};

/// Model point/normal (object frame) paired with a scene point/normal (camera frame).
struct Correspondence {
    Vec3 o, m, c, n;
};

struct CorrespondenceSet {
    std::vector<Correspondence> pairs;
    std::size_t candidates_considered = 0;

    std::size_t size() const noexcept { return pairs.size(); }
    bool empty() const noexcept { return pairs.empty(); }
};

/// Image-organised model surface expressed in the object frame, produced by
/// rendering the model at some pose (see make_projective_model).
struct ProjectiveModel {
    VertexMap vertices;
    NormalMap normals;
};

namespace detail {

struct Gate {
    double tau2;
    double cos_theta;

    explicit Gate(const AssociationConfig& cfg)
        : tau2(cfg.tau_max * cfg.tau_max), cos_theta(cfg.theta_max >= std::numbers::pi ? -2.0 : std::cos(cfg.theta_max)) {}

    bool accept(const Vec3& p, const Vec3& rm, const Vec3& c, const Vec3& n) const {
        return (p - c).squaredNorm() <= tau2 && rm.dot(n) >= cos_theta;
    }
};

}  // namespace detail

/// Exact nearest-neighbour association of every model point, transformed by
/// `t_current`, against the indexed scene cloud. Back-facing model points are
/// not candidates when `cfg.cull_back_faces` is set.
inline CorrespondenceSet nn_associate(const OrientedPointCloud& model, const SpatialIndex& scene, const Pose& t_current,
                                      const AssociationConfig& cfg) {
    CorrespondenceSet cs;
    if (scene.empty()) return cs;
    if (!scene.has_normals()) throw ConfigError("nn_associate needs an index built over an oriented cloud");
    const detail::Gate gate(cfg);
    cs.pairs.reserve(model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const Vec3 p = t_current * model.points[i];
        const Vec3 rm = t_current.rotation * model.normals[i];
        if (cfg.cull_back_faces && rm.dot(p) >= 0.0) continue;
        const Neighbor nb = scene.nearest(p);
        ++cs.candidates_considered;
        const Vec3& c = scene.points()[nb.index];
        const Vec3& n = scene.normals()[nb.index];
        if (gate.accept(p, rm, c, n)) cs.pairs.push_back({model.points[i], model.normals[i], c, n});
    }
    return cs;
}

/// Projective association: each valid model vertex, transformed by `t_current`,
/// is paired with the scene vertex stored at the pixel it projects to (nearest
/// pixel). Vertices landing off-image or on invalid pixels yield nothing.
inline CorrespondenceSet projective_associate(const ProjectiveModel& model, const VertexMap& scene_vertices,
                                              const NormalMap& scene_normals, const Pose& t_current,
                                              const CameraIntrinsics& cam, const AssociationConfig& cfg) {
    CorrespondenceSet cs;
    const detail::Gate gate(cfg);
    const VertexMap& mv = model.vertices;
    const NormalMap& mn = model.normals;
    for (int y = 0; y < mv.height(); ++y)
        for (int x = 0; x < mv.width(); ++x) {
            if (!mv.valid(x, y) || !mn.valid(x, y)) continue;
            ++cs.candidates_considered;
            const Vec3& o = mv.points(x, y);
            const Vec3 p = t_current * o;
            int u = 0, v = 0;
            if (!cam.project_to_pixel(p, u, v)) continue;
            if (!scene_vertices.valid.contains(u, v) || !scene_vertices.valid(u, v) || !scene_normals.valid(u, v)) continue;
            const Vec3& c = scene_vertices.points(u, v);
            const Vec3& n = scene_normals.normals(u, v);
            const Vec3& m = mn.normals(x, y);
            if (gate.accept(p, t_current.rotation * m, c, n)) cs.pairs.push_back({o, m, c, n});
        }
    return cs;
}

}  // namespace hicp
