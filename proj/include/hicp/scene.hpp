#pragma once

#include <cstddef>
#include <utility>

#include "hicp/association.hpp"
#include "hicp/camera.hpp"
#include "hicp/mesh.hpp"
#include "hicp/render.hpp"
#include "hicp/spatial_index.hpp"

namespace hicp {

/// Object model: mesh for rendering, uniform surface samples for NN association.
struct ObjectModel {
    TriangleMesh mesh;
    OrientedPointCloud samples;
    double diameter = 0.0;
};

inline constexpr std::size_t kDefaultModelSamples = 2000;

template <typename Rng>
ObjectModel make_object_model(TriangleMesh mesh, Rng& rng, std::size_t samples = kDefaultModelSamples) {
    mesh.validate();
    ObjectModel m;
    m.samples = sample_mesh_points(mesh, samples, rng);
    m.diameter = mesh_diameter(mesh);
    m.mesh = std::move(mesh);
    return m;
}

/// Segmented depth observation with everything association needs.
struct Scene {
    CameraIntrinsics cam;
    DepthImage depth;
    SegmentationMask mask;   // segmentation restricted to valid depth
    VertexMap vertices;
    NormalMap normals;
    OrientedPointCloud cloud;  // valid vertices with valid normals
    SpatialIndex index;        // over `cloud`
};

inline Scene make_scene(DepthImage depth, SegmentationMask mask, const CameraIntrinsics& cam) {
    cam.validate();
    if (depth.width() != cam.width || depth.height() != cam.height || !depth.same_shape(mask))
        throw ConfigError("scene image dimensions do not match the camera");
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (!(depth[i] > 0.0)) mask[i] = 0;
    Scene s;
    s.cam = cam;
    s.vertices = backproject(depth, cam, mask);
    s.normals = compute_normals(s.vertices);
    s.cloud = flatten(s.vertices, s.normals);
    s.index = SpatialIndex(s.cloud);
    s.depth = std::move(depth);
    s.mask = std::move(mask);
    return s;
}

/// Renders `mesh` at `pose` and expresses the resulting vertex and normal maps
/// in the object frame. Throws EmptyRender when nothing is visible.
inline ProjectiveModel make_projective_model(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& cam) {
    const RenderResult r = render_depth(mesh, pose, cam);
    ProjectiveModel pm;
    pm.vertices = backproject(r.depth, cam, r.mask);
    pm.normals = compute_normals(pm.vertices);
    const Pose inv = pose.inverse();
    for (std::size_t i = 0; i < pm.vertices.points.size(); ++i) {
        if (pm.vertices.valid[i]) pm.vertices.points[i] = inv * pm.vertices.points[i];
        if (pm.normals.valid[i]) pm.normals.normals[i] = inv.rotation * pm.normals.normals[i];
    }
    return pm;
}

/// Association callables for run_icp.
struct NnAssociator {
    const OrientedPointCloud* model;
    const SpatialIndex* index;
    AssociationConfig gates;

    CorrespondenceSet operator()(const Pose& t) const { return nn_associate(*model, *index, t, gates); }
};

struct ProjectiveAssociator {
    const ProjectiveModel* model;  // null when the model could not be rendered
    const Scene* scene;
    AssociationConfig gates;

    CorrespondenceSet operator()(const Pose& t) const {
        if (!model) return {};
        return projective_associate(*model, scene->vertices, scene->normals, t, scene->cam, gates);
    }
};

}  // namespace hicp
