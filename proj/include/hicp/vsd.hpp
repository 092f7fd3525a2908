#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "hicp/camera.hpp"
#include "hicp/errors.hpp"
#include "hicp/image.hpp"
#include "hicp/render.hpp"

namespace hicp {

/// Per-pixel Euclidean distance from the camera centre to the surface.
struct DistanceMap {
    Image<double> values;
    Mask valid;
};

/// Fractions of the object diameter used as misalignment tolerances.
struct VsdConfig {
    std::vector<double> tau_fractions{0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50};

    void validate() const {
        if (tau_fractions.empty()) throw ConfigError("VSD tolerance list is empty");
        for (double f : tau_fractions)
            if (!(f > 0.0) || f > 1.0) throw ConfigError("VSD tolerance fractions must lie in (0, 1]");
    }
};

inline DistanceMap distance_map_from_depth(const DepthImage& depth, const CameraIntrinsics& cam) {
    DistanceMap dm{Image<double>(depth.width(), depth.height(), 0.0), Mask(depth.width(), depth.height(), 0)};
    for (int v = 0; v < depth.height(); ++v)
        for (int u = 0; u < depth.width(); ++u) {
            const double z = depth(u, v);
            if (z > 0.0 && std::isfinite(z)) {
                dm.values(u, v) = z * cam.ray(u, v).norm();
                dm.valid(u, v) = 1;
            }
        }
    return dm;
}

/// VSD for several tolerances at once: the average over the union of both masks
/// of a cost that is 0 only where both masks hold and the distances differ by
/// strictly less than tau.
inline std::vector<double> vsd_errors(const DistanceMap& d_est, const DistanceMap& d_gt, const Mask& m_est,
                                      const Mask& m_gt, std::span<const double> taus) {
    if (!m_est.same_shape(m_gt) || !d_est.values.same_shape(m_est) || !d_gt.values.same_shape(m_gt))
        throw ConfigError("VSD inputs have mismatched dimensions");
    std::size_t union_count = 0;
    std::vector<std::size_t> matched(taus.size(), 0);
    for (std::size_t i = 0; i < m_est.size(); ++i) {
        const bool in_est = m_est[i] != 0;
        const bool in_gt = m_gt[i] != 0;
        if (!in_est && !in_gt) continue;
        ++union_count;
        if (!(in_est && in_gt && d_est.valid[i] && d_gt.valid[i])) continue;
        const double diff = std::abs(d_est.values[i] - d_gt.values[i]);
        for (std::size_t t = 0; t < taus.size(); ++t)
            if (diff < taus[t]) ++matched[t];
    }
    if (union_count == 0) throw EmptyUnion();
    std::vector<double> out(taus.size());
    for (std::size_t t = 0; t < taus.size(); ++t)
        out[t] = static_cast<double>(union_count - matched[t]) / static_cast<double>(union_count);
    return out;
}

inline double vsd_error(const DistanceMap& d_est, const DistanceMap& d_gt, const Mask& m_est, const Mask& m_gt,
                        double tau) {
    const double taus[] = {tau};
    return vsd_errors(d_est, d_gt, m_est, m_gt, taus).front();
}

inline double mean_vsd(const DistanceMap& d_est, const DistanceMap& d_gt, const Mask& m_est, const Mask& m_gt,
                       double diameter, const VsdConfig& cfg = {}) {
    cfg.validate();
    std::vector<double> taus;
    taus.reserve(cfg.tau_fractions.size());
    for (double f : cfg.tau_fractions) taus.push_back(f * diameter);
    const auto errs = vsd_errors(d_est, d_gt, m_est, m_gt, taus);
    return std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(errs.size());
}

/// Rendered view of a mesh as a distance map plus its visibility mask. An
/// empty render yields an all-invalid map.
struct RenderedView {
    DistanceMap distances;
    Mask mask;
};

inline RenderedView render_view(const TriangleMesh& mesh, const Pose& pose, const CameraIntrinsics& cam) {
    try {
        RenderResult r = render_depth(mesh, pose, cam);
        return {distance_map_from_depth(r.depth, cam), std::move(r.mask)};
    } catch (const EmptyRender&) {
        return {{Image<double>(cam.width, cam.height, 0.0), Mask(cam.width, cam.height, 0)},
                Mask(cam.width, cam.height, 0)};
    }
}

/// Mean VSD estimate: the live depth image and its segmentation mask stand in
/// for the ground-truth render. A pose that renders nothing scores 1.
inline double mve(const DepthImage& input_depth, const Mask& input_mask, const TriangleMesh& mesh, const Pose& t_current,
                  const CameraIntrinsics& cam, double diameter, const VsdConfig& cfg = {}) {
    DistanceMap d_gt = distance_map_from_depth(input_depth, cam);
    Mask m_gt = input_mask;
    for (std::size_t i = 0; i < m_gt.size(); ++i) m_gt[i] = (m_gt[i] && d_gt.valid[i]) ? 1 : 0;
    const RenderedView est = render_view(mesh, t_current, cam);
    return mean_vsd(est.distances, d_gt, est.mask, m_gt, diameter, cfg);
}

/// Mean VSD of an estimate against a ground-truth pose, both rendered.
inline double pose_mean_vsd(const TriangleMesh& mesh, const Pose& estimate, const RenderedView& ground_truth,
                            const CameraIntrinsics& cam, double diameter, const VsdConfig& cfg = {}) {
    const RenderedView est = render_view(mesh, estimate, cam);
    return mean_vsd(est.distances, ground_truth.distances, est.mask, ground_truth.mask, diameter, cfg);
}

inline double pose_mean_vsd(const TriangleMesh& mesh, const Pose& estimate, const Pose& ground_truth,
                            const CameraIntrinsics& cam, double diameter, const VsdConfig& cfg = {}) {
    return pose_mean_vsd(mesh, estimate, render_view(mesh, ground_truth, cam), cam, diameter, cfg);
}

}  // namespace hicp
