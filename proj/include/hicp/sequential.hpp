#pragma once

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "hicp/association.hpp"
#include "hicp/camera.hpp"
#include "hicp/errors.hpp"
#include "hicp/hybrid.hpp"
#include "hicp/noise.hpp"
#include "hicp/render.hpp"
#include "hicp/scene.hpp"
#include "hicp/se3.hpp"
#include "hicp/vsd.hpp"

namespace hicp {

/// Step duration used to move the camera: wall-clock compute time, or a
/// constant for reproducible runs.
struct Timing {
    enum class Kind { measured, fixed };
    Kind kind = Kind::fixed;
    double seconds = 0.1;

    static Timing measured() { return {Kind::measured, 0.0}; }
    static Timing fixed(double s) { return {Kind::fixed, s}; }

    void validate() const {
        if (kind == Kind::fixed && !(seconds > 0.0)) throw ConfigError("fixed timing needs a positive step time");
    }
};

struct TrajectoryConfig {
    double start_distance = 1.0;
    double velocity = 0.1;        // m/s along the optical axis
    double stop_distance = 0.5;
    Timing timing;
    /// Hard cap on the number of estimates; also bounds zero-velocity runs.
    int max_steps = 1000;

    void validate() const {
        if (!(velocity >= 0.0)) throw ConfigError("velocity must be non-negative");
        if (!(stop_distance < start_distance)) throw ConfigError("stop_distance must be below start_distance");
        if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
        timing.validate();
    }
};

struct LogEntry {
    Pose pose;          // object pose in the current camera frame
    Mat6 covariance = Mat6::Identity();
    double e_mve = 0.0;
    int timestep = 0;
};

struct PoseEstimateLog {
    std::vector<LogEntry> entries;
    /// Set once a filtering method has fused estimates into the head entry.
    bool filtered = false;
    /// Number of estimates recorded so far, including those fused away.
    int history = 0;

    bool empty() const { return entries.empty(); }
    std::size_t size() const { return entries.size(); }
};

enum class FusionMethod { last_estimate, average, weighted_average, filtering_constant, filtering, most_confident };

inline const char* to_string(FusionMethod m) {
    switch (m) {
        case FusionMethod::last_estimate: return "last_estimate";
        case FusionMethod::average: return "average";
        case FusionMethod::weighted_average: return "weighted_average";
        case FusionMethod::filtering_constant: return "filtering_constant";
        case FusionMethod::filtering: return "filtering";
        case FusionMethod::most_confident: return "most_confident";
    }
    return "?";
}

inline FusionMethod parse_fusion_method(const std::string& s) {
    for (FusionMethod m : {FusionMethod::last_estimate, FusionMethod::average, FusionMethod::weighted_average,
                           FusionMethod::filtering_constant, FusionMethod::filtering, FusionMethod::most_confident})
        if (s == to_string(m)) return m;
    throw ConfigError("unknown fusion method: " + s);
}

inline constexpr double kCovarianceFloor = 1e-6;

/// e_mve * I, clamped so information matrices stay finite.
inline Mat6 mve_covariance(double e_mve) { return std::max(e_mve, kCovarianceFloor) * Mat6::Identity(); }

/// Adjoint of a pose acting on twists ordered [rho; phi].
inline Mat6 adjoint(const Pose& t) {
    Mat6 a = Mat6::Zero();
    a.topLeftCorner<3, 3>() = t.rotation;
    a.topRightCorner<3, 3>() = skew(t.translation) * t.rotation;
    a.bottomRightCorner<3, 3>() = t.rotation;
    return a;
}

enum class CovarianceTransport { unchanged, adjoint };

/// Re-expresses every logged pose in the next camera frame: p <- motion * p.
inline PoseEstimateLog advance_frame(PoseEstimateLog log, const Pose& motion,
                                     CovarianceTransport transport = CovarianceTransport::unchanged) {
    const Mat6 ad = adjoint(motion);
    for (auto& e : log.entries) {
        e.pose = motion * e.pose;
        if (transport == CovarianceTransport::adjoint) e.covariance = ad * e.covariance * ad.transpose();
    }
    return log;
}

inline Pose query_initialisation(FusionMethod method, const PoseEstimateLog& log) {
    if (log.empty()) throw EmptyLog();
    const auto& entries = log.entries;
    switch (method) {
        case FusionMethod::last_estimate:
        case FusionMethod::filtering:
        case FusionMethod::filtering_constant:
            return entries.back().pose;
        case FusionMethod::average: {
            std::vector<Pose> poses;
            poses.reserve(entries.size());
            for (const auto& e : entries) poses.push_back(e.pose);
            return deterministic_average(poses);
        }
        case FusionMethod::weighted_average: {
            std::vector<PoseWithCovariance> est;
            est.reserve(entries.size());
            for (const auto& e : entries) est.push_back({e.pose, mve_covariance(e.e_mve)});
            return fuse_estimates(est).pose;
        }
        case FusionMethod::most_confident: {
            std::size_t best = 0;
            for (std::size_t i = 1; i < entries.size(); ++i)
                if (entries[i].covariance.trace() <= entries[best].covariance.trace()) best = i;
            return entries[best].pose;
        }
    }
    throw ConfigError("unknown fusion method");
}

/// Adds a new ICP estimate. Filtering methods fuse it into the head entry and
/// keep only that; all other methods append (pose, e_mve * I).
inline PoseEstimateLog record_estimate(FusionMethod method, PoseEstimateLog log, const Pose& pose, double e_mve) {
    const int timestep = log.empty() ? log.history : log.entries.back().timestep + 1;
    const bool filtering = method == FusionMethod::filtering || method == FusionMethod::filtering_constant;
    ++log.history;
    if (!filtering || log.empty()) {
        log.entries.push_back({pose, mve_covariance(e_mve), e_mve, timestep});
        return log;
    }
    const Mat6 cov = method == FusionMethod::filtering ? mve_covariance(e_mve) : Mat6::Identity();
    const LogEntry& prev = log.entries.back();
    const std::vector<PoseWithCovariance> pair{{prev.pose, prev.covariance}, {pose, cov}};
    const PoseWithCovariance fused = fuse_estimates(pair);
    log.entries.assign(1, {fused.pose, fused.covariance, e_mve, timestep});
    log.filtered = true;
    return log;
}

enum class IcpVariant { projective_cascading, hybrid };

inline const char* to_string(IcpVariant v) { return v == IcpVariant::hybrid ? "hybrid" : "projective_cascading"; }

/// One camera approach. `truth` renders the observations and scores estimates;
/// `model` (possibly a noisy reconstruction) is what ICP registers.
struct TrajectoryScenario {
    const TriangleMesh* truth = nullptr;
    const ObjectModel* model = nullptr;
    Pose ground_truth;   // object in the first camera frame
    Pose initial;        // ICP initialisation for the first step
};

struct TrajectoryStep {
    int step = 0;
    double camera_distance = 0.0;
    double pre_vsd = 1.0;
    double post_vsd = 1.0;
    double e_mve = 1.0;
    double elapsed_seconds = 0.0;
    std::string status;
};

struct TrajectoryReport {
    std::vector<TrajectoryStep> steps;
    double initial_vsd = 1.0;
    /// post_vsd of the last step that produced an estimate (initial_vsd if none did).
    double final_vsd = 1.0;
};

struct SequentialConfig {
    IcpVariant variant = IcpVariant::projective_cascading;
    FusionMethod method = FusionMethod::average;
    TrajectoryConfig trajectory;
    DepthNoiseModel noise = DepthNoiseModel::stereo();
    HybridConfig hybrid;   // also supplies the cascade settings for projective_cascading
    CovarianceTransport transport = CovarianceTransport::unchanged;
};

/// Camera moving along its optical axis towards a static object. Each step
/// renders a noisy depth image, initialises ICP from the fused log, records
/// the new estimate and advances the camera by velocity * step time.
template <typename Rng>
TrajectoryReport simulate_trajectory(const TrajectoryScenario& sc, const CameraIntrinsics& cam, const SequentialConfig& cfg,
                                     Rng& rng) {
    cfg.trajectory.validate();
    cfg.noise.validate();
    cfg.hybrid.validate();
    if (!sc.truth || !sc.model) throw ConfigError("trajectory scenario needs a mesh and a model");
    using Clock = std::chrono::steady_clock;

    const double diameter = sc.model->diameter;
    const AssociationConfig gates = AssociationConfig::for_diameter(diameter);
    TrajectoryReport report;
    PoseEstimateLog log;
    Pose gt = sc.ground_truth;

    const RenderedView first_view = render_view(*sc.truth, gt, cam);
    report.initial_vsd = count_valid(first_view.mask) == 0
                             ? 1.0
                             : pose_mean_vsd(*sc.truth, sc.initial, first_view, cam, diameter, cfg.hybrid.vsd);
    report.final_vsd = report.initial_vsd;

    for (int step = 0; step < cfg.trajectory.max_steps; ++step) {
        TrajectoryStep row;
        row.step = step;
        row.camera_distance = gt.translation.norm();
        const auto t0 = Clock::now();
        try {
            RenderResult clean = render_depth(*sc.truth, gt, cam);
            const RenderedView gt_view{distance_map_from_depth(clean.depth, cam), clean.mask};
            DepthImage noisy = add_depth_noise(clean.depth, cfg.noise, rng);
            const Scene scene = make_scene(std::move(noisy), std::move(clean.mask), cam);

            const Pose init = log.empty() ? sc.initial : query_initialisation(cfg.method, log);
            row.pre_vsd = pose_mean_vsd(*sc.truth, init, gt_view, cam, diameter, cfg.hybrid.vsd);

            Pose estimate;
            if (cfg.variant == IcpVariant::hybrid) {
                estimate = run_hybrid_icp(*sc.model, scene, init, cfg.hybrid, gates).icp.pose;
            } else {
                CascadeConfig cascade = cfg.hybrid.cascade;
                cascade.order = StageOrder::point_plane;
                estimate = run_cascading_icp(*sc.model, scene, init, Association::projective, cascade, gates).pose;
            }
            row.e_mve = mve(scene.depth, scene.mask, sc.model->mesh, estimate, cam, diameter, cfg.hybrid.vsd);
            log = record_estimate(cfg.method, std::move(log), estimate, row.e_mve);
            const Pose fused = query_initialisation(cfg.method, log);
            row.elapsed_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
            row.post_vsd = pose_mean_vsd(*sc.truth, fused, gt_view, cam, diameter, cfg.hybrid.vsd);
            row.status = "ok";
            report.final_vsd = row.post_vsd;
        } catch (const Error& e) {
            row.elapsed_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
            row.status = std::string("failed: ") + e.what();
        }
        const double step_time =
            cfg.trajectory.timing.kind == Timing::Kind::fixed ? cfg.trajectory.timing.seconds : row.elapsed_seconds;
        if (cfg.trajectory.timing.kind == Timing::Kind::fixed) row.elapsed_seconds = step_time;
        report.steps.push_back(row);

        const double move = cfg.trajectory.velocity * step_time;
        if (row.camera_distance - move < cfg.trajectory.stop_distance) break;
        Pose motion;
        motion.translation = Vec3(0.0, 0.0, -move);
        log = advance_frame(std::move(log), motion, cfg.transport);
        gt = motion * gt;
    }
    return report;
}

}  // namespace hicp
