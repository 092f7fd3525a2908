#pragma once

#include <optional>
#include <vector>

#include "hicp/association.hpp"
#include "hicp/errors.hpp"
#include "hicp/icp.hpp"
#include "hicp/scene.hpp"
#include "hicp/vsd.hpp"

namespace hicp {

struct SwitchDecision {
    Association method = Association::nn;
    double e_mve = 1.0;
};

/// NN association when the MVE is at or above alpha, projective otherwise.
inline SwitchDecision dynamic_switch(double e_mve, double alpha) {
    return {e_mve >= alpha ? Association::nn : Association::projective, e_mve};
}

enum class StageOrder { point_plane, plane_point };

struct CascadeConfig {
    double shrink_tolerance = 0.05;
    StageOrder order = StageOrder::point_plane;
    IcpConfig first_stage;
    IcpConfig second_stage;
    bool conjunctive_drop = true;

    void validate() const {
        if (!(shrink_tolerance > 0.0) || !(shrink_tolerance < 1.0)) throw ConfigError("shrink_tolerance must lie in (0, 1)");
    }
};

/// Two guarded ICP stages with different metrics; each stage rolls back to its
/// last good estimate on divergence, so a diverging second stage leaves the
/// first stage's output and two immediately diverging stages return t_init.
template <typename Associate>
IcpResult run_cascade(Associate&& associate, const Pose& t_init, Association association, const CascadeConfig& cfg) {
    cfg.validate();
    const DivergenceGuard guard{cfg.shrink_tolerance, cfg.conjunctive_drop};
    const Metric first = cfg.order == StageOrder::point_plane ? Metric::point_to_point : Metric::point_to_plane;
    const Metric second = cfg.order == StageOrder::point_plane ? Metric::point_to_plane : Metric::point_to_point;

    IcpResult s1 = run_icp(associate, t_init, first, association, cfg.first_stage, &guard, 1);
    IcpResult s2 = run_icp(associate, s1.pose, second, association, cfg.second_stage, &guard, 2);

    IcpResult out;
    out.pose = s2.pose;
    out.status = s2.status;
    out.trace = std::move(s1.trace);
    out.trace.insert(out.trace.end(), s2.trace.begin(), s2.trace.end());
    return out;
}

/// Cascading ICP against a scene. For projective association the model vertex
/// map is rendered once at t_init and shared by both stages.
inline IcpResult run_cascading_icp(const ObjectModel& model, const Scene& scene, const Pose& t_init,
                                   Association association, const CascadeConfig& cfg, const AssociationConfig& gates) {
    if (association == Association::nn) return run_cascade(NnAssociator{&model.samples, &scene.index, gates}, t_init, association, cfg);
    std::optional<ProjectiveModel> view;
    try {
        view = make_projective_model(model.mesh, t_init, scene.cam);
    } catch (const EmptyRender&) {
    }
    return run_cascade(ProjectiveAssociator{view ? &*view : nullptr, &scene, gates}, t_init, association, cfg);
}

struct HybridConfig {
    double alpha = 0.4;
    int hybrid_iterations = 2;
    CascadeConfig cascade;   // projective branch
    IcpConfig nn_icp;        // NN point-to-point branch
    VsdConfig vsd;
    /// Bypasses Dynamic Switching (the MVE is still computed and reported).
    std::optional<Association> forced_method;

    void validate() const {
        if (!(alpha > 0.0) || !(alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
        if (hybrid_iterations < 1) throw ConfigError("hybrid_iterations must be >= 1");
        cascade.validate();
        vsd.validate();
    }
};

struct HybridResult {
    IcpResult icp;
    std::vector<SwitchDecision> decisions;
};

/// Hybrid ICP: each iteration computes the MVE at the current estimate, picks
/// the association method with Dynamic Switching and runs either projective
/// Cascading ICP (point-to-point then point-to-plane, model re-rendered at the
/// current estimate) or NN point-to-point ICP, each to convergence.
inline HybridResult run_hybrid_icp(const ObjectModel& model, const Scene& scene, const Pose& t_init,
                                   const HybridConfig& cfg, const AssociationConfig& gates) {
    cfg.validate();
    HybridResult out;
    out.icp.pose = t_init;
    CascadeConfig cascade = cfg.cascade;
    cascade.order = StageOrder::point_plane;

    for (int it = 0; it < cfg.hybrid_iterations; ++it) {
        const double e = mve(scene.depth, scene.mask, model.mesh, out.icp.pose, scene.cam, model.diameter, cfg.vsd);
        SwitchDecision decision = dynamic_switch(e, cfg.alpha);
        if (cfg.forced_method) decision.method = *cfg.forced_method;
        out.decisions.push_back(decision);

        IcpResult step = decision.method == Association::projective
                             ? run_cascading_icp(model, scene, out.icp.pose, Association::projective, cascade, gates)
                             : run_icp(model, scene, out.icp.pose, Association::nn, Metric::point_to_point, cfg.nn_icp, gates);
        out.icp.pose = step.pose;
        out.icp.status = step.status;
        out.icp.trace.insert(out.icp.trace.end(), step.trace.begin(), step.trace.end());
    }
    return out;
}

}  // namespace hicp
