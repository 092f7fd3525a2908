#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "hicp/association.hpp"
#include "hicp/errors.hpp"
#include "hicp/scene.hpp"
#include "hicp/se3.hpp"
#include "hicp/solvers.hpp"

namespace hicp {

struct IcpConfig {
    int max_iter = 50;
    double rel_loss_tol = 1e-6;
    std::size_t min_correspondences = 10;

    void validate(Metric metric) const {
        if (max_iter < 1) throw ConfigError("max_iter must be >= 1");
        if (!(rel_loss_tol > 0.0)) throw ConfigError("rel_loss_tol must be positive");
        const std::size_t floor = metric == Metric::point_to_point ? 3 : 6;
        if (min_correspondences < floor) throw ConfigError("min_correspondences below the algebraic minimum");
    }
};

enum class IcpStatus { converged, max_iter, diverged_rolled_back, no_correspondences };

inline const char* to_string(IcpStatus s) {
    switch (s) {
        case IcpStatus::converged: return "converged";
        case IcpStatus::max_iter: return "max_iter";
        case IcpStatus::diverged_rolled_back: return "diverged_rolled_back";
        case IcpStatus::no_correspondences: return "no_correspondences";
    }
    return "?";
}

/// Why an iteration was flagged as diverging.
enum class Divergence { none, no_correspondences, correspondence_drop, loss_increase, solver_failure };

inline const char* to_string(Divergence d) {
    switch (d) {
        case Divergence::none: return "none";
        case Divergence::no_correspondences: return "no_correspondences";
        case Divergence::correspondence_drop: return "correspondence_drop";
        case Divergence::loss_increase: return "loss_increase";
        case Divergence::solver_failure: return "solver_failure";
    }
    return "?";
}

struct IterationTrace {
    int iteration = 0;
    double mean_loss = 0.0;             // metric at the pose the iteration started from
    std::size_t correspondence_count = 0;
    Pose pose_after;                    // estimate after the iteration (rolled back if diverged)
    Metric metric = Metric::point_to_point;
    Association association = Association::nn;
    int stage = 0;                      // cascade stage (1, 2) or 0 for plain ICP
    Divergence divergence = Divergence::none;

    friend bool operator==(const IterationTrace&, const IterationTrace&) = default;
};

struct IcpResult {
    Pose pose;
    std::vector<IterationTrace> trace;
    IcpStatus status = IcpStatus::max_iter;
};

/// Divergence tests used by Cascading ICP. An iteration diverges when it has
/// no correspondences, when its count falls more than `shrink_tolerance` below
/// the first or the previous iteration's count, or when its mean loss exceeds
/// the previous one.
struct DivergenceGuard {
    double shrink_tolerance = 0.05;
    /// true: the count must stay within tolerance of both the first and the
    /// previous count. false: dropping below both is required to diverge.
    bool conjunctive = true;
};

namespace detail {

// Mean squared residuals below this (1e-12 m RMS) are round-off; relative
// change there is noise and would never settle.
inline constexpr double kLossFloor = 1e-24;

inline bool loss_converged(double loss, double prev, double tol) {
    const double delta = std::abs(loss - prev);
    return delta < tol * prev || std::max(loss, prev) <= kLossFloor;
}

inline CorrespondenceSet transform_model_side(const CorrespondenceSet& cs, const Pose& t) {
    CorrespondenceSet out;
    out.candidates_considered = cs.candidates_considered;
    out.pairs.reserve(cs.size());
    for (const auto& k : cs.pairs) out.pairs.push_back({t * k.o, t.rotation * k.m, k.c, k.n});
    return out;
}

}  // namespace detail

/// Generic ICP loop. `associate(pose)` returns correspondences whose model side
/// is in the object frame; each iteration moves the model side by the current
/// estimate, solves for an incremental transform T_k and updates the estimate
/// to T_k * T. Association always uses the original model points with the
/// current global estimate, so no drift accumulates in the model cloud.
///
/// Stops on max_iter, on relative loss change below rel_loss_tol, or when
/// fewer than min_correspondences pairs are found. With a guard, diverging
/// iterations roll the estimate back to the pose the previous iteration
/// started from (the input pose if the first iteration diverges).
template <typename Associate>
IcpResult run_icp(Associate&& associate, const Pose& t_init, Metric metric, Association association,
                  const IcpConfig& cfg, const DivergenceGuard* guard = nullptr, int stage = 0) {
    cfg.validate(metric);
    IcpResult result;
    result.pose = t_init;
    result.status = IcpStatus::max_iter;

    Pose pose = t_init;
    Pose prev_pose = t_init;
    std::size_t first_count = 0;
    std::size_t prev_count = 0;
    double prev_loss = 0.0;

    auto record = [&](int k, double loss, std::size_t count, const Pose& after, Divergence div) {
        result.trace.push_back({k, loss, count, after, metric, association, stage, div});
    };

    for (int k = 1; k <= cfg.max_iter; ++k) {
        const CorrespondenceSet raw = associate(pose);
        const CorrespondenceSet cs = detail::transform_model_side(raw, pose);
        const std::size_t count = cs.size();
        const double loss = mean_loss(cs, Pose::identity(), metric);

        if (guard) {
            Divergence div = Divergence::none;
            if (count == 0) {
                div = Divergence::no_correspondences;
            } else if (k > 1) {
                const double keep = 1.0 - guard->shrink_tolerance;
                const bool below_first = static_cast<double>(count) < keep * static_cast<double>(first_count);
                const bool below_prev = static_cast<double>(count) < keep * static_cast<double>(prev_count);
                const bool dropped = guard->conjunctive ? (below_first || below_prev) : (below_first && below_prev);
                if (dropped)
                    div = Divergence::correspondence_drop;
                else if (loss > prev_loss && loss > detail::kLossFloor)
                    div = Divergence::loss_increase;
            }
            if (div != Divergence::none) {
                const Pose restored = k == 1 ? pose : prev_pose;
                record(k, loss, count, restored, div);
                result.pose = restored;
                result.status = IcpStatus::diverged_rolled_back;
                return result;
            }
        }

        if (count < cfg.min_correspondences) {
            result.status = IcpStatus::no_correspondences;
            break;
        }

        Pose increment;
        try {
            increment = solve_increment(cs, metric);
        } catch (const Error&) {
            record(k, loss, count, pose, Divergence::solver_failure);
            result.pose = pose;
            result.status = IcpStatus::diverged_rolled_back;
            return result;
        }
        const Pose next = increment * pose;
        record(k, loss, count, next, Divergence::none);
        prev_pose = pose;
        pose = next;
        result.pose = pose;

        if (k > 1 && detail::loss_converged(loss, prev_loss, cfg.rel_loss_tol)) {
            result.status = IcpStatus::converged;
            break;
        }
        if (k == 1) first_count = count;
        prev_count = count;
        prev_loss = loss;
    }
    return result;
}

/// Plain ICP against a scene (projective model rendered at t_init).
inline IcpResult run_icp(const ObjectModel& model, const Scene& scene, const Pose& t_init, Association association,
                         Metric metric, const IcpConfig& cfg, const AssociationConfig& gates) {
    if (association == Association::nn)
        return run_icp(NnAssociator{&model.samples, &scene.index, gates}, t_init, metric, association, cfg);
    std::optional<ProjectiveModel> view;
    try {
        view = make_projective_model(model.mesh, t_init, scene.cam);
    } catch (const EmptyRender&) {
    }
    return run_icp(ProjectiveAssociator{view ? &*view : nullptr, &scene, gates}, t_init, metric, association, cfg);
}

}  // namespace hicp
