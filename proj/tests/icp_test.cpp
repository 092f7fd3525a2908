#include <random>

#include <gtest/gtest.h>

#include "hicp/icp.hpp"
#include "hicp/vsd.hpp"

using namespace hicp;

namespace {

Pose object_pose(double z) {
    Pose p;
    p.rotation = so3_exp(Vec3(0.4, -0.3, 0.2));
    p.translation = Vec3(0.01, -0.02, z);
    return p;
}

Scene render_scene(const TriangleMesh& mesh, const Pose& gt, const CameraIntrinsics& cam) {
    RenderResult r = render_depth(mesh, gt, cam);
    return make_scene(std::move(r.depth), std::move(r.mask), cam);
}

Pose translated(const Pose& p, const Vec3& d) {
    Pose q = p;
    q.translation += d;
    return q;
}

}  // namespace

class IcpFixture : public ::testing::Test {
protected:
    CameraIntrinsics cam = CameraIntrinsics::default_camera();
    std::mt19937_64 rng{11};
    IcpConfig cfg;
};

TEST_F(IcpFixture, ConfigValidation) {
    EXPECT_NO_THROW(cfg.validate(Metric::point_to_plane));
    IcpConfig bad = cfg;
    bad.max_iter = 0;
    EXPECT_THROW(bad.validate(Metric::point_to_point), ConfigError);
    bad = cfg;
    bad.rel_loss_tol = 0.0;
    EXPECT_THROW(bad.validate(Metric::point_to_point), ConfigError);
    bad = cfg;
    bad.min_correspondences = 5;
    EXPECT_NO_THROW(bad.validate(Metric::point_to_point));
    EXPECT_THROW(bad.validate(Metric::point_to_plane), ConfigError);
}

TEST_F(IcpFixture, NnStartingAtTruthConvergesImmediately) {
    const ObjectModel model = make_object_model(make_builtin("box"), rng);
    const Pose gt = object_pose(0.5);
    // Scene cloud made of the model samples placed at the truth: exact partners exist.
    OrientedPointCloud cloud;
    for (std::size_t i = 0; i < model.samples.size(); ++i) {
        cloud.points.push_back(gt * model.samples.points[i]);
        cloud.normals.push_back(gt.rotation * model.samples.normals[i]);
    }
    const SpatialIndex index(cloud);
    for (Metric metric : {Metric::point_to_point, Metric::point_to_plane}) {
        const IcpResult r = run_icp(NnAssociator{&model.samples, &index, AssociationConfig::for_diameter(model.diameter)},
                                    gt, metric, Association::nn, cfg);
        EXPECT_EQ(r.status, IcpStatus::converged);
        EXPECT_LE(r.trace.size(), 2u);
        EXPECT_LT(r.trace.back().mean_loss, 1e-12);
        EXPECT_LT(translation_error(r.pose, gt), 1e-9);
    }
}

TEST_F(IcpFixture, ProjectiveStartingAtTruthConvergesImmediately) {
    const ObjectModel model = make_object_model(make_builtin("box"), rng);
    const Pose gt = object_pose(0.5);
    const Scene scene = render_scene(model.mesh, gt, cam);
    for (Metric metric : {Metric::point_to_point, Metric::point_to_plane}) {
        const IcpResult r = run_icp(model, scene, gt, Association::projective, metric, cfg,
                                    AssociationConfig::for_diameter(model.diameter));
        EXPECT_EQ(r.status, IcpStatus::converged);
        EXPECT_LE(r.trace.size(), 2u);
        for (const auto& it : r.trace) EXPECT_LT(it.mean_loss, 1e-12);
        EXPECT_LT(translation_error(r.pose, gt), 1e-9);
        EXPECT_LT(rotation_error(r.pose.rotation, gt.rotation), 1e-9);
    }
}

TEST_F(IcpFixture, NnPointToPointImprovesFiveMillimetreSphereOffset) {
    const ObjectModel model = make_object_model(make_builtin("sphere"), rng);
    const Pose gt = object_pose(0.5);
    // Scene: an independent full-sphere cloud at the truth.
    const OrientedPointCloud local = sample_mesh_points(model.mesh, 5000, rng);
    OrientedPointCloud cloud;
    for (std::size_t i = 0; i < local.size(); ++i) {
        cloud.points.push_back(gt * local.points[i]);
        cloud.normals.push_back(gt.rotation * local.normals[i]);
    }
    const SpatialIndex index(cloud);
    const Pose init = translated(gt, Vec3(0.005, 0.0, 0.0));
    const IcpResult r = run_icp(NnAssociator{&model.samples, &index, AssociationConfig::for_diameter(model.diameter)},
                                init, Metric::point_to_point, Association::nn, cfg);
    const double pre = pose_mean_vsd(model.mesh, init, gt, cam, model.diameter);
    const double post = pose_mean_vsd(model.mesh, r.pose, gt, cam, model.diameter);
    EXPECT_LT(post, pre);
    EXPECT_LT(translation_error(r.pose, gt), 0.0025);
}

TEST_F(IcpFixture, CullingKeepsSingleViewNnOnTheVisibleSurface) {
    const ObjectModel model = make_object_model(make_builtin("sphere"), rng);
    const Pose gt = object_pose(0.5);
    const Scene scene = render_scene(model.mesh, gt, cam);
    const Pose init = translated(gt, Vec3(0.005, 0.0, 0.0));
    AssociationConfig gates = AssociationConfig::for_diameter(model.diameter);
    const IcpResult plain = run_icp(model, scene, init, Association::nn, Metric::point_to_point, cfg, gates);
    gates.cull_back_faces = true;
    const IcpResult culled = run_icp(model, scene, init, Association::nn, Metric::point_to_point, cfg, gates);
    // Hidden samples drag the unculled estimate toward the camera.
    EXPECT_LT(translation_error(culled.pose, gt), 0.0025);
    EXPECT_LT(translation_error(culled.pose, gt), translation_error(plain.pose, gt));
}

TEST_F(IcpFixture, ProjectiveOffFrustumReturnsInitialPose) {
    const ObjectModel model = make_object_model(make_builtin("box"), rng);
    const Pose gt = object_pose(0.5);
    const Scene scene = render_scene(model.mesh, gt, cam);
    const Pose init = translated(gt, Vec3(3.0, 0.0, 0.0));
    for (Metric metric : {Metric::point_to_point, Metric::point_to_plane}) {
        const IcpResult r = run_icp(model, scene, init, Association::projective, metric, cfg,
                                    AssociationConfig::for_diameter(model.diameter));
        EXPECT_EQ(r.status, IcpStatus::no_correspondences);
        EXPECT_TRUE(r.pose == init);
        EXPECT_TRUE(r.trace.empty());
    }
}

TEST_F(IcpFixture, TraceRecordsPosesAndCounts) {
    const ObjectModel model = make_object_model(make_builtin("box"), rng);
    const Pose gt = object_pose(0.5);
    const Scene scene = render_scene(model.mesh, gt, cam);
    const Pose init = translated(gt, Vec3(0.003, -0.002, 0.002));
    const IcpResult r = run_icp(model, scene, init, Association::nn, Metric::point_to_plane, cfg,
                                AssociationConfig::for_diameter(model.diameter));
    ASSERT_FALSE(r.trace.empty());
    EXPECT_TRUE(r.trace.back().pose_after == r.pose);
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        EXPECT_EQ(r.trace[i].iteration, static_cast<int>(i) + 1);
        EXPECT_GE(r.trace[i].mean_loss, 0.0);
        EXPECT_GT(r.trace[i].correspondence_count, 0u);
        EXPECT_EQ(r.trace[i].metric, Metric::point_to_plane);
        EXPECT_EQ(r.trace[i].association, Association::nn);
        EXPECT_TRUE(is_valid_pose(r.trace[i].pose_after));
    }
}

TEST_F(IcpFixture, UngatedConvergedRunsHaveNonIncreasingLoss) {
    const ObjectModel model = make_object_model(make_builtin("box"), rng);
    const Pose gt = object_pose(0.5);
    const Scene scene = render_scene(model.mesh, gt, cam);
    // Monotone descent is a theorem only when every model point is paired with
    // its exact nearest neighbour: no rejection gates and no culling.
    const AssociationConfig gates{1e9, std::numbers::pi, false};
    int converged = 0;
    for (int trial = 0; trial < 12; ++trial) {
        const Pose init = apply_perturbation(gt, sample_perturbation(0.004, rotation_for_translation(0.004), rng));
        const IcpResult r = run_icp(model, scene, init, Association::nn, Metric::point_to_point, cfg, gates);
        if (r.status != IcpStatus::converged) continue;
        ++converged;
        for (std::size_t i = 1; i < r.trace.size(); ++i)
            EXPECT_LE(r.trace[i].mean_loss, r.trace[i - 1].mean_loss * (1 + 1e-9)) << "trial " << trial << " it " << i;
    }
    EXPECT_GT(converged, 0);
}

TEST_F(IcpFixture, GuardRollsBackOnEmptyAssociation) {
    const DivergenceGuard guard;
    const Pose init = translated(Pose::identity(), Vec3(0.1, 0.2, 0.3));
    auto nothing = [](const Pose&) { return CorrespondenceSet{}; };
    const IcpResult r = run_icp(nothing, init, Metric::point_to_point, Association::nn, cfg, &guard, 1);
    EXPECT_EQ(r.status, IcpStatus::diverged_rolled_back);
    EXPECT_TRUE(r.pose == init);
    ASSERT_EQ(r.trace.size(), 1u);
    EXPECT_EQ(r.trace[0].divergence, Divergence::no_correspondences);

    const IcpResult unguarded = run_icp(nothing, init, Metric::point_to_point, Association::nn, cfg);
    EXPECT_EQ(unguarded.status, IcpStatus::no_correspondences);
    EXPECT_TRUE(unguarded.pose == init);
}
