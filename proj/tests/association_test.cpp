#include <algorithm>
#include <numbers>
#include <numeric>
#include <random>
#include <tuple>

#include <gtest/gtest.h>

#include "hicp/association.hpp"
#include "hicp/render.hpp"
#include "hicp/scene.hpp"
#include "hicp/spatial_index.hpp"

using namespace hicp;

namespace {

OrientedPointCloud random_cloud(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(-1, 1);
    OrientedPointCloud c;
    for (std::size_t i = 0; i < n; ++i) {
        c.points.emplace_back(u(rng), u(rng), u(rng));
        c.normals.push_back(Vec3(u(rng), u(rng), u(rng)).normalized());
    }
    return c;
}

Neighbor brute_force(const std::vector<Vec3>& pts, const Vec3& q) {
    Neighbor best;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d2 = (pts[i] - q).squaredNorm();
        if (d2 < best.squared_distance) best = {i, d2};
    }
    return best;
}

AssociationConfig open_gates() { return {1e9, std::numbers::pi, false}; }

auto as_tuple(const Correspondence& k) {
    return std::make_tuple(k.o.x(), k.o.y(), k.o.z(), k.c.x(), k.c.y(), k.c.z());
}

Pose at_depth(double z) {
    Pose p;
    p.translation = Vec3(0, 0, z);
    return p;
}

}  // namespace

TEST(SpatialIndex, MatchesBruteForceExactly) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    for (int trial = 0; trial < 100; ++trial) {
        const OrientedPointCloud c = random_cloud(rng, 200);
        const SpatialIndex index(c);
        for (int q = 0; q < 200; ++q) {
            const Vec3 query(u(rng), u(rng), u(rng));
            const Neighbor a = index.nearest(query);
            const Neighbor b = brute_force(c.points, query);
            ASSERT_EQ(a.index, b.index);
            ASSERT_EQ(a.squared_distance, b.squared_distance);
        }
    }
}

TEST(SpatialIndex, TiesResolveToLowestIndex) {
    // A grid with many equidistant candidates, and exact duplicates.
    std::vector<Vec3> pts;
    for (int x = 0; x < 6; ++x)
        for (int y = 0; y < 6; ++y)
            for (int z = 0; z < 6; ++z) pts.emplace_back(x, y, z);
    pts.emplace_back(2, 2, 2);
    pts.emplace_back(0, 0, 0);
    const SpatialIndex index(pts, 2);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> h(0, 10);
    for (int q = 0; q < 2000; ++q) {
        const Vec3 query(h(rng) * 0.5, h(rng) * 0.5, h(rng) * 0.5);
        const Neighbor a = index.nearest(query);
        const Neighbor b = brute_force(pts, query);
        ASSERT_EQ(a.index, b.index) << query.transpose();
    }
}

TEST(SpatialIndex, EmptyAndSinglePoint) {
    const SpatialIndex empty;
    EXPECT_TRUE(empty.empty());
    EXPECT_EQ(empty.nearest(Vec3::Zero()).squared_distance, std::numeric_limits<double>::infinity());
    const SpatialIndex one(std::vector<Vec3>{Vec3(1, 2, 3)});
    EXPECT_EQ(one.nearest(Vec3::Zero()).index, 0u);
    EXPECT_EQ(one.nearest(Vec3::Zero()).squared_distance, 14.0);
}

TEST(AssociationConfig, Validation) {
    EXPECT_NO_THROW((AssociationConfig{0.1, 1.0}.validate()));
    EXPECT_THROW((AssociationConfig{0.0, 1.0}.validate()), ConfigError);
    EXPECT_THROW((AssociationConfig{0.1, 0.0}.validate()), ConfigError);
    EXPECT_THROW((AssociationConfig{0.1, 4.0}.validate()), ConfigError);
    const AssociationConfig d = AssociationConfig::for_diameter(0.2);
    EXPECT_DOUBLE_EQ(d.tau_max, 0.05);
    EXPECT_DOUBLE_EQ(d.theta_max, std::numbers::pi / 3);
}

TEST(NnAssociate, SelfMatchAtIdentity) {
    std::mt19937_64 rng(2);
    const OrientedPointCloud c = random_cloud(rng, 300);
    const SpatialIndex index(c);
    const CorrespondenceSet cs = nn_associate(c, index, Pose::identity(), {0.01, 0.1, false});
    ASSERT_EQ(cs.size(), c.size());
    EXPECT_EQ(cs.candidates_considered, c.size());
    for (std::size_t i = 0; i < cs.size(); ++i) {
        EXPECT_EQ(cs.pairs[i].o, c.points[i]);
        EXPECT_EQ(cs.pairs[i].c, c.points[i]);
        EXPECT_EQ(cs.pairs[i].n, c.normals[i]);
    }
}

TEST(NnAssociate, DistanceGateRejectsAll) {
    std::mt19937_64 rng(4);
    const OrientedPointCloud model = random_cloud(rng, 100);
    OrientedPointCloud scene = model;
    const double tau = 0.05;
    for (auto& p : scene.points) p += Vec3(2 * tau + 5.0, 0, 0);  // well clear of every model point
    const SpatialIndex index(scene);
    EXPECT_TRUE(nn_associate(model, index, Pose::identity(), {tau, std::numbers::pi, false}).empty());

    // Translating the scene by exactly 2 tau keeps the nearest neighbour outside the gate
    // for a single isolated point.
    OrientedPointCloud single{{Vec3::Zero()}, {Vec3::UnitZ()}};
    OrientedPointCloud moved{{Vec3(2 * tau, 0, 0)}, {Vec3::UnitZ()}};
    EXPECT_TRUE(nn_associate(single, SpatialIndex(moved), Pose::identity(), {tau, 1.0, false}).empty());
}

TEST(NnAssociate, MatchesBruteForceAndReturnsUntransformedModel) {
    std::mt19937_64 rng(5);
    const OrientedPointCloud model = random_cloud(rng, 200);
    const OrientedPointCloud scene = random_cloud(rng, 200);
    const SpatialIndex index(scene);
    Pose t;
    t.rotation = so3_exp(Vec3(0.3, -0.1, 0.2));
    t.translation = Vec3(0.05, 0.0, -0.02);
    const CorrespondenceSet cs = nn_associate(model, index, t, open_gates());
    ASSERT_EQ(cs.size(), model.size());
    for (std::size_t i = 0; i < model.size(); ++i) {
        const Neighbor b = brute_force(scene.points, t * model.points[i]);
        EXPECT_EQ(cs.pairs[i].c, scene.points[b.index]);
        EXPECT_EQ(cs.pairs[i].o, model.points[i]);
        EXPECT_EQ(cs.pairs[i].m, model.normals[i]);
    }
}

TEST(NnAssociate, EveryPairSatisfiesGates) {
    std::mt19937_64 rng(6);
    const OrientedPointCloud model = random_cloud(rng, 400);
    const OrientedPointCloud scene = random_cloud(rng, 400);
    const AssociationConfig cfg{0.15, deg2rad(50)};
    Pose t;
    t.rotation = so3_exp(Vec3(0.1, 0.2, 0.3));
    const CorrespondenceSet cs = nn_associate(model, SpatialIndex(scene), t, cfg);
    EXPECT_GT(cs.size(), 0u);
    EXPECT_LE(cs.size(), cs.candidates_considered);
    for (const auto& k : cs.pairs) {
        EXPECT_LE((t * k.o - k.c).norm(), cfg.tau_max + 1e-12);
        EXPECT_GE((t.rotation * k.m).dot(k.n), std::cos(cfg.theta_max) - 1e-12);
    }
}

TEST(NnAssociate, IndependentOfModelOrder) {
    std::mt19937_64 rng(7);
    OrientedPointCloud model = random_cloud(rng, 150);
    const OrientedPointCloud scene = random_cloud(rng, 150);
    const SpatialIndex index(scene);
    const AssociationConfig cfg{0.3, deg2rad(80)};
    auto sorted_pairs = [&](const OrientedPointCloud& m) {
        auto cs = nn_associate(m, index, Pose::identity(), cfg);
        std::vector<std::tuple<double, double, double, double, double, double>> v;
        for (const auto& k : cs.pairs) v.push_back(as_tuple(k));
        std::sort(v.begin(), v.end());
        return v;
    };
    const auto ref = sorted_pairs(model);
    std::vector<std::size_t> perm(model.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    OrientedPointCloud shuffled;
    for (std::size_t i : perm) {
        shuffled.points.push_back(model.points[i]);
        shuffled.normals.push_back(model.normals[i]);
    }
    EXPECT_EQ(sorted_pairs(shuffled), ref);
}

TEST(NnAssociate, BackFacingModelPointsAreNotCandidates) {
    // Two model points in front of the camera: one facing it, one facing away.
    const OrientedPointCloud model{{Vec3(0, 0, 1), Vec3(0.01, 0, 1)}, {-Vec3::UnitZ(), Vec3::UnitZ()}};
    const OrientedPointCloud scene{{Vec3(0, 0, 1.001)}, {-Vec3::UnitZ()}};
    const SpatialIndex index(scene);
    const CorrespondenceSet culled = nn_associate(model, index, Pose::identity(), {0.1, std::numbers::pi, true});
    ASSERT_EQ(culled.size(), 1u);
    EXPECT_EQ(culled.candidates_considered, 1u);
    EXPECT_EQ(culled.pairs[0].o, model.points[0]);
    const CorrespondenceSet all = nn_associate(model, index, Pose::identity(), open_gates());
    EXPECT_EQ(all.size(), 2u);
    // Culling follows the current estimate: a half turn swaps which point is visible.
    Pose flipped;
    flipped.rotation = so3_exp(Vec3(0, std::numbers::pi, 0));
    flipped.translation = Vec3(0, 0, 2);
    const CorrespondenceSet turned = nn_associate(model, index, flipped, {10.0, std::numbers::pi, true});
    ASSERT_EQ(turned.size(), 1u);
    EXPECT_EQ(turned.pairs[0].o, model.points[1]);
}

TEST(NnAssociate, EmptySceneGivesEmptySet) {
    std::mt19937_64 rng(8);
    EXPECT_TRUE(nn_associate(random_cloud(rng, 10), SpatialIndex(OrientedPointCloud{}), Pose::identity(), open_gates()).empty());
}

class ProjectiveFixture : public ::testing::Test {
protected:
    CameraIntrinsics cam = CameraIntrinsics::default_camera();
    TriangleMesh quad = make_quad(0.3);
    Pose pose = at_depth(1.0);

    ProjectiveModel model_at(const Pose& p) { return make_projective_model(quad, p, cam); }
    Scene scene_at(const Pose& p) {
        RenderResult r = render_depth(quad, p, cam);
        return make_scene(std::move(r.depth), std::move(r.mask), cam);
    }
};

TEST_F(ProjectiveFixture, SelfMatchAtRenderPose) {
    const ProjectiveModel pm = model_at(pose);
    const Scene scene = scene_at(pose);
    const CorrespondenceSet cs = projective_associate(pm, scene.vertices, scene.normals, pose, cam, {0.01, 0.1});
    EXPECT_EQ(cs.size(), count_valid(scene.normals.valid));
    EXPECT_EQ(cs.candidates_considered, cs.size());
    for (const auto& k : cs.pairs) EXPECT_LT((pose * k.o - k.c).norm(), 1e-12);
}

TEST_F(ProjectiveFixture, OffFrustumGivesEmptySet) {
    const ProjectiveModel pm = model_at(pose);
    const Scene scene = scene_at(pose);
    Pose away = pose;
    away.translation.x() = 5.0;
    EXPECT_TRUE(projective_associate(pm, scene.vertices, scene.normals, away, cam, open_gates()).empty());
    Pose behind = pose;
    behind.translation.z() = -1.0;
    EXPECT_TRUE(projective_associate(pm, scene.vertices, scene.normals, behind, cam, open_gates()).empty());
}

TEST_F(ProjectiveFixture, OnePixelShiftPairsNeighbouringPixel) {
    const ProjectiveModel pm = model_at(pose);
    const Scene scene = scene_at(pose);
    Pose shifted = pose;
    shifted.translation.x() += 1.0 / cam.fx;  // one pixel at 1 m
    const CorrespondenceSet cs = projective_associate(pm, scene.vertices, scene.normals, shifted, cam, {0.1, 0.5});
    ASSERT_GT(cs.size(), 1000u);
    for (const auto& k : cs.pairs) {
        // Model vertex o sits at pixel (u, v) of the render; its partner is pixel (u + 1, v).
        int u = 0, v = 0;
        ASSERT_TRUE(cam.project_to_pixel(pose * k.o, u, v));
        EXPECT_LT((k.c - cam.backproject(u + 1, v, 1.0)).norm(), 1e-12);
    }
}

TEST_F(ProjectiveFixture, GatesApplyToProjectivePairs) {
    const ProjectiveModel pm = model_at(pose);
    const Scene scene = scene_at(pose);
    Pose tilted = pose;
    tilted.rotation = so3_exp(Vec3(deg2rad(40), 0, 0));
    EXPECT_TRUE(projective_associate(pm, scene.vertices, scene.normals, tilted, cam, {1.0, deg2rad(30)}).empty());
    const auto cs = projective_associate(pm, scene.vertices, scene.normals, tilted, cam, {1.0, deg2rad(50)});
    EXPECT_GT(cs.size(), 0u);
    for (const auto& k : cs.pairs) EXPECT_GE((tilted.rotation * k.m).dot(k.n), std::cos(deg2rad(50)) - 1e-12);
}

TEST_F(ProjectiveFixture, WorkIsPerModelVertexNotPerScenePoint) {
    const ProjectiveModel pm = model_at(pose);
    const Scene small = scene_at(pose);
    TriangleMesh big_quad = make_quad(0.6);
    RenderResult r = render_depth(big_quad, pose, cam);
    const Scene big = make_scene(std::move(r.depth), std::move(r.mask), cam);
    ASSERT_GT(big.cloud.size(), 2 * small.cloud.size());
    const auto a = projective_associate(pm, small.vertices, small.normals, pose, cam, open_gates());
    const auto b = projective_associate(pm, big.vertices, big.normals, pose, cam, open_gates());
    EXPECT_EQ(a.candidates_considered, b.candidates_considered);
}

TEST_F(ProjectiveFixture, NullModelAssociatorIsEmpty) {
    const Scene scene = scene_at(pose);
    const ProjectiveAssociator assoc{nullptr, &scene, open_gates()};
    EXPECT_TRUE(assoc(pose).empty());
}
