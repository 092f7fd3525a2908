#pragma once

#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "hicp/association.hpp"
#include "hicp/errors.hpp"
#include "hicp/se3.hpp"

namespace hicp {

enum class Metric { point_to_point, point_to_plane };

inline const char* to_string(Metric m) { return m == Metric::point_to_point ? "point_to_point" : "point_to_plane"; }

inline double point_to_point_error(const Correspondence& k, const Pose& t) { return (t * k.o - k.c).squaredNorm(); }

inline double point_to_plane_error(const Correspondence& k, const Pose& t) {
    const double r = k.n.dot(t * k.o - k.c);
    return r * r;
}

/// Mean of the chosen metric over all pairs; 0 for an empty set.
inline double mean_loss(const CorrespondenceSet& cs, const Pose& t, Metric metric) {
    if (cs.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& k : cs.pairs)
        sum += metric == Metric::point_to_point ? point_to_point_error(k, t) : point_to_plane_error(k, t);
    return sum / static_cast<double>(cs.size());
}

/// Closed-form minimiser of sum ||T o - c||^2 (centroid alignment plus SVD of
/// the cross-covariance, with the reflection fixed).
///
/// Throws DegenerateConfiguration when the cross-covariance has rank < 2, e.g.
/// for collinear points, where the rotation about the line is undetermined.
inline Pose solve_point_to_point(const CorrespondenceSet& cs) {
    if (cs.size() < 3) throw DegenerateConfiguration("point-to-point needs at least 3 correspondences");
    Vec3 mo = Vec3::Zero();
    Vec3 mc = Vec3::Zero();
    for (const auto& k : cs.pairs) {
        mo += k.o;
        mc += k.c;
    }
    const double inv_n = 1.0 / static_cast<double>(cs.size());
    mo *= inv_n;
    mc *= inv_n;
    Mat3 h = Mat3::Zero();
    for (const auto& k : cs.pairs) h += (k.o - mo) * (k.c - mc).transpose();

    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 s = svd.singularValues();
    if (!(s[0] > 0.0) || s[1] <= 1e-12 * s[0]) throw DegenerateConfiguration("cross-covariance rank < 2");

    const Mat3 u = svd.matrixU();
    const Mat3 v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    d(2, 2) = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    Pose t;
    t.rotation = v * d * u.transpose();
    t.translation = mc - t.rotation * mo;
    return t;
}

/// Jacobian row of the linearised point-to-plane residual w.r.t. [rho; phi].
inline Vec6 point_to_plane_row(const Correspondence& k) {
    Vec6 a;
    a << k.n, k.o.cross(k.n);
    return a;
}

/// One linearisation of sum (n^T (T o - c))^2 about the identity, solved as a
/// 6x6 normal-equations system and mapped back through exp_map.
///
/// Directions whose eigenvalue falls below 1e-12 of the largest (the metric's
/// nullspace, e.g. sliding along a plane) receive no update: the minimum-norm
/// solution is returned. Throws SingularSystem if the system carries no
/// information at all.
inline Pose solve_point_to_plane(const CorrespondenceSet& cs) {
    Mat6 h = Mat6::Zero();
    Vec6 b = Vec6::Zero();
    for (const auto& k : cs.pairs) {
        const Vec6 a = point_to_plane_row(k);
        const double r = k.n.dot(k.o - k.c);
        h.noalias() += a * a.transpose();
        b.noalias() += a * r;
    }
    if (!h.allFinite() || !b.allFinite()) throw SingularSystem("point-to-plane system is not finite");
    Eigen::SelfAdjointEigenSolver<Mat6> eig(h);
    const auto& lambda = eig.eigenvalues();
    const double lmax = lambda.maxCoeff();
    if (!(lmax > 1e-300)) throw SingularSystem("point-to-plane system has no constraints");
    const double cutoff = lmax * 1e-12;
    Vec6 x = Vec6::Zero();
    for (int i = 0; i < 6; ++i) {
        if (lambda[i] <= cutoff) continue;
        const Vec6 vi = eig.eigenvectors().col(i);
        x -= vi * (vi.dot(b) / lambda[i]);
    }
    return exp_map(Twist::from_vector(x));
}

inline Pose solve_increment(const CorrespondenceSet& cs, Metric metric) {
    return metric == Metric::point_to_point ? solve_point_to_point(cs) : solve_point_to_plane(cs);
}

}  // namespace hicp
