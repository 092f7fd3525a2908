#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "hicp/errors.hpp"

namespace hicp {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline Mat3 skew(const Vec3& v) {
    Mat3 m;
    m << 0.0, -v.z(), v.y(),
         v.z(), 0.0, -v.x(),
         -v.y(), v.x(), 0.0;
    return m;
}

inline Vec3 vee(const Mat3& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

/// Rigid transform [R | t]; maps object-frame points into the camera frame.
struct Pose {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static Pose identity() { return {}; }

    Pose inverse() const {
        Pose inv;
        inv.rotation = rotation.transpose();
        inv.translation = -(inv.rotation * translation);
        return inv;
    }

    Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

    friend Pose operator*(const Pose& a, const Pose& b) {
        Pose c;
        c.rotation = a.rotation * b.rotation;
        c.translation = a.rotation * b.translation + a.translation;
        return c;
    }

    friend bool operator==(const Pose& a, const Pose& b) {
        return a.rotation == b.rotation && a.translation == b.translation;
    }
};

/// se(3) coordinates. The stacked 6-vector is [rho; phi].
struct Twist {
    Vec3 rho = Vec3::Zero();
    Vec3 phi = Vec3::Zero();

    Vec6 vector() const {
        Vec6 v;
        v << rho, phi;
        return v;
    }
    static Twist from_vector(const Vec6& v) { return {v.head<3>(), v.tail<3>()}; }
};

namespace detail {

// Taylor expansions are used below this angle to avoid cancellation.
inline constexpr double kSmallAngle = 0.05;

// (1 - cos t) / t^2
inline double coeff_a(double t) {
    if (t < kSmallAngle) {
        const double t2 = t * t;
        return 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    }
    return (1.0 - std::cos(t)) / (t * t);
}

// (t - sin t) / t^3
inline double coeff_b(double t) {
    if (t < kSmallAngle) {
        const double t2 = t * t;
        return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0;
    }
    return (t - std::sin(t)) / (t * t * t);
}

// sin t / t
inline double coeff_sinc(double t) {
    if (t < kSmallAngle) {
        const double t2 = t * t;
        return 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    }
    return std::sin(t) / t;
}

// 1/t^2 - cot(t/2) / (2t); finite on [0, pi].
inline double coeff_inv(double t) {
    if (t < kSmallAngle) {
        const double t2 = t * t;
        return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0;
    }
    return 1.0 / (t * t) - std::cos(t / 2.0) / (2.0 * t * std::sin(t / 2.0));
}

// (t^2/2 + cos t - 1) / t^4
inline double coeff_c(double t) {
    if (t < kSmallAngle) {
        const double t2 = t * t;
        return 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0 - t2 * t2 * t2 / 3628800.0;
    }
    const double t2 = t * t;
    return (t2 / 2.0 + std::cos(t) - 1.0) / (t2 * t2);
}

// (2t - 3 sin t + t cos t) / (2 t^5)
inline double coeff_d(double t) {
    if (t < kSmallAngle) {
        const double t2 = t * t;
        return 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0;
    }
    const double t2 = t * t;
    return (2.0 * t - 3.0 * std::sin(t) + t * std::cos(t)) / (2.0 * t2 * t2 * t);
}

}  // namespace detail

inline Mat3 so3_exp(const Vec3& phi) {
    const double t = phi.norm();
    const Mat3 k = skew(phi);
    return Mat3::Identity() + detail::coeff_sinc(t) * k + detail::coeff_a(t) * k * k;
}

/// Rotation vector of R with angle in [0, pi].
///
/// At exactly pi the axis is read from the column of (R + R^T)/2 + I with the
/// largest diagonal entry, and its sign is fixed so that the first nonzero
/// component is positive.
inline Vec3 so3_log(const Mat3& r) {
    const double cos_t = std::clamp((r.trace() - 1.0) / 2.0, -1.0, 1.0);
    const Vec3 w = vee(r - r.transpose()) / 2.0;  // sin(t) * axis
    const double sin_t = w.norm();
    const double t = std::atan2(sin_t, cos_t);

    if (t < detail::kSmallAngle) return w / detail::coeff_sinc(t);
    if (std::numbers::pi - t > 1e-6) return w * (t / sin_t);

    // Near pi: sin(t) carries too little precision, use the symmetric part.
    const Mat3 aat = ((r + r.transpose()) / 2.0 - cos_t * Mat3::Identity()) / (1.0 - cos_t);
    Eigen::Index k = 0;
    aat.diagonal().maxCoeff(&k);
    Vec3 axis = aat.col(k) / std::sqrt(std::max(aat(k, k), 1e-300));
    axis.normalize();
    const double along = axis.dot(w);
    if (std::abs(along) > 1e-15) {
        if (along < 0.0) axis = -axis;
    } else {
        for (int i = 0; i < 3; ++i) {
            if (std::abs(axis[i]) > 1e-12) {
                if (axis[i] < 0.0) axis = -axis;
                break;
            }
        }
    }
    return axis * t;
}

inline Mat3 so3_left_jacobian(const Vec3& phi) {
    const double t = phi.norm();
    const Mat3 k = skew(phi);
    return Mat3::Identity() + detail::coeff_a(t) * k + detail::coeff_b(t) * k * k;
}

inline Mat3 so3_left_jacobian_inverse(const Vec3& phi) {
    const double t = phi.norm();
    const Mat3 k = skew(phi);
    return Mat3::Identity() - 0.5 * k + detail::coeff_inv(t) * k * k;
}

inline Pose exp_map(const Twist& xi) {
    Pose p;
    p.rotation = so3_exp(xi.phi);
    p.translation = so3_left_jacobian(xi.phi) * xi.rho;
    return p;
}

inline Twist log_map(const Pose& pose) {
    Twist xi;
    xi.phi = so3_log(pose.rotation);
    xi.rho = so3_left_jacobian_inverse(xi.phi) * pose.translation;
    return xi;
}

/// Upper-right block of the SE(3) left Jacobian for [rho; phi] ordering.
inline Mat3 se3_q_block(const Vec3& rho, const Vec3& phi) {
    const double t = phi.norm();
    const Mat3 p = skew(phi);
    const Mat3 r = skew(rho);
    const Mat3 pr = p * r;
    const Mat3 rp = r * p;
    const Mat3 prp = pr * p;
    return 0.5 * r
         + detail::coeff_b(t) * (pr + rp + prp)
         + detail::coeff_c(t) * (p * pr + rp * p - 3.0 * prp)
         + detail::coeff_d(t) * (prp * p + p * prp);
}

inline Mat6 se3_left_jacobian(const Twist& xi) {
    Mat6 j = Mat6::Zero();
    const Mat3 jl = so3_left_jacobian(xi.phi);
    j.topLeftCorner<3, 3>() = jl;
    j.bottomRightCorner<3, 3>() = jl;
    j.topRightCorner<3, 3>() = se3_q_block(xi.rho, xi.phi);
    return j;
}

inline Mat6 se3_left_jacobian_inverse(const Twist& xi) {
    Mat6 j = Mat6::Zero();
    const Mat3 inv = so3_left_jacobian_inverse(xi.phi);
    j.topLeftCorner<3, 3>() = inv;
    j.bottomRightCorner<3, 3>() = inv;
    j.topRightCorner<3, 3>() = -inv * se3_q_block(xi.rho, xi.phi) * inv;
    return j;
}

/// Geodesic angle of R in radians, [0, pi].
inline double rotation_angle(const Mat3& r) {
    const double cos_t = (r.trace() - 1.0) / 2.0;
    const double sin_t = (vee(r - r.transpose()) / 2.0).norm();
    return std::atan2(sin_t, cos_t);
}

inline double rotation_error(const Mat3& a, const Mat3& b) { return rotation_angle(a.transpose() * b); }

inline double translation_error(const Pose& a, const Pose& b) { return (a.translation - b.translation).norm(); }

/// Projects a near-rotation back onto SO(3).
inline Mat3 orthonormalize(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
        Mat3 u = svd.matrixU();
        u.col(2) *= -1.0;
        r = u * svd.matrixV().transpose();
    }
    return r;
}

inline bool is_valid_pose(const Pose& p, double tol = 1e-9) {
    return (p.rotation.transpose() * p.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(p.rotation.determinant() - 1.0) <= tol && p.translation.allFinite();
}

// ---------------------------------------------------------------------------
// Initialisation perturbations

/// Rotation error per millimetre of translation error of a sampling-based pose estimator.
inline constexpr double kDegreesPerMillimetre = 1.92;
/// Mean errors of the same estimator, used for fixed-perturbation experiments.
inline constexpr double kMeanTranslationError = 0.0062;
inline constexpr double kMeanRotationErrorDeg = 9.5;

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

inline double rotation_for_translation(double delta_t) { return deg2rad(delta_t * 1000.0 * kDegreesPerMillimetre); }

struct Perturbation {
    Vec3 t_delta = Vec3::Zero();
    Mat3 r_delta = Mat3::Identity();
};

template <typename Rng>
Vec3 sample_unit_vector(Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (;;) {
        Vec3 v(normal(rng), normal(rng), normal(rng));
        const double n = v.norm();
        if (n > 1e-12) return v / n;
    }
}

template <typename Rng>
Perturbation sample_perturbation(double delta_t, double delta_theta, Rng& rng) {
    const Vec3 v = sample_unit_vector(rng);
    const Vec3 eta = sample_unit_vector(rng);
    Perturbation p;
    p.t_delta = delta_t * v;
    p.r_delta = so3_exp(delta_theta * eta);
    return p;
}

/// [R_gt R_delta | t_gt + t_delta]: rotation composed on the right, translation
/// offset in the camera frame.
inline Pose apply_perturbation(const Pose& gt, const Perturbation& p) {
    Pose out;
    out.rotation = gt.rotation * p.r_delta;
    out.translation = gt.translation + p.t_delta;
    return out;
}

// ---------------------------------------------------------------------------
// Fusion of pose estimates

struct PoseWithCovariance {
    Pose pose;
    Mat6 covariance = Mat6::Identity();
};

/// Information-weighted fusion on SE(3).
///
/// Minimises sum_l || log(T_l * T^-1) ||^2 weighted by Sigma_l^-1 using
/// Gauss-Newton on left perturbations T <- exp(delta) * T, starting from the
/// estimate with the smallest covariance trace. The returned covariance is the
/// inverse of the accumulated information at the solution.
inline PoseWithCovariance fuse_estimates(std::span<const PoseWithCovariance> estimates) {
    if (estimates.empty()) throw SingularInformation("no estimates to fuse");
    if (estimates.size() == 1) return estimates.front();

    std::vector<Mat6> information;
    information.reserve(estimates.size());
    for (const auto& e : estimates) {
        const Mat6 sym = 0.5 * (e.covariance + e.covariance.transpose());
        Eigen::LLT<Mat6> llt(sym);
        if (llt.info() != Eigen::Success) throw SingularInformation("covariance is not positive definite");
        Mat6 w = llt.solve(Mat6::Identity());
        information.push_back(0.5 * (w + w.transpose()));
    }

    std::size_t start = 0;
    for (std::size_t i = 1; i < estimates.size(); ++i)
        if (estimates[i].covariance.trace() < estimates[start].covariance.trace()) start = i;
    Pose current = estimates[start].pose;

    auto accumulate = [&](const Pose& t, Mat6& h, Vec6& g) {
        h.setZero();
        g.setZero();
        const Pose t_inv = t.inverse();
        for (std::size_t l = 0; l < estimates.size(); ++l) {
            const Twist err = log_map(estimates[l].pose * t_inv);
            const Twist neg{-err.rho, -err.phi};
            const Mat6 a = -se3_left_jacobian_inverse(neg);
            const Mat6 atw = a.transpose() * information[l];
            h += atw * a;
            g += atw * err.vector();
        }
    };

    auto check_invertible = [](const Mat6& h) {
        Eigen::SelfAdjointEigenSolver<Mat6> eig(0.5 * (h + h.transpose()));
        const double lmax = eig.eigenvalues().maxCoeff();
        const double lmin = eig.eigenvalues().minCoeff();
        if (!(lmax > 0.0) || !(lmin > lmax * 1e-14)) throw SingularInformation("summed information is singular");
    };

    Mat6 h;
    Vec6 g;
    for (int iter = 0; iter < 50; ++iter) {
        accumulate(current, h, g);
        check_invertible(h);
        const Vec6 delta = h.ldlt().solve(-g);
        current = exp_map(Twist::from_vector(delta)) * current;
        if (delta.norm() < 1e-10) break;
    }
    accumulate(current, h, g);
    check_invertible(h);

    PoseWithCovariance fused;
    fused.pose = current;
    fused.pose.rotation = orthonormalize(current.rotation);
    Mat6 cov = h.ldlt().solve(Mat6::Identity());
    fused.covariance = 0.5 * (cov + cov.transpose());
    return fused;
}

inline PoseWithCovariance fuse_estimates(const std::vector<PoseWithCovariance>& estimates) {
    return fuse_estimates(std::span<const PoseWithCovariance>(estimates));
}

inline Pose deterministic_average(std::span<const Pose> poses) {
    std::vector<PoseWithCovariance> est;
    est.reserve(poses.size());
    for (const auto& p : poses) est.push_back({p, Mat6::Identity()});
    return fuse_estimates(est).pose;
}

inline Pose deterministic_average(const std::vector<Pose>& poses) {
    return deterministic_average(std::span<const Pose>(poses));
}

}  // namespace hicp
