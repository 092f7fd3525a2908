#pragma once

#include <random>
#include <string>

#include "hicp/errors.hpp"
#include "hicp/render.hpp"

namespace hicp {

/// Per-pixel Gaussian depth noise.
struct DepthNoiseModel {
    enum class Kind { none, gaussian_percent, parametric_stereo };

    Kind kind = Kind::none;
    double percent = 0.0;  // gaussian_percent: sigma = percent/100 * depth
    // parametric_stereo: sigma(z) = a0 + a1*z + a2*z^2
    double a0 = 0.001;
    double a1 = 0.0;
    double a2 = 0.0019;

    static DepthNoiseModel none() { return {}; }
    static DepthNoiseModel gaussian(double percent) {
        DepthNoiseModel m;
        m.kind = Kind::gaussian_percent;
        m.percent = percent;
        return m;
    }
    static DepthNoiseModel stereo(double a0 = 0.001, double a1 = 0.0, double a2 = 0.0019) {
        DepthNoiseModel m;
        m.kind = Kind::parametric_stereo;
        m.a0 = a0;
        m.a1 = a1;
        m.a2 = a2;
        return m;
    }

    double sigma(double z) const {
        switch (kind) {
            case Kind::gaussian_percent: return percent / 100.0 * z;
            case Kind::parametric_stereo: return a0 + a1 * z + a2 * z * z;
            case Kind::none: break;
        }
        return 0.0;
    }

    void validate() const {
        if (kind == Kind::gaussian_percent && !(percent >= 0.0)) throw ConfigError("depth noise percent must be >= 0");
        if (kind == Kind::parametric_stereo && (a0 < 0.0 || sigma(10.0) < 0.0))
            throw ConfigError("stereo noise sigma must be non-negative over the working range");
    }
};

/// Independent Gaussian noise on every valid pixel; results <= 0 become invalid.
template <typename Rng>
DepthImage add_depth_noise(const DepthImage& depth, const DepthNoiseModel& model, Rng& rng) {
    model.validate();
    if (model.kind == DepthNoiseModel::Kind::none) return depth;
    DepthImage out = depth;
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& z : out) {
        if (!(z > 0.0)) continue;
        z += model.sigma(z) * normal(rng);
        if (!(z > 0.0)) z = 0.0;
    }
    return out;
}

}  // namespace hicp
