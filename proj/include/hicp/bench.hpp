#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "hicp/association.hpp"
#include "hicp/camera.hpp"
#include "hicp/errors.hpp"
#include "hicp/hybrid.hpp"
#include "hicp/icp.hpp"
#include "hicp/mesh.hpp"
#include "hicp/mesh_io.hpp"
#include "hicp/noise.hpp"
#include "hicp/render.hpp"
#include "hicp/scene.hpp"
#include "hicp/se3.hpp"
#include "hicp/sequential.hpp"
#include "hicp/vsd.hpp"

namespace hicp {

// ---------------------------------------------------------------------------
// Pose and scenario sampling

enum class PoseMode { single_image, trajectory };

inline constexpr double kMaxSingleImageDistance = 0.6;
inline constexpr double kTrajectoryDistance = 1.0;
inline constexpr double kAimOffsetFraction = 0.1;
inline constexpr double kMaxInitTranslation = 0.15;

template <typename Rng>
Mat3 sample_rotation(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q;
    do {
        q.coeffs() << n(rng), n(rng), n(rng), n(rng);
    } while (q.norm() < 1e-12);
    return q.normalized().toRotationMatrix();
}

/// Object pose in the camera frame. The object origin sits at the sampled
/// distance and the optical axis passes through a point offset from it by
/// U[0, 0.1 * diameter] along each object-centred axis.
template <typename Rng>
Pose sample_object_pose(double diameter, PoseMode mode, const CameraIntrinsics& cam, Rng& rng) {
    cam.validate();
    if (!(diameter > 0.0)) throw ConfigError("object diameter must be positive");
    if (mode == PoseMode::single_image && !(diameter < kMaxSingleImageDistance))
        throw DiameterTooLarge("object diameter must be below the maximum sampling distance");
    const double distance = mode == PoseMode::trajectory
                                ? kTrajectoryDistance
                                : std::uniform_real_distribution<double>(diameter, kMaxSingleImageDistance)(rng);
    std::uniform_real_distribution<double> off(0.0, kAimOffsetFraction * diameter);
    const Vec3 offset(off(rng), off(rng), off(rng));
    Pose p;
    p.rotation = sample_rotation(rng);
    // The aim point (centre + offset) lies on the optical axis and the centre is `distance` away.
    const double lateral2 = offset.x() * offset.x() + offset.y() * offset.y();
    p.translation = Vec3(-offset.x(), -offset.y(), std::sqrt(distance * distance - lateral2));
    return p;
}

template <typename Rng>
Perturbation sample_init_perturbation(Rng& rng, double max_translation = kMaxInitTranslation) {
    const double dt = std::uniform_real_distribution<double>(0.0, max_translation)(rng);
    return sample_perturbation(dt, rotation_for_translation(dt), rng);
}

template <typename Rng>
Perturbation mean_error_perturbation(Rng& rng) {
    return sample_perturbation(kMeanTranslationError, deg2rad(kMeanRotationErrorDeg), rng);
}

inline int vsd_bin(double vsd, int bins) {
    const int b = static_cast<int>(std::floor(vsd * bins));
    return std::clamp(b, 0, bins - 1);
}

template <typename S>
struct BinnedSamples {
    std::vector<std::vector<S>> bins;
    std::vector<int> unfillable;
    std::size_t attempts = 0;
};

inline constexpr int kAttemptBudgetFactor = 200;

/// Draws candidates until each of `bins` equal pre-VSD intervals over [0, 1]
/// holds `per_bin` of them. `sampler(rng)` returns std::optional<S> where S
/// exposes `pre_vsd`. The attempt budget is kAttemptBudgetFactor per requested
/// scenario; bins still short afterwards are reported in `unfillable`.
template <typename S, typename Sampler, typename Rng>
BinnedSamples<S> rejection_sample_bins(int bins, int per_bin, Sampler&& sampler, Rng& rng) {
    if (bins < 1) throw ConfigError("bins must be >= 1");
    if (per_bin < 1) throw ConfigError("samples per bin must be >= 1");
    BinnedSamples<S> out;
    out.bins.resize(static_cast<std::size_t>(bins));
    const std::size_t budget = static_cast<std::size_t>(kAttemptBudgetFactor) * static_cast<std::size_t>(per_bin) *
                               static_cast<std::size_t>(bins);
    std::size_t open = static_cast<std::size_t>(bins);
    while (open > 0 && out.attempts < budget) {
        ++out.attempts;
        std::optional<S> s = sampler(rng);
        if (!s) continue;
        auto& bin = out.bins[static_cast<std::size_t>(vsd_bin(s->pre_vsd, bins))];
        if (static_cast<int>(bin.size()) >= per_bin) continue;
        bin.push_back(std::move(*s));
        if (static_cast<int>(bin.size()) == per_bin) --open;
    }
    for (int b = 0; b < bins; ++b)
        if (static_cast<int>(out.bins[static_cast<std::size_t>(b)].size()) < per_bin) out.unfillable.push_back(b);
    return out;
}

/// splitmix64 finaliser, used to derive independent per-trial seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
    return mix_seed(mix_seed(mix_seed(mix_seed(base) ^ a) ^ b) ^ c);
}

/// FNV-1a over raw bytes; identifies the depth image and initialisation a
/// trial consumed.
class ContentHash {
public:
    void add(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    void add(const DepthImage& d) { add(d.data().data(), d.size() * sizeof(double)); }
    void add(const Pose& p) {
        add(p.rotation.data(), 9 * sizeof(double));
        add(p.translation.data(), 3 * sizeof(double));
    }
    std::string hex() const {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
        return buf;
    }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

/// A single-image trial input: everything is regenerated from `seed`.
struct ImageScenario {
    std::uint64_t seed = 0;
    Pose ground_truth;
    Pose initial;
    double pre_vsd = 1.0;
};

enum class PerturbationKind { uniform_translation, mean_error };

/// Samples a visible object pose and a perturbed initialisation. Returns
/// nullopt when the object does not render.
inline std::optional<ImageScenario> make_image_scenario(const TriangleMesh& truth, double diameter,
                                                        const CameraIntrinsics& cam, std::uint64_t seed,
                                                        PerturbationKind kind, PoseMode mode = PoseMode::single_image,
                                                        double max_translation = kMaxInitTranslation,
                                                        const VsdConfig& vsd = {}) {
    std::mt19937_64 rng(seed);
    ImageScenario s;
    s.seed = seed;
    s.ground_truth = sample_object_pose(diameter, mode, cam, rng);
    const Perturbation p =
        kind == PerturbationKind::mean_error ? mean_error_perturbation(rng) : sample_init_perturbation(rng, max_translation);
    s.initial = apply_perturbation(s.ground_truth, p);
    const RenderedView gt = render_view(truth, s.ground_truth, cam);
    if (count_valid(gt.mask) == 0) return std::nullopt;
    s.pre_vsd = pose_mean_vsd(truth, s.initial, gt, cam, diameter, vsd);
    return s;
}

/// Renders the observation of a scenario with depth noise drawn from `noise_seed`.
inline Scene make_observation(const TriangleMesh& truth, const Pose& gt, const CameraIntrinsics& cam,
                              const DepthNoiseModel& noise, std::uint64_t noise_seed) {
    RenderResult r = render_depth(truth, gt, cam);
    std::mt19937_64 rng(noise_seed);
    DepthImage depth = add_depth_noise(r.depth, noise, rng);
    return make_scene(std::move(depth), std::move(r.mask), cam);
}

// ---------------------------------------------------------------------------
// ICP variants

inline const std::vector<std::string>& known_variants() {
    static const std::vector<std::string> v{"nn_p2p",          "nn_p2l",   "nn_cascade", "nn_cascade_plane_point",
                                            "proj_p2p",        "proj_p2l", "proj_cascade",
                                            "proj_cascade_plane_point", "hybrid"};
    return v;
}

inline bool is_known_variant(const std::string& id) {
    const auto& v = known_variants();
    return std::find(v.begin(), v.end(), id) != v.end();
}

struct VariantSettings {
    IcpConfig icp;
    HybridConfig hybrid;
};

inline IcpResult run_variant(const std::string& id, const ObjectModel& model, const Scene& scene, const Pose& init,
                             const VariantSettings& s, const AssociationConfig& gates) {
    if (id == "hybrid") return run_hybrid_icp(model, scene, init, s.hybrid, gates).icp;
    const Association a = id.rfind("nn_", 0) == 0 ? Association::nn : Association::projective;
    const std::string rest = id.substr(a == Association::nn ? 3 : 5);
    if (rest == "p2p") return run_icp(model, scene, init, a, Metric::point_to_point, s.icp, gates);
    if (rest == "p2l") return run_icp(model, scene, init, a, Metric::point_to_plane, s.icp, gates);
    CascadeConfig c = s.hybrid.cascade;
    if (rest == "cascade")
        c.order = StageOrder::point_plane;
    else if (rest == "cascade_plane_point")
        c.order = StageOrder::plane_point;
    else
        throw ConfigError("unknown variant: " + id);
    return run_cascading_icp(model, scene, init, a, c, gates);
}

// ---------------------------------------------------------------------------
// Configuration

struct ExperimentConfig {
    std::string experiment = "init_noise";
    std::vector<std::string> meshes{"sphere", "box", "cylinder"};
    std::vector<std::string> variants{"nn_p2p", "proj_cascade", "hybrid"};
    int samples_per_object = 10;
    int bins = 10;
    std::uint64_t seed = 1;
    std::string output_path = "report.csv";
    Timing timing = Timing::measured();
    double alpha = 0.4;
    int hybrid_iterations = 2;
    std::size_t model_samples = kDefaultModelSamples;
    int max_iter = 50;
    double rel_loss_tol = 1e-6;
    double tau_max_fraction = 0.25;
    double theta_max_deg = 60.0;
    bool cull_back_faces = false;
    double max_init_translation = kMaxInitTranslation;
    std::vector<double> depth_noise_levels{0, 1, 2, 3, 4, 5};
    std::vector<int> model_noise_levels{0, 1, 2, 3, 4};
    // sequential
    double velocity = 0.1;
    double stop_distance = 0.5;
    int max_steps = 1000;
    int sequential_model_noise = 1;

    static const std::vector<std::string>& experiments() {
        static const std::vector<std::string> e{"init_noise", "depth_noise", "model_noise", "sequential"};
        return e;
    }

    void validate() const {
        const auto& e = experiments();
        if (std::find(e.begin(), e.end(), experiment) == e.end()) throw ConfigError("unknown experiment: " + experiment);
        if (meshes.empty()) throw ConfigError("no meshes configured");
        if (variants.empty()) throw ConfigError("no variants configured");
        if (samples_per_object < 1) throw ConfigError("samples_per_object must be >= 1");
        if (bins < 1) throw ConfigError("bins must be >= 1");
        if (model_samples < 3) throw ConfigError("model_samples must be >= 3");
        if (!(tau_max_fraction > 0.0)) throw ConfigError("tau_max_fraction must be positive");
        if (!(theta_max_deg > 0.0) || theta_max_deg > 180.0) throw ConfigError("theta_max_deg must lie in (0, 180]");
        if (!(max_init_translation >= 0.0)) throw ConfigError("max_init_translation must be non-negative");
        for (double x : depth_noise_levels)
            if (!(x >= 0.0)) throw ConfigError("depth noise levels must be non-negative");
        for (int l : model_noise_levels)
            if (l < 0) throw ConfigError("model noise levels must be non-negative");
        if (sequential_model_noise < 0) throw ConfigError("sequential_model_noise must be non-negative");
        timing.validate();
        for (const auto& v : variants) {
            if (experiment == "sequential") {
                parse_sequential_variant(v);
            } else if (!is_known_variant(v)) {
                throw ConfigError("unknown variant: " + v);
            }
        }
        settings().icp.validate(Metric::point_to_plane);
        settings().hybrid.validate();
        trajectory().validate();
    }

    VariantSettings settings() const {
        VariantSettings s;
        s.icp.max_iter = max_iter;
        s.icp.rel_loss_tol = rel_loss_tol;
        s.hybrid.alpha = alpha;
        s.hybrid.hybrid_iterations = hybrid_iterations;
        s.hybrid.cascade.first_stage = s.icp;
        s.hybrid.cascade.second_stage = s.icp;
        s.hybrid.nn_icp = s.icp;
        return s;
    }

    AssociationConfig gates(double diameter) const {
        return {tau_max_fraction * diameter, deg2rad(theta_max_deg), cull_back_faces};
    }

    TrajectoryConfig trajectory() const {
        TrajectoryConfig t;
        t.start_distance = kTrajectoryDistance;
        t.velocity = velocity;
        t.stop_distance = stop_distance;
        t.timing = timing;
        t.max_steps = max_steps;
        return t;
    }

    /// Sequential variants are written "<icp variant>:<fusion method>".
    static std::pair<IcpVariant, FusionMethod> parse_sequential_variant(const std::string& v) {
        const auto colon = v.find(':');
        if (colon == std::string::npos) throw ConfigError("sequential variant must be <icp>:<fusion>: " + v);
        const std::string icp = v.substr(0, colon);
        IcpVariant iv;
        if (icp == "projective_cascading")
            iv = IcpVariant::projective_cascading;
        else if (icp == "hybrid")
            iv = IcpVariant::hybrid;
        else
            throw ConfigError("unknown sequential ICP variant: " + icp);
        return {iv, parse_fusion_method(v.substr(colon + 1))};
    }
};

inline Timing parse_timing(const std::string& s) {
    if (s == "measured") return Timing::measured();
    if (s.rfind("fixed:", 0) == 0) {
        try {
            std::size_t used = 0;
            const std::string num = s.substr(6);
            const double sec = std::stod(num, &used);
            if (used == num.size() && sec > 0.0) return Timing::fixed(sec);
        } catch (const std::exception&) {
        }
    }
    throw ConfigError("timing must be 'measured' or 'fixed:<seconds>': " + s);
}

inline std::string format_timing(const Timing& t) {
    if (t.kind == Timing::Kind::measured) return "measured";
    std::ostringstream os;
    os << "fixed:" << std::setprecision(17) << t.seconds;
    return os.str();
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (auto t = trim(item); !t.empty()) out.push_back(t);
    return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    std::istringstream is(value);
    T out{};
    if (!(is >> out) || !(is >> std::ws).eof()) throw ConfigError("invalid value for " + key + ": " + value);
    return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("'" + key + "' expects true or false, got '" + value + "'");
}

}  // namespace detail

/// Flat `key = value` format; `#` starts a comment, lists are comma separated.
inline ExperimentConfig parse_config(std::istream& in) {
    using detail::parse_number;
    ExperimentConfig c;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key == "experiment") c.experiment = value;
        else if (key == "meshes") c.meshes = detail::split_list(value);
        else if (key == "variants") c.variants = detail::split_list(value);
        else if (key == "samples_per_object") c.samples_per_object = parse_number<int>(key, value);
        else if (key == "bins") c.bins = parse_number<int>(key, value);
        else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "output_path") c.output_path = value;
        else if (key == "timing") c.timing = parse_timing(value);
        else if (key == "alpha") c.alpha = parse_number<double>(key, value);
        else if (key == "hybrid_iterations") c.hybrid_iterations = parse_number<int>(key, value);
        else if (key == "model_samples") c.model_samples = parse_number<std::size_t>(key, value);
        else if (key == "max_iter") c.max_iter = parse_number<int>(key, value);
        else if (key == "rel_loss_tol") c.rel_loss_tol = parse_number<double>(key, value);
        else if (key == "tau_max_fraction") c.tau_max_fraction = parse_number<double>(key, value);
        else if (key == "theta_max_deg") c.theta_max_deg = parse_number<double>(key, value);
        else if (key == "cull_back_faces") c.cull_back_faces = detail::parse_bool(key, value);
        else if (key == "max_init_translation") c.max_init_translation = parse_number<double>(key, value);
        else if (key == "depth_noise_levels") {
            c.depth_noise_levels.clear();
            for (const auto& v : detail::split_list(value)) c.depth_noise_levels.push_back(parse_number<double>(key, v));
        } else if (key == "model_noise_levels") {
            c.model_noise_levels.clear();
            for (const auto& v : detail::split_list(value)) c.model_noise_levels.push_back(parse_number<int>(key, v));
        } else if (key == "velocity") c.velocity = parse_number<double>(key, value);
        else if (key == "stop_distance") c.stop_distance = parse_number<double>(key, value);
        else if (key == "max_steps") c.max_steps = parse_number<int>(key, value);
        else if (key == "sequential_model_noise") c.sequential_model_noise = parse_number<int>(key, value);
        else throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config(in);
}

// ---------------------------------------------------------------------------
// Reporting

inline constexpr const char* kReportSchema = "hicp-report/1";

struct ReportRow {
    std::string experiment;
    std::string object;
    std::string variant;
    double level = 0.0;   // pre-VSD bin index, depth noise percent or model noise level
    double pre_vsd = 1.0;
    double post_vsd = 1.0;
    double elapsed_seconds = 0.0;
    std::string status;
    std::uint64_t seed = 0;
    std::string input_hash;
    /// Wall-clock compute time; never written to the CSV.
    double measured_seconds = 0.0;
};

namespace detail {

inline std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_field(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

}  // namespace detail

inline void write_csv(const std::vector<ReportRow>& rows, std::ostream& out) {
    out << "# schema=" << kReportSchema << '\n';
    out << "experiment,object,variant,level,pre_vsd,post_vsd,elapsed_seconds,status,seed,input_hash\n";
    for (const auto& r : rows) {
        out << detail::csv_field(r.experiment) << ',' << detail::csv_field(r.object) << ','
            << detail::csv_field(r.variant) << ',' << detail::fmt_double(r.level) << ',' << detail::fmt_double(r.pre_vsd)
            << ',' << detail::fmt_double(r.post_vsd) << ',' << detail::fmt_double(r.elapsed_seconds) << ','
            << detail::csv_field(r.status) << ',' << r.seed << ',' << r.input_hash << '\n';
    }
}

struct ExperimentResult {
    std::vector<ReportRow> rows;
    /// (object, bin) pairs the rejection sampler could not fill.
    std::vector<std::pair<std::string, int>> unfillable;
};

/// Mean post-VSD per (variant, level) and per-variant timing statistics.
inline void print_summary(const ExperimentResult& res, std::ostream& out) {
    std::vector<std::string> variants;
    std::vector<double> levels;
    for (const auto& r : res.rows) {
        if (std::find(variants.begin(), variants.end(), r.variant) == variants.end()) variants.push_back(r.variant);
        if (std::find(levels.begin(), levels.end(), r.level) == levels.end()) levels.push_back(r.level);
    }
    std::sort(levels.begin(), levels.end());
    out << "Mean post-VSD by level\n" << std::setw(8) << "level";
    for (const auto& v : variants) out << ' ' << std::setw(26) << v;
    out << '\n';
    for (double l : levels) {
        out << std::setw(8) << l;
        for (const auto& v : variants) {
            double sum = 0.0;
            int n = 0;
            for (const auto& r : res.rows)
                if (r.variant == v && r.level == l) {
                    sum += r.post_vsd;
                    ++n;
                }
            out << ' ' << std::setw(26) << std::fixed << std::setprecision(4) << (n ? sum / n : std::nan(""));
            out.unsetf(std::ios::floatfield);
        }
        out << '\n';
    }
    out << "Execution time (s), mean +- std\n";
    for (const auto& v : variants) {
        double sum = 0.0, sq = 0.0;
        int n = 0;
        for (const auto& r : res.rows)
            if (r.variant == v) {
                sum += r.measured_seconds;
                sq += r.measured_seconds * r.measured_seconds;
                ++n;
            }
        const double mean = n ? sum / n : 0.0;
        const double sd = n ? std::sqrt(std::max(0.0, sq / n - mean * mean)) : 0.0;
        out << "  " << std::left << std::setw(40) << v << std::right << std::fixed << std::setprecision(4) << mean
            << " +- " << sd << '\n';
        out.unsetf(std::ios::floatfield);
    }
    for (const auto& [obj, bin] : res.unfillable) out << "warning: bin " << bin << " of " << obj << " unfillable\n";
}

// ---------------------------------------------------------------------------
// Experiments

namespace detail {

struct LoadedObject {
    std::string name;
    TriangleMesh truth;
    double diameter = 0.0;
};

inline std::vector<LoadedObject> load_objects(const ExperimentConfig& cfg) {
    std::vector<LoadedObject> out;
    for (const auto& name : cfg.meshes) {
        LoadedObject o;
        o.name = name;
        o.truth = resolve_mesh(name);
        o.diameter = mesh_diameter(o.truth);
        out.push_back(std::move(o));
    }
    return out;
}

inline ObjectModel model_for(const TriangleMesh& mesh, int noise_level, std::uint64_t seed, std::size_t samples) {
    std::mt19937_64 rng(seed);
    TriangleMesh m = corrupt_mesh(mesh, noise_level, rng);
    return make_object_model(std::move(m), rng, samples);
}

enum : std::uint64_t { kScenarioStream = 1, kNoiseStream = 2, kModelStream = 3, kTrajectoryStream = 4 };

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// Runs every variant on one observation and appends the rows.
inline void run_trial(const ExperimentConfig& cfg, const LoadedObject& obj, const ObjectModel& model, const Scene& scene,
                      const ImageScenario& sc, double level, std::vector<ReportRow>& rows) {
    const VariantSettings settings = cfg.settings();
    const AssociationConfig gates = cfg.gates(model.diameter);
    const RenderedView gt = render_view(obj.truth, sc.ground_truth, scene.cam);
    VsdConfig vsd;
    ContentHash h;
    h.add(scene.depth);
    h.add(sc.initial);
    const std::string hash = h.hex();
    for (const auto& v : cfg.variants) {
        ReportRow r{cfg.experiment, obj.name, v, level, sc.pre_vsd, 1.0, 0.0, "", sc.seed, hash, 0.0};
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const IcpResult res = run_variant(v, model, scene, sc.initial, settings, gates);
            r.measured_seconds = seconds_since(t0);
            r.post_vsd = pose_mean_vsd(obj.truth, res.pose, gt, scene.cam, obj.diameter, vsd);
            r.status = to_string(res.status);
        } catch (const Error& e) {
            r.measured_seconds = seconds_since(t0);
            r.status = std::string("error: ") + e.what();
        }
        r.elapsed_seconds = cfg.timing.kind == Timing::Kind::fixed ? cfg.timing.seconds : r.measured_seconds;
        rows.push_back(std::move(r));
    }
}

inline void run_init_noise(const ExperimentConfig& cfg, const std::vector<LoadedObject>& objs, ExperimentResult& res) {
    const CameraIntrinsics cam = CameraIntrinsics::default_camera();
    for (std::size_t oi = 0; oi < objs.size(); ++oi) {
        const auto& obj = objs[oi];
        const ObjectModel model = model_for(obj.truth, 0, derive_seed(cfg.seed, kModelStream, oi), cfg.model_samples);
        std::mt19937_64 rng(derive_seed(cfg.seed, kScenarioStream, oi));
        auto sampler = [&](std::mt19937_64& g) {
            return make_image_scenario(obj.truth, obj.diameter, cam, g(), PerturbationKind::uniform_translation,
                                       PoseMode::single_image, cfg.max_init_translation);
        };
        const auto binned = rejection_sample_bins<ImageScenario>(cfg.bins, cfg.samples_per_object, sampler, rng);
        for (int b : binned.unfillable) res.unfillable.emplace_back(obj.name, b);
        for (std::size_t b = 0; b < binned.bins.size(); ++b)
            for (const auto& sc : binned.bins[b]) {
                const Scene scene =
                    make_observation(obj.truth, sc.ground_truth, cam, DepthNoiseModel::none(), derive_seed(sc.seed, kNoiseStream));
                run_trial(cfg, obj, model, scene, sc, static_cast<double>(b), res.rows);
            }
    }
}

/// Samples `n` visible mean-error scenarios from a dedicated stream.
inline std::vector<ImageScenario> fixed_perturbation_scenarios(const ExperimentConfig& cfg, const LoadedObject& obj,
                                                               std::size_t oi, const CameraIntrinsics& cam) {
    std::vector<ImageScenario> out;
    std::mt19937_64 rng(derive_seed(cfg.seed, kScenarioStream, oi));
    const std::size_t budget = static_cast<std::size_t>(kAttemptBudgetFactor) * static_cast<std::size_t>(cfg.samples_per_object);
    for (std::size_t attempt = 0; attempt < budget && static_cast<int>(out.size()) < cfg.samples_per_object; ++attempt)
        if (auto s = make_image_scenario(obj.truth, obj.diameter, cam, rng(), PerturbationKind::mean_error))
            out.push_back(std::move(*s));
    return out;
}

inline void run_depth_noise(const ExperimentConfig& cfg, const std::vector<LoadedObject>& objs, ExperimentResult& res) {
    const CameraIntrinsics cam = CameraIntrinsics::default_camera();
    for (std::size_t oi = 0; oi < objs.size(); ++oi) {
        const auto& obj = objs[oi];
        const ObjectModel model = model_for(obj.truth, 0, derive_seed(cfg.seed, kModelStream, oi), cfg.model_samples);
        for (const auto& sc : fixed_perturbation_scenarios(cfg, obj, oi, cam))
            for (double x : cfg.depth_noise_levels) {
                // Same noise seed at every level: the images differ only in noise scale.
                const Scene scene = make_observation(obj.truth, sc.ground_truth, cam, DepthNoiseModel::gaussian(x),
                                                     derive_seed(sc.seed, kNoiseStream));
                run_trial(cfg, obj, model, scene, sc, x, res.rows);
            }
    }
}

inline void run_model_noise(const ExperimentConfig& cfg, const std::vector<LoadedObject>& objs, ExperimentResult& res) {
    const CameraIntrinsics cam = CameraIntrinsics::default_camera();
    for (std::size_t oi = 0; oi < objs.size(); ++oi) {
        const auto& obj = objs[oi];
        std::vector<ObjectModel> models;
        for (int level : cfg.model_noise_levels)
            models.push_back(model_for(obj.truth, level, derive_seed(cfg.seed, kModelStream, oi, static_cast<std::uint64_t>(level)),
                                       cfg.model_samples));
        for (const auto& sc : fixed_perturbation_scenarios(cfg, obj, oi, cam)) {
            const Scene scene =
                make_observation(obj.truth, sc.ground_truth, cam, DepthNoiseModel::none(), derive_seed(sc.seed, kNoiseStream));
            for (std::size_t li = 0; li < models.size(); ++li)
                run_trial(cfg, obj, models[li], scene, sc, cfg.model_noise_levels[li], res.rows);
        }
    }
}

inline void run_sequential(const ExperimentConfig& cfg, const std::vector<LoadedObject>& objs, ExperimentResult& res) {
    const CameraIntrinsics cam = CameraIntrinsics::default_camera();
    const VariantSettings settings = cfg.settings();
    for (std::size_t oi = 0; oi < objs.size(); ++oi) {
        const auto& obj = objs[oi];
        const ObjectModel model = model_for(obj.truth, cfg.sequential_model_noise,
                                            derive_seed(cfg.seed, kModelStream, oi), cfg.model_samples);
        std::mt19937_64 rng(derive_seed(cfg.seed, kScenarioStream, oi));
        auto sampler = [&](std::mt19937_64& g) {
            return make_image_scenario(obj.truth, obj.diameter, cam, g(), PerturbationKind::uniform_translation,
                                       PoseMode::trajectory, cfg.max_init_translation);
        };
        const auto binned = rejection_sample_bins<ImageScenario>(cfg.bins, cfg.samples_per_object, sampler, rng);
        for (int b : binned.unfillable) res.unfillable.emplace_back(obj.name, b);
        for (std::size_t b = 0; b < binned.bins.size(); ++b)
            for (const auto& sc : binned.bins[b]) {
                const TrajectoryScenario ts{&obj.truth, &model, sc.ground_truth, sc.initial};
                ContentHash h;
                h.add(sc.ground_truth);
                h.add(sc.initial);
                for (const auto& v : cfg.variants) {
                    const auto [icp, method] = ExperimentConfig::parse_sequential_variant(v);
                    SequentialConfig sq;
                    sq.variant = icp;
                    sq.method = method;
                    sq.trajectory = cfg.trajectory();
                    sq.noise = DepthNoiseModel::stereo();
                    sq.hybrid = settings.hybrid;
                    std::mt19937_64 noise_rng(derive_seed(sc.seed, kTrajectoryStream));
                    ReportRow r{cfg.experiment, obj.name, v, static_cast<double>(b), sc.pre_vsd, 1.0, 0.0, "", sc.seed, h.hex(), 0.0};
                    const auto t0 = std::chrono::steady_clock::now();
                    try {
                        const TrajectoryReport rep = simulate_trajectory(ts, cam, sq, noise_rng);
                        r.measured_seconds = seconds_since(t0);
                        r.post_vsd = rep.final_vsd;
                        int failed = 0;
                        double elapsed = 0.0;
                        for (const auto& s : rep.steps) {
                            failed += s.status != "ok";
                            elapsed += s.elapsed_seconds;
                        }
                        r.status = "steps=" + std::to_string(rep.steps.size()) + ";failed=" + std::to_string(failed);
                        r.elapsed_seconds = elapsed;
                    } catch (const Error& e) {
                        r.measured_seconds = seconds_since(t0);
                        r.status = std::string("error: ") + e.what();
                        r.elapsed_seconds = cfg.timing.kind == Timing::Kind::fixed ? 0.0 : r.measured_seconds;
                    }
                    res.rows.push_back(std::move(r));
                }
            }
    }
}

}  // namespace detail

/// Runs the configured experiment. Rows are ordered by object, scenario,
/// level and variant; every variant at one comparison point consumes the same
/// depth image and initialisation (see the input_hash column).
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto objs = detail::load_objects(cfg);
    ExperimentResult res;
    if (cfg.experiment == "init_noise")
        detail::run_init_noise(cfg, objs, res);
    else if (cfg.experiment == "depth_noise")
        detail::run_depth_noise(cfg, objs, res);
    else if (cfg.experiment == "model_noise")
        detail::run_model_noise(cfg, objs, res);
    else
        detail::run_sequential(cfg, objs, res);
    return res;
}

}  // namespace hicp
