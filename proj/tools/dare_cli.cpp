// dare: command-line driver for registration, evaluation, analysis and
// synthetic data generation.
//
// Exit codes: 0 success, 2 usage or validation, 3 runtime failure,
// 4 I/O failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dare/core_types.hpp"
#include "dare/io.hpp"
#include "dare/metrics.hpp"
#include "dare/optimizer.hpp"
#include "dare/parallel.hpp"
#include "dare/report.hpp"
#include "dare/synth.hpp"
#include "dare/warp.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Bad flags, bad config values, missing inputs.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitIo = 4;

// Every option reachable from the command line is also settable from the
// --config JSON object, keyed by the long flag name ("grad-tol", "lambda0").
class Bindings {
public:
    template <class T>
    CLI::Option *option(CLI::App *app, const std::string &name, T &target, const std::string &help) {
        setters_[name] = [&target, name](const json &j) {
            try {
                target = j.get<T>();
            } catch (const json::exception &) {
                throw UsageError("config: wrong type for '" + name + "'");
            }
        };
        return app->add_option("--" + name, target, help)->capture_default_str();
    }

    CLI::Option *flag(CLI::App *app, const std::string &name, bool &target, const std::string &help) {
        setters_[name] = [&target, name](const json &j) {
            if (!j.is_boolean()) throw UsageError("config: '" + name + "' must be true or false");
            target = j.get<bool>();
        };
        return app->add_flag("--" + name, target, help);
    }

    void apply(const json &config) const {
        if (!config.is_object()) throw UsageError("config file must hold a JSON object");
        for (const auto &[key, value] : config.items()) {
            const auto it = setters_.find(key);
            if (it == setters_.end()) throw UsageError("config: unknown key '" + key + "'");
            it->second(value);
        }
    }

private:
    std::map<std::string, std::function<void(const json &)>> setters_;
};

struct Common {
    std::string config;
    int threads = 0;
    bool deterministic = false;
    std::uint64_t seed = 0;
};

struct ParamOptions {
    dare::AdaptiveParams p;
};

struct RegisterOptions {
    std::string fixed, moving, out_dir;
    std::string regularizer = "dare";
    std::string similarity = "lncc";
    std::string step_rule = "adam";
    double weight = 1.0;
    double folding_weight = -1.0; // negative: DARE uses c, the baselines use 0
    double lambda = 1.0;
    double mu = 1.0;
    double tv_eps = 1e-6;
    bool frozen = false;
    int levels = 3;
    int iters = 200;
    double step = 0.1;
    double grad_tol = 1e-4;
    int window_radius = 0; // 0: similarity default
    int mi_bins = 32;
    double epsilon = 1e-5;
};

struct EvaluateOptions {
    std::string fixed_labels, moving_labels, displacement, out_dir;
    std::vector<int> labels;
};

struct AnalyzeOptions {
    std::string displacement, out_dir;
    bool curves_only = false;
    double g_max = 1.0;
    int points = 200;
};

struct SynthOptions {
    std::string out_dir;
    std::vector<int> dims{32, 32, 32};
    std::string deformation = "bumps";
    int bumps = 6;
    double amplitude = 3.0;
    double sigma = 6.0;
    double dilation = 0.0;
    std::vector<double> translation{0.0, 0.0, 0.0};
    std::string texture = "blobs";
    int blobs = 80;
    int checker_period = 4;
    int spheres = 3;
    std::string format = "bin";
};

void add_common(CLI::App *app, Bindings &b, Common &c) {
    app->add_option("--config", c.config, "JSON object whose keys override flags");
    b.option(app, "threads", c.threads, "worker threads (0 = hardware concurrency)");
    b.option(app, "seed", c.seed, "random seed");
    b.flag(app, "deterministic", c.deterministic,
           "bit-reproducible reductions (always on: sums use a fixed order at any thread count)");
}

void add_params(CLI::App *app, Bindings &b, ParamOptions &o) {
    b.option(app, "lambda0", o.p.lambda0, "base first Lamé parameter");
    b.option(app, "mu0", o.p.mu0, "base shear modulus");
    b.option(app, "c", o.p.c, "folding penalty weight");
    b.option(app, "delta", o.p.delta, "gradient-adjustment magnitude of lambda and mu");
    b.option(app, "beta0", o.p.beta0, "sensitivity of the adaptive weight alpha");
    b.option(app, "tau", o.p.tau, "sigmoid centre of mu");
    b.option(app, "kappa", o.p.kappa, "sigmoid scale of mu");
    b.option(app, "theta", o.p.theta, "exponential sensitivity of lambda");
}

void load_config(const Common &c, const Bindings &b) {
    if (c.config.empty()) return;
    if (!fs::exists(c.config)) throw UsageError("config file not found: " + c.config);
    std::ifstream in(c.config);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception &e) {
        throw UsageError("config file " + c.config + " is not valid JSON: " + e.what());
    }
    b.apply(j);
}

void require_input(const std::string &path, const std::string &what) {
    if (path.empty()) throw UsageError("missing " + what);
    if (!fs::exists(path)) throw UsageError(what + " not found: " + path);
    if (fs::path(path).extension() == ".bin" && !fs::exists(dare::sidecar_path(path))) {
        throw UsageError(what + " sidecar not found: " + dare::sidecar_path(path).string());
    }
}

void require_out_dir(const std::string &dir) {
    if (dir.empty()) throw UsageError("missing --out-dir");
}

void prepare_out_dir(const std::string &dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw dare::IoError(dare::IoErrc::WriteFailed, "cannot create output directory " + dir + ": " + ec.message());
}

template <class Enum>
Enum pick(const std::string &flag, const std::string &value, const std::map<std::string, Enum> &choices) {
    const auto it = choices.find(value);
    if (it != choices.end()) return it->second;
    std::string allowed;
    for (const auto &[name, _] : choices) allowed += (allowed.empty() ? "" : "|") + name;
    throw UsageError("--" + flag + " must be one of " + allowed + ", got '" + value + "'");
}

void validate_common(const Common &c) {
    if (c.threads < 0) throw UsageError("--threads must be >= 0");
}

dare::RegistrationConfig registration_config(const RegisterOptions &o, const ParamOptions &po, const Common &c) {
    dare::RegistrationConfig cfg;
    const auto sim = pick<dare::SimilarityKind>(
        "similarity", o.similarity,
        {{"lncc", dare::SimilarityKind::LNCC}, {"mi", dare::SimilarityKind::LocalMI}, {"ssd", dare::SimilarityKind::SSD}});
    cfg.similarity = dare::default_similarity_config(sim);
    if (o.window_radius != 0) cfg.similarity.window_radius = o.window_radius;
    cfg.similarity.mi_bins = o.mi_bins;
    cfg.similarity.epsilon = o.epsilon;

    cfg.regularizer.kind = pick<dare::RegularizerKind>("regularizer", o.regularizer,
                                                       {{"dare", dare::RegularizerKind::DARE},
                                                        {"elastic", dare::RegularizerKind::Elastic},
                                                        {"diffusion", dare::RegularizerKind::Diffusion},
                                                        {"tv", dare::RegularizerKind::TV},
                                                        {"bending", dare::RegularizerKind::Bending}});
    cfg.regularizer.adaptive = po.p;
    cfg.regularizer.lambda = o.lambda;
    cfg.regularizer.mu = o.mu;
    cfg.regularizer.tv_eps = o.tv_eps;
    cfg.regularizer.weight = o.weight;
    if (o.folding_weight >= 0.0) cfg.regularizer.folding_weight = o.folding_weight;
    cfg.regularizer.frozen_coefficients = o.frozen;

    cfg.pyramid_levels = o.levels;
    cfg.iters_per_level = o.iters;
    cfg.step_rule = pick<dare::StepRule>(
        "step-rule", o.step_rule, {{"adam", dare::StepRule::Adam}, {"line-search", dare::StepRule::GradientDescentLineSearch}});
    cfg.step_size = o.step;
    cfg.grad_tol = o.grad_tol;
    cfg.seed = c.seed;
    try {
        cfg.validate();
    } catch (const std::invalid_argument &e) {
        throw UsageError(e.what());
    }
    return cfg;
}

void validate_params(const ParamOptions &po) {
    try {
        po.p.validate();
    } catch (const std::invalid_argument &e) {
        throw UsageError(e.what());
    }
}

dare::Volume normalized(const dare::Volume &v, const std::string &path) {
    try {
        return dare::normalize_intensity(v);
    } catch (const std::invalid_argument &e) {
        throw UsageError(path + ": " + e.what());
    }
}

int run_register(const RegisterOptions &o, const ParamOptions &po, const Common &c) {
    const dare::RegistrationConfig cfg = registration_config(o, po, c);
    require_input(o.fixed, "fixed volume");
    require_input(o.moving, "moving volume");
    require_out_dir(o.out_dir);

    const dare::Volume fixed = dare::read_volume(o.fixed);
    const dare::Volume moving = dare::read_volume(o.moving);
    if (fixed.dims() != moving.dims()) throw UsageError("fixed and moving volumes differ in dims");

    const dare::RegistrationResult result = dare::register_volumes(normalized(fixed, o.fixed), normalized(moving, o.moving), cfg);
    const dare::Volume warped = dare::warp_trilinear(moving, result.u);

    prepare_out_dir(o.out_dir);
    const fs::path out(o.out_dir);
    const std::string ext = fs::path(o.moving).extension() == ".nii" ? ".nii" : ".bin";
    dare::write_displacement(out / "displacement.bin", result.u, fixed.spacing());
    dare::write_volume(out / ("warped" + ext), warped);
    dare::write_text(out / "trace.csv", dare::trace_csv(result.trace));

    for (const dare::LevelSummary &l : result.trace.levels) {
        std::printf("level %d  dims %dx%dx%d  iterations %d%s  %%|J|<=0 %s\n", l.level, l.dims.nx, l.dims.ny, l.dims.nz,
                    l.iterations, l.converged ? " (converged)" : "", dare::format_number(l.pct_jac_le0).c_str());
        if (l.singular_voxels > 0) {
            std::fprintf(stderr, "warning: level %d hit %zu voxel(s) with det(I + grad u) exactly 0\n", l.level,
                         l.singular_voxels);
        }
    }
    if (!result.trace.records.empty()) {
        std::printf("final total energy %s\n", dare::format_number(result.trace.records.back().energy.total).c_str());
    }
    return 0;
}

int run_evaluate(const EvaluateOptions &o) {
    require_input(o.fixed_labels, "fixed labels");
    require_input(o.moving_labels, "moving labels");
    require_input(o.displacement, "displacement");
    require_out_dir(o.out_dir);

    const dare::LabelMap fixed = dare::read_labels(o.fixed_labels);
    const dare::LabelMap moving = dare::read_labels(o.moving_labels);
    dare::Spacing spacing{1.0, 1.0, 1.0};
    const dare::DisplacementField u = dare::read_displacement(o.displacement, &spacing);
    if (fixed.dims() != moving.dims() || fixed.dims() != u.dims()) {
        throw UsageError("label maps and displacement differ in dims");
    }

    std::vector<std::int32_t> structures(o.labels.begin(), o.labels.end());
    if (structures.empty()) {
        std::set<std::int32_t> present;
        for (std::int32_t l : fixed.labels()) present.insert(l);
        for (std::int32_t l : moving.labels()) present.insert(l);
        present.erase(0);
        structures.assign(present.begin(), present.end());
    }
    for (std::int32_t l : structures) {
        if (l <= 0) throw UsageError("--labels entries must be positive label IDs");
    }

    const dare::MetricsReport r = dare::evaluate_registration(fixed, moving, u, structures, spacing);
    for (const auto &[label, change] : r.volume_changes) {
        if (!change.percent) {
            std::fprintf(stderr, "warning: label %d is absent from the moving map; volume change undefined\n", label);
        }
    }

    prepare_out_dir(o.out_dir);
    const fs::path out(o.out_dir);
    dare::write_text(out / "metrics.json", dare::metrics_json(r).dump(2) + "\n");
    dare::write_text(out / "dice.csv", dare::dice_csv(r.dice));
    dare::write_text(out / "summary.csv", dare::summary_csv(r));
    dare::write_text(out / "volume_change.csv", dare::volume_change_csv(r.volume_changes));
    dare::write_text(out / "neg_jac_histogram.csv", dare::histogram_csv(r.jacobian.neg_histogram));
    dare::write_text(out / "strain_histogram.csv", dare::histogram_csv(r.strain.histogram));
    std::printf("mean dice %s  %%|J|>=1 %s  %%|J|<=0 %s  SE %s\n", dare::format_number(r.dice.mean).c_str(),
                dare::format_number(r.jacobian.pct_ge1).c_str(), dare::format_number(r.jacobian.pct_le0).c_str(),
                dare::format_number(r.strain_energy).c_str());
    return 0;
}

int run_analyze(const AnalyzeOptions &o, const ParamOptions &po) {
    validate_params(po);
    if (!(o.g_max > 0.0)) throw UsageError("--g-max must be > 0");
    if (o.points < 2) throw UsageError("--points must be >= 2");
    if (o.displacement.empty() && !o.curves_only) throw UsageError("give --displacement or --curves-only");
    require_out_dir(o.out_dir);

    const fs::path out(o.out_dir);
    const std::vector<dare::CurvePoint> curves = dare::parameter_curves(po.p, o.g_max, o.points);
    if (o.curves_only) {
        prepare_out_dir(o.out_dir);
        dare::write_text(out / "curves.csv", dare::curves_csv(curves));
        return 0;
    }

    require_input(o.displacement, "displacement");
    dare::Spacing spacing{1.0, 1.0, 1.0};
    const dare::DisplacementField u = dare::read_displacement(o.displacement, &spacing);
    const dare::ParameterEnergyTable table = dare::parameter_energy_table(u, po.p, o.g_max, spacing);
    const dare::JacobianStats jac = dare::jacobian_stats(u, spacing);
    const dare::StrainDistribution strain = dare::strain_distribution(u, 1.0, spacing);

    prepare_out_dir(o.out_dir);
    dare::write_text(out / "curves.csv", dare::curves_csv(curves));
    dare::write_text(out / "scatter.csv", dare::scatter_csv(table.records));
    dare::write_text(out / "neg_jac_histogram.csv", dare::histogram_csv(jac.neg_histogram));
    dare::write_text(out / "strain_histogram.csv", dare::histogram_csv(strain.histogram));
    return 0;
}

int run_synth(const SynthOptions &o, const Common &c) {
    if (o.dims.size() != 3) throw UsageError("--dims takes three values");
    if (o.translation.size() != 3) throw UsageError("--translation takes three values");
    if (o.format != "bin" && o.format != "nii") throw UsageError("--format must be bin or nii");
    require_out_dir(o.out_dir);

    dare::SynthSpec spec;
    spec.dims = {o.dims[0], o.dims[1], o.dims[2]};
    spec.seed = c.seed;
    spec.deformation = pick<dare::DeformationKind>("deformation", o.deformation,
                                                   {{"bumps", dare::DeformationKind::GaussianBumps},
                                                    {"dilation", dare::DeformationKind::Dilation},
                                                    {"translation", dare::DeformationKind::Translation}});
    spec.bump_count = o.bumps;
    spec.max_amplitude = o.amplitude;
    spec.sigma = o.sigma;
    spec.dilation = o.dilation;
    spec.translation = {o.translation[0], o.translation[1], o.translation[2]};
    spec.texture = pick<dare::TextureKind>("texture", o.texture,
                                           {{"blobs", dare::TextureKind::BlobPhantom},
                                            {"ramp", dare::TextureKind::Ramp},
                                            {"checker", dare::TextureKind::Checkerboard}});
    spec.n_blobs = o.blobs;
    spec.checker_period = o.checker_period;
    spec.label_spheres = o.spheres;
    try {
        spec.validate();
    } catch (const std::invalid_argument &e) {
        throw UsageError(e.what());
    }

    const dare::SynthPair pair = dare::make_pair(spec);

    prepare_out_dir(o.out_dir);
    const fs::path out(o.out_dir);
    const std::string ext = "." + o.format;
    dare::write_volume(out / ("fixed" + ext), pair.fixed);
    dare::write_volume(out / ("moving" + ext), pair.moving);
    dare::write_displacement(out / "u_gt.bin", pair.u_gt);
    dare::write_labels(out / ("labels_fixed" + ext), pair.labels_fixed);
    dare::write_labels(out / ("labels_moving" + ext), pair.labels_moving);
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Adaptive elastic deformable registration"};
    app.require_subcommand(1);

    Common common;
    ParamOptions params;
    RegisterOptions reg;
    EvaluateOptions eval;
    AnalyzeOptions analyze;
    SynthOptions synth;

    Bindings reg_b, eval_b, analyze_b, synth_b;

    CLI::App *reg_cmd = app.add_subcommand("register", "register a moving volume onto a fixed volume");
    add_common(reg_cmd, reg_b, common);
    add_params(reg_cmd, reg_b, params);
    reg_b.option(reg_cmd, "fixed", reg.fixed, "fixed volume (.nii or .bin)");
    reg_b.option(reg_cmd, "moving", reg.moving, "moving volume (.nii or .bin)");
    reg_b.option(reg_cmd, "out-dir", reg.out_dir, "output directory");
    reg_b.option(reg_cmd, "regularizer", reg.regularizer, "dare|elastic|diffusion|tv|bending");
    reg_b.option(reg_cmd, "similarity", reg.similarity, "lncc|mi|ssd");
    reg_b.option(reg_cmd, "weight", reg.weight, "overall regularizer weight");
    reg_b.option(reg_cmd, "folding-weight", reg.folding_weight, "folding weight; negative uses c for dare and 0 otherwise");
    reg_b.option(reg_cmd, "lambda", reg.lambda, "constant Lamé lambda (elastic)");
    reg_b.option(reg_cmd, "mu", reg.mu, "constant Lamé mu (elastic)");
    reg_b.option(reg_cmd, "tv-eps", reg.tv_eps, "TV smoothing");
    reg_b.flag(reg_cmd, "frozen-coefficients", reg.frozen, "do not differentiate through lambda, mu, alpha");
    reg_b.option(reg_cmd, "levels", reg.levels, "pyramid levels");
    reg_b.option(reg_cmd, "iters", reg.iters, "iterations per level");
    reg_b.option(reg_cmd, "step-rule", reg.step_rule, "adam|line-search");
    reg_b.option(reg_cmd, "step", reg.step, "step size in voxels");
    reg_b.option(reg_cmd, "grad-tol", reg.grad_tol, "per-level stopping tolerance");
    reg_b.option(reg_cmd, "window-radius", reg.window_radius, "similarity window radius (0 = default for the kind)");
    reg_b.option(reg_cmd, "mi-bins", reg.mi_bins, "local MI histogram bins");
    reg_b.option(reg_cmd, "epsilon", reg.epsilon, "LNCC variance stabilizer");

    CLI::App *eval_cmd = app.add_subcommand("evaluate", "compute overlap, Jacobian and strain metrics");
    add_common(eval_cmd, eval_b, common);
    eval_b.option(eval_cmd, "fixed-labels", eval.fixed_labels, "fixed label map");
    eval_b.option(eval_cmd, "moving-labels", eval.moving_labels, "moving label map");
    eval_b.option(eval_cmd, "displacement", eval.displacement, "displacement field (.bin)");
    eval_b.option(eval_cmd, "out-dir", eval.out_dir, "output directory");
    eval_b.option(eval_cmd, "labels", eval.labels, "structures for volume change (default: all)")->delimiter(',');

    CLI::App *analyze_cmd = app.add_subcommand("analyze", "export parameter curves, scatter data and histograms");
    add_common(analyze_cmd, analyze_b, common);
    add_params(analyze_cmd, analyze_b, params);
    analyze_b.option(analyze_cmd, "displacement", analyze.displacement, "displacement field (.bin)");
    analyze_b.option(analyze_cmd, "out-dir", analyze.out_dir, "output directory");
    analyze_b.flag(analyze_cmd, "curves-only", analyze.curves_only, "only the analytic parameter curves");
    analyze_b.option(analyze_cmd, "g-max", analyze.g_max, "upper end of the curve range");
    analyze_b.option(analyze_cmd, "points", analyze.points, "curve samples");

    CLI::App *synth_cmd = app.add_subcommand("synth", "generate a synthetic pair with known deformation");
    add_common(synth_cmd, synth_b, common);
    synth_b.option(synth_cmd, "out-dir", synth.out_dir, "output directory");
    synth_b.option(synth_cmd, "dims", synth.dims, "nx,ny,nz")->delimiter(',')->expected(3);
    synth_b.option(synth_cmd, "deformation", synth.deformation, "bumps|dilation|translation");
    synth_b.option(synth_cmd, "bumps", synth.bumps, "number of Gaussian bumps");
    synth_b.option(synth_cmd, "amplitude", synth.amplitude, "maximum displacement norm in voxels");
    synth_b.option(synth_cmd, "sigma", synth.sigma, "bump width in voxels");
    synth_b.option(synth_cmd, "dilation", synth.dilation, "dilation rate s for u = s (x - centre)");
    synth_b.option(synth_cmd, "translation", synth.translation, "tx,ty,tz")->delimiter(',')->expected(3);
    synth_b.option(synth_cmd, "texture", synth.texture, "blobs|ramp|checker");
    synth_b.option(synth_cmd, "blobs", synth.blobs, "blob count of the phantom");
    synth_b.option(synth_cmd, "checker-period", synth.checker_period, "checkerboard period");
    synth_b.option(synth_cmd, "spheres", synth.spheres, "concentric label spheres");
    synth_b.option(synth_cmd, "format", synth.format, "bin|nii");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    // The synthetic benchmark pair is the seed-7 draw.
    if (synth_cmd->parsed() && synth_cmd->count("--seed") == 0) common.seed = 7;

    try {
        if (reg_cmd->parsed()) {
            load_config(common, reg_b);
        } else if (eval_cmd->parsed()) {
            load_config(common, eval_b);
        } else if (analyze_cmd->parsed()) {
            load_config(common, analyze_b);
        } else {
            load_config(common, synth_b);
        }
        validate_common(common);
        dare::set_num_threads(common.threads);

        if (reg_cmd->parsed()) return run_register(reg, params, common);
        if (eval_cmd->parsed()) return run_evaluate(eval);
        if (analyze_cmd->parsed()) return run_analyze(analyze, params);
        return run_synth(synth, common);
    } catch (const UsageError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const dare::IoError &e) {
        std::fprintf(stderr, "I/O error: %s\n", e.what());
        return kExitIo;
    } catch (const dare::RegistrationError &e) {
        std::fprintf(stderr, "registration failed: %s\n", e.what());
        return kExitRuntime;
    } catch (const dare::SynthError &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    } catch (const std::invalid_argument &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception &e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
}
