// rve-scope: estimates the representative volume element size of a two-phase
// micrograph from moving-window Fisher score statistics, with no FE
// simulation involved. Subcommands: run, generate, curve.

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rvescope/rvescope.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitGeneration = 4;
constexpr int kExitNumerical = 5;

std::vector<int> parse_sizes(const std::string& text) {
    std::vector<int> sizes;
    if (text.find(':') != std::string::npos) {
        int lo = 0, hi = 0, step = 0;
        char c1 = 0, c2 = 0;
        std::istringstream in(text);
        if (!(in >> lo >> c1 >> hi >> c2 >> step) || c1 != ':' || c2 != ':' || step < 1 || hi < lo)
            throw rvescope::ConfigError("--sizes: expected min:max:step with step >= 1, got '" + text + "'");
        for (int w = lo; w <= hi; w += step) sizes.push_back(w);
        return sizes;
    }
    std::istringstream in(text);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        if (tok.empty()) continue;
        sizes.push_back(std::atoi(tok.c_str()));
    }
    if (sizes.empty()) throw rvescope::ConfigError("--sizes: no sizes parsed from '" + text + "'");
    return sizes;
}

int threads_from_env() {
    if (const char* env = std::getenv("RVE_SCOPE_THREADS")) {
        const int t = std::atoi(env);
        if (t >= 1) return t;
    }
    return 1;
}

struct RunOptions {
    std::string input;
    double scale = 0.0; // 0: sidecar or default
    int threshold = -1; // <0: Otsu
    int ls = 21;
    std::string model = "logistic";
    double lambda = 1e-4;
    std::string a_mode = "diag";
    std::string sizes_text;
    int stride = 1;
    double ridge_eps = 1e-8;
    int cv_folds = 5;
    std::uint64_t seed = 0;
    int threads = 0; // 0: env or 1
    int sgd_epochs = 2;
    int batch_size = 4096;
    double learning_rate = 0.0; // 0: model default / tuning grid
    int polish_max_iters = 2000;
    double grad_tol = 1e-6;
    std::string csv_path;
    std::string svg_path;
    std::string report_path;
    std::string dump_scores_path;
    std::string save_model_path;
    std::string config_path;
};

// Applies a flat `key = value` config file to the run options. Keys mirror
// the long flag names; values given on the command line win.
void apply_run_config(const std::string& path, const CLI::App& run, RunOptions& o) {
    std::ifstream in(path);
    if (!in) throw rvescope::ConfigError("cannot open config file " + path);
    auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t"));
        s.erase(s.find_last_not_of(" \t") + 1);
        return s;
    };
    struct Key {
        const char* flag;
        std::function<void(const std::string&)> set;
    };
    const std::vector<Key> keys = {
        {"--input", [&](const std::string& v) { o.input = v; }},
        {"--scale", [&](const std::string& v) { o.scale = std::stod(v); }},
        {"--threshold", [&](const std::string& v) { o.threshold = std::stoi(v); }},
        {"--ls", [&](const std::string& v) { o.ls = std::stoi(v); }},
        {"--model", [&](const std::string& v) { o.model = v; }},
        {"--lambda", [&](const std::string& v) { o.lambda = std::stod(v); }},
        {"--a", [&](const std::string& v) { o.a_mode = v; }},
        {"--sizes", [&](const std::string& v) { o.sizes_text = v; }},
        {"--stride", [&](const std::string& v) { o.stride = std::stoi(v); }},
        {"--ridge-eps", [&](const std::string& v) { o.ridge_eps = std::stod(v); }},
        {"--folds", [&](const std::string& v) { o.cv_folds = std::stoi(v); }},
        {"--seed", [&](const std::string& v) { o.seed = std::stoull(v); }},
        {"--threads", [&](const std::string& v) { o.threads = std::stoi(v); }},
        {"--sgd-epochs", [&](const std::string& v) { o.sgd_epochs = std::stoi(v); }},
        {"--batch-size", [&](const std::string& v) { o.batch_size = std::stoi(v); }},
        {"--learning-rate", [&](const std::string& v) { o.learning_rate = std::stod(v); }},
        {"--polish-max-iters", [&](const std::string& v) { o.polish_max_iters = std::stoi(v); }},
        {"--grad-tol", [&](const std::string& v) { o.grad_tol = std::stod(v); }},
        {"--csv", [&](const std::string& v) { o.csv_path = v; }},
        {"--svg", [&](const std::string& v) { o.svg_path = v; }},
        {"--report", [&](const std::string& v) { o.report_path = v; }},
        {"--dump-scores", [&](const std::string& v) { o.dump_scores_path = v; }},
        {"--save-model", [&](const std::string& v) { o.save_model_path = v; }},
    };
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw rvescope::ConfigError(path + ":" + std::to_string(lineno) +
                                        ": expected `key = value`");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        bool known = false;
        for (const auto& k : keys) {
            if (key == k.flag + 2) { // strip the leading --
                known = true;
                if (run.count(k.flag) == 0) {
                    try {
                        k.set(value);
                    } catch (const std::exception&) {
                        throw rvescope::ConfigError(path + ":" + std::to_string(lineno) +
                                                    ": invalid value '" + value + "' for " + key);
                    }
                }
                break;
            }
        }
        if (!known)
            throw rvescope::ConfigError(path + ":" + std::to_string(lineno) +
                                        ": unknown config key '" + key + "'");
    }
}

std::string resolved_config_text(const RunOptions& o, const std::vector<int>& sizes,
                                 double scale, int threshold_used, int threads) {
    std::ostringstream out;
    out << "  input = " << o.input << '\n';
    out << "  scale_um_per_px = " << scale << '\n';
    out << "  threshold = " << (o.threshold < 0 ? "otsu:" + std::to_string(threshold_used)
                                                : std::to_string(threshold_used)) << '\n';
    out << "  ls = " << o.ls << '\n';
    out << "  model = " << o.model << '\n';
    out << "  lambda = " << o.lambda << '\n';
    out << "  a = " << o.a_mode << '\n';
    out << "  sizes =";
    for (int w : sizes) out << ' ' << w;
    out << '\n';
    out << "  stride = " << o.stride << '\n';
    out << "  ridge_eps = " << o.ridge_eps << '\n';
    out << "  folds = " << o.cv_folds << '\n';
    out << "  seed = " << o.seed << '\n';
    out << "  threads = " << threads << '\n';
    out << "  sgd_epochs = " << o.sgd_epochs << '\n';
    out << "  batch_size = " << o.batch_size << '\n';
    out << "  learning_rate = " << (o.learning_rate > 0.0 ? std::to_string(o.learning_rate) : "auto") << '\n';
    out << "  polish_max_iters = " << o.polish_max_iters << '\n';
    out << "  grad_tol = " << o.grad_tol << '\n';
    return out.str();
}

void emit_report(const std::string& path, const rvescope::RveCurve& curve,
                 const std::string& resolved) {
    if (path.empty()) {
        rvescope::write_report(std::cout, curve, resolved);
    } else {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw rvescope::IoError("cannot write report " + path);
        rvescope::write_report(out, curve, resolved);
        if (!out) throw rvescope::IoError("short write to report " + path);
    }
}

int run_command(const RunOptions& o) {
    using namespace rvescope;
    if (o.input.empty()) throw ConfigError("--input is required (as a flag or config file key)");
    const int threads = o.threads > 0 ? o.threads : threads_from_env();

    std::optional<int> threshold;
    if (o.threshold >= 0) threshold = o.threshold;
    std::optional<double> scale;
    if (o.scale > 0.0) scale = o.scale;

    int threshold_used = 0;
    const Micrograph m = load_micrograph(o.input, threshold, scale, &threshold_used);

    PipelineConfig cfg;
    cfg.ls = o.ls;
    cfg.model_kind = parse_model_kind(o.model);
    cfg.lambda = o.lambda;
    cfg.a_mode = parse_cov_mode(o.a_mode);
    cfg.stride = o.stride;
    cfg.ridge_eps = o.ridge_eps;
    cfg.opt.sgd_epochs = o.sgd_epochs;
    cfg.opt.batch_size = o.batch_size;
    if (o.learning_rate > 0.0) cfg.opt.learning_rate = o.learning_rate;
    else if (cfg.model_kind == ModelKind::Mlp) cfg.opt.learning_rate = 0.0; // tune over grid
    cfg.opt.polish_max_iters = o.polish_max_iters;
    cfg.opt.grad_tol = o.grad_tol;
    cfg.opt.cv_folds = o.cv_folds;
    cfg.opt.seed = o.seed;
    cfg.opt.threads = threads;

    NeighborhoodDataset probe_ds = extract_dataset(m, o.ls);
    if (!o.sizes_text.empty()) cfg.sizes = parse_sizes(o.sizes_text);
    const std::vector<int> sizes =
        cfg.sizes.empty() ? default_size_grid(o.ls, probe_ds.interior_height(), probe_ds.interior_width())
                          : cfg.sizes;
    cfg.sizes = sizes;

    const RveCurve curve = run_sweep(m, cfg);

    if (!o.dump_scores_path.empty() || !o.save_model_path.empty()) {
        // refit for the extras; run_sweep releases its model and score field
        OptimizerSettings opt = cfg.opt;
        opt.cv_folds = 0;
        if (cfg.model_kind == ModelKind::Logistic) {
            auto [model, rep] = fit_logistic(probe_ds, cfg.lambda, opt, cfg.ls);
            if (!o.save_model_path.empty()) save_model(o.save_model_path, model);
            if (!o.dump_scores_path.empty())
                dump_score_field(o.dump_scores_path, compute_score_field<float>(probe_ds, model, threads));
        } else {
            auto [model, rep] = fit_mlp(probe_ds, cfg.lambda, opt, cfg.ls);
            if (!o.save_model_path.empty()) save_model(o.save_model_path, model);
            if (!o.dump_scores_path.empty())
                dump_score_field(o.dump_scores_path, compute_score_field<float>(probe_ds, model, threads));
        }
    }

    const std::string resolved = resolved_config_text(o, sizes, m.scale_um_per_px, threshold_used, threads);
    if (!o.csv_path.empty()) write_curve_csv(o.csv_path, curve);
    if (!o.svg_path.empty()) write_curve_svg(o.svg_path, curve);
    emit_report(o.report_path, curve, resolved);
    return kExitOk;
}

struct GenerateOptions {
    std::string kind = "boolean-disks";
    double vf = 0.1;
    int radius = 6;
    int height = 512;
    int width = 512;
    double scale = 1.0;
    std::uint64_t seed = 0;
    double vf_left = 0.05;
    double vf_right = 0.20;
    int radius_left = 0;
    int radius_right = 0;
    int parents = 4096;
    int offspring = 16;
    int cluster_radius = 24;
    int upsample = 1;
    std::string out;
};

int generate_command(const GenerateOptions& o) {
    using namespace rvescope;
    GeneratorSpec spec;
    spec.kind = parse_generator_kind(o.kind);
    spec.target_vf = o.vf;
    spec.particle_radius = o.radius;
    spec.seed = o.seed;
    spec.region_vf_left = o.vf_left;
    spec.region_vf_right = o.vf_right;
    spec.region_radius_left = o.radius_left;
    spec.region_radius_right = o.radius_right;
    spec.parent_cap = o.parents;
    spec.offspring_count = o.offspring;
    spec.cluster_radius = o.cluster_radius;
    Micrograph m = generate(spec, o.height, o.width, o.scale);
    if (o.upsample > 1) m = upsample_nn(m, o.upsample);
    save_micrograph_pgm(o.out, m);
    std::cout << "wrote " << o.out << " (" << m.width << "x" << m.height << "), realized vf = "
              << m.volume_fraction() << "\n";
    return kExitOk;
}

struct CurveOptions {
    std::string csv;
    std::string report_path;
    std::string svg_path;
};

int curve_command(const CurveOptions& o) {
    using namespace rvescope;
    double scale = 1.0;
    RveCurve curve;
    curve.points = read_curve_csv(o.csv, &scale);
    curve.scale_um_per_px = scale;
    if (curve.points.size() < 4)
        throw ConfigError("curve: need at least 4 CSV rows for elbow detection");
    std::vector<double> ws, ds;
    for (const auto& p : curve.points) {
        ws.push_back(p.w);
        ds.push_back(p.d_bar);
    }
    curve.elbow = detect_elbow(ws, ds);
    curve.rve_pixels = curve.points[static_cast<std::size_t>(curve.elbow.rve_index)].w;
    curve.rve_physical_um = curve.rve_pixels * scale;
    curve.fit.cv_balanced_accuracy = std::numeric_limits<double>::quiet_NaN();
    if (!o.svg_path.empty()) write_curve_svg(o.svg_path, curve);
    emit_report(o.report_path, curve, "  (re-analysis of " + o.csv + ")\n");
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"RVE size determination from two-phase micrographs via windowed Fisher score statistics"};
    app.require_subcommand(1);

    RunOptions run_opts;
    CLI::App* run = app.add_subcommand("run", "run the full sweep on a micrograph");
    run->add_option("--config", run_opts.config_path,
                    "flat key = value configuration file; flags override it");
    run->add_option("--input", run_opts.input, "input micrograph (PGM P2/P5 or grayscale PNG)");
    run->add_option("--scale", run_opts.scale, "physical scale, um per pixel (overrides .meta sidecar)");
    run->add_option("--threshold", run_opts.threshold, "binarization threshold (default: Otsu)");
    run->add_option("--ls", run_opts.ls, "neighborhood side length, odd (default 21)");
    run->add_option("--model", run_opts.model, "model kind: logistic | mlp");
    run->add_option("--lambda", run_opts.lambda, "L2 regularization strength");
    run->add_option("--a", run_opts.a_mode, "scaling matrix A: full | diag");
    run->add_option("--sizes", run_opts.sizes_text, "window sizes: min:max:step or comma list");
    run->add_option("--stride", run_opts.stride, "position subsampling stride (default 1)");
    run->add_option("--ridge-eps", run_opts.ridge_eps, "relative covariance ridge");
    run->add_option("--folds", run_opts.cv_folds, "CV folds for balanced accuracy (0 disables)");
    run->add_option("--seed", run_opts.seed, "random seed");
    run->add_option("--threads", run_opts.threads, "worker threads (default: RVE_SCOPE_THREADS or 1)");
    run->add_option("--sgd-epochs", run_opts.sgd_epochs, "mini-batch SGD epochs before the polish");
    run->add_option("--batch-size", run_opts.batch_size, "SGD batch size");
    run->add_option("--learning-rate", run_opts.learning_rate, "SGD learning rate (0 = default/tuned)");
    run->add_option("--polish-max-iters", run_opts.polish_max_iters, "full-batch polish iteration cap");
    run->add_option("--grad-tol", run_opts.grad_tol, "polish gradient infinity-norm tolerance");
    run->add_option("--csv", run_opts.csv_path, "write the curve as CSV");
    run->add_option("--svg", run_opts.svg_path, "write the curve plot as SVG");
    run->add_option("--report", run_opts.report_path, "write the report here instead of stdout");
    run->add_option("--dump-scores", run_opts.dump_scores_path, "debug: dump the raw score field");
    run->add_option("--save-model", run_opts.save_model_path, "save the fitted model checkpoint");

    GenerateOptions gen_opts;
    CLI::App* gen = app.add_subcommand("generate", "synthesize a test micrograph");
    gen->add_option("--kind", gen_opts.kind, "boolean-disks | two-region | clustered");
    gen->add_option("--vf", gen_opts.vf, "target volume fraction in (0,1)");
    gen->add_option("--radius", gen_opts.radius, "particle radius in pixels");
    gen->add_option("--height", gen_opts.height, "image height in pixels");
    gen->add_option("--width", gen_opts.width, "image width in pixels");
    gen->add_option("--scale", gen_opts.scale, "um per pixel recorded in the sidecar");
    gen->add_option("--seed", gen_opts.seed, "random seed");
    gen->add_option("--vf-left", gen_opts.vf_left, "two-region: left-half volume fraction");
    gen->add_option("--vf-right", gen_opts.vf_right, "two-region: right-half volume fraction");
    gen->add_option("--radius-left", gen_opts.radius_left, "two-region: left-half particle radius");
    gen->add_option("--radius-right", gen_opts.radius_right, "two-region: right-half particle radius");
    gen->add_option("--parents", gen_opts.parents, "clustered: parent point cap");
    gen->add_option("--offspring", gen_opts.offspring, "clustered: offspring disks per parent");
    gen->add_option("--cluster-radius", gen_opts.cluster_radius, "clustered: offspring scatter radius");
    gen->add_option("--upsample", gen_opts.upsample,
                    "replicate pixels N x N after generation (scale divides by N)");
    gen->add_option("--out", gen_opts.out, "output PGM path")->required();

    CurveOptions curve_opts;
    CLI::App* curve = app.add_subcommand("curve", "re-run elbow detection on an existing curve CSV");
    curve->add_option("--csv", curve_opts.csv, "curve CSV written by a previous run")->required();
    curve->add_option("--report", curve_opts.report_path, "write the report here instead of stdout");
    curve->add_option("--svg", curve_opts.svg_path, "write the curve plot as SVG");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (run->parsed()) {
            if (!run_opts.config_path.empty()) apply_run_config(run_opts.config_path, *run, run_opts);
            return run_command(run_opts);
        }
        if (gen->parsed()) return generate_command(gen_opts);
        if (curve->parsed()) return curve_command(curve_opts);
        std::cerr << "no subcommand given\n";
        return kExitConfig;
    } catch (const rvescope::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const rvescope::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const rvescope::GenerationError& e) {
        std::cerr << "generation error: " << e.what() << "\n";
        return kExitGeneration;
    } catch (const rvescope::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
}
