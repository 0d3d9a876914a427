#ifndef RVESCOPE_RVE_HPP
#define RVESCOPE_RVE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rvescope/dataset.hpp"
#include "rvescope/errors.hpp"
#include "rvescope/micrograph.hpp"
#include "rvescope/model.hpp"
#include "rvescope/score.hpp"
#include "rvescope/window.hpp"

namespace rvescope {

/// Validates a candidate-size grid: strictly increasing, at least 4 sizes
/// (an elbow needs interior points).
inline void validate_size_grid(std::span<const int> sizes, int max_feasible) {
    if (sizes.size() < 4)
        throw ConfigError("size grid needs at least 4 sizes, got " + std::to_string(sizes.size()));
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        if (sizes[k] < 1) throw ConfigError("size grid entries must be >= 1");
        if (k > 0 && sizes[k] <= sizes[k - 1])
            throw ConfigError("size grid must be strictly increasing");
    }
    if (sizes.back() > max_feasible)
        throw ConfigError("largest window " + std::to_string(sizes.back()) +
                          " exceeds the score-field side; maximum feasible is " +
                          std::to_string(max_feasible));
}

/// Default grid: 12 geometrically spaced sizes from max(8, 2*l_s) up to half
/// the score-field side. Falls back to linear spacing when rounding makes
/// the geometric grid collide.
inline std::vector<int> default_size_grid(int ls, int interior_h, int interior_w) {
    const int w_min = std::max(8, 2 * ls);
    const int w_max = std::min(interior_h, interior_w) / 2;
    if (w_max <= w_min)
        throw ConfigError("micrograph too small for a default size grid (max feasible " +
                          std::to_string(w_max) + " <= min " + std::to_string(w_min) +
                          "); pass an explicit grid");
    constexpr int K = 12;
    std::vector<int> sizes;
    const double ratio = static_cast<double>(w_max) / w_min;
    for (int i = 0; i < K; ++i) {
        const int w = static_cast<int>(std::lround(w_min * std::pow(ratio, static_cast<double>(i) / (K - 1))));
        if (sizes.empty() || w > sizes.back()) sizes.push_back(w);
    }
    if (sizes.size() < 4) {
        sizes.clear();
        const int count = std::min(K, w_max - w_min + 1);
        for (int i = 0; i < count; ++i)
            sizes.push_back(w_min + (w_max - w_min) * i / (count - 1));
        sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
    }
    if (sizes.size() < 4)
        throw ConfigError("cannot build a 4-point size grid in [" + std::to_string(w_min) + ", " +
                          std::to_string(w_max) + "]; pass an explicit grid");
    return sizes;
}

struct ElbowResult {
    int elbow_index = 0;          // knee, 0-based into the grid
    int rve_index = 0;            // first point right of the knee (clamped)
    double max_chord_distance = 0.0; // normalized |cross| proxy at the knee
    bool low_confidence = false;  // max distance < 0.05 (near-collinear curve)
    int threshold_rule_index = -1; // smallest k with D <= 0.1 * max D, -1 if none
    bool rules_agree = false;     // the two rules within one grid step
};

/// Knee detection on the (w, D-bar) curve: both axes are affinely normalized
/// to [0,1], the elbow is the interior point with maximum distance from the
/// first-to-last chord (ties toward the smallest index), and the RVE is the
/// next grid point. A 10%-of-max threshold rule is computed as a cross-check.
inline ElbowResult detect_elbow(std::span<const double> w, std::span<const double> d_bar) {
    const std::size_t k = w.size();
    if (k != d_bar.size()) throw ConfigError("detect_elbow: mismatched spans");
    if (k < 4) throw ConfigError("detect_elbow: need at least 4 points, got " + std::to_string(k));
    double d_min = d_bar[0], d_max = d_bar[0];
    for (double v : d_bar) {
        if (v < 0.0 || !std::isfinite(v))
            throw ConfigError("detect_elbow: D values must be finite and nonnegative");
        d_min = std::min(d_min, v);
        d_max = std::max(d_max, v);
    }
    for (std::size_t i = 1; i < k; ++i)
        if (!(w[i] > w[i - 1])) throw ConfigError("detect_elbow: sizes must be strictly increasing");
    if (d_max - d_min < 1e-12 * std::max(d_max, 1e-300))
        throw NumericalError("no elbow: curve flat");

    const double w_lo = w[0];
    const double w_span = w[k - 1] - w[0];
    const double d_span = d_max - d_min;
    // normalized endpoints
    const double u0 = 0.0, v0 = (d_bar[0] - d_min) / d_span;
    const double u1 = 1.0, v1 = (d_bar[k - 1] - d_min) / d_span;

    ElbowResult res;
    std::vector<double> dist(k, 0.0);
    double best = 0.0;
    for (std::size_t i = 1; i + 1 < k; ++i) {
        const double u = (w[i] - w_lo) / w_span;
        const double v = (d_bar[i] - d_min) / d_span;
        dist[i] = std::abs((u - u0) * (v1 - v0) - (v - v0) * (u1 - u0));
        best = std::max(best, dist[i]);
    }
    // floating-point curves never tie exactly; distances within 1% of the
    // maximum count as tied and resolve toward the smaller size
    for (std::size_t i = 1; i + 1 < k; ++i) {
        if (dist[i] >= best * 0.99) {
            res.elbow_index = static_cast<int>(i);
            break;
        }
    }
    res.max_chord_distance = best;
    res.low_confidence = best < 0.05;
    res.rve_index = std::min<int>(res.elbow_index + 1, static_cast<int>(k) - 1);

    for (std::size_t i = 0; i < k; ++i) {
        if (d_bar[i] <= 0.1 * d_max) {
            res.threshold_rule_index = static_cast<int>(i);
            break;
        }
    }
    res.rules_agree = res.threshold_rule_index >= 0 &&
                      std::abs(res.threshold_rule_index - res.rve_index) <= 1;
    return res;
}

struct PipelineConfig {
    int ls = 21;
    ModelKind model_kind = ModelKind::Logistic;
    double lambda = 1e-4;
    CovMode a_mode = CovMode::Diag;
    std::vector<int> sizes; // empty: default geometric grid
    int stride = 1;
    double ridge_eps = 1e-8;
    OptimizerSettings opt;  // carries seed, threads, cv_folds
};

struct RveCurvePoint {
    int w = 0;
    std::int64_t n_k = 0;
    double d_bar = 0.0;
    double d_min = 0.0;
    double d_median = 0.0;
    double d_max = 0.0;
};

/// Full result of one sweep: the (w_k, D-bar_k) curve, the elbow selection,
/// and the fit diagnostics the report needs.
struct RveCurve {
    std::vector<RveCurvePoint> points;
    CovMode a_mode = CovMode::Diag;
    ModelKind model_kind = ModelKind::Logistic;
    ElbowResult elbow;
    int rve_pixels = 0;
    double rve_physical_um = 0.0; // rve_pixels * scale
    bool size_warning = false;    // input likely smaller than 5-8x the RVE
    double scale_um_per_px = 1.0;
    int ls = 0;
    int stride = 1;
    double mean_score_inf_norm = 0.0;
    FitReport fit;
};

/// Runs the full pipeline on a micrograph: dataset extraction, model fit,
/// per-pixel scores, covariance + whitening, the multi-size window sweep,
/// and elbow selection.
inline RveCurve run_sweep(const Micrograph& m, const PipelineConfig& cfg) {
    NeighborhoodDataset ds = extract_dataset(m, cfg.ls);
    const int threads = cfg.opt.threads;

    RveCurve curve;
    curve.a_mode = cfg.a_mode;
    curve.model_kind = cfg.model_kind;
    curve.scale_um_per_px = m.scale_um_per_px;
    curve.ls = cfg.ls;
    curve.stride = cfg.stride;

    std::vector<int> sizes = cfg.sizes;
    if (sizes.empty()) sizes = default_size_grid(cfg.ls, ds.interior_height(), ds.interior_width());
    validate_size_grid(sizes, std::min(ds.interior_height(), ds.interior_width()));

    WhitenedField wf;
    {
        ScoreField field;
        if (cfg.model_kind == ModelKind::Logistic) {
            auto [model, report] = fit_logistic(ds, cfg.lambda, cfg.opt, cfg.ls);
            curve.fit = std::move(report);
            field = compute_score_field<float>(ds, model, threads);
        } else {
            auto [model, report] = fit_mlp(ds, cfg.lambda, cfg.opt, cfg.ls);
            curve.fit = std::move(report);
            field = compute_score_field<float>(ds, model, threads);
        }
        curve.mean_score_inf_norm = inf_norm(field.global_mean);
        const ScoreCovariance cov = estimate_covariance(field, cfg.a_mode, cfg.ridge_eps, threads);
        wf = whiten(std::move(field), cov, threads); // reuses the score storage
    }

    std::vector<SizeStatistics> stats = sweep_sizes(wf, sizes, cfg.stride, threads);
    curve.points.resize(stats.size());
    std::vector<double> ws(stats.size()), ds_bar(stats.size());
    for (std::size_t k = 0; k < stats.size(); ++k) {
        curve.points[k] = {stats[k].w, stats[k].n_positions, stats[k].d_bar,
                           stats[k].d_min, stats[k].d_median, stats[k].d_max};
        ws[k] = static_cast<double>(stats[k].w);
        ds_bar[k] = stats[k].d_bar;
    }
    curve.elbow = detect_elbow(ws, ds_bar);
    curve.rve_pixels = curve.points[static_cast<std::size_t>(curve.elbow.rve_index)].w;
    curve.rve_physical_um = curve.rve_pixels * m.scale_um_per_px;
    curve.size_warning = curve.rve_pixels > std::min(m.height, m.width) / 4;
    return curve;
}

} // namespace rvescope

#endif
