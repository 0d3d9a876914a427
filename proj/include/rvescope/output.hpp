#ifndef RVESCOPE_OUTPUT_HPP
#define RVESCOPE_OUTPUT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "rvescope/errors.hpp"
#include "rvescope/rve.hpp"
#include "rvescope/score.hpp"

namespace rvescope {

namespace detail {

inline std::string full_precision(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

/// Writes the curve as CSV: header `w_px,w_um,D_bar,N_k,D_min,D_median,D_max`,
/// one row per size, 17-significant-digit values, LF line endings. Bytes are
/// a pure function of the curve, so identical runs produce identical files.
inline void write_curve_csv(const std::string& path, const RveCurve& curve) {
    std::ofstream out(path, std::ios::binary); // binary: keep LF on every platform
    if (!out) throw IoError("cannot write CSV " + path);
    out << "w_px,w_um,D_bar,N_k,D_min,D_median,D_max\n";
    for (const RveCurvePoint& p : curve.points) {
        out << p.w << ',' << detail::full_precision(p.w * curve.scale_um_per_px) << ','
            << detail::full_precision(p.d_bar) << ',' << p.n_k << ','
            << detail::full_precision(p.d_min) << ',' << detail::full_precision(p.d_median) << ','
            << detail::full_precision(p.d_max) << '\n';
    }
    if (!out) throw IoError("short write to CSV " + path);
}

/// Parses a CSV written by write_curve_csv back into curve points.
inline std::vector<RveCurvePoint> read_curve_csv(const std::string& path,
                                                 double* scale_out = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CSV " + path);
    std::string header;
    if (!std::getline(in, header) || header.rfind("w_px,w_um,D_bar,N_k", 0) != 0)
        throw IoError("CSV " + path + ": unexpected header '" + header + "'");
    std::vector<RveCurvePoint> points;
    double scale = 1.0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        RveCurvePoint p;
        double w_um = 0.0;
        if (!(row >> p.w >> w_um >> p.d_bar >> p.n_k >> p.d_min >> p.d_median >> p.d_max))
            throw IoError("CSV " + path + ": malformed row '" + line + "'");
        if (p.w > 0) scale = w_um / p.w;
        points.push_back(p);
    }
    if (points.empty()) throw IoError("CSV " + path + ": no data rows");
    if (scale_out) *scale_out = scale;
    return points;
}

/// Minimal SVG line plot of D-bar vs w with a vertical marker at the
/// selected RVE size (element id "rve-marker").
inline void write_curve_svg(const std::string& path, const RveCurve& curve) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write SVG " + path);
    constexpr double W = 640, H = 440, ml = 70, mr = 20, mt = 20, mb = 50;
    const double plot_w = W - ml - mr, plot_h = H - mt - mb;

    double w_lo = curve.points.front().w, w_hi = curve.points.back().w;
    double d_lo = 0.0, d_hi = 0.0;
    for (const auto& p : curve.points) d_hi = std::max(d_hi, p.d_bar);
    if (d_hi <= d_lo) d_hi = d_lo + 1.0;
    auto x_of = [&](double w) { return ml + (w - w_lo) / (w_hi - w_lo) * plot_w; };
    auto y_of = [&](double d) { return mt + (1.0 - (d - d_lo) / (d_hi - d_lo)) * plot_h; };

    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << W << ' ' << H
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    out << "  <rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
    out << "  <line x1=\"" << ml << "\" y1=\"" << mt + plot_h << "\" x2=\"" << ml + plot_w
        << "\" y2=\"" << mt + plot_h << "\" stroke=\"black\"/>\n";
    out << "  <line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
        << mt + plot_h << "\" stroke=\"black\"/>\n";
    out << "  <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : curve.points) out << x_of(p.w) << ',' << y_of(p.d_bar) << ' ';
    out << "\"/>\n";
    for (const auto& p : curve.points) {
        out << "  <circle cx=\"" << x_of(p.w) << "\" cy=\"" << y_of(p.d_bar)
            << "\" r=\"2.5\" fill=\"#1f77b4\"/>\n";
    }
    out << "  <line id=\"rve-marker\" x1=\"" << x_of(curve.rve_pixels) << "\" y1=\"" << mt
        << "\" x2=\"" << x_of(curve.rve_pixels) << "\" y2=\"" << mt + plot_h
        << "\" stroke=\"#d62728\" stroke-dasharray=\"5,3\"/>\n";
    out << "  <text x=\"" << x_of(curve.rve_pixels) + 4 << "\" y=\"" << mt + 14
        << "\" fill=\"#d62728\">RVE = " << curve.rve_pixels << " px</text>\n";
    // x ticks at every point, y ticks at 0 and max
    for (const auto& p : curve.points) {
        out << "  <text x=\"" << x_of(p.w) << "\" y=\"" << mt + plot_h + 16
            << "\" text-anchor=\"middle\" font-size=\"9\">" << p.w << "</text>\n";
    }
    out << "  <text x=\"" << ml - 6 << "\" y=\"" << y_of(d_hi) + 4
        << "\" text-anchor=\"end\" font-size=\"9\">" << detail::full_precision(d_hi).substr(0, 8)
        << "</text>\n";
    out << "  <text x=\"" << ml - 6 << "\" y=\"" << y_of(0.0) + 4
        << "\" text-anchor=\"end\" font-size=\"9\">0</text>\n";
    out << "  <text x=\"" << ml + plot_w / 2 << "\" y=\"" << H - 12
        << "\" text-anchor=\"middle\">window size w (pixels)</text>\n";
    out << "  <text x=\"16\" y=\"" << mt + plot_h / 2
        << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << mt + plot_h / 2
        << ")\">mean window statistic D</text>\n";
    out << "</svg>\n";
    if (!out) throw IoError("short write to SVG " + path);
}

/// Human-readable run report: resolved configuration, fit diagnostics, the
/// curve, and the selection made by both rules.
inline void write_report(std::ostream& out, const RveCurve& curve,
                         const std::string& resolved_config) {
    out << "rve-scope run report\n";
    out << "====================\n\n";
    out << "Resolved configuration:\n" << resolved_config << "\n";
    out << "Fit: mean NLL = " << detail::full_precision(curve.fit.final_mean_nll)
        << ", grad inf-norm = " << detail::full_precision(curve.fit.final_grad_inf_norm)
        << ", polish iterations = " << curve.fit.iterations
        << ", converged = " << (curve.fit.converged ? "yes" : "no") << "\n";
    if (std::isfinite(curve.fit.cv_balanced_accuracy))
        out << "CV balanced accuracy: " << detail::full_precision(curve.fit.cv_balanced_accuracy) << "\n";
    else
        out << "CV balanced accuracy: not computed (cv_folds < 2)\n";
    out << "Mean score inf-norm: " << detail::full_precision(curve.mean_score_inf_norm) << "\n\n";
    out << "w_px      N_k          D_bar\n";
    for (const auto& p : curve.points) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-9d %-12lld %s\n", p.w,
                      static_cast<long long>(p.n_k), detail::full_precision(p.d_bar).c_str());
        out << buf;
    }
    out << "\nElbow rule: knee at w = " << curve.points[static_cast<std::size_t>(curve.elbow.elbow_index)].w
        << " px; RVE = first size right of the knee = " << curve.rve_pixels << " px\n";
    if (curve.elbow.threshold_rule_index >= 0)
        out << "Threshold rule (first D_bar <= 10% of max): w = "
            << curve.points[static_cast<std::size_t>(curve.elbow.threshold_rule_index)].w << " px\n";
    else
        out << "Threshold rule (first D_bar <= 10% of max): no size qualifies\n";
    out << "Rule agreement within one grid step: " << (curve.elbow.rules_agree ? "yes" : "no") << "\n";
    out << "Max normalized chord distance: " << detail::full_precision(curve.elbow.max_chord_distance)
        << (curve.elbow.low_confidence ? " (LOW CONFIDENCE: near-collinear curve)" : "") << "\n";
    out << "\nSelected RVE size: " << curve.rve_pixels << " px = "
        << detail::full_precision(curve.rve_physical_um) << " um\n";
    if (curve.size_warning)
        out << "WARNING: selected RVE exceeds a quarter of the micrograph side; the input\n"
               "should be 5~8 times the RVE size for the window statistics to be reliable.\n";
}

/// Versioned binary dump of a score field (debugging aid): magic, version,
/// dims, dtype (0 = f32, 1 = f64), then row-major pixel-major data.
template <typename T>
void dump_score_field(const std::string& path, const ScoreFieldT<T>& field) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write score dump " + path);
    const char magic[4] = {'R', 'V', 'S', 'F'};
    const std::uint32_t version = 1;
    const std::uint32_t rows = static_cast<std::uint32_t>(field.rows);
    const std::uint32_t cols = static_cast<std::uint32_t>(field.cols);
    const std::uint32_t dim = static_cast<std::uint32_t>(field.dim);
    const std::uint32_t dtype = std::is_same_v<T, float> ? 0 : 1;
    out.write(magic, 4);
    out.write(reinterpret_cast<const char*>(&version), 4);
    out.write(reinterpret_cast<const char*>(&rows), 4);
    out.write(reinterpret_cast<const char*>(&cols), 4);
    out.write(reinterpret_cast<const char*>(&dim), 4);
    out.write(reinterpret_cast<const char*>(&dtype), 4);
    out.write(reinterpret_cast<const char*>(field.values.data()),
              static_cast<std::streamsize>(field.values.size() * sizeof(T)));
    if (!out) throw IoError("short write to score dump " + path);
}

} // namespace rvescope

#endif
