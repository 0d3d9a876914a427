#ifndef RVESCOPE_MICROGRAPH_HPP
#define RVESCOPE_MICROGRAPH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "rvescope/errors.hpp"

namespace rvescope {

/// Two-phase micrograph: row-major grid of phase labels (0 = matrix,
/// 1 = particle) plus the physical scale in micrometers per pixel.
struct Micrograph {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> phases; // height*width, values in {0,1}
    double scale_um_per_px = 1.0;

    Micrograph() = default;
    Micrograph(int h, int w, double scale = 1.0)
        : height(h), width(w), phases(static_cast<std::size_t>(h) * w, 0), scale_um_per_px(scale) {
        if (h < 1 || w < 1) throw ConfigError("micrograph dimensions must be >= 1");
        if (!(scale > 0.0)) throw ConfigError("micrograph scale must be > 0");
    }

    std::uint8_t at(int r, int c) const { return phases[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t& at(int r, int c) { return phases[static_cast<std::size_t>(r) * width + c]; }

    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }

    double volume_fraction() const {
        std::uint64_t ones = 0;
        for (std::uint8_t v : phases) ones += v;
        return static_cast<double>(ones) / static_cast<double>(pixel_count());
    }
};

/// 8-bit intensity grid, the pre-binarization image form.
struct IntensityGrid {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> values; // row-major

    std::uint8_t at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
};

/// Maps intensity >= threshold to phase 1, else 0.
inline Micrograph binarize(const IntensityGrid& grid, int threshold, double scale_um_per_px = 1.0) {
    if (grid.height < 1 || grid.width < 1) throw ConfigError("binarize: empty intensity grid");
    Micrograph m(grid.height, grid.width, scale_um_per_px);
    const std::size_t n = grid.values.size();
    for (std::size_t i = 0; i < n; ++i) {
        m.phases[i] = grid.values[i] >= threshold ? 1 : 0;
    }
    return m;
}

/// Otsu's threshold: the level t in [1,255] maximizing inter-class variance
/// for the split {intensity < t} vs {intensity >= t}. Ties break toward the
/// smallest t. Works on the 256-bin histogram of the grid.
inline int otsu_threshold(const IntensityGrid& grid) {
    std::uint64_t hist[256] = {0};
    for (std::uint8_t v : grid.values) ++hist[v];
    const double total = static_cast<double>(grid.values.size());
    if (total == 0.0) throw ConfigError("otsu: empty image");

    double sum_all = 0.0;
    for (int i = 0; i < 256; ++i) sum_all += static_cast<double>(i) * static_cast<double>(hist[i]);

    int best_t = 1;
    double best_var = -1.0;
    double w0 = 0.0;     // mass below threshold
    double sum0 = 0.0;   // intensity mass below threshold
    for (int t = 1; t <= 255; ++t) {
        w0 += static_cast<double>(hist[t - 1]);
        sum0 += static_cast<double>(t - 1) * static_cast<double>(hist[t - 1]);
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double var_between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var_between > best_var) {
            best_var = var_between;
            best_t = t;
        }
    }
    return best_t;
}

/// Nearest-neighbor upsampling: each pixel becomes a factor x factor block,
/// scale divides by factor, volume fraction is preserved exactly.
inline Micrograph upsample_nn(const Micrograph& m, int factor) {
    if (factor < 1) throw ConfigError("upsample_nn: factor must be >= 1");
    if (factor == 1) return m;
    Micrograph out(m.height * factor, m.width * factor, m.scale_um_per_px / factor);
    for (int r = 0; r < out.height; ++r) {
        const int src_r = r / factor;
        const std::uint8_t* src = &m.phases[static_cast<std::size_t>(src_r) * m.width];
        std::uint8_t* dst = &out.phases[static_cast<std::size_t>(r) * out.width];
        for (int c = 0; c < out.width; ++c) dst[c] = src[c / factor];
    }
    return out;
}

} // namespace rvescope

#endif
