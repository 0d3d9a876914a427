#ifndef RVESCOPE_WINDOW_HPP
#define RVESCOPE_WINDOW_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rvescope/errors.hpp"
#include "rvescope/linalg.hpp"
#include "rvescope/parallel.hpp"
#include "rvescope/score.hpp"

namespace rvescope {

/// Square moving window of side w. The window "centered" at (r, c) covers
/// rows [r - (w-1)/2, r + w/2] and the same for columns; for even w the
/// center is the top-left pixel of the central 2x2 block. Valid centers are
/// those where the window lies fully inside the field, so at stride 1 there
/// are (H - w + 1) * (W - w + 1) positions.
struct WindowSpec {
    int w = 1;
    int stride = 1;

    int offset_before() const { return (w - 1) / 2; }
    int offset_after() const { return w / 2; }
    std::int64_t pixels() const { return static_cast<std::int64_t>(w) * w; }
};

/// Per-component summed-area tables over a whitened field, with one-pixel
/// zero padding: plane(j)[r+1][c+1] = sum of component j over [0..r]x[0..c].
struct IntegralField {
    int rows = 0;
    int cols = 0;
    int dim = 0;
    std::vector<double> prefix; // dim planes of (rows+1)*(cols+1)

    std::size_t plane_stride() const {
        return static_cast<std::size_t>(rows + 1) * (cols + 1);
    }
    const double* plane(int j) const { return prefix.data() + static_cast<std::size_t>(j) * plane_stride(); }

    /// Sum of component j over the half-open pixel rectangle [r0,r1)x[c0,c1).
    double rect_sum(int j, int r0, int c0, int r1, int c1) const {
        const double* p = plane(j);
        const int width = cols + 1;
        return p[static_cast<std::size_t>(r1) * width + c1] -
               p[static_cast<std::size_t>(r0) * width + c1] -
               p[static_cast<std::size_t>(r1) * width + c0] +
               p[static_cast<std::size_t>(r0) * width + c0];
    }
};

namespace detail {

// Builds one component's prefix plane into `plane` ((rows+1)*(cols+1)).
template <typename T>
void build_prefix_plane(const WhitenedFieldT<T>& z, int j, std::span<double> plane) {
    const int rows = z.rows;
    const int cols = z.cols;
    const int width = cols + 1;
    std::fill(plane.begin(), plane.begin() + width, 0.0);
    for (int r = 0; r < rows; ++r) {
        const T* src = &z.values[static_cast<std::size_t>(r) * cols * z.dim + j];
        const double* above = plane.data() + static_cast<std::size_t>(r) * width;
        double* cur = plane.data() + static_cast<std::size_t>(r + 1) * width;
        cur[0] = 0.0;
        double row_acc = 0.0;
        for (int c = 0; c < cols; ++c) {
            row_acc += static_cast<double>(src[static_cast<std::size_t>(c) * z.dim]);
            cur[c + 1] = above[c + 1] + row_acc;
        }
    }
}

} // namespace detail

/// Builds summed-area tables for every component of the whitened field.
template <typename T>
IntegralField build_integral(const WhitenedFieldT<T>& z, int threads = 1) {
    IntegralField f;
    f.rows = z.rows;
    f.cols = z.cols;
    f.dim = z.dim;
    f.prefix.resize(static_cast<std::size_t>(z.dim) * f.plane_stride());
    parallel_for(z.dim, threads, [&](std::int64_t j0, std::int64_t j1) {
        for (std::int64_t j = j0; j < j1; ++j) {
            detail::build_prefix_plane(z, static_cast<int>(j),
                                       std::span<double>(f.prefix.data() + static_cast<std::size_t>(j) * f.plane_stride(),
                                                         f.plane_stride()));
        }
    });
    return f;
}

/// Exact window mean vector at center `pos` (per the WindowSpec anchor rule).
inline std::vector<double> window_mean_at(const IntegralField& ints, const WindowSpec& spec,
                                          std::pair<int, int> pos) {
    const auto [r, c] = pos;
    const int r0 = r - spec.offset_before();
    const int c0 = c - spec.offset_before();
    if (r0 < 0 || c0 < 0 || r0 + spec.w > ints.rows || c0 + spec.w > ints.cols)
        throw ConfigError("window_mean_at: position (" + std::to_string(r) + "," + std::to_string(c) +
                          ") is not a valid center for w = " + std::to_string(spec.w));
    std::vector<double> mean(static_cast<std::size_t>(ints.dim));
    const double inv = 1.0 / static_cast<double>(spec.pixels());
    for (int j = 0; j < ints.dim; ++j)
        mean[static_cast<std::size_t>(j)] = ints.rect_sum(j, r0, c0, r0 + spec.w, c0 + spec.w) * inv;
    return mean;
}

/// Summary of D_{i,k} = ||window mean of z at i||^2 over all strided valid
/// positions for one window size.
struct SizeStatistics {
    int w = 0;
    std::int64_t n_positions = 0; // N_k actually used (after stride)
    double d_bar = 0.0;
    double d_min = 0.0;
    double d_median = 0.0;
    double d_max = 0.0;
};

namespace detail {

inline std::int64_t strided_count(int extent, int w, int stride) {
    return (static_cast<std::int64_t>(extent) - w) / stride + 1;
}

// Accumulates squared window means of one prefix plane into each size's D
// array. Positions are enumerated by top-left corner; parallel over corner
// rows (disjoint writes), so results do not depend on the thread count.
inline void accumulate_size(const std::span<const double> plane, int rows, int cols, int w,
                            int stride, std::span<double> d_values, int threads) {
    const int width = cols + 1;
    const std::int64_t nr = strided_count(rows, w, stride);
    const std::int64_t nc = strided_count(cols, w, stride);
    const double inv = 1.0 / (static_cast<double>(w) * w);
    parallel_for(nr, threads, [&](std::int64_t i0, std::int64_t i1) {
        for (std::int64_t ri = i0; ri < i1; ++ri) {
            const int r0 = static_cast<int>(ri) * stride;
            const double* top = plane.data() + static_cast<std::size_t>(r0) * width;
            const double* bot = plane.data() + static_cast<std::size_t>(r0 + w) * width;
            double* dst = d_values.data() + static_cast<std::size_t>(ri) * nc;
            for (std::int64_t ci = 0; ci < nc; ++ci) {
                const int c0 = static_cast<int>(ci) * stride;
                const double sum = bot[c0 + w] - bot[c0] - top[c0 + w] + top[c0];
                const double mean = sum * inv;
                dst[ci] += mean * mean;
            }
        }
    });
}

inline SizeStatistics summarize(int w, std::vector<double>& d_values) {
    SizeStatistics st;
    st.w = w;
    st.n_positions = static_cast<std::int64_t>(d_values.size());
    st.d_bar = pairwise_sum(d_values) / static_cast<double>(d_values.size());
    std::sort(d_values.begin(), d_values.end());
    st.d_min = d_values.front();
    st.d_max = d_values.back();
    const std::size_t n = d_values.size();
    st.d_median = n % 2 == 1 ? d_values[n / 2] : 0.5 * (d_values[n / 2 - 1] + d_values[n / 2]);
    return st;
}

} // namespace detail

/// Sweeps several window sizes in one pass over the field: each component's
/// prefix plane is built once and feeds every size. Equivalent to calling
/// sweep_size per size, but O(d) prefix builds instead of O(K*d).
template <typename T>
std::vector<SizeStatistics> sweep_sizes(const WhitenedFieldT<T>& z, std::span<const int> sizes,
                                        int stride = 1, int threads = 1) {
    if (stride < 1) throw ConfigError("sweep: stride must be >= 1");
    const int max_feasible = std::min(z.rows, z.cols);
    for (int w : sizes) {
        if (w < 1) throw ConfigError("sweep: window size must be >= 1");
        if (w > max_feasible)
            throw ConfigError("sweep: window size " + std::to_string(w) +
                              " exceeds the score field; maximum feasible w is " +
                              std::to_string(max_feasible));
    }
    std::vector<std::vector<double>> d_arrays(sizes.size());
    for (std::size_t k = 0; k < sizes.size(); ++k) {
        const std::int64_t np = detail::strided_count(z.rows, sizes[k], stride) *
                                detail::strided_count(z.cols, sizes[k], stride);
        d_arrays[k].assign(static_cast<std::size_t>(np), 0.0);
    }
    std::vector<double> plane(static_cast<std::size_t>(z.rows + 1) * (z.cols + 1));
    for (int j = 0; j < z.dim; ++j) {
        detail::build_prefix_plane(z, j, plane);
        for (std::size_t k = 0; k < sizes.size(); ++k) {
            detail::accumulate_size(plane, z.rows, z.cols, sizes[k], stride, d_arrays[k], threads);
        }
    }
    std::vector<SizeStatistics> out(sizes.size());
    for (std::size_t k = 0; k < sizes.size(); ++k) out[k] = detail::summarize(sizes[k], d_arrays[k]);
    return out;
}

/// D statistics for a single window size at the given stride.
template <typename T>
SizeStatistics sweep_size(const WhitenedFieldT<T>& z, int w, int stride = 1, int threads = 1) {
    const int sizes[1] = {w};
    return sweep_sizes(z, std::span<const int>(sizes, 1), stride, threads)[0];
}

} // namespace rvescope

#endif
