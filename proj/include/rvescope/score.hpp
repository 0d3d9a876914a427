#ifndef RVESCOPE_SCORE_HPP
#define RVESCOPE_SCORE_HPP

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rvescope/dataset.hpp"
#include "rvescope/errors.hpp"
#include "rvescope/linalg.hpp"
#include "rvescope/model.hpp"
#include "rvescope/parallel.hpp"

namespace rvescope {

/// Per-pixel score vectors laid out on the dataset's interior grid,
/// pixel-major: values[(r*cols + c)*dim + j]. Grid entries are stored at
/// precision T (float in the pipeline, double in fine-grained oracle tests);
/// all reductions accumulate in double regardless.
template <typename T>
struct ScoreFieldT {
    int rows = 0;
    int cols = 0;
    int dim = 0;
    std::vector<T> values;
    std::vector<double> global_mean; // s-double-bar, length dim

    std::int64_t pixels() const { return static_cast<std::int64_t>(rows) * cols; }
    std::span<const T> at(int r, int c) const {
        return {values.data() + (static_cast<std::size_t>(r) * cols + c) * dim,
                static_cast<std::size_t>(dim)};
    }
};

using ScoreField = ScoreFieldT<float>;

/// Whitened deviations z_i = L^{-1}(s_i - mean) (full) or per-component
/// standardization (diag); window statistics then reduce to squared norms.
template <typename T>
struct WhitenedFieldT {
    int rows = 0;
    int cols = 0;
    int dim = 0;
    std::vector<T> values;

    std::int64_t pixels() const { return static_cast<std::int64_t>(rows) * cols; }
    std::span<const T> at(int r, int c) const {
        return {values.data() + (static_cast<std::size_t>(r) * cols + c) * dim,
                static_cast<std::size_t>(dim)};
    }
};

using WhitenedField = WhitenedFieldT<float>;

enum class CovMode { Full, Diag };

inline std::string to_string(CovMode m) { return m == CovMode::Full ? "full" : "diag"; }

inline CovMode parse_cov_mode(const std::string& s) {
    if (s == "full") return CovMode::Full;
    if (s == "diag") return CovMode::Diag;
    throw ConfigError("unknown A mode '" + s + "' (expected full or diag)");
}

/// Sample covariance of the score field (1/n normalization) with a relative
/// ridge, plus its factorization for whitening.
struct ScoreCovariance {
    CovMode mode = CovMode::Diag;
    int dim = 0;
    double ridge_added = 0.0;    // jitter value actually applied
    SquareMatrix matrix;         // full mode: Sigma + ridge*I
    SquareMatrix chol;           // full mode: lower Cholesky factor
    std::vector<double> diagonal; // diag mode: floored variances
    std::vector<double> stddev;   // diag mode: sqrt of diagonal
};

/// Score of one observation under the logistic model, layout (weights...,
/// bias). Returns (y - p)*(x,1) - (lambda/n)*(w,0): the gradient of the
/// per-sample regularized log-likelihood, with the penalty split across the
/// n_train samples the model was fitted on.
inline std::vector<double> score_logistic(const LogisticModel& model, std::span<const double> x,
                                          std::uint8_t y, std::int64_t n_train) {
    const double p = predict_proba(model, x);
    const double coeff = static_cast<double>(y) - p;
    const double reg = n_train > 0 ? model.lambda / static_cast<double>(n_train) : model.lambda;
    std::vector<double> s(static_cast<std::size_t>(model.dim_theta()));
    for (int j = 0; j < model.dim_x(); ++j)
        s[static_cast<std::size_t>(j)] = coeff * x[static_cast<std::size_t>(j)] -
                                         reg * model.weights[static_cast<std::size_t>(j)];
    s.back() = coeff; // bias coordinate last, no penalty on the bias
    return s;
}

/// Score w.r.t. the last layer of the MLP only: (y - p)*(h,1) - (lambda/n)*
/// (w_out, 0). Hidden-layer parameters never appear.
inline std::vector<double> score_mlp_last_layer(const MlpModel& model, std::span<const double> x,
                                                std::uint8_t y, std::int64_t n_train) {
    if (static_cast<int>(x.size()) != model.dim_x())
        throw ConfigError("score: input dimension does not match model");
    constexpr int H = MlpModel::kHidden;
    double h[H];
    mlp_hidden(model, x, std::span<double>(h, H));
    double u = model.output_bias;
    for (int k = 0; k < H; ++k) u += model.output_weights[static_cast<std::size_t>(k)] * h[k];
    const double p = clamp_probability(sigmoid(u));
    const double coeff = static_cast<double>(y) - p;
    const double reg = n_train > 0 ? model.lambda / static_cast<double>(n_train) : model.lambda;
    std::vector<double> s(static_cast<std::size_t>(MlpModel::last_layer_dim()));
    for (int k = 0; k < H; ++k)
        s[static_cast<std::size_t>(k)] = coeff * h[k] - reg * model.output_weights[static_cast<std::size_t>(k)];
    s.back() = coeff;
    return s;
}

namespace detail {

// fill_one(i, s, x) computes the score of sample i into s; x is per-worker
// scratch of size scratch_dim for feature gathering.
template <typename T>
ScoreFieldT<T> score_field_impl(int rows, int cols, int dim, int scratch_dim, int threads,
                                auto&& fill_one) {
    ScoreFieldT<T> field;
    field.rows = rows;
    field.cols = cols;
    field.dim = dim;
    field.values.resize(static_cast<std::size_t>(field.pixels()) * dim);
    const std::int64_t n = field.pixels();
    const std::int64_t chunks = (n + kReduceChunk - 1) / kReduceChunk;
    std::vector<double> partial_mean(static_cast<std::size_t>(chunks) * dim, 0.0);

    parallel_for(chunks, threads, [&](std::int64_t c0, std::int64_t c1) {
        std::vector<double> s(static_cast<std::size_t>(dim));
        std::vector<double> x(static_cast<std::size_t>(scratch_dim));
        for (std::int64_t c = c0; c < c1; ++c) {
            const std::int64_t lo = c * kReduceChunk;
            const std::int64_t hi = std::min(n, lo + kReduceChunk);
            double* pm = &partial_mean[static_cast<std::size_t>(c) * dim];
            for (std::int64_t i = lo; i < hi; ++i) {
                fill_one(i, s, x);
                T* dst = &field.values[static_cast<std::size_t>(i) * dim];
                for (int j = 0; j < dim; ++j) {
                    dst[j] = static_cast<T>(s[static_cast<std::size_t>(j)]);
                    pm[j] += s[static_cast<std::size_t>(j)];
                }
            }
        }
    });

    field.global_mean.assign(static_cast<std::size_t>(dim), 0.0);
    for (std::int64_t c = 0; c < chunks; ++c) {
        const double* pm = &partial_mean[static_cast<std::size_t>(c) * dim];
        for (int j = 0; j < dim; ++j) field.global_mean[static_cast<std::size_t>(j)] += pm[j];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    for (double& v : field.global_mean) v *= inv_n;
    return field;
}

} // namespace detail

/// Scores every interior pixel under the logistic model. The model must have
/// been fitted to this dataset's geometry (same l_s, same raster order).
template <typename T = float, SampleSource DS>
ScoreFieldT<T> compute_score_field(const DS& ds, const LogisticModel& model, int rows, int cols,
                                   int threads = 1) {
    if (ds.dim() != model.dim_x())
        throw ConfigError("score field: dataset dimension " + std::to_string(ds.dim()) +
                          " does not match model d_x " + std::to_string(model.dim_x()));
    if (static_cast<std::int64_t>(rows) * cols != ds.size())
        throw ConfigError("score field: grid does not match the sample count");
    const std::int64_t n = ds.size();
    const int dx = model.dim_x();
    const int d = dx + 1;
    const double reg = model.lambda / static_cast<double>(n);
    const std::span<const double> w(model.weights.data(), static_cast<std::size_t>(dx));
    return detail::score_field_impl<T>(
        rows, cols, d, dx, threads,
        [&](std::int64_t i, std::vector<double>& s, std::vector<double>& x) {
            const double m = ds.dot(i, w) + model.bias;
            const double p = clamp_probability(sigmoid(m));
            const double coeff = static_cast<double>(ds.response(i)) - p;
            ds.gather(i, std::span<double>(x));
            for (int j = 0; j < dx; ++j)
                s[static_cast<std::size_t>(j)] =
                    coeff * x[static_cast<std::size_t>(j)] - reg * model.weights[static_cast<std::size_t>(j)];
            s[static_cast<std::size_t>(dx)] = coeff;
        });
}

template <typename T = float, SampleSource DS>
ScoreFieldT<T> compute_score_field(const DS& ds, const MlpModel& model, int rows, int cols,
                                   int threads = 1) {
    if (ds.dim() != model.dim_x())
        throw ConfigError("score field: dataset dimension does not match model d_x");
    if (static_cast<std::int64_t>(rows) * cols != ds.size())
        throw ConfigError("score field: grid does not match the sample count");
    const std::int64_t n = ds.size();
    return detail::score_field_impl<T>(
        rows, cols, MlpModel::last_layer_dim(), model.dim_x(), threads,
        [&](std::int64_t i, std::vector<double>& s, std::vector<double>& x) {
            ds.gather(i, std::span<double>(x));
            const auto sv = score_mlp_last_layer(model, x, ds.response(i), n);
            std::copy(sv.begin(), sv.end(), s.begin());
        });
}

/// Convenience overload taking the dataset's own interior geometry.
template <typename T = float, typename Model>
ScoreFieldT<T> compute_score_field(const NeighborhoodDataset& ds, const Model& model,
                                   int threads = 1) {
    if (model.ls != 0 && model.ls != ds.ls())
        throw ConfigError("score field: model was trained for l_s = " + std::to_string(model.ls) +
                          ", dataset uses l_s = " + std::to_string(ds.ls()));
    return compute_score_field<T>(ds, model, ds.interior_height(), ds.interior_width(), threads);
}

/// Sample covariance Sigma_s = (1/n) sum (s_i - mean)(s_i - mean)^T, with a
/// relative ridge: full mode adds ridge_eps*(trace/d) to the diagonal before
/// the Cholesky factorization; diag mode keeps the diagonal, flooring each
/// entry at the same value.
template <typename T>
ScoreCovariance estimate_covariance(const ScoreFieldT<T>& field, CovMode mode,
                                    double ridge_eps = 1e-8, int threads = 1) {
    const std::int64_t n = field.pixels();
    if (n < 2) throw NumericalError("covariance: need at least 2 samples");
    const int d = field.dim;
    ScoreCovariance cov;
    cov.mode = mode;
    cov.dim = d;

    const int workers = std::max(1, threads);
    std::vector<double> partials; // per-worker upper triangles
    const std::size_t tri = static_cast<std::size_t>(d) * (d + 1) / 2;
    partials.assign(static_cast<std::size_t>(workers) * tri, 0.0);
    const std::int64_t block = (n + workers - 1) / workers;

    parallel_for(static_cast<std::int64_t>(workers), workers, [&](std::int64_t w0, std::int64_t w1) {
        std::vector<double> dev(static_cast<std::size_t>(d));
        for (std::int64_t w = w0; w < w1; ++w) {
            double* acc = &partials[static_cast<std::size_t>(w) * tri];
            const std::int64_t lo = w * block;
            const std::int64_t hi = std::min(n, lo + block);
            for (std::int64_t i = lo; i < hi; ++i) {
                const T* s = &field.values[static_cast<std::size_t>(i) * d];
                for (int j = 0; j < d; ++j)
                    dev[static_cast<std::size_t>(j)] =
                        static_cast<double>(s[j]) - field.global_mean[static_cast<std::size_t>(j)];
                std::size_t idx = 0;
                for (int j = 0; j < d; ++j) {
                    const double dj = dev[static_cast<std::size_t>(j)];
                    for (int k = j; k < d; ++k) acc[idx++] += dj * dev[static_cast<std::size_t>(k)];
                }
            }
        }
    });
    for (int w = 1; w < workers; ++w) {
        const double* src = &partials[static_cast<std::size_t>(w) * tri];
        for (std::size_t t = 0; t < tri; ++t) partials[t] += src[t];
    }

    const double inv_n = 1.0 / static_cast<double>(n);
    SquareMatrix sigma(d);
    {
        std::size_t idx = 0;
        for (int j = 0; j < d; ++j) {
            for (int k = j; k < d; ++k) {
                const double v = partials[idx++] * inv_n;
                sigma(j, k) = v;
                sigma(k, j) = v;
            }
        }
    }
    double trace = 0.0;
    for (int j = 0; j < d; ++j) trace += sigma(j, j);
    if (!(trace > 0.0)) throw NumericalError("degenerate score field: zero covariance trace");
    const double jitter = ridge_eps * trace / d;
    cov.ridge_added = jitter;

    if (mode == CovMode::Diag) {
        cov.diagonal.resize(static_cast<std::size_t>(d));
        cov.stddev.resize(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) {
            const double v = std::max(sigma(j, j), jitter);
            cov.diagonal[static_cast<std::size_t>(j)] = v;
            cov.stddev[static_cast<std::size_t>(j)] = std::sqrt(v);
        }
        return cov;
    }

    for (int j = 0; j < d; ++j) sigma(j, j) += jitter;
    cov.matrix = sigma;
    try {
        cov.chol = cholesky(sigma);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string(e.what()) +
                             "; covariance factorization failed even after ridge, consider a_mode=diag");
    }
    return cov;
}

namespace detail {

template <typename T>
void whiten_into(const std::vector<double>& mean, const ScoreCovariance& cov, std::int64_t n,
                 int d, const T* src, T* dst, int threads) {
    parallel_for(n, threads, [&](std::int64_t lo, std::int64_t hi) {
        std::vector<double> z(static_cast<std::size_t>(d));
        for (std::int64_t i = lo; i < hi; ++i) {
            const T* s = src + static_cast<std::size_t>(i) * d;
            for (int j = 0; j < d; ++j)
                z[static_cast<std::size_t>(j)] =
                    static_cast<double>(s[j]) - mean[static_cast<std::size_t>(j)];
            if (cov.mode == CovMode::Full) {
                forward_solve(cov.chol, z);
            } else {
                for (int j = 0; j < d; ++j)
                    z[static_cast<std::size_t>(j)] /= cov.stddev[static_cast<std::size_t>(j)];
            }
            T* out = dst + static_cast<std::size_t>(i) * d;
            for (int j = 0; j < d; ++j) out[j] = static_cast<T>(z[static_cast<std::size_t>(j)]);
        }
    });
}

} // namespace detail

/// Whitens the field: full mode solves L z = (s - mean) per pixel, diag mode
/// standardizes each component. The squared norm of a window mean of z then
/// equals the Mahalanobis statistic of the window's raw mean score.
template <typename T>
WhitenedFieldT<T> whiten(const ScoreFieldT<T>& field, const ScoreCovariance& cov, int threads = 1) {
    if (cov.dim != field.dim) throw ConfigError("whiten: covariance dimension mismatch");
    WhitenedFieldT<T> out;
    out.rows = field.rows;
    out.cols = field.cols;
    out.dim = field.dim;
    out.values.resize(field.values.size());
    detail::whiten_into(field.global_mean, cov, field.pixels(), field.dim, field.values.data(),
                        out.values.data(), threads);
    return out;
}

/// Consuming overload: transforms the score storage in place, so the peak
/// footprint stays at one field (a score field at full scale is gigabytes).
template <typename T>
WhitenedFieldT<T> whiten(ScoreFieldT<T>&& field, const ScoreCovariance& cov, int threads = 1) {
    if (cov.dim != field.dim) throw ConfigError("whiten: covariance dimension mismatch");
    WhitenedFieldT<T> out;
    out.rows = field.rows;
    out.cols = field.cols;
    out.dim = field.dim;
    const std::vector<double> mean = std::move(field.global_mean);
    out.values = std::move(field.values);
    detail::whiten_into(mean, cov, out.pixels(), out.dim, out.values.data(), out.values.data(),
                        threads);
    return out;
}

} // namespace rvescope

#endif
