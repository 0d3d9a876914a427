#ifndef RVESCOPE_MODEL_HPP
#define RVESCOPE_MODEL_HPP

#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rvescope/errors.hpp"
#include "rvescope/linalg.hpp"
#include "rvescope/optimize.hpp"
#include "rvescope/parallel.hpp"
#include "rvescope/rng.hpp"

namespace rvescope {

/// Anything that serves (x_i, y_i) samples with binary features. Modeled by
/// NeighborhoodDataset and by the light-weight views below; fitting and
/// scoring are written against this concept so tests can relabel, permute,
/// or subset without copying data.
template <typename DS>
concept SampleSource = requires(const DS& ds, std::int64_t i, std::span<const double> w,
                                std::span<double> g) {
    { ds.size() } -> std::convertible_to<std::int64_t>;
    { ds.dim() } -> std::convertible_to<int>;
    { ds.response(i) } -> std::convertible_to<std::uint8_t>;
    { ds.dot(i, w) } -> std::convertible_to<double>;
    ds.accumulate(i, 1.0, g);
    ds.gather(i, g);
};

/// Type-erased sample source. Cross-validation refits on fold subsets; the
/// erasure caps the template recursion fit -> cv -> SubsetView -> fit at a
/// fixed point instead of nesting view types without bound.
class AnySampleSource {
    struct Iface {
        virtual ~Iface() = default;
        virtual std::int64_t size() const = 0;
        virtual int dim() const = 0;
        virtual std::uint8_t response(std::int64_t i) const = 0;
        virtual double dot(std::int64_t i, std::span<const double> w) const = 0;
        virtual void accumulate(std::int64_t i, double c, std::span<double> g) const = 0;
        virtual void gather(std::int64_t i, std::span<double> out) const = 0;
    };
    template <typename DS>
    struct Impl final : Iface {
        DS ds;
        explicit Impl(DS d) : ds(std::move(d)) {}
        std::int64_t size() const override { return ds.size(); }
        int dim() const override { return ds.dim(); }
        std::uint8_t response(std::int64_t i) const override { return ds.response(i); }
        double dot(std::int64_t i, std::span<const double> w) const override { return ds.dot(i, w); }
        void accumulate(std::int64_t i, double c, std::span<double> g) const override {
            ds.accumulate(i, c, g);
        }
        void gather(std::int64_t i, std::span<double> out) const override { ds.gather(i, out); }
    };
    std::shared_ptr<const Iface> impl_;

public:
    template <typename DS>
        requires(!std::same_as<std::decay_t<DS>, AnySampleSource>)
    explicit AnySampleSource(DS ds) : impl_(std::make_shared<Impl<DS>>(std::move(ds))) {}

    std::int64_t size() const { return impl_->size(); }
    int dim() const { return impl_->dim(); }
    std::uint8_t response(std::int64_t i) const { return impl_->response(i); }
    double dot(std::int64_t i, std::span<const double> w) const { return impl_->dot(i, w); }
    void accumulate(std::int64_t i, double c, std::span<double> g) const { impl_->accumulate(i, c, g); }
    void gather(std::int64_t i, std::span<double> out) const { impl_->gather(i, out); }
};

/// View of a subset of another source (used for CV folds).
template <typename DS>
class SubsetView {
public:
    SubsetView(const DS& base, std::vector<std::int64_t> indices)
        : base_(&base), idx_(std::move(indices)) {}

    std::int64_t size() const { return static_cast<std::int64_t>(idx_.size()); }
    int dim() const { return base_->dim(); }
    std::uint8_t response(std::int64_t i) const { return base_->response(idx_[static_cast<std::size_t>(i)]); }
    double dot(std::int64_t i, std::span<const double> w) const {
        return base_->dot(idx_[static_cast<std::size_t>(i)], w);
    }
    void accumulate(std::int64_t i, double c, std::span<double> g) const {
        base_->accumulate(idx_[static_cast<std::size_t>(i)], c, g);
    }
    template <typename T>
    void gather(std::int64_t i, std::span<T> out) const {
        base_->gather(idx_[static_cast<std::size_t>(i)], out);
    }

private:
    const DS* base_;
    std::vector<std::int64_t> idx_;
};

enum class ModelKind { Logistic, Mlp };

inline std::string to_string(ModelKind k) { return k == ModelKind::Logistic ? "logistic" : "mlp"; }

inline ModelKind parse_model_kind(const std::string& s) {
    if (s == "logistic") return ModelKind::Logistic;
    if (s == "mlp" || s == "nn") return ModelKind::Mlp;
    throw ConfigError("unknown model kind '" + s + "' (expected logistic or mlp)");
}

/// Logistic regression P(Y=1|x) = sigma(w.x + b). Parameter layout for
/// scores and checkpoints is (weights..., bias), bias coordinate last.
struct LogisticModel {
    std::vector<double> weights; // d_x
    double bias = 0.0;
    double lambda = 0.0; // L2 strength on weights only
    int ls = 0;          // neighborhood size the model was trained for

    int dim_x() const { return static_cast<int>(weights.size()); }
    int dim_theta() const { return dim_x() + 1; }
};

/// One-hidden-layer network: 10 tanh units, logistic output. Scores are
/// taken w.r.t. the last layer only, layout (output_weights..., output_bias).
struct MlpModel {
    static constexpr int kHidden = 10;
    std::vector<double> hidden_weights; // kHidden x d_x, row-major
    std::vector<double> hidden_bias;    // kHidden
    std::vector<double> output_weights; // kHidden
    double output_bias = 0.0;
    double lambda = 0.0;
    int ls = 0;

    int dim_x() const { return static_cast<int>(hidden_weights.size()) / kHidden; }
    static constexpr int last_layer_dim() { return kHidden + 1; }
};

struct FitReport {
    double final_mean_nll = 0.0;
    double final_grad_inf_norm = 0.0; // for the MLP: last-layer gradient
    int iterations = 0;               // accepted polish steps
    bool converged = false;
    double cv_balanced_accuracy = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> polish_objective_trace;
};

struct OptimizerSettings {
    int batch_size = 4096;
    int sgd_epochs = 2;
    double learning_rate = 0.5; // <= 0 for the MLP means: tune over the grid below
    double momentum = 0.9;
    std::vector<double> mlp_lr_grid = {1e-1, 1e-2, 1e-3};
    int polish_max_iters = 2000;
    double grad_tol = 1e-6; // infinity norm of the full-batch gradient
    int lbfgs_memory = 10;
    int cv_folds = 0; // 0 = skip cross-validation inside fit
    std::uint64_t seed = 0;
    int threads = 1;
};

inline double sigmoid(double m) {
    if (m >= 0.0) {
        const double e = std::exp(-m);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(m);
    return e / (1.0 + e);
}

// -log P(y | margin m): stable log(1 + e^m) - y*m
inline double nll_from_margin(double m, std::uint8_t y) {
    const double softplus = m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
    return softplus - (y ? m : 0.0);
}

constexpr double kProbClamp = 1e-12;

inline double clamp_probability(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

/// P(Y=1|x) for the logistic model, clamped inside (0,1).
inline double predict_proba(const LogisticModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.dim_x())
        throw ConfigError("predict_proba: input dimension " + std::to_string(x.size()) +
                          " does not match model d_x " + std::to_string(model.dim_x()));
    double m = model.bias;
    for (std::size_t j = 0; j < x.size(); ++j) m += model.weights[j] * x[j];
    return clamp_probability(sigmoid(m));
}

/// Hidden activations h(x) of the MLP (tanh units).
inline void mlp_hidden(const MlpModel& model, std::span<const double> x, std::span<double> h) {
    const int dx = model.dim_x();
    for (int k = 0; k < MlpModel::kHidden; ++k) {
        const double* row = &model.hidden_weights[static_cast<std::size_t>(k) * dx];
        double acc = model.hidden_bias[static_cast<std::size_t>(k)];
        for (int j = 0; j < dx; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
        h[static_cast<std::size_t>(k)] = std::tanh(acc);
    }
}

inline double predict_proba(const MlpModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.dim_x())
        throw ConfigError("predict_proba: input dimension " + std::to_string(x.size()) +
                          " does not match model d_x " + std::to_string(model.dim_x()));
    double h[MlpModel::kHidden];
    mlp_hidden(model, x, std::span<double>(h, MlpModel::kHidden));
    double u = model.output_bias;
    for (int k = 0; k < MlpModel::kHidden; ++k) u += model.output_weights[static_cast<std::size_t>(k)] * h[k];
    return clamp_probability(sigmoid(u));
}

namespace detail {

constexpr std::int64_t kReduceChunk = 8192;

inline void check_fit_preconditions(std::int64_t n, int d_theta, std::int64_t n_pos) {
    if (n < d_theta)
        throw NumericalError("fit: need at least d = " + std::to_string(d_theta) +
                             " samples, got " + std::to_string(n));
    if (n_pos == 0 || n_pos == n)
        throw NumericalError("fit: single-class dataset, likelihood is unbounded");
}

template <SampleSource DS>
std::int64_t count_positives(const DS& ds) {
    std::int64_t pos = 0;
    const std::int64_t n = ds.size();
    for (std::int64_t i = 0; i < n; ++i) pos += ds.response(i);
    return pos;
}

// Mean regularized NLL and its gradient for the logistic model.
// theta = (weights..., bias). Chunked reduction combined in chunk order, so
// the result is bit-reproducible for any thread count.
template <SampleSource DS>
double logistic_value_grad(const DS& ds, std::span<const double> theta, double lambda,
                           int threads, std::span<double> grad) {
    const std::int64_t n = ds.size();
    const int dx = ds.dim();
    const int d = dx + 1;
    const std::int64_t chunks = (n + kReduceChunk - 1) / kReduceChunk;
    std::vector<double> partial_grad(static_cast<std::size_t>(chunks) * d, 0.0);
    std::vector<double> partial_nll(static_cast<std::size_t>(chunks), 0.0);
    const std::span<const double> w = theta.subspan(0, static_cast<std::size_t>(dx));
    const double bias = theta[static_cast<std::size_t>(dx)];

    parallel_for(chunks, threads, [&](std::int64_t c0, std::int64_t c1) {
        for (std::int64_t c = c0; c < c1; ++c) {
            const std::int64_t lo = c * kReduceChunk;
            const std::int64_t hi = std::min(n, lo + kReduceChunk);
            double* g = &partial_grad[static_cast<std::size_t>(c) * d];
            double nll = 0.0;
            for (std::int64_t i = lo; i < hi; ++i) {
                const double m = ds.dot(i, w) + bias;
                const std::uint8_t y = ds.response(i);
                nll += nll_from_margin(m, y);
                const double coeff = sigmoid(m) - (y ? 1.0 : 0.0);
                ds.accumulate(i, coeff, std::span<double>(g, static_cast<std::size_t>(dx)));
                g[dx] += coeff;
            }
            partial_nll[static_cast<std::size_t>(c)] = nll;
        }
    });

    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::int64_t c = 0; c < chunks; ++c) {
        const double* g = &partial_grad[static_cast<std::size_t>(c) * d];
        for (int j = 0; j < d; ++j) grad[static_cast<std::size_t>(j)] += g[j];
    }
    double nll_sum = pairwise_sum(partial_nll);
    const double inv_n = 1.0 / static_cast<double>(n);
    double penalty = 0.0;
    for (int j = 0; j < dx; ++j) {
        penalty += theta[static_cast<std::size_t>(j)] * theta[static_cast<std::size_t>(j)];
        grad[static_cast<std::size_t>(j)] =
            grad[static_cast<std::size_t>(j)] * inv_n + lambda * inv_n * theta[static_cast<std::size_t>(j)];
    }
    grad[static_cast<std::size_t>(dx)] *= inv_n;
    const double value = nll_sum * inv_n + 0.5 * lambda * inv_n * penalty;
    if (!std::isfinite(value)) throw NumericalError("fit: objective diverged (non-finite loss)");
    return value;
}

} // namespace detail

template <SampleSource DS>
double cv_balanced_accuracy(const DS& ds, ModelKind kind, int folds, double lambda,
                            const OptimizerSettings& opt, std::uint64_t seed);

/// Maximum (regularized) likelihood logistic fit: mini-batch SGD passes, then
/// full-batch L-BFGS polish until the gradient infinity norm drops below
/// opt.grad_tol, so the training-set mean score vanishes to that tolerance.
template <SampleSource DS>
std::pair<LogisticModel, FitReport> fit_logistic(const DS& ds, double lambda,
                                                 const OptimizerSettings& opt, int ls_hint = 0) {
    const std::int64_t n = ds.size();
    const int dx = ds.dim();
    const int d = dx + 1;
    detail::check_fit_preconditions(n, d, detail::count_positives(ds));
    if (lambda < 0.0) throw ConfigError("fit: lambda must be >= 0");

    std::vector<double> theta(static_cast<std::size_t>(d), 0.0);
    Rng rng(opt.seed ^ 0x10915cull);

    // phase 1: mini-batch SGD on a fixed halving schedule
    if (opt.sgd_epochs > 0) {
        std::vector<std::int64_t> order(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        std::vector<double> batch_grad(static_cast<std::size_t>(d), 0.0);
        const std::span<double> w(theta.data(), static_cast<std::size_t>(dx));
        double lr = opt.learning_rate > 0.0 ? opt.learning_rate : 0.5;
        for (int epoch = 0; epoch < opt.sgd_epochs; ++epoch) {
            rng.shuffle(order);
            for (std::int64_t start = 0; start < n; start += opt.batch_size) {
                const std::int64_t stop = std::min(n, start + opt.batch_size);
                const double inv_b = 1.0 / static_cast<double>(stop - start);
                std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
                for (std::int64_t k = start; k < stop; ++k) {
                    const std::int64_t i = order[static_cast<std::size_t>(k)];
                    const double m = ds.dot(i, w) + theta[static_cast<std::size_t>(dx)];
                    const double coeff = sigmoid(m) - (ds.response(i) ? 1.0 : 0.0);
                    ds.accumulate(i, coeff, batch_grad);
                    batch_grad[static_cast<std::size_t>(dx)] += coeff;
                }
                const double reg = lambda / static_cast<double>(n);
                for (int j = 0; j < dx; ++j) {
                    theta[static_cast<std::size_t>(j)] -=
                        lr * (batch_grad[static_cast<std::size_t>(j)] * inv_b +
                              reg * theta[static_cast<std::size_t>(j)]);
                }
                theta[static_cast<std::size_t>(dx)] -= lr * batch_grad[static_cast<std::size_t>(dx)] * inv_b;
            }
            lr *= 0.5;
        }
    }

    // phase 2: full-batch polish
    auto value_grad = [&](const std::vector<double>& x, std::vector<double>& g) {
        return detail::logistic_value_grad(ds, x, lambda, opt.threads, g);
    };
    PolishResult pol = lbfgs_minimize(theta, value_grad, opt.polish_max_iters, opt.grad_tol,
                                      opt.lbfgs_memory);

    LogisticModel model;
    model.weights.assign(theta.begin(), theta.end() - 1);
    model.bias = theta.back();
    model.lambda = lambda;
    model.ls = ls_hint;

    FitReport report;
    double w_sq = 0.0;
    for (double v : model.weights) w_sq += v * v;
    report.final_mean_nll = pol.final_value - 0.5 * lambda / static_cast<double>(n) * w_sq;
    report.final_grad_inf_norm = pol.final_grad_inf_norm;
    report.iterations = pol.iterations;
    report.converged = pol.converged;
    report.polish_objective_trace = std::move(pol.objective_trace);
    if (opt.cv_folds >= 2) {
        report.cv_balanced_accuracy =
            cv_balanced_accuracy(ds, ModelKind::Logistic, opt.cv_folds, lambda, opt, opt.seed + 1);
    }
    return {std::move(model), std::move(report)};
}

namespace detail {

struct MlpWork {
    std::vector<double> x;  // gathered features
    std::vector<double> h;  // hidden activations
};

// forward pass; returns output margin u
inline double mlp_forward(const MlpModel& m, const std::vector<double>& x, std::vector<double>& h) {
    const int dx = m.dim_x();
    double u = m.output_bias;
    for (int k = 0; k < MlpModel::kHidden; ++k) {
        const double* row = &m.hidden_weights[static_cast<std::size_t>(k) * dx];
        double acc = m.hidden_bias[static_cast<std::size_t>(k)];
        for (int j = 0; j < dx; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
        h[static_cast<std::size_t>(k)] = std::tanh(acc);
        u += m.output_weights[static_cast<std::size_t>(k)] * h[static_cast<std::size_t>(k)];
    }
    return u;
}

template <SampleSource DS>
void mlp_sgd(const DS& ds, MlpModel& model, double lambda, const OptimizerSettings& opt,
             double learning_rate, Rng& rng) {
    const std::int64_t n = ds.size();
    const int dx = model.dim_x();
    constexpr int H = MlpModel::kHidden;
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;

    MlpWork work;
    work.x.resize(static_cast<std::size_t>(dx));
    work.h.resize(H);
    // velocity buffers for momentum
    std::vector<double> v_hw(model.hidden_weights.size(), 0.0);
    std::vector<double> v_hb(H, 0.0), v_ow(H, 0.0);
    double v_ob = 0.0;
    std::vector<double> g_hw(model.hidden_weights.size());
    std::vector<double> g_hb(H), g_ow(H);

    for (int epoch = 0; epoch < opt.sgd_epochs; ++epoch) {
        rng.shuffle(order);
        for (std::int64_t start = 0; start < n; start += opt.batch_size) {
            const std::int64_t stop = std::min(n, start + opt.batch_size);
            const double inv_b = 1.0 / static_cast<double>(stop - start);
            std::fill(g_hw.begin(), g_hw.end(), 0.0);
            std::fill(g_hb.begin(), g_hb.end(), 0.0);
            std::fill(g_ow.begin(), g_ow.end(), 0.0);
            double g_ob = 0.0;
            for (std::int64_t k = start; k < stop; ++k) {
                const std::int64_t i = order[static_cast<std::size_t>(k)];
                ds.gather(i, std::span<double>(work.x));
                const double u = mlp_forward(model, work.x, work.h);
                const double du = sigmoid(u) - (ds.response(i) ? 1.0 : 0.0);
                g_ob += du;
                for (int q = 0; q < H; ++q) {
                    g_ow[static_cast<std::size_t>(q)] += du * work.h[static_cast<std::size_t>(q)];
                    const double dh = du * model.output_weights[static_cast<std::size_t>(q)] *
                                      (1.0 - work.h[static_cast<std::size_t>(q)] * work.h[static_cast<std::size_t>(q)]);
                    if (dh != 0.0) {
                        double* gw = &g_hw[static_cast<std::size_t>(q) * dx];
                        for (int j = 0; j < dx; ++j) gw[j] += dh * work.x[static_cast<std::size_t>(j)];
                        g_hb[static_cast<std::size_t>(q)] += dh;
                    }
                }
            }
            const double reg = lambda / static_cast<double>(n);
            auto step = [&](double& p, double& v, double g) {
                v = opt.momentum * v - learning_rate * g;
                p += v;
            };
            for (std::size_t j = 0; j < model.hidden_weights.size(); ++j)
                step(model.hidden_weights[j], v_hw[j], g_hw[j] * inv_b + reg * model.hidden_weights[j]);
            for (int q = 0; q < H; ++q) {
                step(model.hidden_bias[static_cast<std::size_t>(q)], v_hb[static_cast<std::size_t>(q)],
                     g_hb[static_cast<std::size_t>(q)] * inv_b);
                step(model.output_weights[static_cast<std::size_t>(q)], v_ow[static_cast<std::size_t>(q)],
                     g_ow[static_cast<std::size_t>(q)] * inv_b + reg * model.output_weights[static_cast<std::size_t>(q)]);
            }
            step(model.output_bias, v_ob, g_ob * inv_b);
        }
    }
}

// Mean regularized NLL restricted to the last layer, with hidden activations
// precomputed. phi = (output_weights..., output_bias). The hidden-weight
// penalty is a constant here and is excluded; scores only see the last layer.
inline double mlp_last_layer_value_grad(std::span<const double> hidden_acts, // n x kHidden
                                        std::span<const std::uint8_t> labels,
                                        std::span<const double> phi, double lambda,
                                        std::span<double> grad) {
    constexpr int H = MlpModel::kHidden;
    const std::int64_t n = static_cast<std::int64_t>(labels.size());
    std::fill(grad.begin(), grad.end(), 0.0);
    double nll = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double* h = &hidden_acts[static_cast<std::size_t>(i) * H];
        double u = phi[H];
        for (int k = 0; k < H; ++k) u += phi[static_cast<std::size_t>(k)] * h[k];
        const std::uint8_t y = labels[static_cast<std::size_t>(i)];
        nll += nll_from_margin(u, y);
        const double du = sigmoid(u) - (y ? 1.0 : 0.0);
        for (int k = 0; k < H; ++k) grad[static_cast<std::size_t>(k)] += du * h[k];
        grad[H] += du;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    double penalty = 0.0;
    for (int k = 0; k < H; ++k) {
        penalty += phi[static_cast<std::size_t>(k)] * phi[static_cast<std::size_t>(k)];
        grad[static_cast<std::size_t>(k)] =
            grad[static_cast<std::size_t>(k)] * inv_n + lambda * inv_n * phi[static_cast<std::size_t>(k)];
    }
    grad[H] *= inv_n;
    const double value = nll * inv_n + 0.5 * lambda * inv_n * penalty;
    if (!std::isfinite(value)) throw NumericalError("fit: objective diverged (non-finite loss)");
    return value;
}

} // namespace detail

/// Fits the 10-unit one-hidden-layer network. SGD with momentum trains all
/// layers; the polish phase then re-solves the (convex) last layer by
/// full-batch L-BFGS so the last-layer mean score vanishes. When
/// opt.learning_rate <= 0 the rate is tuned over opt.mlp_lr_grid by
/// cross-validated balanced accuracy.
template <SampleSource DS>
std::pair<MlpModel, FitReport> fit_mlp(const DS& ds, double lambda, const OptimizerSettings& opt,
                                       int ls_hint = 0);

/// Balanced accuracy from confusion counts: (TPR + TNR) / 2.
inline double balanced_accuracy(std::int64_t tp, std::int64_t fn, std::int64_t tn, std::int64_t fp) {
    const double tpr = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    const double tnr = tn + fp > 0 ? static_cast<double>(tn) / static_cast<double>(tn + fp) : 0.0;
    return 0.5 * (tpr + tnr);
}

namespace detail {

template <typename Model, SampleSource DS>
double balanced_accuracy_on(const Model& model, const DS& ds) {
    std::int64_t tp = 0, fn = 0, tn = 0, fp = 0;
    std::vector<double> x(static_cast<std::size_t>(ds.dim()));
    const std::int64_t n = ds.size();
    for (std::int64_t i = 0; i < n; ++i) {
        ds.gather(i, std::span<double>(x));
        const bool predicted = predict_proba(model, x) >= 0.5;
        if (ds.response(i)) {
            predicted ? ++tp : ++fn;
        } else {
            predicted ? ++fp : ++tn;
        }
    }
    return balanced_accuracy(tp, fn, tn, fp);
}

} // namespace detail

/// Stratified k-fold cross-validated balanced accuracy at threshold 0.5.
/// Folds are stratified by class and seeded; every fold holds both classes.
inline double cv_balanced_accuracy_erased(const AnySampleSource& ds, ModelKind kind, int folds,
                                          double lambda, const OptimizerSettings& opt,
                                          std::uint64_t seed) {
    if (folds < 2) throw ConfigError("cv: folds must be >= 2");
    const std::int64_t n = ds.size();
    std::vector<std::int64_t> pos, neg;
    for (std::int64_t i = 0; i < n; ++i) (ds.response(i) ? pos : neg).push_back(i);
    if (static_cast<std::int64_t>(pos.size()) < folds || static_cast<std::int64_t>(neg.size()) < folds)
        throw NumericalError("cv: a fold would miss a class (need >= folds samples per class)");
    Rng rng(seed ^ 0xc0ffeeULL);
    rng.shuffle(pos);
    rng.shuffle(neg);

    OptimizerSettings fold_opt = opt;
    fold_opt.cv_folds = 0;
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
        std::vector<std::int64_t> train, test;
        for (std::size_t k = 0; k < pos.size(); ++k)
            (static_cast<int>(k % folds) == f ? test : train).push_back(pos[k]);
        for (std::size_t k = 0; k < neg.size(); ++k)
            (static_cast<int>(k % folds) == f ? test : train).push_back(neg[k]);
        SubsetView<AnySampleSource> train_view(ds, std::move(train));
        SubsetView<AnySampleSource> test_view(ds, std::move(test));
        if (kind == ModelKind::Logistic) {
            auto [model, rep] = fit_logistic(train_view, lambda, fold_opt);
            total += detail::balanced_accuracy_on(model, test_view);
        } else {
            auto [model, rep] = fit_mlp(train_view, lambda, fold_opt);
            total += detail::balanced_accuracy_on(model, test_view);
        }
    }
    return total / folds;
}

template <SampleSource DS>
double cv_balanced_accuracy(const DS& ds, ModelKind kind, int folds, double lambda,
                            const OptimizerSettings& opt, std::uint64_t seed) {
    if constexpr (std::same_as<DS, AnySampleSource>) {
        return cv_balanced_accuracy_erased(ds, kind, folds, lambda, opt, seed);
    } else {
        return cv_balanced_accuracy_erased(AnySampleSource(ds), kind, folds, lambda, opt, seed);
    }
}

template <SampleSource DS>
std::pair<MlpModel, FitReport> fit_mlp(const DS& ds, double lambda, const OptimizerSettings& opt,
                                       int ls_hint) {
    const std::int64_t n = ds.size();
    const int dx = ds.dim();
    constexpr int H = MlpModel::kHidden;
    detail::check_fit_preconditions(n, dx + 1, detail::count_positives(ds));
    if (lambda < 0.0) throw ConfigError("fit: lambda must be >= 0");

    double lr = opt.learning_rate;
    if (lr <= 0.0) {
        // tune by CV balanced accuracy over the grid
        double best_acc = -1.0;
        for (double cand : opt.mlp_lr_grid) {
            OptimizerSettings probe = opt;
            probe.learning_rate = cand;
            probe.cv_folds = 0;
            const double acc = cv_balanced_accuracy(ds, ModelKind::Mlp, 3, lambda, probe, opt.seed + 17);
            if (acc > best_acc) {
                best_acc = acc;
                lr = cand;
            }
        }
    }

    MlpModel model;
    model.hidden_weights.resize(static_cast<std::size_t>(H) * dx);
    model.hidden_bias.assign(H, 0.0);
    model.output_weights.assign(H, 0.0);
    model.output_bias = 0.0;
    model.lambda = lambda;
    model.ls = ls_hint;

    Rng rng(opt.seed ^ 0x3117ull);
    const double init_scale = 1.0 / std::sqrt(static_cast<double>(dx));
    for (double& w : model.hidden_weights) w = rng.uniform(-init_scale, init_scale);
    for (double& b : model.hidden_bias) b = rng.uniform(-0.1, 0.1);
    for (double& w : model.output_weights) w = rng.uniform(-0.5, 0.5);

    detail::mlp_sgd(ds, model, lambda, opt, lr, rng);

    // precompute hidden activations, then polish the (convex) last layer
    std::vector<double> hidden_acts(static_cast<std::size_t>(n) * H);
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(n));
    {
        std::vector<double> x(static_cast<std::size_t>(dx));
        std::vector<double> h(H);
        for (std::int64_t i = 0; i < n; ++i) {
            ds.gather(i, std::span<double>(x));
            detail::mlp_forward(model, x, h);
            for (int k = 0; k < H; ++k) hidden_acts[static_cast<std::size_t>(i) * H + k] = h[static_cast<std::size_t>(k)];
            labels[static_cast<std::size_t>(i)] = ds.response(i);
        }
    }
    std::vector<double> phi(H + 1);
    for (int k = 0; k < H; ++k) phi[static_cast<std::size_t>(k)] = model.output_weights[static_cast<std::size_t>(k)];
    phi[H] = model.output_bias;
    auto value_grad = [&](const std::vector<double>& p, std::vector<double>& g) {
        return detail::mlp_last_layer_value_grad(hidden_acts, labels, p, lambda, g);
    };
    PolishResult pol = lbfgs_minimize(phi, value_grad, opt.polish_max_iters, opt.grad_tol,
                                      opt.lbfgs_memory);
    for (int k = 0; k < H; ++k) model.output_weights[static_cast<std::size_t>(k)] = phi[static_cast<std::size_t>(k)];
    model.output_bias = phi[H];

    FitReport report;
    double w_sq = 0.0;
    for (double v : model.output_weights) w_sq += v * v;
    report.final_mean_nll = pol.final_value - 0.5 * lambda / static_cast<double>(n) * w_sq;
    report.final_grad_inf_norm = pol.final_grad_inf_norm;
    report.iterations = pol.iterations;
    report.converged = pol.converged;
    report.polish_objective_trace = std::move(pol.objective_trace);
    if (opt.cv_folds >= 2) {
        OptimizerSettings cv_opt = opt;
        cv_opt.learning_rate = lr; // reuse the tuned rate inside folds
        report.cv_balanced_accuracy =
            cv_balanced_accuracy(ds, ModelKind::Mlp, opt.cv_folds, lambda, cv_opt, opt.seed + 1);
    }
    return {std::move(model), std::move(report)};
}

} // namespace rvescope

#endif
