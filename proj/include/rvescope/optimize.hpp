#ifndef RVESCOPE_OPTIMIZE_HPP
#define RVESCOPE_OPTIMIZE_HPP

#include <cmath>
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "rvescope/errors.hpp"
#include "rvescope/linalg.hpp"

namespace rvescope {

struct PolishResult {
    int iterations = 0;
    bool converged = false;
    double final_value = 0.0;
    double final_grad_inf_norm = 0.0;
    std::vector<double> objective_trace; // value after each accepted step
};

/// Limited-memory BFGS with Armijo backtracking. `fg(x, grad)` returns the
/// objective and fills the gradient. Stops when the gradient infinity norm
/// drops below `grad_tol` or after `max_iters` accepted steps. The line
/// search guarantees a monotone non-increasing objective trace.
template <typename ValueGrad>
PolishResult lbfgs_minimize(std::vector<double>& x, ValueGrad&& fg, int max_iters,
                            double grad_tol, int memory = 10) {
    const std::size_t d = x.size();
    PolishResult res;
    std::vector<double> grad(d, 0.0);
    double f = fg(x, grad);
    if (!std::isfinite(f)) throw NumericalError("optimizer: non-finite objective at start");
    res.final_value = f;
    res.final_grad_inf_norm = inf_norm(grad);
    if (res.final_grad_inf_norm < grad_tol) {
        res.converged = true;
        return res;
    }

    struct Pair {
        std::vector<double> s;
        std::vector<double> y;
        double rho;
    };
    std::deque<Pair> history;

    std::vector<double> dir(d), x_new(d), grad_new(d), alpha_buf;
    for (int iter = 0; iter < max_iters; ++iter) {
        // two-loop recursion
        dir.assign(grad.begin(), grad.end());
        alpha_buf.assign(history.size(), 0.0);
        for (std::size_t h = history.size(); h-- > 0;) {
            const Pair& p = history[h];
            double a = p.rho * dot(p.s, dir);
            alpha_buf[h] = a;
            for (std::size_t k = 0; k < d; ++k) dir[k] -= a * p.y[k];
        }
        if (!history.empty()) {
            const Pair& last = history.back();
            const double yy = dot(last.y, last.y);
            if (yy > 0.0) {
                const double gamma = dot(last.s, last.y) / yy;
                for (double& v : dir) v *= gamma;
            }
        }
        for (std::size_t h = 0; h < history.size(); ++h) {
            const Pair& p = history[h];
            const double b = p.rho * dot(p.y, dir);
            for (std::size_t k = 0; k < d; ++k) dir[k] += (alpha_buf[h] - b) * p.s[k];
        }
        for (double& v : dir) v = -v;

        double dir_deriv = dot(dir, grad);
        if (!(dir_deriv < 0.0)) {
            // fall back to steepest descent
            for (std::size_t k = 0; k < d; ++k) dir[k] = -grad[k];
            dir_deriv = -dot(grad, grad);
            history.clear();
        }

        // Armijo backtracking
        double step = 1.0;
        double f_new = f;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            for (std::size_t k = 0; k < d; ++k) x_new[k] = x[k] + step * dir[k];
            f_new = fg(x_new, grad_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * dir_deriv) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break; // no representable progress along this direction

        Pair p;
        p.s.resize(d);
        p.y.resize(d);
        for (std::size_t k = 0; k < d; ++k) {
            p.s[k] = x_new[k] - x[k];
            p.y[k] = grad_new[k] - grad[k];
        }
        const double sy = dot(p.s, p.y);
        if (sy > 1e-12 * std::sqrt(dot(p.s, p.s) * dot(p.y, p.y))) {
            p.rho = 1.0 / sy;
            history.push_back(std::move(p));
            if (static_cast<int>(history.size()) > memory) history.pop_front();
        }

        x.swap(x_new);
        grad.swap(grad_new);
        f = f_new;
        res.iterations = iter + 1;
        res.objective_trace.push_back(f);
        res.final_grad_inf_norm = inf_norm(grad);
        if (res.final_grad_inf_norm < grad_tol) {
            res.converged = true;
            break;
        }
    }
    res.final_value = f;
    return res;
}

} // namespace rvescope

#endif
