#pragma once

#include "combss/types.hpp"

#include <algorithm>
#include <limits>
#include <optional>
#include <utility>

namespace combss::glm {

inline double sigmoid(double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// One-hot response over the non-baseline classes: n x (C-1). Logistic data
// (labels {0,1}) maps to a single column, class C is the baseline throughout.
inline MatrixXd one_hot_response(const VectorXi& y, Family family, int class_count) {
    const Eigen::Index n = y.size();
    const int cols = family == Family::logistic ? 1 : class_count - 1;
    MatrixXd out = MatrixXd::Zero(n, cols);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (family == Family::logistic) {
            out(i, 0) = static_cast<double>(y[i]);
        } else if (y[i] >= 1 && y[i] <= class_count - 1) {
            out(i, y[i] - 1) = 1.0;
        }
    }
    return out;
}

struct NewtonOptions {
    int max_iterations = 100;
    double gradient_tol = 1e-8;
    double intercept_cap = 30.0;
};

// Minimizer of the reparameterized inner problem: intercept(s), coefficients
// (one column per non-baseline class) and the penalized objective value.
// `dual` carries the kernel-space iterate when the n < p solver was used, so
// warm starts can be propagated along the homotopy.
struct InnerFit {
    VectorXd intercept;
    MatrixXd coefficients;
    double objective = std::numeric_limits<double>::quiet_NaN();
    int iterations = 0;
    bool converged = false;
    bool intercept_capped = false;
    MatrixXd dual;
};

// Per-coefficient quadratic penalty weights; first m entries equal lambda.
struct PenaltyWeights {
    VectorXd omega;
    int clamped_count = 0;
};

namespace detail {

// nll = -(1/n) l(eta) together with the eta-gradient U and the class
// probabilities of the non-baseline classes. The logistic case is the
// single-column specialization of the softmax form (baseline = class C).
struct LikelihoodEval {
    double nll = 0.0;
    MatrixXd grad_eta;  // n x (C-1), d nll / d eta
    MatrixXd probs;     // n x (C-1)
};

inline LikelihoodEval eval_likelihood(const MatrixXd& eta, const MatrixXd& onehot) {
    const Eigen::Index n = eta.rows();
    const Eigen::Index q = eta.cols();
    LikelihoodEval ev;
    ev.probs.resize(n, q);
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double mx = 0.0;  // baseline score is 0
        for (Eigen::Index c = 0; c < q; ++c) mx = std::max(mx, eta(i, c));
        double denom = std::exp(-mx);
        for (Eigen::Index c = 0; c < q; ++c) denom += std::exp(eta(i, c) - mx);
        const double lse = mx + std::log(denom);
        for (Eigen::Index c = 0; c < q; ++c) ev.probs(i, c) = std::exp(eta(i, c) - lse);
        total += lse - (onehot.row(i).cwiseProduct(eta.row(i))).sum();
    }
    ev.nll = total / static_cast<double>(n);
    ev.grad_eta = (ev.probs - onehot) / static_cast<double>(n);
    return ev;
}

// sum_c xi_c' diag(r) xi_c
struct DiagonalPenalty {
    VectorXd ridge;
    double value(const MatrixXd& coef) const {
        return (coef.array().square().colwise() * ridge.array()).sum();
    }
    void add_gradient(const MatrixXd& coef, MatrixXd& grad) const {
        grad.noalias() += 2.0 * (ridge.asDiagonal() * coef);
    }
    void add_hessian(Eigen::Ref<MatrixXd> block) const {
        block.diagonal() += 2.0 * ridge;
    }
};

// sum_c xi_c' Q xi_c with dense PSD Q (kernel-space solver uses Q = K)
struct DensePenalty {
    const MatrixXd* quad = nullptr;
    double value(const MatrixXd& coef) const {
        return (coef.transpose() * (*quad * coef)).trace();
    }
    void add_gradient(const MatrixXd& coef, MatrixXd& grad) const {
        grad.noalias() += 2.0 * (*quad * coef);
    }
    void add_hessian(Eigen::Ref<MatrixXd> block) const {
        block += 2.0 * *quad;
    }
};

// Damped Newton with Armijo backtracking on
//   F(xi0, Xi) = -(1/n) l(xi0, Z Xi) + sum_c xi_c' Q xi_c,
// intercepts unpenalized. `user_grad_norm(g0, U, Xi, G)` must return the
// max-norm of the gradient in the caller's coordinates; convergence is
// declared against that norm so rescaled solves still meet the contract on
// the original problem. Intercepts are clamped at +-intercept_cap; a fit that
// ends at the cap is reported as not converged.
template <class Penalty, class UserGradNorm>
InnerFit newton_solve(const MatrixXd& Z, const MatrixXd& onehot, const Penalty& penalty,
                      const NewtonOptions& opt, UserGradNorm&& user_grad_norm,
                      const VectorXd* warm_intercept, const MatrixXd* warm_coef) {
    const Eigen::Index n = Z.rows();
    const Eigen::Index q = Z.cols();
    const Eigen::Index nc = onehot.cols();  // C-1
    const Eigen::Index dim = (q + 1) * nc;

    InnerFit fit;
    fit.intercept = (warm_intercept && warm_intercept->size() == nc)
                        ? *warm_intercept
                        : VectorXd::Zero(nc);
    fit.coefficients = (warm_coef && warm_coef->rows() == q && warm_coef->cols() == nc)
                           ? *warm_coef
                           : MatrixXd::Zero(q, nc);

    auto clamp_intercept = [&](VectorXd& b0) {
        bool hit = false;
        for (Eigen::Index c = 0; c < nc; ++c) {
            if (std::abs(b0[c]) > opt.intercept_cap) {
                b0[c] = std::copysign(opt.intercept_cap, b0[c]);
                hit = true;
            }
        }
        return hit;
    };
    fit.intercept_capped = clamp_intercept(fit.intercept);

    MatrixXd eta(n, nc);
    auto objective_at = [&](const VectorXd& b0, const MatrixXd& coef) {
        eta.noalias() = Z * coef;
        eta.rowwise() += b0.transpose();
        LikelihoodEval ev = eval_likelihood(eta, onehot);
        return std::make_pair(ev.nll + penalty.value(coef), std::move(ev));
    };

    auto [obj, ev] = objective_at(fit.intercept, fit.coefficients);
    if (!std::isfinite(obj)) throw NumericError("non-finite objective in inner GLM fit");

    MatrixXd hess(dim, dim);
    VectorXd step(dim), grad_flat(dim);
    bool cap_active = fit.intercept_capped;

    for (int iter = 0; iter < opt.max_iterations; ++iter) {
        // gradient: intercepts are column sums of U, coefficients Z'U + penalty
        VectorXd g0 = ev.grad_eta.colwise().sum();
        MatrixXd grad = Z.transpose() * ev.grad_eta;
        penalty.add_gradient(fit.coefficients, grad);
        if (!grad.allFinite() || !g0.allFinite())
            throw NumericError("non-finite gradient in inner GLM fit");

        const double gnorm = user_grad_norm(g0, ev.grad_eta, fit.coefficients, grad);
        if (gnorm <= opt.gradient_tol) {
            fit.converged = !cap_active;
            break;
        }
        fit.iterations = iter + 1;

        // Hessian blocks: (1/n) Zbar' diag(w_cd) Zbar with
        // w_cd = pi_c (1{c=d} - pi_d), plus the penalty on diagonal blocks.
        hess.setZero();
        VectorXd w(n);
        for (Eigen::Index c = 0; c < nc; ++c) {
            for (Eigen::Index d = c; d < nc; ++d) {
                if (c == d)
                    w = ev.probs.col(c).array() * (1.0 - ev.probs.col(c).array());
                else
                    w = -(ev.probs.col(c).array() * ev.probs.col(d).array());
                w /= static_cast<double>(n);
                const Eigen::Index rc = c * (q + 1), rd = d * (q + 1);
                const double s00 = w.sum();
                VectorXd zw = Z.transpose() * w;
                hess(rc, rd) = s00;
                hess.block(rc + 1, rd, q, 1) = zw;
                hess.block(rc, rd + 1, 1, q) = zw.transpose();
                hess.block(rc + 1, rd + 1, q, q).noalias() =
                    Z.transpose() * w.asDiagonal() * Z;
                if (c != d) {
                    hess.block(rd, rc, q + 1, q + 1) =
                        hess.block(rc, rd, q + 1, q + 1).transpose();
                }
            }
            penalty.add_hessian(hess.block(c * (q + 1) + 1, c * (q + 1) + 1, q, q));
        }

        for (Eigen::Index c = 0; c < nc; ++c) {
            grad_flat[c * (q + 1)] = g0[c];
            grad_flat.segment(c * (q + 1) + 1, q) = grad.col(c);
        }

        // Newton direction; Levenberg jitter if the factorization degenerates
        double jitter = 0.0;
        for (int attempt = 0; attempt < 4; ++attempt) {
            MatrixXd hj = hess;
            if (jitter > 0) hj.diagonal().array() += jitter;
            Eigen::LDLT<MatrixXd> ldlt(hj);
            step = ldlt.solve(-grad_flat);
            if (ldlt.info() == Eigen::Success && step.allFinite()) break;
            jitter = jitter == 0.0 ? 1e-10 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff())
                                   : jitter * 100.0;
            if (attempt == 3) throw NumericError("inner Newton system could not be solved");
        }

        double slope = grad_flat.dot(step);
        if (slope > 0) {  // not a descent direction; fall back to steepest descent
            step = -grad_flat;
            slope = -grad_flat.squaredNorm();
        }

        // Armijo backtracking
        double step_size = 1.0;
        bool accepted = false;
        VectorXd b0_new(nc);
        MatrixXd coef_new(q, nc);
        for (int bt = 0; bt < 60; ++bt) {
            for (Eigen::Index c = 0; c < nc; ++c) {
                b0_new[c] = fit.intercept[c] + step_size * step[c * (q + 1)];
                coef_new.col(c) =
                    fit.coefficients.col(c) + step_size * step.segment(c * (q + 1) + 1, q);
            }
            const bool hit_cap = clamp_intercept(b0_new);
            auto [obj_new, ev_new] = objective_at(b0_new, coef_new);
            // noise floor keeps tight tolerances reachable once the objective
            // decrement falls below machine precision
            if (std::isfinite(obj_new) &&
                obj_new <= obj + 1e-4 * step_size * slope + 1e-14 * (1.0 + std::abs(obj))) {
                fit.intercept = b0_new;
                fit.coefficients = coef_new;
                obj = obj_new;
                ev = std::move(ev_new);
                cap_active = hit_cap;
                fit.intercept_capped = fit.intercept_capped || hit_cap;
                accepted = true;
                break;
            }
            step_size *= 0.5;
        }
        if (!accepted) break;  // stalled; report last iterate as non-converged
    }

    fit.objective = obj;
    return fit;
}

inline double natural_grad_norm(const VectorXd& g0, const MatrixXd& grad) {
    double norm = g0.size() ? g0.cwiseAbs().maxCoeff() : 0.0;
    if (grad.size()) norm = std::max(norm, grad.cwiseAbs().maxCoeff());
    return norm;
}

}  // namespace detail

// -(1/n) log-likelihood at the given parameters on data.design.
// coefficients: p x (C-1) matrix (single column for logistic).
inline double negative_log_likelihood(const Dataset& data, Family family,
                                      const VectorXd& intercept, const MatrixXd& coefficients) {
    if (!intercept.allFinite() || !coefficients.allFinite())
        throw NumericError("negative_log_likelihood requires finite parameters");
    MatrixXd onehot = one_hot_response(data.response, family, data.class_count);
    if (coefficients.rows() != data.p() || coefficients.cols() != onehot.cols() ||
        intercept.size() != onehot.cols())
        throw ValidationError("parameter dimensions do not match the dataset");
    MatrixXd eta = data.design * coefficients;
    eta.rowwise() += intercept.transpose();
    return detail::eval_likelihood(eta, onehot).nll;
}

// Penalized objective -(1/n) l + sum_j omega_j ||Xi_{j,:}||^2 and its gradient,
// in the original (unrescaled) coordinates. Used by tests and diagnostics.
inline double penalized_objective(const Dataset& data, Family family, const VectorXd& omega,
                                  const VectorXd& intercept, const MatrixXd& coefficients,
                                  VectorXd* grad_intercept = nullptr,
                                  MatrixXd* grad_coefficients = nullptr) {
    MatrixXd onehot = one_hot_response(data.response, family, data.class_count);
    MatrixXd eta = data.design * coefficients;
    eta.rowwise() += intercept.transpose();
    detail::LikelihoodEval ev = detail::eval_likelihood(eta, onehot);
    const double pen = (coefficients.array().square().colwise() * omega.array()).sum();
    if (grad_intercept) *grad_intercept = ev.grad_eta.colwise().sum();
    if (grad_coefficients) {
        grad_coefficients->noalias() = data.design.transpose() * ev.grad_eta;
        grad_coefficients->noalias() += 2.0 * (omega.asDiagonal() * coefficients);
    }
    return ev.nll + pen;
}

// Uniform-ridge fit in the problem's natural coordinates:
//   min -(1/n) l(b0, X b) + lambda sum_j ||b_{j,:}||^2.
// Used for refits on a selected support and as the building block of the
// rescaled solves below.
inline InnerFit fit_ridge(const MatrixXd& design, const VectorXi& response, Family family,
                          int class_count, double lambda, const NewtonOptions& options = {},
                          const InnerFit* warm = nullptr) {
    MatrixXd onehot = one_hot_response(response, family, class_count);
    detail::DiagonalPenalty penalty{VectorXd::Constant(design.cols(), lambda)};
    return detail::newton_solve(
        design, onehot, penalty, options,
        [](const VectorXd& g0, const MatrixXd&, const MatrixXd&, const MatrixXd& grad) {
            return detail::natural_grad_norm(g0, grad);
        },
        warm ? &warm->intercept : nullptr, warm ? &warm->coefficients : nullptr);
}

enum class SolveMode { automatic, primal, dual };

struct WeightedRidgeOptions {
    NewtonOptions newton;
    SolveMode mode = SolveMode::automatic;
};

// Ridge-penalized GLM fit with per-coefficient weights omega, realized as a
// uniform ridge on the column-rescaled design: scale column j by
// omega_j^{-1/2}, solve with unit L2 penalty, and back-transform
// xi = omega^{-1/2} .* theta. Columns with omega_j = 0 (mandatory variables
// at lambda = 0) stay unscaled and unpenalized. When p >> n and every weight
// is positive, the solve runs in kernel space: theta = Xs' a with K = Xs Xs'
// turns the problem into an (n+1)-dimensional Newton with penalty a' K a,
// identical minimizer, one GLM-sized system per step.
// Convergence is measured on the back-transformed gradient, so the returned
// iterate is a stationary point of the weighted objective itself.
inline InnerFit fit_weighted_ridge(const Dataset& data, Family family,
                                   const PenaltyWeights& weights,
                                   const WeightedRidgeOptions& options = {},
                                   const InnerFit* warm = nullptr) {
    const Eigen::Index n = data.n();
    const Eigen::Index p = data.p();
    if (weights.omega.size() != p)
        throw ValidationError("penalty weights must have one entry per design column");
    if (!weights.omega.allFinite() || (weights.omega.array() < 0.0).any())
        throw ValidationError("penalty weights must be finite and nonnegative");

    VectorXd scale(p);      // omega^{-1/2}, 1 for unpenalized columns
    VectorXd inv_scale(p);  // omega^{1/2}, 1 for unpenalized columns
    VectorXd ridge(p);      // unit ridge on rescaled columns
    bool all_positive = true;
    for (Eigen::Index j = 0; j < p; ++j) {
        if (weights.omega[j] > 0.0) {
            const double root = std::sqrt(weights.omega[j]);
            scale[j] = 1.0 / root;
            inv_scale[j] = root;
            ridge[j] = 1.0;
        } else {
            scale[j] = 1.0;
            inv_scale[j] = 1.0;
            ridge[j] = 0.0;
            all_positive = false;
        }
    }
    MatrixXd scaled = data.design * scale.asDiagonal();
    MatrixXd onehot = one_hot_response(data.response, family, data.class_count);

    bool use_dual = options.mode == SolveMode::dual;
    if (options.mode == SolveMode::automatic) use_dual = all_positive && p > 2 * n;
    if (use_dual && !all_positive)
        throw ValidationError("kernel-space solve requires strictly positive weights");

    InnerFit fit;
    if (!use_dual) {
        detail::DiagonalPenalty penalty{ridge};
        std::optional<MatrixXd> warm_theta;
        if (warm && warm->coefficients.rows() == p && warm->coefficients.cols() == onehot.cols())
            warm_theta = inv_scale.asDiagonal() * warm->coefficients;
        fit = detail::newton_solve(
            scaled, onehot, penalty, options.newton,
            [&](const VectorXd& g0, const MatrixXd&, const MatrixXd&, const MatrixXd& grad) {
                // back-transformed gradient: d/d xi = omega^{1/2} d/d theta
                double norm = g0.cwiseAbs().maxCoeff();
                norm = std::max(norm, (inv_scale.asDiagonal() * grad).cwiseAbs().maxCoeff());
                return norm;
            },
            warm ? &warm->intercept : nullptr, warm_theta ? &*warm_theta : nullptr);
        fit.coefficients = scale.asDiagonal() * fit.coefficients;
    } else {
        MatrixXd kernel(n, n);
        kernel.setZero();
        kernel.selfadjointView<Eigen::Lower>().rankUpdate(scaled);
        kernel.triangularView<Eigen::StrictlyUpper>() =
            kernel.transpose().triangularView<Eigen::StrictlyUpper>();
        detail::DensePenalty penalty{&kernel};
        fit = detail::newton_solve(
            kernel, onehot, penalty, options.newton,
            [&](const VectorXd& g0, const MatrixXd& grad_eta, const MatrixXd& coef,
                const MatrixXd&) {
                // g_theta = Xs' (U + 2A); back-transform as in the primal path
                MatrixXd gtheta = scaled.transpose() * (grad_eta + 2.0 * coef);
                double norm = g0.cwiseAbs().maxCoeff();
                norm = std::max(norm,
                                (inv_scale.asDiagonal() * gtheta).cwiseAbs().maxCoeff());
                return norm;
            },
            warm ? &warm->intercept : nullptr,
            (warm && warm->dual.rows() == n && warm->dual.cols() == onehot.cols())
                ? &warm->dual
                : nullptr);
        fit.dual = fit.coefficients;
        fit.coefficients = scale.asDiagonal() * (scaled.transpose() * fit.dual);
    }
    return fit;
}

inline InnerFit fit_weighted_ridge(const Dataset& data, Family family, const VectorXd& omega,
                                   const WeightedRidgeOptions& options = {},
                                   const InnerFit* warm = nullptr) {
    return fit_weighted_ridge(data, family, PenaltyWeights{omega, 0}, options, warm);
}

// Class probabilities on all C classes (baseline last). Logistic: columns
// (P(y=0), P(y=1)).
inline MatrixXd predict_probabilities(const MatrixXd& design, Family family,
                                      const VectorXd& intercept, const MatrixXd& coefficients,
                                      int class_count) {
    MatrixXd eta = design * coefficients;
    eta.rowwise() += intercept.transpose();
    const Eigen::Index n = design.rows();
    if (family == Family::logistic) {
        MatrixXd probs(n, 2);
        for (Eigen::Index i = 0; i < n; ++i) {
            probs(i, 1) = sigmoid(eta(i, 0));
            probs(i, 0) = 1.0 - probs(i, 1);
        }
        return probs;
    }
    MatrixXd probs(n, class_count);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mx = 0.0;
        for (Eigen::Index c = 0; c < eta.cols(); ++c) mx = std::max(mx, eta(i, c));
        double denom = std::exp(-mx);
        for (Eigen::Index c = 0; c < eta.cols(); ++c) denom += std::exp(eta(i, c) - mx);
        const double lse = mx + std::log(denom);
        for (Eigen::Index c = 0; c < eta.cols(); ++c) probs(i, c) = std::exp(eta(i, c) - lse);
        probs(i, class_count - 1) = std::exp(-lse);
    }
    return probs;
}

// Predicted labels: logistic label 1 iff P(y=1) > 0.5 exactly; multinomial
// argmax class probability with smallest-class-index tie-break.
inline VectorXi predict_labels(const MatrixXd& design, Family family, const VectorXd& intercept,
                               const MatrixXd& coefficients, int class_count) {
    MatrixXd probs = predict_probabilities(design, family, intercept, coefficients, class_count);
    VectorXi labels(design.rows());
    if (family == Family::logistic) {
        for (Eigen::Index i = 0; i < labels.size(); ++i)
            labels[i] = probs(i, 1) > 0.5 ? 1 : 0;
    } else {
        for (Eigen::Index i = 0; i < labels.size(); ++i) {
            Eigen::Index best = 0;
            for (Eigen::Index c = 1; c < class_count; ++c)
                if (probs(i, c) > probs(i, best)) best = c;
            labels[i] = static_cast<int>(best) + 1;
        }
    }
    return labels;
}

inline double misclassification_rate(const VectorXi& predicted, const VectorXi& truth) {
    if (predicted.size() != truth.size())
        throw ValidationError("prediction/response length mismatch");
    if (predicted.size() == 0) return 0.0;
    int wrong = 0;
    for (Eigen::Index i = 0; i < predicted.size(); ++i) wrong += predicted[i] != truth[i];
    return static_cast<double>(wrong) / static_cast<double>(predicted.size());
}

}  // namespace combss::glm
