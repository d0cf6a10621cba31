#pragma once

#include "combss/relaxation.hpp"

#include <chrono>
#include <numeric>
#include <vector>

namespace combss::optimizer {

// Geometric curvature schedule: delta_i = min(delta_min r^i, delta_max) for
// i = 1..2N with r = (delta_max/delta_min)^{1/N}, so delta reaches delta_max
// at iteration N and stays there.
struct HomotopySchedule {
    double delta_min = 0.0;
    double delta_max = 0.0;
    int grid_size = 25;      // N
    double growth_rate = 1;  // r
    bool threshold_fallback = false;
    double nu_max = 0.0;

    int budget() const { return 2 * grid_size; }
    double delta_at(int i) const {
        return std::min(delta_min * std::pow(growth_rate, static_cast<double>(i)), delta_max);
    }
};

inline HomotopySchedule make_schedule(double delta_min, double delta_max, int grid_size) {
    if (grid_size < 1) throw ValidationError("schedule grid size N must be >= 1");
    if (!(delta_min > 0.0) || !(delta_max > delta_min))
        throw ValidationError("schedule requires 0 < delta_min < delta_max");
    HomotopySchedule schedule;
    schedule.delta_min = delta_min;
    schedule.delta_max = delta_max;
    schedule.grid_size = grid_size;
    schedule.growth_rate = std::pow(delta_max / delta_min, 1.0 / grid_size);
    return schedule;
}

// delta_max = delta_conc from the concavity threshold, delta_min three decades
// below it.
inline HomotopySchedule calibrate_schedule(const Dataset& normalized, Family family,
                                           int grid_size) {
    relaxation::ConcavityThreshold threshold =
        relaxation::concavity_threshold(normalized, family);
    HomotopySchedule schedule =
        make_schedule(1e-3 * threshold.delta_conc, threshold.delta_conc, grid_size);
    schedule.threshold_fallback = threshold.frobenius_fallback;
    schedule.nu_max = threshold.nu_max;
    return schedule;
}

struct OptimizerConfig {
    int k = 1;
    double lambda = 0.0;
    double alpha = 0.01;
    HomotopySchedule schedule;
    double epsilon = 0.0;  // early stop on ||t - s||_inf; 0 disables
    double lambda_refit = -1.0;  // < 0 means "use lambda"
    glm::NewtonOptions newton;

    double refit_lambda() const { return lambda_refit < 0.0 ? lambda : lambda_refit; }
};

// Linear minimization oracle over T_k: a binary vertex with ones at the k
// smallest gradient entries, ties broken by smallest index.
inline VectorXi lmo(const VectorXd& gradient, int k) {
    const Eigen::Index pm = gradient.size();
    if (k < 1 || k > pm)
        throw ValidationError("lmo requires 1 <= k <= " + std::to_string(pm));
    if (!gradient.allFinite()) throw NumericError("lmo requires a finite gradient");
    std::vector<int> order(static_cast<std::size_t>(pm));
    std::iota(order.begin(), order.end(), 0);
    std::nth_element(order.begin(), order.begin() + (k - 1), order.end(),
                     [&](int a, int b) {
                         return gradient[a] < gradient[b] || (gradient[a] == gradient[b] && a < b);
                     });
    VectorXi vertex = VectorXi::Zero(pm);
    for (int i = 0; i < k; ++i) vertex[order[static_cast<std::size_t>(i)]] = 1;
    return vertex;
}

struct IterationRecord {
    double delta = 0.0;
    double f_value = 0.0;
    bool inner_converged = true;
    bool vertex_changed = false;
    // state of t after the convex-combination update
    double t_sum = 0.0;
    double t_min = 0.0;
    double t_max = 0.0;
};

struct SubsetResult {
    int k = 0;
    VectorXi support;                  // length p-m, exactly k ones
    std::vector<int> retained;         // internal column indices: mandatory + selected
    VectorXd refit_intercept;          // C-1
    MatrixXd refit_coefficients;       // retained.size() x (C-1), original scale
    double refit_objective = std::numeric_limits<double>::quiet_NaN();
    bool refit_converged = false;
    std::vector<IterationRecord> trajectory;
    int vertex_changes = 0;
    int inner_failures = 0;
    int numeric_failures = 0;
    int clamp_events = 0;
    bool early_stopped = false;
    double wall_time_s = 0.0;
};

inline std::vector<int> retained_columns(const VectorXi& support, int mandatory_count) {
    std::vector<int> cols;
    cols.reserve(static_cast<std::size_t>(mandatory_count + support.sum()));
    for (int j = 0; j < mandatory_count; ++j) cols.push_back(j);
    for (Eigen::Index j = 0; j < support.size(); ++j)
        if (support[j] == 1) cols.push_back(mandatory_count + static_cast<int>(j));
    return cols;
}

// Low-dimensional penalized MLE on the retained columns of the original
// design; excluded coefficients are structurally zero.
inline glm::InnerFit refit(const relaxation::Problem& prob, Family family,
                           const VectorXi& support, double lambda_refit,
                           const glm::NewtonOptions& options = {}) {
    if (support.size() != prob.data.free_count())
        throw ValidationError("support length must equal p - m");
    const std::vector<int> cols = retained_columns(support, prob.data.mandatory_count);
    MatrixXd sub = relaxation::original_columns(prob, cols);
    return glm::fit_ridge(sub, prob.data.response, family, prob.data.class_count, lambda_refit,
                          options);
}

// Algorithm: start at the centroid of T_k, run 2N iterations of
//   delta update -> inner fit -> envelope gradient -> LMO -> convex step,
// then refit on the last vertex. Inner solves are warm-started from the
// previous iterate; non-converged fits contribute their last iterate as a
// subgradient source and are counted in the diagnostics.
inline SubsetResult run(const relaxation::Problem& prob, Family family,
                        const OptimizerConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const Dataset& data = prob.data;
    const int pm = data.free_count();
    if (config.k < 1 || config.k > pm)
        throw ValidationError("k must satisfy 1 <= k <= p - m (got k=" +
                              std::to_string(config.k) + ", p-m=" + std::to_string(pm) + ")");
    if (!(config.alpha > 0.0 && config.alpha < 1.0))
        throw ValidationError("learning rate alpha must lie in (0,1)");
    if (config.epsilon < 0.0) throw ValidationError("epsilon must be nonnegative");
    if (config.lambda < 0.0) throw ValidationError("lambda must be nonnegative");
    if (!(config.schedule.delta_min > 0.0) || !(config.schedule.delta_max >= config.schedule.delta_min) ||
        config.schedule.grid_size < 1)
        throw ValidationError("optimizer config carries an uncalibrated schedule");

    SubsetResult result;
    result.k = config.k;
    result.trajectory.reserve(static_cast<std::size_t>(config.schedule.budget()));

    relaxation::SelectionPoint point;
    point.t = VectorXd::Constant(pm, static_cast<double>(config.k) / pm);
    point.target_size = config.k;

    glm::WeightedRidgeOptions solver;
    solver.newton = config.newton;

    glm::InnerFit warm;
    bool have_warm = false;
    VectorXi vertex = VectorXi::Zero(pm);
    bool have_vertex = false;

    for (int i = 1; i <= config.schedule.budget(); ++i) {
        relaxation::RelaxationParams params{config.lambda, config.schedule.delta_at(i)};
        glm::PenaltyWeights weights =
            relaxation::penalty_weights(point, params, data.mandatory_count);
        result.clamp_events += weights.clamped_count;

        IterationRecord record;
        record.delta = params.delta;
        try {
            glm::InnerFit fit = glm::fit_weighted_ridge(data, family, weights, solver,
                                                        have_warm ? &warm : nullptr);
            record.inner_converged = fit.converged;
            if (!fit.converged) ++result.inner_failures;
            warm = std::move(fit);
            have_warm = true;
        } catch (const NumericError&) {
            ++result.numeric_failures;
            record.inner_converged = false;
            if (!have_warm) {
                result.trajectory.push_back(record);
                continue;  // nothing usable yet; try the next curvature level
            }
        }
        record.f_value = warm.objective;

        VectorXd gradient = relaxation::envelope_gradient(warm, point, params,
                                                          data.mandatory_count);
        VectorXi next_vertex = lmo(gradient, config.k);
        record.vertex_changed = have_vertex && (next_vertex.array() != vertex.array()).any();
        if (record.vertex_changed) ++result.vertex_changes;
        vertex = std::move(next_vertex);
        have_vertex = true;

        point.t = (1.0 - config.alpha) * point.t + config.alpha * vertex.cast<double>();
        record.t_sum = point.t.sum();
        record.t_min = point.t.minCoeff();
        record.t_max = point.t.maxCoeff();
        result.trajectory.push_back(record);

        if (config.epsilon > 0.0) {
            const double gap = (point.t - vertex.cast<double>()).cwiseAbs().maxCoeff();
            if (gap < config.epsilon) {
                result.early_stopped = true;
                break;
            }
        }
    }
    if (!have_vertex) throw NumericError("every homotopy iteration failed; no support available");

    result.support = vertex;
    result.retained = retained_columns(vertex, data.mandatory_count);
    glm::InnerFit fitted = refit(prob, family, vertex, config.refit_lambda(), config.newton);
    result.refit_intercept = fitted.intercept;
    result.refit_coefficients = fitted.coefficients;
    result.refit_objective = fitted.objective;
    result.refit_converged = fitted.converged;
    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

}  // namespace combss::optimizer
