#pragma once

#include "combss/glm.hpp"

#include <utility>
#include <vector>

namespace combss::relaxation {

// Gradients and weights carry t^{-3} and t^{-2} terms; evaluations clamp the
// selection variables at this floor.
inline constexpr double t_floor = 1e-8;

// Continuous selection vector t in [0,1]^{p-m}; on the simplex slice T_k the
// entries sum to the target size.
struct SelectionPoint {
    VectorXd t;
    int target_size = 0;
};

struct RelaxationParams {
    double lambda = 0.0;  // uniform ridge, >= 0
    double delta = 1.0;   // curvature parameter, > 0
};

struct NormalizationRecord {
    VectorXd lengths;  // Euclidean column lengths of the ingested design
    bool applied = false;
};

// Scales every design column to unit Euclidean norm. Column lengths are kept
// so coefficients map back to the original scale (beta_j = theta_j / v_j).
inline std::pair<Dataset, NormalizationRecord> normalize_columns(const Dataset& data) {
    NormalizationRecord record;
    record.lengths.resize(data.p());
    Dataset out = data;
    for (Eigen::Index j = 0; j < data.p(); ++j) {
        const double len = data.design.col(j).norm();
        if (len == 0.0)
            throw ValidationError("column " + std::to_string(j + 1) +
                                  " has zero Euclidean length and cannot be normalized");
        record.lengths[j] = len;
        out.design.col(j) /= len;
    }
    record.applied = true;
    return {std::move(out), std::move(record)};
}

// Normalized dataset plus the record needed to restore the original scale.
struct Problem {
    Dataset data;
    NormalizationRecord norm;
};

inline Problem make_problem(Dataset data, Family family, bool normalize = true) {
    validate_dataset(data, family);
    Problem prob;
    if (normalize) {
        auto [scaled, record] = normalize_columns(data);
        prob.data = std::move(scaled);
        prob.norm = std::move(record);
    } else {
        prob.data = std::move(data);
        prob.norm.lengths = VectorXd::Ones(prob.data.p());
        prob.norm.applied = false;
    }
    return prob;
}

// Original-scale columns of the ingested design, reconstructed from the
// normalized storage.
inline MatrixXd original_columns(const Problem& prob, const std::vector<int>& columns) {
    MatrixXd out(prob.data.n(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < columns.size(); ++i)
        out.col(static_cast<Eigen::Index>(i)) =
            prob.data.design.col(columns[i]) * prob.norm.lengths[columns[i]];
    return out;
}

// omega_j(t): lambda on mandatory columns, (lambda+delta)/t_j^2 - delta on the
// rest. Entries of t below t_floor are clamped and counted.
inline glm::PenaltyWeights penalty_weights(const SelectionPoint& point,
                                           const RelaxationParams& params, int mandatory_count) {
    if (params.delta <= 0.0) throw ValidationError("delta must be positive");
    if (params.lambda < 0.0) throw ValidationError("lambda must be nonnegative");
    glm::PenaltyWeights weights;
    weights.omega.resize(mandatory_count + point.t.size());
    weights.omega.head(mandatory_count).setConstant(params.lambda);
    for (Eigen::Index j = 0; j < point.t.size(); ++j) {
        double tj = point.t[j];
        if (tj < t_floor) {
            tj = t_floor;
            ++weights.clamped_count;
        }
        weights.omega[mandatory_count + j] =
            (params.lambda + params.delta) / (tj * tj) - params.delta;
    }
    return weights;
}

// Envelope gradient of the value function at an inner minimizer:
//   g_j = -2 (lambda+delta) ||Xi_{m+j,:}||^2 / t_j^3.
// Every entry is <= 0; the logistic case uses the squared scalar coefficient.
inline VectorXd envelope_gradient(const glm::InnerFit& fit, const SelectionPoint& point,
                                  const RelaxationParams& params, int mandatory_count) {
    VectorXd grad(point.t.size());
    const double factor = -2.0 * (params.lambda + params.delta);
    for (Eigen::Index j = 0; j < point.t.size(); ++j) {
        const double tj = std::max(point.t[j], t_floor);
        const double row_sq = fit.coefficients.row(mandatory_count + j).squaredNorm();
        grad[j] = factor * row_sq / (tj * tj * tj);
    }
    return grad;
}

// Inner minimizer of phi_{delta,lambda}(t, .) via the weighted-ridge solve.
inline glm::InnerFit inner_minimizer(const Dataset& data, Family family,
                                     const SelectionPoint& point, const RelaxationParams& params,
                                     const glm::WeightedRidgeOptions& options = {},
                                     const glm::InnerFit* warm = nullptr) {
    glm::PenaltyWeights weights = penalty_weights(point, params, data.mandatory_count);
    return glm::fit_weighted_ridge(data, family, weights, options, warm);
}

// f_{delta,lambda}(t): the relaxed objective evaluated at the inner minimizer.
// At t = 1 this equals the plain uniform-ridge objective. Solver failures
// propagate the last objective value.
inline double value_function(const Dataset& data, Family family, const SelectionPoint& point,
                             const RelaxationParams& params,
                             const glm::WeightedRidgeOptions& options = {},
                             const glm::InnerFit* warm = nullptr) {
    return inner_minimizer(data, family, point, params, options, warm).objective;
}

struct ConcavityThreshold {
    double delta_conc = 0.0;
    double nu_max = 0.0;  // largest eigenvalue of X_u' X_u
    int power_iterations = 0;
    bool frobenius_fallback = false;
};

// delta_conc = nu_max/(8n) for logistic, nu_max/(4n) for multinomial, with
// nu_max computed by power iteration on the non-mandatory Gram matrix
// (relative tolerance 1e-6, at most 1000 iterations, fixed-seed start).
// Stagnation falls back to the Frobenius bound ||X_u||_F^2, flagged.
inline ConcavityThreshold concavity_threshold(const Dataset& data, Family family) {
    const Eigen::Index pm = data.free_count();
    if (pm < 1) throw ValidationError("concavity threshold requires non-mandatory columns");
    const auto sub = data.design.rightCols(pm);

    constexpr std::uint64_t kPowerSeed = 0x9e3779b97f4a7c15ull;
    Rng rng(kPowerSeed);
    VectorXd v(pm);
    for (Eigen::Index j = 0; j < pm; ++j) v[j] = rng.normal();
    v.normalize();

    ConcavityThreshold result;
    double estimate = 0.0;
    bool converged = false;
    constexpr int kMaxIterations = 1000;
    constexpr double kRelTol = 1e-6;
    for (int it = 0; it < kMaxIterations; ++it) {
        VectorXd image = sub * v;
        VectorXd gram_v = sub.transpose() * image;
        estimate = v.dot(gram_v);  // Rayleigh quotient, ||v|| = 1
        result.power_iterations = it + 1;
        // residual ||G v - nu v||: bounds the eigenvalue error directly
        const double residual = (gram_v - estimate * v).norm();
        if (residual <= kRelTol * std::max(estimate, 1e-300)) {
            converged = true;
            break;
        }
        const double norm = gram_v.norm();
        if (norm == 0.0) break;
        v = gram_v / norm;
    }
    if (!converged) {
        result.nu_max = sub.squaredNorm();
        result.frobenius_fallback = true;
    } else {
        result.nu_max = estimate;
    }

    const double n = static_cast<double>(data.n());
    result.delta_conc =
        family == Family::logistic ? result.nu_max / (8.0 * n) : result.nu_max / (4.0 * n);
    return result;
}

}  // namespace combss::relaxation
