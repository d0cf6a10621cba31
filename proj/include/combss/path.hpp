#pragma once

#include "combss/optimizer.hpp"
#include "combss/parallel.hpp"

#include <limits>
#include <string>
#include <vector>

namespace combss::path {

struct PathConfig {
    double lambda = 0.0;
    double alpha = 0.01;
    int grid_size = 25;  // homotopy N
    double epsilon = 0.0;
    double lambda_refit = -1.0;
    glm::NewtonOptions newton;
    int threads = 1;
};

struct PathResult {
    std::vector<int> ks;
    std::vector<optimizer::SubsetResult> results;  // aligned with ks
    std::vector<std::string> errors;               // empty string = success
    optimizer::HomotopySchedule schedule;          // shared across k
    Eigen::MatrixXi inclusion;                     // |ks| x (p-m)
    int p = 0;
    int mandatory_count = 0;
    std::vector<double> validation_error;          // filled by tune
    int k_opt = -1;
    // variables that leave the support as k grows; nesting is an empirical
    // tendency, not a guarantee, so violations are only reported
    int nesting_violations = 0;

    bool ok(std::size_t i) const { return errors[i].empty(); }
};

// One optimizer run per requested model size, sharing a single calibrated
// schedule (delta_conc does not depend on k). Per-k failures are recorded and
// the rest of the path continues. Runs are independent, so they may execute
// concurrently; results are ordered by k regardless of completion order.
inline PathResult run_path(const relaxation::Problem& train, Family family,
                           const std::vector<int>& ks, const PathConfig& config) {
    if (ks.empty()) throw ValidationError("model size grid must be nonempty");
    const int pm = train.data.free_count();
    for (int k : ks)
        if (k < 1 || k > pm)
            throw ValidationError("model size k=" + std::to_string(k) +
                                  " outside [1, p-m] with p-m=" + std::to_string(pm));

    PathResult path;
    path.ks = ks;
    path.p = static_cast<int>(train.data.p());
    path.mandatory_count = train.data.mandatory_count;
    path.schedule = optimizer::calibrate_schedule(train.data, family, config.grid_size);
    path.results.resize(ks.size());
    path.errors.assign(ks.size(), "");
    path.validation_error.assign(ks.size(), std::numeric_limits<double>::quiet_NaN());

    detail::parallel_for(static_cast<int>(ks.size()), config.threads, [&](int i) {
        optimizer::OptimizerConfig cfg;
        cfg.k = ks[static_cast<std::size_t>(i)];
        cfg.lambda = config.lambda;
        cfg.alpha = config.alpha;
        cfg.schedule = path.schedule;
        cfg.epsilon = config.epsilon;
        cfg.lambda_refit = config.lambda_refit;
        cfg.newton = config.newton;
        try {
            path.results[static_cast<std::size_t>(i)] = optimizer::run(train, family, cfg);
        } catch (const std::exception& e) {
            path.errors[static_cast<std::size_t>(i)] = e.what();
        }
    });

    path.inclusion = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(ks.size()), pm);
    for (std::size_t i = 0; i < ks.size(); ++i)
        if (path.ok(i)) path.inclusion.row(static_cast<Eigen::Index>(i)) = path.results[i].support.transpose();

    std::vector<std::size_t> by_k(ks.size());
    std::iota(by_k.begin(), by_k.end(), std::size_t{0});
    std::sort(by_k.begin(), by_k.end(),
              [&](std::size_t a, std::size_t b) { return ks[a] < ks[b]; });
    for (std::size_t i = 0; i + 1 < by_k.size(); ++i) {
        if (!path.ok(by_k[i]) || !path.ok(by_k[i + 1])) continue;
        const auto& smaller = path.results[by_k[i]].support;
        const auto& larger = path.results[by_k[i + 1]].support;
        for (Eigen::Index j = 0; j < smaller.size(); ++j)
            if (smaller[j] == 1 && larger[j] == 0) ++path.nesting_violations;
    }
    return path;
}

inline double validation_error_for(const optimizer::SubsetResult& result,
                                   const Dataset& validation, Family family) {
    MatrixXd sub(validation.n(), static_cast<Eigen::Index>(result.retained.size()));
    for (std::size_t c = 0; c < result.retained.size(); ++c)
        sub.col(static_cast<Eigen::Index>(c)) = validation.design.col(result.retained[c]);
    VectorXi predicted = glm::predict_labels(sub, family, result.refit_intercept,
                                             result.refit_coefficients, validation.class_count);
    return glm::misclassification_rate(predicted, validation.response);
}

// Picks k_opt by held-out misclassification error (ties to the smallest k)
// and fills the tuning table. Validation columns must match the training
// design in dimension and meaning.
inline int tune(PathResult& path, const Dataset& validation, Family family) {
    validate_dataset(validation, family);
    if (validation.p() != path.p)
        throw ValidationError("validation set has " + std::to_string(validation.p()) +
                              " predictors but training had " + std::to_string(path.p));
    int best = -1;
    double best_error = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < path.ks.size(); ++i) {
        if (!path.ok(i)) continue;
        const double err = validation_error_for(path.results[i], validation, family);
        path.validation_error[i] = err;
        if (err < best_error || (err == best_error && path.ks[i] < best)) {
            best_error = err;
            best = path.ks[i];
        }
    }
    if (best < 0) throw NumericError("no model size produced a usable fit");
    path.k_opt = best;
    return best;
}

// Round-robin fold labels over a seeded shuffle of the row indices.
inline std::vector<int> fold_assignment(Eigen::Index n, int folds, std::uint64_t seed) {
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t i = order.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.bits() % i);
        std::swap(order[i - 1], order[j]);
    }
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < order.size(); ++i)
        fold[static_cast<std::size_t>(order[i])] = static_cast<int>(i % static_cast<std::size_t>(folds));
    return fold;
}

inline Dataset take_rows(const Dataset& data, const std::vector<int>& rows) {
    Dataset out;
    out.design.resize(static_cast<Eigen::Index>(rows.size()), data.p());
    out.response.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.design.row(static_cast<Eigen::Index>(i)) = data.design.row(rows[i]);
        out.response[static_cast<Eigen::Index>(i)] = data.response[rows[i]];
    }
    out.mandatory_count = data.mandatory_count;
    out.class_count = data.class_count;
    return out;
}

struct CvTuning {
    std::vector<int> ks;
    std::vector<double> cv_error;  // mean held-out misclassification per k
    int k_opt = -1;
};

// k-fold cross-validation over the model-size grid: each fold reruns the full
// pipeline (normalization, schedule calibration, path) on its training split
// and scores the held-out rows.
inline CvTuning tune_cv(const Dataset& raw, Family family, const std::vector<int>& ks,
                        const PathConfig& config, int folds, std::uint64_t seed,
                        bool normalize = true) {
    if (folds < 2) throw ValidationError("cross-validation requires at least 2 folds");
    if (folds > raw.n()) throw ValidationError("more folds than observations");
    const std::vector<int> fold = fold_assignment(raw.n(), folds, seed);

    std::vector<std::vector<double>> errors(ks.size());
    for (int f = 0; f < folds; ++f) {
        std::vector<int> train_rows, test_rows;
        for (Eigen::Index i = 0; i < raw.n(); ++i)
            (fold[static_cast<std::size_t>(i)] == f ? test_rows : train_rows)
                .push_back(static_cast<int>(i));
        relaxation::Problem prob = relaxation::make_problem(take_rows(raw, train_rows),
                                                            family, normalize);
        Dataset held_out = take_rows(raw, test_rows);
        PathResult fold_path = run_path(prob, family, ks, config);
        for (std::size_t i = 0; i < ks.size(); ++i) {
            if (!fold_path.ok(i)) continue;
            errors[i].push_back(
                validation_error_for(fold_path.results[i], held_out, family));
        }
    }

    CvTuning tuning;
    tuning.ks = ks;
    tuning.cv_error.assign(ks.size(), std::numeric_limits<double>::infinity());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ks.size(); ++i) {
        if (errors[i].empty()) continue;
        double mean = 0.0;
        for (double e : errors[i]) mean += e;
        mean /= static_cast<double>(errors[i].size());
        tuning.cv_error[i] = mean;
        if (mean < best || (mean == best && ks[i] < tuning.k_opt)) {
            best = mean;
            tuning.k_opt = ks[i];
        }
    }
    if (tuning.k_opt < 0) throw NumericError("cross-validation produced no usable fits");
    return tuning;
}

// Ridge level for the final refit chosen by k-fold cross-validation on the
// training rows, restricted to the selected support.
inline double cv_refit_lambda(const relaxation::Problem& train, Family family,
                              const VectorXi& support, int folds, std::uint64_t seed,
                              const glm::NewtonOptions& newton = {}) {
    std::vector<double> grid{0.0};
    for (double lg = -5.0; lg <= 2.0; lg += 0.5) grid.push_back(std::pow(10.0, lg));

    const std::vector<int> cols =
        optimizer::retained_columns(support, train.data.mandatory_count);
    MatrixXd sub = relaxation::original_columns(train, cols);
    const std::vector<int> fold = fold_assignment(sub.rows(), folds, seed);

    double best_lambda = grid.front();
    double best_error = std::numeric_limits<double>::infinity();
    for (double lambda : grid) {
        double total = 0.0;
        int scored = 0;
        for (int f = 0; f < folds; ++f) {
            std::vector<int> train_rows, test_rows;
            for (Eigen::Index i = 0; i < sub.rows(); ++i)
                (fold[static_cast<std::size_t>(i)] == f ? test_rows : train_rows)
                    .push_back(static_cast<int>(i));
            if (train_rows.empty() || test_rows.empty()) continue;
            MatrixXd xtr(static_cast<Eigen::Index>(train_rows.size()), sub.cols());
            VectorXi ytr(static_cast<Eigen::Index>(train_rows.size()));
            for (std::size_t i = 0; i < train_rows.size(); ++i) {
                xtr.row(static_cast<Eigen::Index>(i)) = sub.row(train_rows[i]);
                ytr[static_cast<Eigen::Index>(i)] = train.data.response[train_rows[i]];
            }
            MatrixXd xte(static_cast<Eigen::Index>(test_rows.size()), sub.cols());
            VectorXi yte(static_cast<Eigen::Index>(test_rows.size()));
            for (std::size_t i = 0; i < test_rows.size(); ++i) {
                xte.row(static_cast<Eigen::Index>(i)) = sub.row(test_rows[i]);
                yte[static_cast<Eigen::Index>(i)] = train.data.response[test_rows[i]];
            }
            try {
                glm::InnerFit fit = glm::fit_ridge(xtr, ytr, family, train.data.class_count,
                                                   lambda, newton);
                VectorXi predicted = glm::predict_labels(xte, family, fit.intercept,
                                                         fit.coefficients,
                                                         train.data.class_count);
                total += glm::misclassification_rate(predicted, yte);
                ++scored;
            } catch (const NumericError&) {
                // skip this fold/lambda combination
            }
        }
        if (scored == 0) continue;
        const double mean = total / scored;
        if (mean < best_error) {
            best_error = mean;
            best_lambda = lambda;
        }
    }
    return best_lambda;
}

}  // namespace combss::path
