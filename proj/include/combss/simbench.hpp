#pragma once

#include "combss/path.hpp"

#include <chrono>
#include <string>
#include <vector>

namespace combss::simbench {

// Synthetic design: AR(1) Gaussian predictors (Sigma_ij = rho^|i-j|), logistic
// labels at beta0 + x'beta*, with Case 1 (k0 unit signals) or Case 2
// (beta_i* = 0.5^{i-1} decay). The multinomial variant keeps the same row
// support and alternates the sign of beta* across the non-baseline classes.
struct SimDesign {
    int n = 200;
    int p = 30;
    double rho = 0.0;
    int coefficient_case = 1;  // 1 = equal, 2 = decay
    int k0 = 10;
    double intercept = 0.2;
    std::uint64_t seed = 1;
    Family family = Family::logistic;
    int class_count = 2;
    int test_n = 10000;
};

inline void validate_design(const SimDesign& design) {
    if (design.n < 1 || design.test_n < 1) throw ValidationError("sample sizes must be >= 1");
    if (design.p < 1) throw ValidationError("p must be >= 1");
    if (design.k0 < 0 || design.k0 > design.p)
        throw ValidationError("k0 must satisfy 0 <= k0 <= p");
    if (!(design.rho >= 0.0 && design.rho < 1.0))
        throw ValidationError("rho must lie in [0, 1)");
    if (design.coefficient_case != 1 && design.coefficient_case != 2)
        throw ValidationError("case must be 1 or 2");
    if (design.family == Family::multinomial && design.class_count < 2)
        throw ValidationError("multinomial simulation needs class_count >= 2");
}

inline MatrixXd ar1_covariance(int p, double rho) {
    MatrixXd sigma(p, p);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) sigma(i, j) = std::pow(rho, std::abs(i - j));
    return sigma;
}

inline VectorXd true_signal(const SimDesign& design) {
    VectorXd beta = VectorXd::Zero(design.p);
    for (int i = 0; i < design.k0; ++i)
        beta[i] = design.coefficient_case == 1 ? 1.0 : std::pow(0.5, i);
    return beta;
}

struct SimData {
    Dataset train;
    Dataset test;
    VectorXi truth;  // length p
};

namespace detail_sim {

// One AR(1) row: x_1 = z_1, x_i = rho x_{i-1} + sqrt(1-rho^2) z_i. This is the
// action of the closed-form lower-triangular Cholesky factor of Sigma.
template <class Row>
inline void ar1_row(Rng& rng, double rho, Row&& row) {
    const double innovation = std::sqrt(1.0 - rho * rho);
    double prev = rng.normal();
    row[0] = prev;
    for (Eigen::Index j = 1; j < row.size(); ++j) {
        prev = rho * prev + innovation * rng.normal();
        row[j] = prev;
    }
}

inline int draw_label(Rng& rng, const SimDesign& design, double signal) {
    if (design.family == Family::logistic) {
        const double prob = glm::sigmoid(design.intercept + signal);
        return rng.uniform() < prob ? 1 : 0;
    }
    // softmax over class scores eta_c = beta0 +/- x'beta* with the sign
    // alternating across the non-baseline classes, baseline class C
    const int nc = design.class_count - 1;
    VectorXd eta(nc);
    for (int c = 0; c < nc; ++c)
        eta[c] = design.intercept + (c % 2 == 0 ? signal : -signal);
    double mx = 0.0;
    for (int c = 0; c < nc; ++c) mx = std::max(mx, eta[c]);
    double denom = std::exp(-mx);
    for (int c = 0; c < nc; ++c) denom += std::exp(eta[c] - mx);
    const double u = rng.uniform();
    double cum = 0.0;
    for (int c = 0; c < nc; ++c) {
        cum += std::exp(eta[c] - mx) / denom;
        if (u < cum) return c + 1;
    }
    return design.class_count;
}

inline Dataset draw_dataset(Rng& rng, const SimDesign& design, const VectorXd& beta, int rows) {
    Dataset data;
    data.design.resize(rows, design.p);
    data.response.resize(rows);
    data.mandatory_count = 0;
    data.class_count = design.family == Family::logistic ? 2 : design.class_count;
    for (int i = 0; i < rows; ++i) {
        ar1_row(rng, design.rho, data.design.row(i));
        data.response[i] = draw_label(rng, design, data.design.row(i).dot(beta));
    }
    return data;
}

}  // namespace detail_sim

// Deterministic given the seed: train rows, then the independent test set,
// drawn from one generator stream.
inline SimData generate(const SimDesign& design) {
    validate_design(design);
    const VectorXd beta = true_signal(design);
    Rng rng(design.seed);
    SimData out;
    out.train = detail_sim::draw_dataset(rng, design, beta, design.n);
    out.test = detail_sim::draw_dataset(rng, design, beta, design.test_n);
    out.truth = VectorXi::Zero(design.p);
    for (int j = 0; j < design.k0; ++j) out.truth[j] = 1;
    return out;
}

// Confusion-matrix metrics of a selected support against the truth, plus the
// prediction accuracy filled in by the replication pipeline. F1 is 0 when
// precision + sensitivity is 0; MCC is 0 when any denominator factor is 0.
struct SelectionMetrics {
    double sensitivity = 0.0;
    double specificity = 0.0;
    double selection_accuracy = 0.0;
    double precision = 0.0;
    double f1 = 0.0;
    double mcc = 0.0;
    double prediction_accuracy = std::numeric_limits<double>::quiet_NaN();
};

inline SelectionMetrics selection_metrics(const VectorXi& selected, const VectorXi& truth) {
    if (selected.size() != truth.size())
        throw ValidationError("selected and true supports must have equal length");
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (Eigen::Index j = 0; j < selected.size(); ++j) {
        const bool sel = selected[j] != 0;
        const bool act = truth[j] != 0;
        tp += sel && act;
        fp += sel && !act;
        fn += !sel && act;
        tn += !sel && !act;
    }
    const double p = static_cast<double>(selected.size());
    SelectionMetrics m;
    m.sensitivity = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
    m.specificity = (tn + fp) > 0 ? tn / (tn + fp) : 0.0;
    m.selection_accuracy = (tp + tn) / p;
    m.precision = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
    m.f1 = (m.precision + m.sensitivity) > 0
               ? 2.0 * m.precision * m.sensitivity / (m.precision + m.sensitivity)
               : 0.0;
    const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    m.mcc = denom > 0 ? (tp * tn - fp * fn) / std::sqrt(denom) : 0.0;
    return m;
}

struct ReplicationRow {
    int rep = 0;
    std::uint64_t seed = 0;
    int k_opt = 0;
    SelectionMetrics metrics;
    double wall_time_s = 0.0;
    bool failed = false;
    std::string error;
};

struct MetricSummary {
    double mean = 0.0;
    double se = 0.0;
};

struct ReplicationSummary {
    std::vector<ReplicationRow> rows;
    MetricSummary k_opt, sensitivity, specificity, selection_accuracy, precision, f1, mcc,
        prediction_accuracy, wall_time;
    int failures = 0;
    int successes = 0;
};

namespace detail_sim {

inline MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.se = std::sqrt(ss / static_cast<double>(values.size() - 1)) /
               std::sqrt(static_cast<double>(values.size()));
    }
    return s;
}

}  // namespace detail_sim

// Full replication protocol: generate -> run_path -> tune on the generated
// test set -> selection metrics at k_opt. Replication r uses seed + r, so any
// single replication is reproducible in isolation. Replications run
// concurrently when threads > 1; failures are excluded from the summary with
// a count.
inline ReplicationSummary replicate(const SimDesign& design, const path::PathConfig& config,
                                    int reps, const std::vector<int>& ks) {
    validate_design(design);
    if (reps < 1) throw ValidationError("reps must be >= 1");
    ReplicationSummary summary;
    summary.rows.resize(static_cast<std::size_t>(reps));

    path::PathConfig per_rep = config;
    per_rep.threads = 1;  // parallelism is across replications here

    detail::parallel_for(reps, config.threads, [&](int r) {
        ReplicationRow& row = summary.rows[static_cast<std::size_t>(r)];
        row.rep = r + 1;
        row.seed = design.seed + static_cast<std::uint64_t>(r) + 1;
        const auto start = std::chrono::steady_clock::now();
        try {
            SimDesign rep_design = design;
            rep_design.seed = row.seed;
            SimData data = generate(rep_design);
            relaxation::Problem prob =
                relaxation::make_problem(std::move(data.train), design.family, true);
            path::PathResult result = path::run_path(prob, design.family, ks, per_rep);
            const int k_opt = path::tune(result, data.test, design.family);
            row.k_opt = k_opt;
            std::size_t idx = 0;
            while (result.ks[idx] != k_opt) ++idx;
            const optimizer::SubsetResult& best = result.results[idx];
            VectorXi selected = VectorXi::Zero(design.p);
            for (int col : best.retained) selected[col] = 1;
            row.metrics = selection_metrics(selected, data.truth);
            row.metrics.prediction_accuracy =
                1.0 - path::validation_error_for(best, data.test, design.family);
        } catch (const std::exception& e) {
            row.failed = true;
            row.error = e.what();
        }
        row.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    });

    std::vector<double> kv, sens, spec, acc, prec, f1, mcc, pred, wall;
    for (const auto& row : summary.rows) {
        if (row.failed) {
            ++summary.failures;
            continue;
        }
        ++summary.successes;
        kv.push_back(row.k_opt);
        sens.push_back(row.metrics.sensitivity);
        spec.push_back(row.metrics.specificity);
        acc.push_back(row.metrics.selection_accuracy);
        prec.push_back(row.metrics.precision);
        f1.push_back(row.metrics.f1);
        mcc.push_back(row.metrics.mcc);
        pred.push_back(row.metrics.prediction_accuracy);
        wall.push_back(row.wall_time_s);
    }
    summary.k_opt = detail_sim::summarize(kv);
    summary.sensitivity = detail_sim::summarize(sens);
    summary.specificity = detail_sim::summarize(spec);
    summary.selection_accuracy = detail_sim::summarize(acc);
    summary.precision = detail_sim::summarize(prec);
    summary.f1 = detail_sim::summarize(f1);
    summary.mcc = detail_sim::summarize(mcc);
    summary.prediction_accuracy = detail_sim::summarize(pred);
    summary.wall_time = detail_sim::summarize(wall);
    return summary;
}

}  // namespace combss::simbench
