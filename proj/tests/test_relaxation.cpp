#include "combss/optimizer.hpp"
#include "combss/relaxation.hpp"

#include <catch2/catch.hpp>

#include "oracles.hpp"

#include <random>

using namespace combss;
using relaxation::RelaxationParams;
using relaxation::SelectionPoint;

namespace {

Dataset logistic_dataset(const oracle::TestData& data) {
    Dataset ds;
    ds.design = data.x;
    ds.response = data.y;
    ds.class_count = 2;
    return ds;
}

glm::WeightedRidgeOptions tight_solver() {
    glm::WeightedRidgeOptions opt;
    opt.newton.gradient_tol = 1e-10;
    opt.newton.max_iterations = 200;
    return opt;
}

// interior point of T_k via a Dirichlet draw scaled to sum k
VectorXd simplex_point(std::mt19937_64& rng, int pm, int k) {
    std::exponential_distribution<double> expo(1.0);
    for (int attempt = 0; attempt < 1000; ++attempt) {
        VectorXd w(pm);
        for (int j = 0; j < pm; ++j) w[j] = expo(rng);
        VectorXd t = w * (static_cast<double>(k) / w.sum());
        if ((t.array() > 0.02).all() && (t.array() < 0.98).all()) return t;
    }
    return VectorXd::Constant(pm, static_cast<double>(k) / pm);
}

}  // namespace

TEST_CASE("column normalization") {
    Dataset ds;
    ds.design.resize(2, 2);
    ds.design << 3.0, 0.6, 4.0, 0.8;
    ds.response.resize(2);
    ds.response << 0, 1;

    SECTION("columns are scaled to unit length and lengths recorded") {
        auto [scaled, record] = relaxation::normalize_columns(ds);
        REQUIRE(record.lengths[0] == Approx(5.0));
        REQUIRE(scaled.design(0, 0) == Approx(0.6));
        REQUIRE(scaled.design(1, 0) == Approx(0.8));
        REQUIRE(record.lengths[1] == Approx(1.0));
        REQUIRE(scaled.design(0, 1) == Approx(0.6));
        REQUIRE(record.applied);
    }

    SECTION("zero-length column is rejected with its index") {
        ds.design.col(1).setZero();
        REQUIRE_THROWS_WITH(relaxation::normalize_columns(ds),
                            Catch::Contains("column 2"));
    }
}

TEST_CASE("penalty weight formula") {
    SelectionPoint point;
    point.t.resize(1);

    SECTION("direct evaluations") {
        point.t << 0.5;
        auto w = relaxation::penalty_weights(point, {0.1, 1.0}, 0);
        REQUIRE(w.omega[0] == Approx(3.4).epsilon(1e-12));

        point.t << 1.0;
        w = relaxation::penalty_weights(point, {0.1, 1.0}, 0);
        REQUIRE(w.omega[0] == Approx(0.1).epsilon(1e-12));

        point.t << 0.25;
        w = relaxation::penalty_weights(point, {0.0, 2.0}, 0);
        REQUIRE(w.omega[0] == Approx(30.0).epsilon(1e-12));
    }

    SECTION("mandatory columns carry lambda") {
        point.t << 0.5;
        auto w = relaxation::penalty_weights(point, {0.25, 1.0}, 2);
        REQUIRE(w.omega.size() == 3);
        REQUIRE(w.omega[0] == 0.25);
        REQUIRE(w.omega[1] == 0.25);
        REQUIRE(w.omega[2] == Approx(1.25 / 0.25 - 1.0));
    }

    SECTION("sub-floor entries are clamped and counted") {
        point.t << 1e-12;
        auto w = relaxation::penalty_weights(point, {0.0, 1.0}, 0);
        REQUIRE(w.clamped_count == 1);
        REQUIRE(std::isfinite(w.omega[0]));
        REQUIRE(w.omega[0] > 0);
    }
}

TEST_CASE("envelope gradient closed form") {
    SECTION("direct evaluation and dead coefficient") {
        glm::InnerFit fit;
        fit.coefficients.resize(2, 1);
        fit.coefficients << 0.2, 0.0;
        SelectionPoint point;
        point.t.resize(2);
        point.t << 0.5, 0.3;
        VectorXd g = relaxation::envelope_gradient(fit, point, {0.0, 1.0}, 0);
        REQUIRE(g[0] == Approx(-0.64).epsilon(1e-12));
        REQUIRE(g[1] == 0.0);
    }

    SECTION("matches finite differences of the value function") {
        oracle::TestData data = oracle::random_logistic(40, 8, 1234, 1.0, 3);
        Dataset ds = logistic_dataset(data);
        auto [normalized, record] = relaxation::normalize_columns(ds);
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> unif(0.25, 0.8);
        const RelaxationParams params{0.05, 0.4};
        const auto solver = tight_solver();

        for (int trial = 0; trial < 5; ++trial) {
            SelectionPoint point;
            point.t.resize(8);
            for (int j = 0; j < 8; ++j) point.t[j] = unif(rng);

            glm::InnerFit fit =
                relaxation::inner_minimizer(normalized, Family::logistic, point, params, solver);
            REQUIRE(fit.converged);
            VectorXd analytic = relaxation::envelope_gradient(fit, point, params, 0);

            const double h = 1e-4;
            VectorXd fd(8);
            for (int j = 0; j < 8; ++j) {
                SelectionPoint plus = point, minus = point;
                plus.t[j] += h;
                minus.t[j] -= h;
                fd[j] = (relaxation::value_function(normalized, Family::logistic, plus, params,
                                                    solver) -
                         relaxation::value_function(normalized, Family::logistic, minus, params,
                                                    solver)) /
                        (2 * h);
            }
            const double denom = std::max(fd.cwiseAbs().maxCoeff(), 1e-12);
            REQUIRE((analytic - fd).cwiseAbs().maxCoeff() / denom < 1e-4);
            REQUIRE((analytic.array() <= 0.0).all());
        }
    }
}

TEST_CASE("value function properties") {
    oracle::TestData data = oracle::random_logistic(60, 5, 77, 0.8, 3);
    Dataset ds = logistic_dataset(data);
    auto [normalized, record] = relaxation::normalize_columns(ds);
    const auto solver = tight_solver();

    SECTION("at t = 1 with lambda = 0 it equals the unpenalized MLE objective") {
        SelectionPoint ones;
        ones.t = VectorXd::Ones(5);
        const double f =
            relaxation::value_function(normalized, Family::logistic, ones, {0.0, 0.7}, solver);
        glm::NewtonOptions tight;
        tight.gradient_tol = 1e-10;
        tight.max_iterations = 200;
        glm::InnerFit mle = glm::fit_ridge(normalized.design, normalized.response,
                                           Family::logistic, 2, 0.0, tight);
        REQUIRE(f == Approx(mle.objective).epsilon(1e-9));
    }

    SECTION("monotone non-decreasing in delta") {
        std::mt19937_64 rng(31);
        std::uniform_real_distribution<double> unif(0.1, 0.9);
        std::uniform_real_distribution<double> logd(-4.0, 0.0);
        for (int trial = 0; trial < 100; ++trial) {
            SelectionPoint point;
            point.t.resize(5);
            for (int j = 0; j < 5; ++j) point.t[j] = unif(rng);
            double d1 = std::pow(10.0, logd(rng));
            double d2 = std::pow(10.0, logd(rng));
            if (d1 > d2) std::swap(d1, d2);
            const double f1 =
                relaxation::value_function(normalized, Family::logistic, point, {0.1, d1}, solver);
            const double f2 =
                relaxation::value_function(normalized, Family::logistic, point, {0.1, d2}, solver);
            REQUIRE(f2 >= f1 - 1e-9);
        }
    }

    SECTION("nearly constant in t when delta is tiny and lambda zero") {
        // natural scale keeps the MLE coefficients O(1), so the delta-term is
        // genuinely negligible at delta = 1e-8
        std::mt19937_64 rng(9);
        std::uniform_real_distribution<double> unif(0.25, 0.9);
        SelectionPoint a, b;
        a.t.resize(5);
        b.t.resize(5);
        for (int j = 0; j < 5; ++j) {
            a.t[j] = unif(rng);
            b.t[j] = unif(rng);
        }
        const double fa =
            relaxation::value_function(ds, Family::logistic, a, {0.0, 1e-8}, solver);
        const double fb =
            relaxation::value_function(ds, Family::logistic, b, {0.0, 1e-8}, solver);
        REQUIRE(std::abs(fa - fb) <= 1e-6);
    }

    SECTION("concave at the threshold: midpoint dominates the chord") {
        auto threshold = relaxation::concavity_threshold(normalized, Family::logistic);
        const RelaxationParams params{0.0, threshold.delta_conc};
        std::mt19937_64 rng(13);
        const int k = 2;
        for (int trial = 0; trial < 100; ++trial) {
            SelectionPoint a, b, mid;
            a.t = simplex_point(rng, 5, k);
            b.t = simplex_point(rng, 5, k);
            mid.t = (a.t + b.t) / 2;
            const double fa =
                relaxation::value_function(normalized, Family::logistic, a, params, solver);
            const double fb =
                relaxation::value_function(normalized, Family::logistic, b, params, solver);
            const double fm =
                relaxation::value_function(normalized, Family::logistic, mid, params, solver);
            REQUIRE(fm >= (fa + fb) / 2 - 1e-8);
        }
    }
}

TEST_CASE("concavity threshold calibration") {
    SECTION("identity design, logistic") {
        Dataset ds;
        ds.design = MatrixXd::Identity(2, 2);
        ds.response = VectorXi::Zero(2);
        auto result = relaxation::concavity_threshold(ds, Family::logistic);
        REQUIRE(result.nu_max == Approx(1.0).epsilon(1e-9));
        REQUIRE(result.delta_conc == Approx(0.0625).epsilon(1e-9));
        REQUIRE_FALSE(result.frobenius_fallback);
    }

    SECTION("diagonal gram matrix") {
        Dataset ds;
        ds.design.resize(2, 2);
        ds.design << 2.0, 0.0, 0.0, 1.0;  // X'X = diag(4, 1)
        ds.response = VectorXi::Zero(2);
        auto result = relaxation::concavity_threshold(ds, Family::logistic);
        REQUIRE(result.nu_max == Approx(4.0).epsilon(1e-8));
    }

    SECTION("matches a dense eigensolver on a random matrix") {
        std::mt19937_64 rng(100);
        std::normal_distribution<double> normal;
        MatrixXd x(20, 6);
        for (int i = 0; i < 20; ++i)
            for (int j = 0; j < 6; ++j) x(i, j) = normal(rng);
        Dataset ds;
        ds.design = x;
        ds.response = VectorXi::Zero(20);
        auto result = relaxation::concavity_threshold(ds, Family::logistic);
        const double dense = oracle::largest_eigenvalue(x);
        REQUIRE(result.nu_max == Approx(dense).epsilon(1e-5));
    }

    SECTION("multinomial threshold is twice the logistic one") {
        std::mt19937_64 rng(3);
        std::normal_distribution<double> normal;
        MatrixXd x(15, 4);
        for (int i = 0; i < 15; ++i)
            for (int j = 0; j < 4; ++j) x(i, j) = normal(rng);
        Dataset ds;
        ds.design = x;
        ds.response = VectorXi::Ones(15);
        ds.class_count = 3;
        auto lg = relaxation::concavity_threshold(ds, Family::logistic);
        auto mn = relaxation::concavity_threshold(ds, Family::multinomial);
        REQUIRE(mn.delta_conc / lg.delta_conc == 2.0);
    }

    SECTION("mandatory columns are excluded from the gram matrix") {
        Dataset ds;
        ds.design.resize(2, 3);
        ds.design << 9.0, 2.0, 0.0, 9.0, 0.0, 1.0;
        ds.response = VectorXi::Zero(2);
        ds.mandatory_count = 1;
        auto result = relaxation::concavity_threshold(ds, Family::logistic);
        REQUIRE(result.nu_max == Approx(4.0).epsilon(1e-8));
    }

    SECTION("near-tied eigenvalues still certify the tolerance quickly") {
        Dataset ds;
        ds.design = MatrixXd::Zero(2, 2);
        ds.design(0, 0) = 1.0;
        ds.design(1, 1) = std::sqrt(1.0 - 5e-7);  // gap below the tolerance
        ds.response = VectorXi::Zero(2);
        auto result = relaxation::concavity_threshold(ds, Family::logistic);
        REQUIRE_FALSE(result.frobenius_fallback);
        REQUIRE(result.nu_max == Approx(1.0).epsilon(1e-6));
    }

    SECTION("stagnation falls back to the Frobenius bound, flagged") {
        Dataset ds;
        ds.design = MatrixXd::Zero(2, 2);
        ds.design(0, 0) = 1.0;
        ds.design(1, 1) = std::sqrt(1.0 - 2e-4);  // slow contraction, real gap
        ds.response = VectorXi::Zero(2);
        auto result = relaxation::concavity_threshold(ds, Family::logistic);
        REQUIRE(result.frobenius_fallback);
        REQUIRE(result.power_iterations == 1000);
        REQUIRE(result.nu_max == Approx(ds.design.squaredNorm()));

        auto schedule = optimizer::calibrate_schedule(ds, Family::logistic, 5);
        REQUIRE(schedule.threshold_fallback);
    }
}

TEST_CASE("multinomial envelope gradient matches finite differences") {
    oracle::TestData data = oracle::random_multinomial(50, 6, 3, 202, 1.0, 2);
    Dataset ds;
    ds.design = data.x;
    ds.response = data.y;
    ds.class_count = 3;
    auto [normalized, record] = relaxation::normalize_columns(ds);
    const auto solver = tight_solver();
    const RelaxationParams params{0.02, 0.3};

    std::mt19937_64 rng(55);
    std::uniform_real_distribution<double> unif(0.3, 0.8);
    SelectionPoint point;
    point.t.resize(6);
    for (int j = 0; j < 6; ++j) point.t[j] = unif(rng);

    glm::InnerFit fit =
        relaxation::inner_minimizer(normalized, Family::multinomial, point, params, solver);
    REQUIRE(fit.converged);
    REQUIRE(fit.coefficients.cols() == 2);  // row norms over C-1 columns
    VectorXd analytic = relaxation::envelope_gradient(fit, point, params, 0);

    const double h = 1e-4;
    for (int j = 0; j < 6; ++j) {
        SelectionPoint plus = point, minus = point;
        plus.t[j] += h;
        minus.t[j] -= h;
        const double fd =
            (relaxation::value_function(normalized, Family::multinomial, plus, params, solver) -
             relaxation::value_function(normalized, Family::multinomial, minus, params,
                                        solver)) /
            (2 * h);
        REQUIRE(analytic[j] == Approx(fd).epsilon(1e-4).margin(1e-10));
        REQUIRE(analytic[j] <= 0.0);
    }
}

TEST_CASE("multinomial value function is monotone in delta") {
    oracle::TestData data = oracle::random_multinomial(40, 5, 3, 71, 0.8, 2);
    Dataset ds;
    ds.design = data.x;
    ds.response = data.y;
    ds.class_count = 3;
    auto [normalized, record] = relaxation::normalize_columns(ds);
    const auto solver = tight_solver();

    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> unif(0.15, 0.85);
    std::uniform_real_distribution<double> logd(-3.0, 0.0);
    for (int trial = 0; trial < 20; ++trial) {
        SelectionPoint point;
        point.t.resize(5);
        for (int j = 0; j < 5; ++j) point.t[j] = unif(rng);
        double d1 = std::pow(10.0, logd(rng));
        double d2 = std::pow(10.0, logd(rng));
        if (d1 > d2) std::swap(d1, d2);
        const double f1 = relaxation::value_function(normalized, Family::multinomial, point,
                                                     {0.05, d1}, solver);
        const double f2 = relaxation::value_function(normalized, Family::multinomial, point,
                                                     {0.05, d2}, solver);
        REQUIRE(f2 >= f1 - 1e-9);
    }
}

TEST_CASE("scaling a column before normalization changes nothing downstream") {
    oracle::TestData data = oracle::random_logistic(50, 6, 2024, 1.0, 2);
    Dataset base = logistic_dataset(data);
    Dataset scaled = base;
    scaled.design.col(3) *= 7.0;

    auto [norm_a, rec_a] = relaxation::normalize_columns(base);
    auto [norm_b, rec_b] = relaxation::normalize_columns(scaled);
    REQUIRE((norm_a.design - norm_b.design).cwiseAbs().maxCoeff() < 1e-12);

    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> unif(0.2, 0.9);
    SelectionPoint point;
    point.t.resize(6);
    for (int j = 0; j < 6; ++j) point.t[j] = unif(rng);
    const RelaxationParams params{0.05, 0.3};
    const auto solver = tight_solver();

    glm::InnerFit fa = relaxation::inner_minimizer(norm_a, Family::logistic, point, params, solver);
    glm::InnerFit fb = relaxation::inner_minimizer(norm_b, Family::logistic, point, params, solver);
    REQUIRE(fa.objective == Approx(fb.objective).epsilon(1e-10));
    VectorXd ga = relaxation::envelope_gradient(fa, point, params, 0);
    VectorXd gb = relaxation::envelope_gradient(fb, point, params, 0);
    REQUIRE((ga - gb).cwiseAbs().maxCoeff() <=
            1e-10 * std::max(1.0, ga.cwiseAbs().maxCoeff()));
}
