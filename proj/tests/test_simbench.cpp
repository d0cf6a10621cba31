#include "combss/simbench.hpp"

#include <catch2/catch.hpp>

#include <random>

using namespace combss;
using simbench::SimDesign;

TEST_CASE("simulation design pieces") {
    SECTION("AR(1) covariance formula") {
        MatrixXd sigma = simbench::ar1_covariance(3, 0.5);
        MatrixXd expected(3, 3);
        expected << 1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0;
        REQUIRE((sigma - expected).cwiseAbs().maxCoeff() < 1e-15);
    }

    SECTION("case 2 coefficients decay geometrically") {
        SimDesign design;
        design.p = 8;
        design.k0 = 4;
        design.coefficient_case = 2;
        VectorXd beta = simbench::true_signal(design);
        REQUIRE(beta[0] == 1.0);
        REQUIRE(beta[1] == 0.5);
        REQUIRE(beta[2] == 0.25);
        REQUIRE(beta[3] == 0.125);
        for (int j = 4; j < 8; ++j) REQUIRE(beta[j] == 0.0);
    }

    SECTION("invalid designs are rejected") {
        SimDesign design;
        design.rho = 1.0;
        REQUIRE_THROWS_AS(simbench::validate_design(design), ValidationError);
        design.rho = 0.5;
        design.k0 = 100;
        REQUIRE_THROWS_AS(simbench::validate_design(design), ValidationError);
        design.k0 = 5;
        design.coefficient_case = 3;
        REQUIRE_THROWS_AS(simbench::validate_design(design), ValidationError);
    }
}

TEST_CASE("generator distributional checks") {
    SECTION("independent columns when rho = 0") {
        SimDesign design;
        design.n = 100000;
        design.p = 4;
        design.rho = 0.0;
        design.k0 = 2;
        design.test_n = 1;
        design.seed = 71;
        simbench::SimData data = simbench::generate(design);
        MatrixXd x = data.train.design;
        Eigen::RowVectorXd mean = x.colwise().mean();
        x.rowwise() -= mean;
        MatrixXd corr = (x.transpose() * x) / static_cast<double>(design.n - 1);
        for (int j = 0; j < 4; ++j)
            for (int l = 0; l < 4; ++l) {
                const double target = j == l ? 1.0 : 0.0;
                REQUIRE(std::abs(corr(j, l) / std::sqrt(corr(j, j) * corr(l, l)) - target) <
                        0.02);
            }
    }

    SECTION("AR(1) correlation structure when rho = 0.6") {
        SimDesign design;
        design.n = 100000;
        design.p = 5;
        design.rho = 0.6;
        design.k0 = 2;
        design.test_n = 1;
        design.seed = 72;
        simbench::SimData data = simbench::generate(design);
        MatrixXd x = data.train.design;
        Eigen::RowVectorXd mean = x.colwise().mean();
        x.rowwise() -= mean;
        MatrixXd cov = (x.transpose() * x) / static_cast<double>(design.n - 1);
        for (int j = 0; j < 5; ++j)
            for (int l = 0; l < 5; ++l) {
                const double target = std::pow(0.6, std::abs(j - l));
                const double sample = cov(j, l) / std::sqrt(cov(j, j) * cov(l, l));
                REQUIRE(std::abs(sample - target) < 0.02);
            }
    }

    SECTION("labels are approximately balanced in case 1") {
        SimDesign design;
        design.n = 10000;
        design.p = 30;
        design.rho = 0.0;
        design.k0 = 10;
        design.test_n = 1;
        design.seed = 5;
        simbench::SimData data = simbench::generate(design);
        const double frac =
            data.train.response.cast<double>().sum() / static_cast<double>(design.n);
        REQUIRE(frac > 0.35);
        REQUIRE(frac < 0.65);
    }

    SECTION("identical designs give bit-identical datasets") {
        SimDesign design;
        design.n = 50;
        design.p = 6;
        design.rho = 0.4;
        design.k0 = 3;
        design.test_n = 20;
        design.seed = 99;
        simbench::SimData a = simbench::generate(design);
        simbench::SimData b = simbench::generate(design);
        REQUIRE(a.train.design == b.train.design);
        REQUIRE((a.train.response.array() == b.train.response.array()).all());
        REQUIRE(a.test.design == b.test.design);
        REQUIRE((a.truth.array() == b.truth.array()).all());
    }

    SECTION("multinomial generation produces every class") {
        SimDesign design;
        design.family = Family::multinomial;
        design.class_count = 3;
        design.n = 3000;
        design.p = 6;
        design.k0 = 2;
        design.test_n = 1;
        design.seed = 12;
        simbench::SimData data = simbench::generate(design);
        std::vector<int> counts(4, 0);
        for (Eigen::Index i = 0; i < data.train.response.size(); ++i)
            ++counts[static_cast<std::size_t>(data.train.response[i])];
        REQUIRE(counts[1] > 100);
        REQUIRE(counts[2] > 100);
        REQUIRE(counts[3] > 100);
    }
}

TEST_CASE("selection metrics") {
    SECTION("perfect recovery") {
        VectorXi truth = VectorXi::Zero(30);
        for (int j = 0; j < 10; ++j) truth[j] = 1;
        auto m = simbench::selection_metrics(truth, truth);
        REQUIRE(m.sensitivity == 1.0);
        REQUIRE(m.specificity == 1.0);
        REQUIRE(m.mcc == Approx(1.0));
        REQUIRE(m.f1 == Approx(1.0));
        REQUIRE(m.selection_accuracy == 1.0);
    }

    SECTION("disjoint selection of the same size") {
        VectorXi truth = VectorXi::Zero(30);
        VectorXi sel = VectorXi::Zero(30);
        for (int j = 0; j < 10; ++j) truth[j] = 1;
        for (int j = 10; j < 20; ++j) sel[j] = 1;
        auto m = simbench::selection_metrics(sel, truth);
        REQUIRE(m.mcc == Approx(-0.5).epsilon(1e-12));
        REQUIRE(m.sensitivity == 0.0);
        REQUIRE(m.f1 == 0.0);
    }

    SECTION("empty selection") {
        VectorXi truth = VectorXi::Zero(30);
        for (int j = 0; j < 10; ++j) truth[j] = 1;
        VectorXi sel = VectorXi::Zero(30);
        auto m = simbench::selection_metrics(sel, truth);
        REQUIRE(m.sensitivity == 0.0);
        REQUIRE(m.specificity == 1.0);
        REQUIRE(m.f1 == 0.0);
        REQUIRE(m.mcc == 0.0);
    }

    SECTION("bounds and oracle agreement on random supports") {
        std::mt19937_64 rng(2718);
        std::uniform_int_distribution<int> coin(0, 1);
        for (int trial = 0; trial < 1000; ++trial) {
            VectorXi truth(12), sel(12);
            for (int j = 0; j < 12; ++j) {
                truth[j] = coin(rng);
                sel[j] = coin(rng);
            }
            auto m = simbench::selection_metrics(sel, truth);
            REQUIRE(m.sensitivity >= 0.0);
            REQUIRE(m.sensitivity <= 1.0);
            REQUIRE(m.specificity >= 0.0);
            REQUIRE(m.specificity <= 1.0);
            REQUIRE(m.precision >= 0.0);
            REQUIRE(m.precision <= 1.0);
            REQUIRE(m.f1 >= 0.0);
            REQUIRE(m.f1 <= 1.0);
            REQUIRE(m.selection_accuracy >= 0.0);
            REQUIRE(m.selection_accuracy <= 1.0);
            REQUIRE(m.mcc >= -1.0 - 1e-12);
            REQUIRE(m.mcc <= 1.0 + 1e-12);

            // direct confusion-matrix recomputation
            int tp = 0, fp = 0, fn = 0, tn = 0;
            for (int j = 0; j < 12; ++j) {
                if (sel[j] && truth[j]) ++tp;
                if (sel[j] && !truth[j]) ++fp;
                if (!sel[j] && truth[j]) ++fn;
                if (!sel[j] && !truth[j]) ++tn;
            }
            const double prec = (tp + fp) ? double(tp) / (tp + fp) : 0.0;
            const double sens = (tp + fn) ? double(tp) / (tp + fn) : 0.0;
            const double f1 = (prec + sens) > 0 ? 2 * prec * sens / (prec + sens) : 0.0;
            const double mden =
                double(tp + fp) * double(tp + fn) * double(tn + fp) * double(tn + fn);
            const double mcc =
                mden > 0 ? (double(tp) * tn - double(fp) * fn) / std::sqrt(mden) : 0.0;
            REQUIRE(m.f1 == Approx(f1).margin(1e-12));
            REQUIRE(m.mcc == Approx(mcc).margin(1e-12));
        }
    }

    SECTION("length mismatch is rejected") {
        REQUIRE_THROWS_AS(simbench::selection_metrics(VectorXi::Zero(3), VectorXi::Zero(4)),
                          ValidationError);
    }
}

TEST_CASE("replication protocol") {
    SimDesign design;
    design.n = 80;
    design.p = 8;
    design.rho = 0.0;
    design.k0 = 2;
    design.test_n = 500;
    design.seed = 7;

    path::PathConfig cfg;
    cfg.grid_size = 5;
    std::vector<int> ks{1, 2, 3};

    SECTION("a single replication reports zero standard errors") {
        auto summary = simbench::replicate(design, cfg, 1, ks);
        REQUIRE(summary.rows.size() == 1);
        REQUIRE(summary.failures == 0);
        REQUIRE(summary.mcc.se == 0.0);
        REQUIRE(summary.k_opt.se == 0.0);
        REQUIRE(summary.rows[0].seed == design.seed + 1);
    }

    SECTION("replication is deterministic and threads do not change results") {
        auto a = simbench::replicate(design, cfg, 3, ks);
        path::PathConfig threaded = cfg;
        threaded.threads = 2;
        auto b = simbench::replicate(design, threaded, 3, ks);
        REQUIRE(a.rows.size() == b.rows.size());
        for (std::size_t i = 0; i < a.rows.size(); ++i) {
            REQUIRE(a.rows[i].k_opt == b.rows[i].k_opt);
            REQUIRE(a.rows[i].metrics.mcc == b.rows[i].metrics.mcc);
            REQUIRE(a.rows[i].metrics.prediction_accuracy ==
                    b.rows[i].metrics.prediction_accuracy);
        }
    }

    SECTION("metrics land in their ranges on an easy instance") {
        auto summary = simbench::replicate(design, cfg, 2, ks);
        for (const auto& row : summary.rows) {
            REQUIRE_FALSE(row.failed);
            REQUIRE(row.k_opt >= 1);
            REQUIRE(row.k_opt <= 3);
            REQUIRE(row.metrics.prediction_accuracy > 0.5);
            REQUIRE(row.wall_time_s >= 0.0);
        }
    }
}
