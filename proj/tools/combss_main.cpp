// combss: best subset selection for logistic and multinomial regression.
// Subcommands: fit (one model size), path (model-size grid with tuning),
// simulate (synthetic replication study).
// Exit codes: 0 success, 1 numeric/convergence failure, 2 usage/validation.

#include "combss/combss.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace combss;
using nlohmann::json;

constexpr int kSchemaVersion = 1;

struct CommonArgs {
    std::string data_file;
    std::string response;
    std::string mandatory_csv;
    std::string family_name = "logistic";
    double lambda = 0.0;
    int grid_size = 25;
    double alpha = 0.01;
    double epsilon = 0.0;
    std::uint64_t seed = 1;
    bool no_normalize = false;
    std::string refit_mode = "lambda";
    int cv_folds = 5;
    int threads = 0;
    std::string out;
};

int default_threads() {
    if (const char* env = std::getenv("COMBSS_THREADS")) {
        const int value = std::atoi(env);
        if (value > 0) return value;
    }
    return 1;
}

Family parse_family(const std::string& name) {
    if (name == "logistic") return Family::logistic;
    if (name == "multinomial") return Family::multinomial;
    throw ValidationError("family must be 'logistic' or 'multinomial'");
}

std::vector<std::string> split_names(const std::string& csv) {
    std::vector<std::string> names;
    std::string current;
    for (char ch : csv) {
        if (ch == ',') {
            if (!current.empty()) names.push_back(current);
            current.clear();
        } else if (!std::isspace(static_cast<unsigned char>(ch))) {
            current.push_back(ch);
        }
    }
    if (!current.empty()) names.push_back(current);
    return names;
}

void check_common(const CommonArgs& args) {
    if (args.lambda < 0.0) throw ValidationError("lambda must be >= 0");
    if (args.grid_size < 1) throw ValidationError("N must be >= 1");
    if (!(args.alpha > 0.0 && args.alpha < 1.0))
        throw ValidationError("alpha must lie in (0, 1)");
    if (args.epsilon < 0.0) throw ValidationError("epsilon must be >= 0");
    if (args.refit_mode != "lambda" && args.refit_mode != "cv")
        throw ValidationError("refit must be 'lambda' or 'cv'");
    if (args.cv_folds < 2) throw ValidationError("cv-folds must be >= 2");
}

struct LoadedProblem {
    relaxation::Problem problem;
    csv::ColumnMap map;
    Family family;
};

LoadedProblem load_problem(const CommonArgs& args) {
    if (args.data_file.empty()) throw ValidationError("--data is required");
    if (args.response.empty()) throw ValidationError("--response is required");
    const Family family = parse_family(args.family_name);
    csv::Table table = csv::read_table(args.data_file);
    auto [dataset, map] =
        csv::make_dataset(table, args.response, split_names(args.mandatory_csv), family);
    LoadedProblem loaded{relaxation::make_problem(std::move(dataset), family, !args.no_normalize),
                         std::move(map), family};
    return loaded;
}

json schedule_json(const optimizer::HomotopySchedule& schedule) {
    return json{{"delta_min", schedule.delta_min},
                {"delta_max", schedule.delta_max},
                {"N", schedule.grid_size},
                {"growth_rate", schedule.growth_rate},
                {"nu_max", schedule.nu_max},
                {"threshold_fallback", schedule.threshold_fallback}};
}

// Support and coefficients reported against the file's predictor order,
// 1-based, with mandatory columns listed alongside.
json result_json(const optimizer::SubsetResult& result, const csv::ColumnMap& map,
                 int mandatory_count, const std::string& refit_mode, double refit_lambda) {
    json support = json::array();
    json support_names = json::array();
    for (Eigen::Index j = 0; j < result.support.size(); ++j) {
        if (result.support[j] != 1) continue;
        const std::size_t internal = static_cast<std::size_t>(mandatory_count + j);
        support.push_back(map.original_index[internal] + 1);
        support_names.push_back(map.predictor_names[internal]);
    }
    json mandatory = json::array();
    for (int j = 0; j < mandatory_count; ++j)
        mandatory.push_back(map.predictor_names[static_cast<std::size_t>(j)]);

    json coefficients = json::array();
    for (std::size_t r = 0; r < result.retained.size(); ++r) {
        const std::size_t internal = static_cast<std::size_t>(result.retained[r]);
        json values = json::array();
        for (Eigen::Index c = 0; c < result.refit_coefficients.cols(); ++c)
            values.push_back(result.refit_coefficients(static_cast<Eigen::Index>(r), c));
        coefficients.push_back(json{{"name", map.predictor_names[internal]},
                                    {"original_index", map.original_index[internal] + 1},
                                    {"mandatory", result.retained[r] < mandatory_count},
                                    {"values", values}});
    }
    json intercept = json::array();
    for (Eigen::Index c = 0; c < result.refit_intercept.size(); ++c)
        intercept.push_back(result.refit_intercept[c]);

    return json{{"k", result.k},
                {"support", support},
                {"support_names", support_names},
                {"mandatory", mandatory},
                {"intercept", intercept},
                {"coefficients", coefficients},
                {"objective", result.refit_objective},
                {"converged", result.refit_converged},
                {"refit", json{{"mode", refit_mode}, {"lambda", refit_lambda}}},
                {"diagnostics", json{{"iterations", result.trajectory.size()},
                                     {"inner_failures", result.inner_failures},
                                     {"numeric_failures", result.numeric_failures},
                                     {"clamp_events", result.clamp_events},
                                     {"vertex_changes", result.vertex_changes},
                                     {"early_stopped", result.early_stopped},
                                     {"wall_time_s", result.wall_time_s}}}};
}

void apply_cv_refit(const relaxation::Problem& prob, Family family,
                    optimizer::SubsetResult& result, int folds, std::uint64_t seed,
                    double* chosen_lambda) {
    const double lambda =
        path::cv_refit_lambda(prob, family, result.support, folds, seed);
    glm::InnerFit fit = optimizer::refit(prob, family, result.support, lambda);
    result.refit_intercept = fit.intercept;
    result.refit_coefficients = fit.coefficients;
    result.refit_objective = fit.objective;
    result.refit_converged = fit.converged;
    *chosen_lambda = lambda;
}

int cmd_fit(const CommonArgs& args, int k) {
    check_common(args);
    if (k < 1) throw ValidationError("k must be >= 1");
    LoadedProblem loaded = load_problem(args);

    optimizer::OptimizerConfig config;
    config.k = k;
    config.lambda = args.lambda;
    config.alpha = args.alpha;
    config.epsilon = args.epsilon;
    config.schedule =
        optimizer::calibrate_schedule(loaded.problem.data, loaded.family, args.grid_size);
    optimizer::SubsetResult result = optimizer::run(loaded.problem, loaded.family, config);

    double refit_lambda = config.refit_lambda();
    if (args.refit_mode == "cv")
        apply_cv_refit(loaded.problem, loaded.family, result, args.cv_folds, args.seed,
                       &refit_lambda);

    json doc = result_json(result, loaded.map, loaded.problem.data.mandatory_count,
                           args.refit_mode, refit_lambda);
    doc["schema_version"] = kSchemaVersion;
    doc["command"] = "fit";
    doc["family"] = family_name(loaded.family);
    doc["n"] = loaded.problem.data.n();
    doc["p"] = loaded.problem.data.p();
    doc["lambda"] = args.lambda;
    doc["normalized"] = !args.no_normalize;
    doc["schedule"] = schedule_json(config.schedule);

    const std::string out = args.out.empty() ? "combss_fit.json" : args.out;
    std::ofstream stream(out);
    if (!stream) throw ValidationError("cannot open output file: " + out);
    stream << doc.dump(2) << "\n";
    std::cout << "wrote " << out << " (k=" << result.k
              << ", objective=" << result.refit_objective << ")\n";
    return 0;
}

int cmd_path(const CommonArgs& args, int k_max, const std::string& validation_file,
             bool cv_requested) {
    check_common(args);
    if (k_max < 1) throw ValidationError("k-max must be >= 1");
    LoadedProblem loaded = load_problem(args);
    if (k_max > loaded.problem.data.free_count())
        throw ValidationError("k-max exceeds the number of selectable predictors");

    std::vector<int> ks(static_cast<std::size_t>(k_max));
    std::iota(ks.begin(), ks.end(), 1);

    path::PathConfig config;
    config.lambda = args.lambda;
    config.alpha = args.alpha;
    config.grid_size = args.grid_size;
    config.epsilon = args.epsilon;
    config.threads = args.threads;
    path::PathResult result = path::run_path(loaded.problem, loaded.family, ks, config);
    for (std::size_t i = 0; i < ks.size(); ++i)
        if (!result.ok(i))
            std::cerr << "warning: k=" << ks[i] << " failed: " << result.errors[i] << "\n";

    if (args.refit_mode == "cv") {
        for (std::size_t i = 0; i < ks.size(); ++i) {
            if (!result.ok(i)) continue;
            double chosen = 0.0;
            apply_cv_refit(loaded.problem, loaded.family, result.results[i], args.cv_folds,
                           args.seed, &chosen);
        }
    }

    std::vector<double> tuning_errors;
    bool tuned = false;
    if (!validation_file.empty()) {
        csv::Table vtable = csv::read_table(validation_file);
        auto [vdata, vmap] = csv::make_dataset(vtable, args.response,
                                               split_names(args.mandatory_csv), loaded.family);
        if (vdata.class_count < loaded.problem.data.class_count)
            vdata.class_count = loaded.problem.data.class_count;
        path::tune(result, vdata, loaded.family);
        tuning_errors = result.validation_error;
        tuned = true;
    } else if (cv_requested) {
        csv::Table table = csv::read_table(args.data_file);
        auto [raw, map] = csv::make_dataset(table, args.response,
                                            split_names(args.mandatory_csv), loaded.family);
        path::CvTuning tuning = path::tune_cv(raw, loaded.family, ks, config, args.cv_folds,
                                              args.seed, !args.no_normalize);
        result.k_opt = tuning.k_opt;
        tuning_errors = tuning.cv_error;
        tuned = true;
    }

    // inclusion CSV: rows = k, columns = selectable variables in file order
    const int m = loaded.problem.data.mandatory_count;
    const int pm = loaded.problem.data.free_count();
    std::vector<int> order(static_cast<std::size_t>(pm));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return loaded.map.original_index[static_cast<std::size_t>(m + a)] <
               loaded.map.original_index[static_cast<std::size_t>(m + b)];
    });
    std::vector<std::string> inc_cols{"k"};
    for (int j : order)
        inc_cols.push_back(loaded.map.predictor_names[static_cast<std::size_t>(m + j)]);
    MatrixXd inc(static_cast<Eigen::Index>(ks.size()), pm + 1);
    for (std::size_t i = 0; i < ks.size(); ++i) {
        inc(static_cast<Eigen::Index>(i), 0) = ks[i];
        for (int j = 0; j < pm; ++j)
            inc(static_cast<Eigen::Index>(i), j + 1) =
                result.inclusion(static_cast<Eigen::Index>(i), order[static_cast<std::size_t>(j)]);
    }
    const std::string prefix = args.out.empty() ? "combss_path" : args.out;
    csv::write_table(prefix + "_inclusion.csv", inc_cols, inc);

    if (tuned) {
        MatrixXd tune_table(static_cast<Eigen::Index>(ks.size()), 2);
        for (std::size_t i = 0; i < ks.size(); ++i) {
            tune_table(static_cast<Eigen::Index>(i), 0) = ks[i];
            tune_table(static_cast<Eigen::Index>(i), 1) = tuning_errors[i];
        }
        csv::write_table(prefix + "_tuning.csv", {"k", "validation_error"}, tune_table);
        std::cout << "k_opt: " << result.k_opt << "\n";
    }
    if (result.nesting_violations > 0)
        std::cout << "nesting violations along the path: " << result.nesting_violations << "\n";
    std::cout << "wrote " << prefix << "_inclusion.csv";
    if (tuned) std::cout << " and " << prefix << "_tuning.csv";
    std::cout << "\n";
    return 0;
}

int cmd_simulate(const CommonArgs& args, const simbench::SimDesign& design_in, int reps,
                 int k_max) {
    check_common(args);
    if (reps < 1) throw ValidationError("reps must be >= 1");
    if (k_max < 1) throw ValidationError("k-max must be >= 1");
    simbench::SimDesign design = design_in;
    design.family = parse_family(args.family_name);
    design.seed = args.seed;
    if (design.family == Family::logistic) design.class_count = 2;
    simbench::validate_design(design);
    if (k_max > design.p) throw ValidationError("k-max exceeds p");

    path::PathConfig config;
    config.lambda = args.lambda;
    config.alpha = args.alpha;
    config.grid_size = args.grid_size;
    config.epsilon = args.epsilon;
    config.threads = args.threads;

    std::vector<int> ks(static_cast<std::size_t>(k_max));
    std::iota(ks.begin(), ks.end(), 1);
    simbench::ReplicationSummary summary = simbench::replicate(design, config, reps, ks);

    const std::vector<std::string> rep_cols{"rep",       "seed",   "k_opt",    "sensitivity",
                                            "specificity", "sel_accuracy", "precision", "f1",
                                            "mcc",       "pred_accuracy", "wall_time_s"};
    MatrixXd rows(static_cast<Eigen::Index>(summary.rows.size()), 11);
    for (std::size_t i = 0; i < summary.rows.size(); ++i) {
        const auto& row = summary.rows[i];
        const auto& m = row.metrics;
        rows.row(static_cast<Eigen::Index>(i)) << row.rep, static_cast<double>(row.seed),
            row.k_opt, m.sensitivity, m.specificity, m.selection_accuracy, m.precision, m.f1,
            m.mcc, m.prediction_accuracy, row.wall_time_s;
        if (row.failed) std::cerr << "warning: rep " << row.rep << " failed: " << row.error << "\n";
    }
    const std::string prefix = args.out.empty() ? "combss_sim" : args.out;
    csv::write_table(prefix + "_replications.csv", rep_cols, rows);

    const std::vector<std::pair<std::string, simbench::MetricSummary>> table{
        {"k_opt", summary.k_opt},
        {"sensitivity", summary.sensitivity},
        {"specificity", summary.specificity},
        {"sel_accuracy", summary.selection_accuracy},
        {"precision", summary.precision},
        {"f1", summary.f1},
        {"mcc", summary.mcc},
        {"pred_accuracy", summary.prediction_accuracy},
        {"wall_time_s", summary.wall_time}};
    MatrixXd sm(static_cast<Eigen::Index>(table.size()), 2);
    std::vector<std::string> metric_names;
    std::printf("%-14s %10s %10s\n", "metric", "mean", "se");
    for (std::size_t i = 0; i < table.size(); ++i) {
        sm(static_cast<Eigen::Index>(i), 0) = table[i].second.mean;
        sm(static_cast<Eigen::Index>(i), 1) = table[i].second.se;
        metric_names.push_back(table[i].first);
        std::printf("%-14s %10.4f %10.4f\n", table[i].first.c_str(), table[i].second.mean,
                    table[i].second.se);
    }
    if (summary.failures > 0)
        std::cout << summary.failures << " of " << reps << " replications failed\n";

    std::ofstream stream(prefix + "_summary.csv");
    if (!stream) throw ValidationError("cannot open output file: " + prefix + "_summary.csv");
    stream << "metric,mean,se\n";
    for (std::size_t i = 0; i < table.size(); ++i)
        stream << metric_names[i] << "," << csv::format_value(sm(static_cast<Eigen::Index>(i), 0))
               << "," << csv::format_value(sm(static_cast<Eigen::Index>(i), 1)) << "\n";
    std::cout << "wrote " << prefix << "_replications.csv and " << prefix << "_summary.csv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"COMBSS-GLM: best subset selection for generalized linear models"};
    app.require_subcommand(1);

    CommonArgs args;
    args.threads = default_threads();
    int k = 0;
    int k_max = 20;
    int reps = 1;
    std::string validation_file;
    simbench::SimDesign design;

    auto add_common = [&](CLI::App* cmd, bool with_data) {
        if (with_data) {
            cmd->add_option("--data", args.data_file, "input CSV file");
            cmd->add_option("--response", args.response, "response column name");
            cmd->add_option("--mandatory", args.mandatory_csv,
                            "comma-separated always-retained predictor columns");
        }
        cmd->add_option("--family", args.family_name, "model family {logistic,multinomial}");
        cmd->add_option("--lambda", args.lambda, "uniform ridge penalty");
        cmd->add_option("--N", args.grid_size, "homotopy grid size");
        cmd->add_option("--alpha", args.alpha, "Frank-Wolfe learning rate");
        cmd->add_option("--epsilon", args.epsilon, "early-stop tolerance (0 disables)");
        cmd->add_option("--seed", args.seed, "random seed");
        cmd->add_flag("--no-normalize", args.no_normalize, "skip column normalization");
        cmd->add_option("--refit", args.refit_mode, "refit penalty mode {lambda,cv}");
        cmd->add_option("--cv-folds", args.cv_folds, "folds for cross-validation");
        cmd->add_option("--threads", args.threads,
                        "worker threads (default: COMBSS_THREADS or 1)");
        cmd->add_option("--out", args.out, "output file or prefix");
    };

    CLI::App* fit = app.add_subcommand("fit", "select one subset of a fixed size");
    add_common(fit, true);
    fit->add_option("--k", k, "model size");

    CLI::App* path_cmd = app.add_subcommand("path", "model-size path with tuning");
    add_common(path_cmd, true);
    path_cmd->add_option("--k-max", k_max, "largest model size (grid is 1..k-max)");
    path_cmd->add_option("--validation", validation_file, "held-out CSV for tuning k");

    CLI::App* sim = app.add_subcommand("simulate", "synthetic replication study");
    add_common(sim, false);
    sim->add_option("--case", design.coefficient_case, "signal pattern {1,2}");
    sim->add_option("--p", design.p, "number of predictors");
    sim->add_option("--n", design.n, "training sample size");
    sim->add_option("--rho", design.rho, "AR(1) correlation in [0,1)");
    sim->add_option("--reps", reps, "number of replications");
    sim->add_option("--k0", design.k0, "true support size");
    sim->add_option("--k-max", k_max, "largest model size in the tuning grid");
    sim->add_option("--classes", design.class_count,
                    "class count for multinomial simulation");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (fit->parsed()) return cmd_fit(args, k);
        if (path_cmd->parsed())
            return cmd_path(args, k_max, validation_file,
                            path_cmd->count("--cv-folds") > 0);
        if (sim->parsed()) return cmd_simulate(args, design, reps, k_max);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
