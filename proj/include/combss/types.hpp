#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace combss {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;
using Eigen::VectorXi;

// Invalid user input (dimensions, labels, flag domains). The CLI maps this to exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values encountered during a computation. The CLI maps this to exit code 1.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Family { logistic, multinomial };

inline const char* family_name(Family f) {
    return f == Family::logistic ? "logistic" : "multinomial";
}

// Immutable problem instance. The design excludes the intercept column; the
// first `mandatory_count` columns are always retained by the selection.
// Responses are {0,1} for logistic and {1..class_count} for multinomial.
struct Dataset {
    MatrixXd design;
    VectorXi response;
    int mandatory_count = 0;
    int class_count = 2;

    Eigen::Index n() const { return design.rows(); }
    Eigen::Index p() const { return design.cols(); }
    int free_count() const { return static_cast<int>(p()) - mandatory_count; }
};

inline void validate_dataset(const Dataset& data, Family family) {
    if (data.design.rows() < 1) throw ValidationError("dataset must have n >= 1 rows");
    if (data.design.cols() < 1) throw ValidationError("dataset must have p >= 1 predictor columns");
    if (data.response.size() != data.design.rows())
        throw ValidationError("response length does not match the number of design rows");
    if (data.mandatory_count < 0 || data.mandatory_count >= data.design.cols())
        throw ValidationError("mandatory_count must satisfy 0 <= m < p");
    if (!data.design.allFinite())
        throw ValidationError("design matrix contains non-finite entries");
    if (family == Family::logistic) {
        for (Eigen::Index i = 0; i < data.response.size(); ++i) {
            const int y = data.response[i];
            if (y != 0 && y != 1)
                throw ValidationError("logistic responses must lie in {0,1}; row " +
                                      std::to_string(i + 1) + " has label " + std::to_string(y));
        }
    } else {
        if (data.class_count < 2)
            throw ValidationError("multinomial class_count must be >= 2");
        for (Eigen::Index i = 0; i < data.response.size(); ++i) {
            const int y = data.response[i];
            if (y < 1 || y > data.class_count)
                throw ValidationError("multinomial responses must lie in {1.." +
                                      std::to_string(data.class_count) + "}; row " +
                                      std::to_string(i + 1) + " has label " + std::to_string(y));
        }
    }
}

// Deterministic random source: mt19937_64 (bit-exact across platforms) with an
// explicit 53-bit uniform and Box-Muller normals, so simulated datasets are
// reproducible from the seed alone.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // uniform on [0, 1)
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * M_PI * u2;
        spare_ = radius * std::sin(angle);
        has_spare_ = true;
        return radius * std::cos(angle);
    }

    std::uint64_t bits() { return engine_(); }

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace combss
