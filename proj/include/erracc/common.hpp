#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace erracc {

template <class Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::MatrixXf;
using Eigen::VectorXd;
using Eigen::VectorXf;
using Eigen::VectorXi;

// Bad CLI arguments, inconsistent shapes, invalid hyperparameters.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing/corrupt files, malformed datasets or CSV rows.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite states, diverged training, degenerate ensembles.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

enum class SystemKind { L63, L96 };

inline std::string system_name(SystemKind s) {
    return s == SystemKind::L63 ? "l63" : "l96";
}

inline SystemKind system_from_name(const std::string& name) {
    if (name == "l63") return SystemKind::L63;
    if (name == "l96") return SystemKind::L96;
    throw ConfigError("unknown system '" + name + "' (expected l63 or l96)");
}

}  // namespace erracc
