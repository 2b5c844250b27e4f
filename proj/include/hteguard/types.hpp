#pragma once

#include <Eigen/Dense>

namespace hteguard {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

} // namespace hteguard
