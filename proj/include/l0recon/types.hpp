#pragma once

#include <Eigen/Core>

namespace l0recon {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace l0recon
