#pragma once

#include <Eigen/Core>

namespace stibpalm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

}  // namespace stibpalm
