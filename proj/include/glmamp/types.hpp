#pragma once

#include <Eigen/Core>

namespace glmamp {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

}  // namespace glmamp
