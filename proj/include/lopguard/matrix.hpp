#pragma once

#include <string_view>

#include <Eigen/Core>

namespace lopguard {

/// Dense row-major matrix of 64-bit reals.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

/// Throws NumericsError naming `what` if any entry is NaN or infinite.
void check_finite(const Eigen::Ref<const Mat>& m, std::string_view what);

}  // namespace lopguard
