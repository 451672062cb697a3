#pragma once

#include <Eigen/Core>

#include "adi/matrix.hpp"

namespace adi::num::detail {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMut = Eigen::Map<EigenRowMajor>;
using MapConst = Eigen::Map<const EigenRowMajor>;

inline MapMut view(Matrix& m) {
  return MapMut(m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}

inline MapConst view(const Matrix& m) {
  return MapConst(m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}

}  // namespace adi::num::detail
