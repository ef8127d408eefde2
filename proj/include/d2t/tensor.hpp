#pragma once

#include <Eigen/Dense>

namespace d2t {

// Row-major so serialized tensor payloads match in-memory layout directly.
template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

}  // namespace d2t
