#pragma once

#include <functional>

#include "hidemix/geometry.hpp"

namespace hidemix {

// Coefficient and solution fields are plain callables; time-dependent variants
// take (x, t), kernels take (x, t, s).
using ScalarField = std::function<double(Vec2)>;
using ScalarFieldT = std::function<double(Vec2, double)>;
using VectorField = std::function<Vec2(Vec2)>;
using VectorFieldT = std::function<Vec2(Vec2, double)>;
using MatrixField = std::function<Mat2(Vec2)>;
using MatrixKernel = std::function<Mat2(Vec2, double, double)>;

inline MatrixField constant_matrix_field(Mat2 m) {
    return [m](Vec2) { return m; };
}

inline MatrixField identity_matrix_field() {
    return constant_matrix_field(Mat2::identity());
}

}  // namespace hidemix
