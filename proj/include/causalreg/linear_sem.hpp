#pragma once

#include "causalreg/data_model.hpp"

#include <cstddef>

namespace causalreg {

/// Linear anchor model Z = B Z + eps + M A over Z = (X_1..X_p, Y, H_1..H_q),
/// with independent noise eps ~ N(0, diag(noise_sd^2)) and anchor second
/// moment sigma_a. All variables have mean zero.
struct LinearSem {
  std::size_t p = 0;
  std::size_t q = 0;
  Matrix b;         // d x d, d = p + 1 + q
  Matrix m;         // d x r
  Vector noise_sd;  // d
  Matrix sigma_a;   // r x r, symmetric positive semidefinite

  std::size_t d() const noexcept { return p + 1 + q; }
  std::size_t r() const noexcept { return static_cast<std::size_t>(m.cols()); }
  std::size_t y_index() const noexcept { return p; }

  /// Throws DataError on inconsistent shapes or NumericError on singular I - B.
  void validate() const;

  /// (I - B)^{-1}
  Matrix total_effects() const;

  Matrix noise_covariance() const { return noise_sd.array().square().matrix().asDiagonal(); }
};

}  // namespace causalreg
