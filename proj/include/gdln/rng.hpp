#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "gdln/common.hpp"

namespace gdln {

// Deterministic random source. Gaussian draws use an explicit Box-Muller
// transform instead of std::normal_distribution so streams are identical
// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {
    // 53-bit mantissa resolution in [0, 1).
    return (engine_() >> 11) * 0x1.0p-53;
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * gaussian();
    return m;
  }

  // n x r matrix with orthonormal columns, distributed by QR of a Gaussian
  // draw. R's diagonal signs are folded into Q so the result is unique for a
  // given stream.
  Matrix orthonormal(Eigen::Index n, Eigen::Index r) {
    require(r <= n, Errc::InvalidArgument, "orthonormal: need r <= n");
    Matrix g = gaussian_matrix(n, n);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    Matrix rmat = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < n; ++j)
      if (rmat(j, j) < 0.0) q.col(j) = -q.col(j);
    return q.leftCols(r);
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gdln
