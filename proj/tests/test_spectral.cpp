#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <numbers>

using namespace brantx;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("psd shape is channels x (M/2 + 1)", "[spectral]") {
  Rng rng(0);
  for (Index m : {4, 5, 64, 65, 384}) {
    const Matrix p = psd(bxtest::random_matrix(3, m, rng));
    CHECK(p.rows() == 3);
    CHECK(p.cols() == m / 2 + 1);
    CHECK((p.array() >= 0).all());
  }
  CHECK_THROWS_AS(psd(Matrix::Zero(1, 3)), ValidationError);
}

TEST_CASE("psd bins sum to the window-compensated mean power", "[spectral]") {
  Rng rng(5);
  for (Index m : {16, 17, 128, 384, 769}) {
    const Matrix x = bxtest::random_matrix(2, m, rng, 3.0);
    const Matrix p = psd(x);
    for (Index c = 0; c < 2; ++c) {
      // Direct time-domain evaluation of sum((w x)^2) / sum(w^2).
      double num = 0, den = 0;
      for (Index n = 0; n < m; ++n) {
        const double w = 0.5 - 0.5 * std::cos(2 * std::numbers::pi * n / m);
        num += w * w * x(c, n) * x(c, n);
        den += w * w;
      }
      CHECK_THAT(p.row(c).sum(), WithinRel(num / den, 1e-6));
    }
  }
}

TEST_CASE("sinusoid on an exact bin peaks there with power A^2/3", "[spectral]") {
  const Index m = 256;
  for (Index k : {3, 10, 50, 127}) {
    const double amp = 1.7;
    Matrix x(1, m);
    for (Index n = 0; n < m; ++n) x(0, n) = amp * std::cos(2 * std::numbers::pi * k * n / m + 0.3);
    const Matrix p = psd(x);
    Index arg = 0;
    p.row(0).maxCoeff(&arg);
    CHECK(arg == k);
    // Hann mainlobe: Y_k = A M / 4, so 2 |Y_k|^2 / (M * 3M/8) = A^2 / 3.
    CHECK_THAT(p(0, k), WithinRel(amp * amp / 3, 1e-9));
  }
}

TEST_CASE("constant signal leaks into DC and the first bin only", "[spectral]") {
  const double c = 2.5;
  const Matrix p = psd(Matrix::Constant(1, 64, c));
  // Hann spectrum of a constant: Y_0 = cM/2, Y_1 = -cM/4.
  CHECK_THAT(p(0, 0), WithinRel(2 * c * c / 3, 1e-12));
  CHECK_THAT(p(0, 1), WithinRel(c * c / 3, 1e-12));
  CHECK_THAT(p.row(0).tail(p.cols() - 2).sum(), WithinAbs(0.0, 1e-18));
}
