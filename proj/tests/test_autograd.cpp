#include "support.hpp"

#include <catch_amalgamated.hpp>

using namespace brantx;
using namespace brantx::ag;
using bxtest::gradient_check;
using bxtest::random_matrix;
using Catch::Matchers::WithinAbs;

namespace {

// Scalar readout with fixed random weights so every output entry matters.
Var readout(const Var& y, std::uint64_t seed = 99) {
  Rng rng(seed);
  return weighted_sum(y, random_matrix(y.rows(), y.cols(), rng));
}

constexpr double kTol = 1e-6;

}  // namespace

TEST_CASE("elementwise and matrix products have exact gradients", "[autograd]") {
  Rng rng(1);
  Parameter a("a", random_matrix(3, 4, rng)), b("b", random_matrix(4, 5, rng)), c("c", random_matrix(5, 4, rng));
  Parameter row("row", random_matrix(1, 5, rng)), col("col", random_matrix(3, 1, rng));
  CHECK(gradient_check({&a, &b}, [&] { return readout(matmul(param(a), param(b))); }) < kTol);
  CHECK(gradient_check({&a, &c}, [&] { return readout(matmul_nt(param(a), param(c))); }) < kTol);
  CHECK(gradient_check({&a, &b, &row, &col},
                       [&] { return readout(add_col(add_row(matmul(param(a), param(b)), param(row)), param(col))); }) <
        kTol);
  CHECK(gradient_check({&a}, [&] { return readout(hadamard(param(a), gelu(param(a)))); }) < kTol);
  CHECK(gradient_check({&a}, [&] { return mean(sub(transpose(param(a)), scale(transpose(param(a)), 0.3))); }) < kTol);
}

TEST_CASE("normalization ops have exact gradients", "[autograd]") {
  Rng rng(2);
  Parameter x("x", random_matrix(4, 6, rng)), g("g", random_matrix(1, 6, rng)), b("b", random_matrix(1, 6, rng));
  CHECK(gradient_check({&x, &g, &b}, [&] { return readout(layer_norm_rows(param(x), param(g), param(b))); }) < kTol);
  CHECK(gradient_check({&x}, [&] { return readout(l2_normalize_rows(param(x))); }) < kTol);
}

TEST_CASE("softmax family has exact gradients", "[autograd]") {
  Rng rng(3);
  Parameter x("x", random_matrix(5, 1, rng)), z("z", random_matrix(4, 6, rng)), v("v", random_matrix(12, 3, rng));
  Parameter l("l", random_matrix(4, 3, rng));
  CHECK(gradient_check({&x}, [&] { return readout(softmax_col(param(x))); }) < kTol);
  CHECK(gradient_check({&z}, [&] { return cross_entropy_rows(param(z), {0, 5, 2, 2}); }) < kTol);
  CHECK(gradient_check({&l, &v}, [&] { return readout(attention_pool(param(l), param(v))); }) < kTol);
}

TEST_CASE("shape ops route gradients to the right entries", "[autograd]") {
  Rng rng(4);
  Parameter a("a", random_matrix(6, 3, rng)), b("b", random_matrix(2, 3, rng));
  Eigen::MatrixXi idx(6, 2);
  idx << 0, 2, 1, 1, 2, 0, 0, 0, 1, 2, 2, 1;
  CHECK(gradient_check({&a}, [&] { return readout(flatten_groups(param(a), 3)); }) < kTol);
  CHECK(gradient_check({&a}, [&] { return readout(gather_cols(param(a), idx)); }) < kTol);
  CHECK(gradient_check({&a, &b}, [&] { return readout(concat_rows({param(b), slice_rows(param(a), 2, 3)})); }) <
        kTol);
  CHECK(gradient_check({&a, &b}, [&] { return readout(concat_cols(transpose(param(a)), transpose(param(a)))); }) <
        kTol);
}

TEST_CASE("layer primitives have exact gradients", "[autograd]") {
  Rng rng(5);
  SECTION("segmented strided convolution") {
    Parameter x("x", random_matrix(2, 3 * 11, rng)), w("w", random_matrix(4, 2 * 5, rng)),
        bias("b", random_matrix(4, 1, rng));
    CHECK(gradient_check({&x, &w, &bias}, [&] {
            return readout(conv1d_segments(param(x), param(w), param(bias), 3, 11, 5, 2, 2));
          }) < kTol);
  }
  SECTION("segment mean") {
    Parameter x("x", random_matrix(3, 12, rng));
    CHECK(gradient_check({&x}, [&] { return readout(segment_mean(param(x), 4)); }) < kTol);
  }
  SECTION("grouped multi-head attention") {
    Parameter q("q", random_matrix(6, 4, rng)), k("k", random_matrix(6, 4, rng)), v("v", random_matrix(6, 4, rng));
    CHECK(gradient_check({&q, &k, &v},
                         [&] { return readout(grouped_attention(param(q), param(k), param(v), 2, 3)); }) < kTol);
  }
}

TEST_CASE("convolution matches a direct loop", "[autograd]") {
  Rng rng(6);
  const Index cin = 2, cout = 3, len = 9, kernel = 3, stride = 2, pad = 1, segs = 2;
  const Matrix x = random_matrix(cin, segs * len, rng);
  const Matrix w = random_matrix(cout, cin * kernel, rng);
  const Matrix b = random_matrix(cout, 1, rng);
  const Matrix y = conv1d_segments(constant(x), constant(w), constant(b), segs, len, kernel, stride, pad).value();
  const Index lout = (len + 2 * pad - kernel) / stride + 1;
  REQUIRE(y.cols() == segs * lout);
  for (Index s = 0; s < segs; ++s)
    for (Index o = 0; o < cout; ++o)
      for (Index t = 0; t < lout; ++t) {
        double acc = b(o, 0);
        for (Index ci = 0; ci < cin; ++ci)
          for (Index k = 0; k < kernel; ++k) {
            const Index src = t * stride - pad + k;
            if (src >= 0 && src < len) acc += w(o, ci * kernel + k) * x(ci, s * len + src);
          }
        CHECK_THAT(y(o, s * lout + t), WithinAbs(acc, 1e-12));
      }
}

TEST_CASE("shared subexpressions accumulate gradients", "[autograd]") {
  Parameter x("x", Matrix::Constant(1, 1, 3.0));
  Var v = param(x);
  backward(sum(hadamard(v, v)));
  CHECK_THAT(x.grad(0, 0), WithinAbs(6.0, 1e-12));
}

TEST_CASE("constants never require gradients", "[autograd]") {
  Rng rng(7);
  Var c = constant(random_matrix(2, 2, rng));
  Var y = sum(matmul(c, c));
  CHECK_FALSE(y.requires_grad());
  CHECK_NOTHROW(backward(y));
}

TEST_CASE("Adam minimizes a quadratic and skips zero-rate groups", "[autograd]") {
  Parameter a("a", Matrix::Constant(1, 3, 5.0)), frozen("f", Matrix::Constant(2, 2, 1.5));
  const Matrix frozen_before = frozen.value;
  Adam opt({{{&a}, 0.1}, {{&frozen}, 0.0}});
  for (int i = 0; i < 500; ++i) {
    opt.zero_grad();
    Var loss = add(sum(hadamard(param(a), param(a))), sum(hadamard(param(frozen), param(frozen))));
    backward(loss);
    opt.step();
  }
  CHECK(a.value.cwiseAbs().maxCoeff() < 0.05);
  CHECK(frozen.value == frozen_before);
  CHECK(opt.steps() == 500);
}

TEST_CASE("dropout is identity at p = 0 and rescales kept entries", "[autograd]") {
  Rng rng(8);
  const Matrix x = Matrix::Ones(20, 20);
  CHECK(dropout(constant(x), 0.0, rng).value() == x);
  const Matrix y = dropout(constant(x), 0.25, rng).value();
  for (Index i = 0; i < y.size(); ++i) {
    const double v = y.data()[i];
    CHECK((v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15));
  }
}
