#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "facechannel/tensor.hpp"
#include "test_support.hpp"

using namespace facechannel;
using testsupport::contains;
using testsupport::fill_uniform;
using testsupport::naive_matmul;
using testsupport::thrown_message;

TEST_CASE("tensor construction and views") {
  Tensor<float> t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.f);

  auto ones = Tensor<float>::ones({4});
  CHECK(ones[3] == 1.f);
  auto full = Tensor<double>::full({2, 2}, 2.5);
  CHECK(full[0] == 2.5);

  CHECK_THROWS_AS(Tensor<float>({2, 2}, {1.f, 2.f, 3.f}), std::invalid_argument);

  auto r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  CHECK_THROWS_AS(t.reshaped({5}), std::invalid_argument);

  Tensor<float> f({2}, {1.5f, -2.f});
  auto d = f.cast<double>();
  CHECK(d[0] == doctest::Approx(1.5));
  CHECK(d[1] == doctest::Approx(-2.0));
}

TEST_CASE("shape_to_string formats like an array literal") {
  CHECK(shape_to_string({2, 3}) == "[2,3]");
  CHECK(shape_to_string({}) == "[]");
}

TEST_CASE("matmul matches the worked 2x2 example") {
  Tensor<double> a({2, 2}, {1, 2, 3, 4});
  Tensor<double> b({2, 2}, {5, 6, 7, 8});
  auto c = matmul(a, b);
  CHECK(c[0] == 19);
  CHECK(c[1] == 22);
  CHECK(c[2] == 43);
  CHECK(c[3] == 50);
}

TEST_CASE("matmul agrees with a naive triple-loop reference") {
  Rng rng(101);
  for (auto [n, k, m] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 1, 1},
                         {3, 5, 2},
                         {7, 4, 9},
                         {16, 16, 16}}) {
    Tensor<double> a({n, k}), b({k, m});
    fill_uniform(a, rng);
    fill_uniform(b, rng);
    auto got = matmul(a, b);
    auto want = naive_matmul(a, b);
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("matmul identity and error contract") {
  Rng rng(7);
  Tensor<double> a({3, 3});
  fill_uniform(a, rng);
  Tensor<double> eye({3, 3});
  for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
  auto c = matmul(a, eye);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(c[i] == doctest::Approx(a[i]));

  Tensor<double> bad({4, 2});
  const std::string msg = thrown_message([&] { (void)matmul(a, bad); });
  CHECK(contains(msg, "matmul"));
  CHECK(contains(msg, "[3,3]"));
  CHECK(contains(msg, "[4,2]"));
}

TEST_CASE("elementwise ops and their error contracts") {
  Tensor<double> a({3}, {1, 2, 3});
  Tensor<double> b({3}, {4, 5, 6});
  CHECK(add(a, b)[2] == 9);
  CHECK(sub(b, a)[0] == 3);
  CHECK(mul(a, b)[1] == 10);
  CHECK(div(b, a)[2] == 2);
  CHECK(maximum(a, 2.0)[0] == 2);
  CHECK(exp(Tensor<double>({1}, {0.0}))[0] == 1);
  CHECK(log(Tensor<double>({1}, {1.0}))[0] == 0);

  Tensor<double> z({3}, {1, 0, 2});
  const std::string dmsg = thrown_message([&] { (void)div(a, z); });
  CHECK(contains(dmsg, "div"));
  CHECK(contains(dmsg, "zero divisor"));
  CHECK(contains(dmsg, "1")); // offending index

  const std::string lmsg = thrown_message([&] { (void)log(Tensor<double>({2}, {2.0, -1.0})); });
  CHECK(contains(lmsg, "log"));
  CHECK(contains(lmsg, "non-positive"));

  Tensor<double> other({4});
  CHECK_THROWS_AS((void)add(a, other), std::invalid_argument);
}

TEST_CASE("transpose2d") {
  Tensor<int> a({2, 3}, {1, 2, 3, 4, 5, 6});
  auto t = transpose2d(a);
  CHECK(t.dim(0) == 3);
  CHECK(t[0] == 1);
  CHECK(t[1] == 4);
  CHECK(t[5] == 6);
  CHECK_THROWS_AS((void)transpose2d(Tensor<int>({2})), std::invalid_argument);
}

TEST_CASE("im2col reproduces the hand-built padded column") {
  // 1-channel 2x2 input [[1,2],[3,4]], 2x2 kernel, stride 1, pad 1: the
  // column at output (0,0) covers padded rows/cols -1..0, so it reads
  // [pad,pad,pad,input(0,0)] = [0,0,0,1].
  Tensor<double> x({1, 2, 2}, {1, 2, 3, 4});
  auto cols = im2col(x, 2, 2, 1, 1);
  CHECK(cols.dim(0) == 4);  // C*kh*kw
  CHECK(cols.dim(1) == 9);  // 3x3 output positions
  const std::size_t w = cols.dim(1);
  CHECK(cols[0 * w + 0] == 0);
  CHECK(cols[1 * w + 0] == 0);
  CHECK(cols[2 * w + 0] == 0);
  CHECK(cols[3 * w + 0] == 1);
  // Center output (1,1) sees the whole input.
  const std::size_t center = 4;
  CHECK(cols[0 * w + center] == 1);
  CHECK(cols[1 * w + center] == 2);
  CHECK(cols[2 * w + center] == 3);
  CHECK(cols[3 * w + center] == 4);
}

TEST_CASE("im2col/col2im adjointness") {
  // <im2col(x), w> == <x, col2im(w)> for random x, w: the pair is a linear
  // map and its transpose, so the inner products must agree.
  Rng rng(42);
  for (int round = 0; round < 5; ++round) {
    const std::size_t c = 2, h = 6, w = 5;
    const int kh = 3, kw = 3, stride = 1, pad = 1;
    Tensor<float> x({c, h, w});
    fill_uniform(x, rng);
    auto cols = im2col(x, kh, kw, stride, pad);
    Tensor<float> wmat(cols.shape());
    fill_uniform(wmat, rng);
    auto back = col2im(wmat, c, h, w, kh, kw, stride, pad);

    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < cols.size(); ++i) lhs += double(cols[i]) * double(wmat[i]);
    for (std::size_t i = 0; i < x.size(); ++i) rhs += double(x[i]) * double(back[i]);
    CHECK(std::abs(lhs - rhs) <= 1e-6 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("conv geometry guards degenerate setups") {
  CHECK_THROWS_AS(conv_output_geometry("conv", 2, 2, 5, 5, 1, 0), std::invalid_argument);
  const auto g = conv_output_geometry("conv", 128, 128, 3, 3, 1, 1);
  CHECK(g.out_h == 128);
  CHECK(g.out_w == 128);
}

TEST_CASE("sum and all_finite") {
  Tensor<double> a({3}, {1.0, 2.5, -0.5});
  CHECK(sum(a) == doctest::Approx(3.0));
  CHECK(all_finite(a));
  Tensor<double> b({2}, {1.0, std::numeric_limits<double>::infinity()});
  CHECK(!all_finite(b));
}
