#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "facechannel/layers.hpp"
#include "test_support.hpp"

using namespace facechannel;
using testsupport::contains;
using testsupport::fill_uniform;
using testsupport::naive_conv2d;
using testsupport::thrown_message;

namespace {

// Overwrite a layer parameter by name suffix (e.g. ".weight").
template <typename T>
Tensor<T>& param(Layer<T>& layer, const std::string& suffix) {
  for (auto& p : layer.params())
    if (p.name.size() >= suffix.size() &&
        p.name.compare(p.name.size() - suffix.size(), suffix.size(), suffix) == 0)
      return *p.value;
  throw std::logic_error("no param ending in " + suffix);
}

} // namespace

TEST_CASE("conv2d sums a field of ones to 9") {
  Rng rng(1);
  Conv2d<double> conv(1, 1, 3, 3, 1, 0, rng);
  param(conv, ".weight") = Tensor<double>::ones({1, 1, 3, 3});
  param(conv, ".bias") = Tensor<double>({1});
  auto out = conv.forward(Tensor<double>::ones({1, 1, 3, 3}), Mode::train, rng);
  CHECK(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out[0] == doctest::Approx(9.0));
}

TEST_CASE("conv2d same padding preserves spatial shape") {
  Rng rng(2);
  Conv2d<float> conv(1, 1, 3, 3, 1, 1, rng);
  auto out = conv.forward(Tensor<float>::ones({1, 1, 4, 4}), Mode::train, rng);
  CHECK(out.shape() == Shape{1, 1, 4, 4});
}

TEST_CASE("conv2d forward matches a direct-loop convolution") {
  Rng rng(3);
  for (int round = 0; round < 3; ++round) {
    Conv2d<double> conv(3, 4, 3, 3, 1, 1, rng);
    Tensor<double> x({2, 3, 8, 8});
    fill_uniform(x, rng);
    auto got = conv.forward(x, Mode::train, rng);
    auto want = naive_conv2d(x, param(conv, ".weight"), param(conv, ".bias"), 1, 1);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
  }
}

TEST_CASE("conv2d rejects mismatched input channels") {
  Rng rng(4);
  Conv2d<float> conv(3, 4, 3, 3, 1, 1, rng);
  const std::string msg =
      thrown_message([&] { conv.forward(Tensor<float>({1, 2, 8, 8}), Mode::train, rng); });
  CHECK(contains(msg, "conv2d"));
  CHECK(contains(msg, "channels"));
}

TEST_CASE("maxpool takes the window max and halves the map") {
  Rng rng(5);
  MaxPool2d<float> pool;
  Tensor<float> x({1, 1, 2, 2}, {1, 2, 3, 4});
  auto out = pool.forward(x, Mode::train, rng);
  CHECK(out.shape() == Shape{1, 1, 1, 1});
  CHECK(out[0] == 4);

  auto big = pool.forward(Tensor<float>::ones({2, 3, 8, 6}), Mode::train, rng);
  CHECK(big.shape() == Shape{2, 3, 4, 3});
}

TEST_CASE("maxpool ties route gradient to the first element row-major") {
  Rng rng(6);
  MaxPool2d<double> pool;
  Tensor<double> x = Tensor<double>::full({1, 1, 2, 2}, 7.0);
  auto out = pool.forward(x, Mode::train, rng);
  CHECK(out[0] == 7.0);
  auto din = pool.backward(Tensor<double>::ones({1, 1, 1, 1}));
  CHECK(din[0] == 1.0);
  CHECK(din[1] == 0.0);
  CHECK(din[2] == 0.0);
  CHECK(din[3] == 0.0);
}

TEST_CASE("maxpool rejects odd spatial dims") {
  Rng rng(7);
  MaxPool2d<float> pool;
  const std::string msg =
      thrown_message([&] { pool.forward(Tensor<float>({1, 1, 3, 4}), Mode::train, rng); });
  CHECK(contains(msg, "maxpool"));
  CHECK(contains(msg, "even"));
  CHECK(contains(msg, "3x4"));
}

TEST_CASE("batchnorm normalizes per channel in train mode") {
  Rng rng(8);
  BatchNorm2d<double> bn(3);
  Tensor<double> x({4, 3, 5, 5});
  fill_uniform(x, rng, -3.0, 7.0);
  auto out = bn.forward(x, Mode::train, rng);
  const std::size_t m = 4 * 5 * 5;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double mean = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) mean += out[(n * 3 + ch) * 25 + i];
    mean /= double(m);
    double var = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) {
        const double v = out[(n * 3 + ch) * 25 + i] - mean;
        var += v * v;
      }
    var /= double(m);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(var - 1.0) < 1e-4);
  }
}

TEST_CASE("batchnorm with gamma=0 collapses to beta") {
  Rng rng(9);
  BatchNorm2d<float> bn(2);
  param(bn, ".gamma") = Tensor<float>({2});
  param(bn, ".beta") = Tensor<float>({2}, {1.5f, -2.f});
  Tensor<float> x({2, 2, 3, 3});
  fill_uniform(x, rng);
  auto out = bn.forward(x, Mode::train, rng);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 9; ++i) {
      CHECK(out[(n * 2 + 0) * 9 + i] == 1.5f);
      CHECK(out[(n * 2 + 1) * 9 + i] == -2.f);
    }
}

TEST_CASE("batchnorm eval before any training step is an error") {
  Rng rng(10);
  BatchNorm2d<float> bn(2);
  const std::string msg =
      thrown_message([&] { bn.forward(Tensor<float>({1, 2, 4, 4}), Mode::eval, rng); });
  CHECK(contains(msg, "uninitialized running statistics"));

  // Loading saved running statistics lifts the restriction.
  bn.on_state_loaded();
  CHECK_NOTHROW(bn.forward(Tensor<float>({1, 2, 4, 4}), Mode::eval, rng));
}

TEST_CASE("batchnorm needs at least two values per channel to train") {
  Rng rng(11);
  BatchNorm2d<float> bn(3);
  CHECK_THROWS_AS(bn.forward(Tensor<float>({1, 3, 1, 1}), Mode::train, rng),
                  std::invalid_argument);
}

TEST_CASE("batchnorm running statistics converge on a repeated batch") {
  Rng rng(12);
  BatchNorm2d<float> bn(2);
  Tensor<float> x({4, 2, 4, 4});
  fill_uniform(x, rng, -1.0, 3.0);
  for (int i = 0; i < 250; ++i) bn.forward(x, Mode::train, rng);
  auto train_out = bn.forward(x, Mode::train, rng);
  auto eval_out = bn.forward(x, Mode::eval, rng);
  for (std::size_t i = 0; i < train_out.size(); ++i)
    CHECK(train_out[i] == doctest::Approx(eval_out[i]).epsilon(1e-4));
}

TEST_CASE("dropout eval mode is the identity bit-exactly") {
  Rng rng(13);
  Dropout<float> drop(0.7);
  Tensor<float> x({3, 7});
  fill_uniform(x, rng);
  auto out = drop.forward(x, Mode::eval, rng);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("dropout p=0 in train mode is the identity") {
  Rng rng(14);
  Dropout<float> drop(0.0);
  Tensor<float> x({5, 5});
  fill_uniform(x, rng);
  auto out = drop.forward(x, Mode::train, rng);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("dropout survival rate matches p=0.5 within the binomial bound") {
  Rng rng(15);
  Dropout<double> drop(0.5);
  auto out = drop.forward(Tensor<double>::ones({100, 100}), Mode::train, rng);
  std::size_t survived = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i] != 0.0) {
      ++survived;
      CHECK(out[i] == doctest::Approx(2.0)); // inverted scaling 1/(1-p)
    }
  }
  const double frac = double(survived) / 10000.0;
  CHECK(frac > 0.48);
  CHECK(frac < 0.52);
}

TEST_CASE("dropout rejects rates outside [0,1)") {
  CHECK_THROWS_AS(Dropout<float>(1.0), std::invalid_argument);
  CHECK_THROWS_AS(Dropout<float>(-0.1), std::invalid_argument);
}

TEST_CASE("shunting with zero inhibition divides by softplus(decay)+eps") {
  Rng rng(16);
  ShuntingInhibition<double> sh(2, 3, 3, rng);
  param(sh, ".inhib_weight") = Tensor<double>({2, 2, 3, 3});
  // Default decay init satisfies softplus(a) = 1 already; assert it.
  const double a = param(sh, ".decay")[0];
  CHECK(std::log1p(std::exp(a)) == doctest::Approx(1.0));

  auto out = sh.forward(Tensor<double>::ones({1, 2, 4, 4}), Mode::train, rng);
  for (std::size_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(1.0 / (1.0 + 1e-4)));

  auto zero = sh.forward(Tensor<double>({1, 2, 4, 4}), Mode::train, rng);
  for (std::size_t i = 0; i < zero.size(); ++i) CHECK(zero[i] == 0.0);
}

TEST_CASE("shunting rejects channel mismatch and even kernels") {
  Rng rng(17);
  ShuntingInhibition<float> sh(4, 3, 3, rng);
  const std::string msg =
      thrown_message([&] { sh.forward(Tensor<float>({1, 3, 4, 4}), Mode::train, rng); });
  CHECK(contains(msg, "channels"));
  CHECK_THROWS_AS(ShuntingInhibition<float>(4, 2, 2, rng), std::invalid_argument);
}

TEST_CASE("shunting denominator stays positive for adversarial inputs") {
  Rng rng(18);
  ShuntingInhibition<double> sh(3, 3, 3, rng);
  Tensor<double> x({2, 3, 6, 6});
  fill_uniform(x, rng, -50.0, 50.0);
  auto out = sh.forward(x, Mode::train, rng);
  CHECK(all_finite(out));
}

TEST_CASE("dense identity weights pass input through") {
  Rng rng(19);
  Dense<double> dense(4, 4, rng);
  auto& w = param(dense, ".weight");
  w = Tensor<double>({4, 4});
  for (int i = 0; i < 4; ++i) w[i * 4 + i] = 1.0;
  param(dense, ".bias") = Tensor<double>({4});
  Tensor<double> x({2, 4});
  fill_uniform(x, rng);
  auto out = dense.forward(x, Mode::train, rng);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out[i] == doctest::Approx(x[i]));
}

TEST_CASE("dense zero input yields the bias in every row") {
  Rng rng(20);
  Dense<float> dense(3, 5, rng);
  param(dense, ".bias") = Tensor<float>({5}, {1, 2, 3, 4, 5});
  auto out = dense.forward(Tensor<float>({4, 3}), Mode::train, rng);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t j = 0; j < 5; ++j) CHECK(out[n * 5 + j] == float(j + 1));
}

TEST_CASE("dense rejects wrong input width") {
  Rng rng(21);
  Dense<float> dense(6, 2, rng);
  const std::string msg =
      thrown_message([&] { dense.forward(Tensor<float>({1, 4}), Mode::train, rng); });
  CHECK(contains(msg, "dense"));
  CHECK(contains(msg, "4"));
  CHECK(contains(msg, "6"));
}

TEST_CASE("relu clamps negatives and defines the kink subgradient as 0") {
  Rng rng(22);
  ReLU<double> relu;
  Tensor<double> x({3}, {-1, 0, 2});
  auto out = relu.forward(x, Mode::train, rng);
  CHECK(out[0] == 0);
  CHECK(out[1] == 0);
  CHECK(out[2] == 2);
  auto din = relu.backward(Tensor<double>::ones({3}));
  CHECK(din[0] == 0);
  CHECK(din[1] == 0); // subgradient at exactly 0 is 0
  CHECK(din[2] == 1);
}

TEST_CASE("softmax handles large logits and sums to one") {
  Rng rng(23);
  Softmax<double> sm;
  Tensor<double> x({2, 2}, {0, 0, 1000, 1000});
  auto out = sm.forward(x, Mode::train, rng);
  for (std::size_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(0.5));

  Tensor<double> r({3, 7});
  fill_uniform(r, rng, -30.0, 30.0);
  auto probs = sm.forward(r, Mode::train, rng);
  for (std::size_t n = 0; n < 3; ++n) {
    double s = 0;
    for (std::size_t k = 0; k < 7; ++k) s += probs[n * 7 + k];
    CHECK(std::abs(s - 1.0) < 1e-6);
  }
}

TEST_CASE("softmax is invariant under shifting a row by a constant") {
  Rng rng(24);
  Softmax<double> sm;
  Tensor<double> x({1, 5});
  fill_uniform(x, rng, -2.0, 2.0);
  auto base = sm.forward(x, Mode::train, rng);
  Tensor<double> shifted = x;
  for (std::size_t i = 0; i < 5; ++i) shifted[i] += 123.25;
  auto moved = sm.forward(shifted, Mode::train, rng);
  for (std::size_t i = 0; i < 5; ++i) CHECK(base[i] == doctest::Approx(moved[i]).epsilon(1e-12));
}

TEST_CASE("flatten collapses trailing dims and backward restores them") {
  Rng rng(25);
  Flatten<float> flat;
  Tensor<float> x({2, 3, 4, 4});
  fill_uniform(x, rng);
  auto out = flat.forward(x, Mode::train, rng);
  CHECK(out.shape() == Shape{2, 48});
  auto back = flat.backward(out);
  CHECK(back.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(back[i] == x[i]);
}

TEST_CASE("finite inputs produce finite outputs in every layer") {
  Rng rng(26);
  Tensor<float> img({2, 3, 8, 8});
  fill_uniform(img, rng, -100.0, 100.0);

  Conv2d<float> conv(3, 4, 3, 3, 1, 1, rng);
  CHECK(all_finite(conv.forward(img, Mode::train, rng)));
  MaxPool2d<float> pool;
  CHECK(all_finite(pool.forward(img, Mode::train, rng)));
  BatchNorm2d<float> bn(3);
  CHECK(all_finite(bn.forward(img, Mode::train, rng)));
  Dropout<float> drop(0.5);
  CHECK(all_finite(drop.forward(img, Mode::train, rng)));
  ShuntingInhibition<float> sh(3, 3, 3, rng);
  CHECK(all_finite(sh.forward(img, Mode::train, rng)));
}
