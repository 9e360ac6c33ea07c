#include "qdn/backward.hpp"

#include <cmath>

#include "doctest.h"
#include "qdn/errors.hpp"
#include "qdn/rng.hpp"
#include "qdn/train.hpp"

using namespace qdn;

namespace {

using TensorD = Tensor<double>;

TensorD random_tensor_d(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

double loss_of(const ModelGraphD& g, const TensorD& x, const TensorD& target) {
  return mse_loss(forward(g, x), target).first;
}

bool grad_close(double analytic, double fd, double rtol, double atol) {
  return std::abs(analytic - fd) <=
         rtol * std::max(std::abs(analytic), std::abs(fd)) + atol;
}

// Central finite differences over every conv weight/bias and every input
// element, against the analytic backward pass. The step is small because
// a bias perturbation shifts a whole channel of pre-activations: with
// h = 1e-3 every unit within h of a leaky_relu kink crosses it during the
// difference, leaving a systematic error above the 1e-6 floor. At 1e-5
// the crossing band is negligible and float64 rounding is still far below
// truncation.
void check_gradients(ModelGraphD g, const TensorD& x, const TensorD& target,
                     double h = 1e-5, double rtol = 1e-4, double atol = 1e-6) {
  const ForwardCache<double> cache = forward_cached(g, x);
  auto [loss, dpred] = mse_loss(cache.outputs.back(), target);
  (void)loss;
  const BackwardResult<double> res = backward(g, cache, dpred);

  for (std::size_t li = 0; li < g.layers.size(); ++li) {
    if (!g.layers[li].is_conv()) continue;
    auto& w = g.layers[li].weights->weights;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double orig = w.data()[j];
      w.data()[j] = orig + h;
      const double lp = loss_of(g, x, target);
      w.data()[j] = orig - h;
      const double lm = loss_of(g, x, target);
      w.data()[j] = orig;
      const double fd = (lp - lm) / (2 * h);
      const double an = res.grads.weight_grads[li].data()[j];
      CAPTURE(li);
      CAPTURE(j);
      CHECK(grad_close(an, fd, rtol, atol));
    }
    auto& b = g.layers[li].weights->bias;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double orig = b[j];
      b[j] = orig + h;
      const double lp = loss_of(g, x, target);
      b[j] = orig - h;
      const double lm = loss_of(g, x, target);
      b[j] = orig;
      const double fd = (lp - lm) / (2 * h);
      CHECK(grad_close(res.grads.bias_grads[li][j], fd, rtol, atol));
    }
  }

  TensorD xp = x;
  for (std::size_t j = 0; j < xp.size(); ++j) {
    const double orig = xp.data()[j];
    xp.data()[j] = orig + h;
    const double lp = loss_of(g, xp, target);
    xp.data()[j] = orig - h;
    const double lm = loss_of(g, xp, target);
    xp.data()[j] = orig;
    const double fd = (lp - lm) / (2 * h);
    CHECK(grad_close(res.input_grad.data()[j], fd, rtol, atol));
  }
}

ModelGraphD one_layer(LayerKind kind, Shape input, float slope = 0.0f,
                      bool two_inputs = false) {
  ModelGraphD g;
  g.name = "one";
  g.input_shape = input;
  LayerSpec<double> l;
  l.kind = kind;
  l.inputs = two_inputs ? std::vector<int>{kGraphInput, kGraphInput}
                        : std::vector<int>{kGraphInput};
  l.slope = slope;
  g.layers.push_back(std::move(l));
  return g;
}

ModelGraphD conv_graph(Shape input, int kh, int kw, int cout, Rng& rng) {
  ModelGraphD g;
  g.name = "conv";
  g.input_shape = input;
  LayerSpec<double> l;
  l.kind = LayerKind::kConv2d;
  l.inputs = {kGraphInput};
  l.kernel_h = kh;
  l.kernel_w = kw;
  l.in_channels = input.c;
  l.out_channels = cout;
  ConvWeights<double> w;
  w.weights = random_tensor_d(Shape{kh, kw, input.c, cout}, rng);
  w.bias.resize(cout);
  for (auto& b : w.bias) b = rng.uniform(-0.5, 0.5);
  l.weights = std::move(w);
  g.layers.push_back(std::move(l));
  return g;
}

// Keeps values away from the relu/leaky kink so finite differences stay
// one-sided.
TensorD away_from_zero(Shape s, Rng& rng, double margin = 0.05) {
  TensorD t(s);
  for (std::size_t i = 0; i < t.size(); ++i) {
    double v = rng.uniform(margin, 1.0);
    if (rng.uniform() < 0.5) v = -v;
    t.data()[i] = v;
  }
  return t;
}

}  // namespace

TEST_CASE("conv gradients match finite differences") {
  Rng rng(101);
  const Shape in{1, 6, 6, 2};
  ModelGraphD g = conv_graph(in, 3, 3, 3, rng);
  check_gradients(std::move(g), random_tensor_d(in, rng),
                  random_tensor_d(Shape{1, 6, 6, 3}, rng));
}

TEST_CASE("conv weight gradient with ones equals overlap counts") {
  ModelGraphD g;
  g.name = "count";
  g.input_shape = Shape{1, 4, 4, 1};
  LayerSpec<double> l;
  l.kind = LayerKind::kConv2d;
  l.inputs = {kGraphInput};
  l.kernel_h = l.kernel_w = 3;
  l.in_channels = l.out_channels = 1;
  ConvWeights<double> w;
  w.weights = TensorD(Shape{3, 3, 1, 1}, 0.25);
  w.bias = {0.0};
  l.weights = std::move(w);
  g.layers.push_back(std::move(l));

  const TensorD x(Shape{1, 4, 4, 1}, 1.0);
  const TensorD upstream(Shape{1, 4, 4, 1}, 1.0);
  const BackwardResult<double> res = backward(g, x, upstream);
  // dW[r][s] = number of output positions whose tap stays in bounds:
  // (4 - |r-1|) * (4 - |s-1|) for a 4x4 image with 3x3 "same" padding.
  for (int r = 0; r < 3; ++r)
    for (int s = 0; s < 3; ++s) {
      const double expected = (4 - std::abs(r - 1)) * (4 - std::abs(s - 1));
      CHECK(res.grads.weight_grads[0](r, s, 0, 0) == doctest::Approx(expected));
    }
  CHECK(res.grads.bias_grads[0][0] == doctest::Approx(16.0));
}

TEST_CASE("relu blocks gradient at negative pre-activations") {
  ModelGraphD g = one_layer(LayerKind::kRelu, Shape{1, 1, 2, 1});
  const TensorD x = TensorD::from_data(Shape{1, 1, 2, 1}, {-0.5, 0.7});
  const TensorD upstream(Shape{1, 1, 2, 1}, 1.0);
  const BackwardResult<double> res = backward(g, x, upstream);
  CHECK(res.input_grad(0, 0, 0, 0) == 0.0);
  CHECK(res.input_grad(0, 0, 1, 0) == 1.0);
}

TEST_CASE("elementwise layers match finite differences") {
  Rng rng(103);
  const Shape in{1, 4, 4, 2};

  check_gradients(one_layer(LayerKind::kRelu, in), away_from_zero(in, rng),
                  random_tensor_d(in, rng));
  check_gradients(one_layer(LayerKind::kLeakyRelu, in, 0.2f),
                  away_from_zero(in, rng), random_tensor_d(in, rng));
  check_gradients(one_layer(LayerKind::kSigmoid, in), random_tensor_d(in, rng),
                  random_tensor_d(in, rng));
}

TEST_CASE("maxpool routes gradient to the argmax") {
  Rng rng(105);
  const Shape in{1, 4, 4, 2};
  // Keep window values well separated so the argmax is FD-stable.
  TensorD x(in);
  std::vector<double> levels(x.size());
  for (std::size_t i = 0; i < levels.size(); ++i) {
    levels[i] = -1.0 + 2.0 * static_cast<double>(i) / (levels.size() - 1);
  }
  rng.shuffle(levels);
  for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = levels[i];

  check_gradients(one_layer(LayerKind::kMaxPool2, in), x,
                  random_tensor_d(Shape{1, 2, 2, 2}, rng));
}

TEST_CASE("upsample sums gradient over each replicated block") {
  Rng rng(107);
  const Shape in{1, 3, 3, 2};
  check_gradients(one_layer(LayerKind::kUpsampleNearest2, in),
                  random_tensor_d(in, rng),
                  random_tensor_d(Shape{1, 6, 6, 2}, rng));
}

TEST_CASE("concat and add match finite differences") {
  Rng rng(109);
  const Shape in{1, 3, 3, 2};
  check_gradients(one_layer(LayerKind::kConcat, in, 0.0f, true),
                  random_tensor_d(in, rng),
                  random_tensor_d(Shape{1, 3, 3, 4}, rng));
  check_gradients(one_layer(LayerKind::kAdd, in, 0.0f, true),
                  random_tensor_d(in, rng), random_tensor_d(in, rng));
}

TEST_CASE("full reference generator passes the finite-difference check") {
  Rng rng(111);
  ModelGraphD g = build_reference_generator<double>(2, 42);
  const Shape in{1, 8, 8, 3};
  const TensorD x = random_tensor_d(in, rng, 0.05, 0.95);
  const TensorD target = random_tensor_d(Shape{1, 8, 8, 1}, rng, 0.05, 0.95);
  check_gradients(std::move(g), x, target);
}

TEST_CASE("finetune net passes the finite-difference check") {
  Rng rng(113);
  ModelGraphD ft = build_finetune_net<double>(42);
  // Give the zero final layer random values so its gradients are exercised.
  auto& final_w = ft.layers[4].weights->weights;
  for (std::size_t i = 0; i < final_w.size(); ++i) {
    final_w.data()[i] = rng.uniform(-0.3, 0.3);
  }
  const Shape in{1, 8, 8, 1};
  check_gradients(std::move(ft), random_tensor_d(in, rng, 0.05, 0.95),
                  random_tensor_d(in, rng, 0.05, 0.95));
}

TEST_CASE("backward validates its cache") {
  Rng rng(115);
  ModelGraphD g = conv_graph(Shape{1, 4, 4, 1}, 3, 3, 1, rng);
  ForwardCache<double> cache =
      forward_cached(g, random_tensor_d(Shape{1, 4, 4, 1}, rng));
  cache.outputs.pop_back();
  CHECK_THROWS_AS(
      backward(g, cache, TensorD(Shape{1, 4, 4, 1}, 1.0)), ModelError);
}
