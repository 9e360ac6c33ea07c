#include "qdn/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "qdn/errors.hpp"
#include "qdn/pipeline.hpp"
#include "qdn/rng.hpp"

using namespace qdn;

namespace {

TensorF random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorF t(s);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t.data()[i] = static_cast<float>(rng.uniform(lo, hi));
  }
  return t;
}

bool graphs_equal(const ModelGraphF& a, const ModelGraphF& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].is_conv()) {
      if (!(a.layers[i].weights->weights == b.layers[i].weights->weights)) {
        return false;
      }
      if (a.layers[i].weights->bias != b.layers[i].weights->bias) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("mse_loss: basics and float64 oracle") {
  const TensorF a = TensorF::from_data(Shape{1, 1, 4, 1}, {1, 2, 3, 4});
  auto [zero_loss, zero_grad] = mse_loss(a, a);
  CHECK(zero_loss == 0.0);
  for (std::size_t i = 0; i < zero_grad.size(); ++i) {
    CHECK(zero_grad.data()[i] == 0.0f);
  }

  TensorF b = a;
  for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] += 1.0f;
  CHECK(mse_loss(b, a).first == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(19);
  const TensorF p = random_tensor(Shape{1, 8, 8, 2}, rng);
  const TensorF t = random_tensor(Shape{1, 8, 8, 2}, rng);
  double oracle = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p.data()[i]) - t.data()[i];
    oracle += d * d;
  }
  oracle /= p.size();
  auto [loss, grad] = mse_loss(p, t);
  CHECK(loss == doctest::Approx(oracle).epsilon(1e-6));
  // gradient = 2 (p - t) / N
  for (std::size_t i = 0; i < 5; ++i) {
    const float expect = 2.0f * (p.data()[i] - t.data()[i]) /
                         static_cast<float>(p.size());
    CHECK(grad.data()[i] == doctest::Approx(expect).epsilon(1e-5));
  }

  CHECK_THROWS_AS(mse_loss(p, TensorF(Shape{1, 8, 8, 1})), ShapeError);
}

TEST_CASE("adam: zero gradient leaves fresh parameters unchanged") {
  ModelGraphF g = build_finetune_net<float>(3);
  const ModelGraphF before = g;
  AdamState state = init_adam(g);
  const GradientSet<float> zeros = zero_gradients(g);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  adam_step(g, zeros, state, cfg);
  adam_step(g, zeros, state, cfg);
  CHECK(graphs_equal(g, before));
  CHECK(state.step == 2);
}

TEST_CASE("adam: first step moves by ~lr in the gradient sign direction") {
  ModelGraphF g = build_finetune_net<float>(3);
  AdamState state = init_adam(g);
  GradientSet<float> grads = zero_gradients(g);
  Rng rng(5);
  for (auto& wg : grads.weight_grads) {
    for (std::size_t i = 0; i < wg.size(); ++i) {
      float v = static_cast<float>(rng.uniform(0.2, 2.0));
      if (rng.uniform() < 0.5) v = -v;
      wg.data()[i] = v;
    }
  }

  const ModelGraphF before = g;
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  adam_step(g, grads, state, cfg);

  // With bias correction, step 1 gives delta = -lr * g / (|g| + eps').
  for (std::size_t li = 0; li < g.layers.size(); ++li) {
    if (!g.layers[li].is_conv()) continue;
    const auto& wa = g.layers[li].weights->weights;
    const auto& wb = before.layers[li].weights->weights;
    for (std::size_t i = 0; i < wa.size(); ++i) {
      const double delta = static_cast<double>(wa.data()[i]) - wb.data()[i];
      const double g0 = grads.weight_grads[li].data()[i];
      CHECK(delta == doctest::Approx(-1e-3 * (g0 < 0 ? -1.0 : 1.0)).epsilon(1e-3));
    }
  }
}

TEST_CASE("adam is deterministic") {
  auto run = []() {
    ModelGraphF g = build_finetune_net<float>(3);
    AdamState state = init_adam(g);
    GradientSet<float> grads = zero_gradients(g);
    Rng rng(7);
    for (auto& wg : grads.weight_grads) {
      for (std::size_t i = 0; i < wg.size(); ++i) {
        wg.data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
      }
    }
    TrainConfig cfg;
    for (int i = 0; i < 5; ++i) adam_step(g, grads, state, cfg);
    return g;
  };
  CHECK(graphs_equal(run(), run()));
}

TEST_CASE("training toward the identity mapping reaches low held-out mse") {
  // Clean phantoms broadcast to all three channels; the generator has to
  // learn to pass the middle channel through its bottleneck.
  const DatasetPair ds = synth_dataset(10, 64, 64, 0.0, 404);
  const std::vector<SamplePair> train_tiles = make_training_tiles(ds, 0, 8, 64);
  const std::vector<SamplePair> held_out = make_training_tiles(ds, 8, 2, 64);

  ModelGraphF g = build_reference_generator<float>(4, 11);
  TrainConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.batch_size = 2;
  cfg.iterations = 1600;
  cfg.seed = 11;
  cfg.jobs = 2;

  // Untrained baseline on the held-out tiles.
  double before = 0.0, after = 0.0;
  for (const auto& [x, t] : held_out) {
    before += mse_loss(forward_f32(g, x), t).first;
  }
  before /= held_out.size();

  TrainHistory hist;
  g = train_generator(std::move(g), train_tiles, cfg, &hist);
  for (const auto& [x, t] : held_out) {
    after += mse_loss(forward_f32(g, x), t).first;
  }
  after /= held_out.size();

  CHECK(hist.entries.size() == 1600);
  CHECK(after < before);
  CHECK(after < 1e-3);
}

TEST_CASE("training is reproducible from the seed") {
  const DatasetPair ds = synth_dataset(4, 64, 64, 1.0, 21);
  const std::vector<SamplePair> tiles = make_training_tiles(ds, 0, 4, 64);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.iterations = 10;
  cfg.seed = 99;

  auto run = [&](int jobs) {
    TrainConfig c = cfg;
    c.jobs = jobs;
    TrainHistory h;
    ModelGraphF g = train_generator(build_reference_generator<float>(2, 1),
                                    tiles, c, &h);
    return std::make_pair(std::move(g), h.entries);
  };
  auto [g1, h1] = run(1);
  auto [g2, h2] = run(2);
  CHECK(graphs_equal(g1, g2));  // worker count cannot change results
  CHECK(h1 == h2);
}

TEST_CASE("zero iterations returns the model unchanged") {
  const DatasetPair ds = synth_dataset(2, 64, 64, 1.0, 31);
  const std::vector<SamplePair> tiles = make_training_tiles(ds, 0, 2, 64);
  const ModelGraphF g = build_reference_generator<float>(2, 9);
  TrainConfig cfg;
  cfg.iterations = 0;
  const ModelGraphF trained = train_generator(g, tiles, cfg);
  CHECK(graphs_equal(g, trained));
}

TEST_CASE("finetune on identity pairs keeps the loss at zero") {
  Rng rng(61);
  std::vector<SamplePair> pairs;
  for (int i = 0; i < 4; ++i) {
    TensorF img = random_tensor(Shape{1, 32, 32, 1}, rng, 0.0, 1.0);
    pairs.emplace_back(img, img);
  }
  ModelGraphF ft = build_finetune_net<float>(17);
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.iterations = 30;
  cfg.seed = 3;
  TrainHistory hist;
  ft = train_finetune(std::move(ft), pairs, cfg, &hist);
  // identity at init, targets equal inputs: nothing to learn
  CHECK(hist.entries.front().second == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(hist.entries.back().second <= 1e-8);
}

TEST_CASE("finetune training does not increase mse") {
  Rng rng(63);
  std::vector<SamplePair> pairs;
  for (int i = 0; i < 6; ++i) {
    TensorF target = random_tensor(Shape{1, 32, 32, 1}, rng, 0.2, 0.8);
    TensorF input = target;
    for (std::size_t j = 0; j < input.size(); ++j) {
      input.data()[j] += static_cast<float>(rng.normal() * 0.05);
    }
    pairs.emplace_back(std::move(input), std::move(target));
  }
  ModelGraphF ft = build_finetune_net<float>(19);
  double initial = 0.0;
  for (const auto& [x, t] : pairs) {
    initial += mse_loss(forward_f32(ft, x), t).first;
  }
  initial /= pairs.size();

  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.iterations = 100;
  cfg.seed = 5;
  ft = train_finetune(std::move(ft), pairs, cfg);

  double final_mse = 0.0;
  for (const auto& [x, t] : pairs) {
    final_mse += mse_loss(forward_f32(ft, x), t).first;
  }
  final_mse /= pairs.size();
  CHECK(final_mse <= initial);
}

TEST_CASE("empty datasets are rejected") {
  TrainConfig cfg;
  cfg.iterations = 1;
  CHECK_THROWS_AS(train_generator(build_reference_generator<float>(2, 0), {}, cfg),
                  DataError);
  CHECK_THROWS_AS(train_finetune(build_finetune_net<float>(0), {}, cfg),
                  DataError);
}

TEST_CASE("loss history lands in a csv") {
  TrainHistory hist;
  hist.entries = {{1, 0.5}, {2, 0.25}};
  const auto path = std::filesystem::temp_directory_path() / "qdn_loss.csv";
  hist.write_csv(path);
  std::ifstream f(path);
  std::string line;
  std::getline(f, line);
  CHECK(line == "iteration,mse");
  std::getline(f, line);
  CHECK(line == "1,0.5");
  std::filesystem::remove(path);
}
