#include "qdn/pipeline.hpp"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "qdn/errors.hpp"
#include "qdn/forward.hpp"
#include "qdn/rng.hpp"
#include "qdn/ssim.hpp"
#include "qdn/tensor_io.hpp"

using namespace qdn;

namespace {

namespace fs = std::filesystem;

double mean_ssim(const std::vector<TensorF>& a, const std::vector<TensorF>& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += ssim(a[i], b[i]);
  return total / a.size();
}

}  // namespace

TEST_CASE("synth_dataset: zero noise copies clean") {
  const DatasetPair ds = synth_dataset(3, 64, 64, 0.0, 42);
  REQUIRE(ds.count() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(ds.noisy[i] == ds.clean[i]);
    for (std::size_t j = 0; j < ds.clean[i].size(); ++j) {
      CHECK(ds.clean[i].data()[j] >= 0.0f);
      CHECK(ds.clean[i].data()[j] <= 1.0f);
    }
  }
}

TEST_CASE("synth_dataset: same seed gives bit-identical data") {
  const DatasetPair a = synth_dataset(4, 48, 48, 1.5, 77);
  const DatasetPair b = synth_dataset(4, 48, 48, 1.5, 77);
  for (int i = 0; i < 4; ++i) {
    CHECK(a.clean[i] == b.clean[i]);
    CHECK(a.noisy[i] == b.noisy[i]);
  }
  const DatasetPair c = synth_dataset(4, 48, 48, 1.5, 78);
  CHECK_FALSE(c.clean[0] == a.clean[0]);
}

TEST_CASE("synth_dataset: higher noise level lowers ssim") {
  const DatasetPair lvl1 = synth_dataset(4, 64, 64, 1.0, 31);
  const DatasetPair lvl2 = synth_dataset(4, 64, 64, 2.0, 31);
  const double s1 = mean_ssim(lvl1.noisy, lvl1.clean);
  const double s2 = mean_ssim(lvl2.noisy, lvl2.clean);
  CHECK(s2 < s1);
  CHECK(s1 < 1.0);
}

TEST_CASE("dataset save/load round trip") {
  const fs::path dir = fs::temp_directory_path() / "qdn_ds_test";
  fs::remove_all(dir);
  const DatasetPair ds = synth_dataset(3, 32, 32, 1.0, 5);
  save_dataset(ds, dir);
  CHECK(fs::exists(dir / "clean_00000.qtns"));
  CHECK(fs::exists(dir / "noisy_00002.qtns"));

  const DatasetPair loaded = load_dataset(dir);
  REQUIRE(loaded.count() == 3);
  for (int i = 0; i < 3; ++i) {
    CHECK(loaded.clean[i] == ds.clean[i]);
    CHECK(loaded.noisy[i] == ds.noisy[i]);
  }
  fs::remove_all(dir);
  CHECK_THROWS_AS(load_dataset(dir), DataError);
}

TEST_CASE("make_training_tiles shapes and counts") {
  const DatasetPair ds = synth_dataset(3, 128, 128, 1.0, 13);
  const std::vector<SamplePair> tiles = make_training_tiles(ds, 0, 2, 64);
  CHECK(tiles.size() == 8);  // 2 images x 4 tiles
  CHECK(tiles[0].first.shape() == Shape{1, 64, 64, 3});
  CHECK(tiles[0].second.shape() == Shape{1, 64, 64, 1});

  // middle channel of the input tile is the noisy image itself
  const TensorF mid = slice_channel(tiles[0].first, 1);
  CHECK(mid == crop_spatial(ds.noisy[0], 0, 0, 64, 64));
}

TEST_CASE("convert_model: degenerate one-image representative set works") {
  const ModelGraphF g = build_reference_generator<float>(2, 3);
  const DatasetPair rep = synth_dataset(1, 64, 64, 1.0, 3);
  const ModelGraphF q = convert_model(g, rep);
  CHECK(q.quantized);
  CHECK_THROWS_AS(convert_model(q, rep), ModelError);  // already quantized
}

TEST_CASE("convert_model: quantized path tracks the float path") {
  const ModelGraphF g = build_reference_generator<float>(2, 3);
  const DatasetPair rep = synth_dataset(4, 64, 64, 1.0, 17);
  const ModelGraphF q = convert_model(g, rep);

  const QuantInferOptions opts;
  const std::vector<TensorF> yq = infer_quantized(q, rep.noisy, 0, 2, opts);
  const std::vector<TensorF> yf = infer_float(g, rep.noisy, 0, 2);
  for (int i = 0; i < 2; ++i) {
    // regression bound for an untrained desk-scale model
    CHECK(max_abs_diff(yq[i], yf[i]) <= 0.08f);
  }
}

TEST_CASE("infer_float: 1024x1024 in, 1024x1024 out") {
  const ModelGraphF g = build_reference_generator<float>(1, 2);
  std::vector<TensorF> stack{TensorF(Shape{1, 1024, 1024, 1}, 0.5f)};
  const std::vector<TensorF> out = infer_float(g, stack);
  REQUIRE(out.size() == 1);
  CHECK(out[0].shape() == Shape{1, 1024, 1024, 1});
  for (std::size_t i = 0; i < out[0].size(); ++i) {
    CHECK(std::isfinite(out[0].data()[i]));
  }
}

TEST_CASE("infer_quantized with an exact identity model passes the middle "
          "channel through") {
  // 1x1 conv selecting channel 1 with weight exactly 1.0 on an exact grid:
  // w_scale 2^-7 and q=128 represent 1.0 with no rounding error, and the
  // requantize multiplier becomes a power of two.
  ModelGraphF q;
  q.name = "identity-q";
  q.input_shape = Shape{1, 64, 64, 3};
  q.quantized = true;
  q.input_params = QuantParams{1.0 / 255.0, 0};

  LayerSpec<float> l;
  l.kind = LayerKind::kConv2d;
  l.inputs = {kGraphInput};
  l.kernel_h = l.kernel_w = 1;
  l.in_channels = 3;
  l.out_channels = 1;
  QuantConvWeights qw;
  qw.weight_params = QuantParams{0.0078125, 0};  // 2^-7
  qw.weights = TensorU8(Shape{1, 1, 3, 1}, 0);
  qw.weights(0, 0, 1, 0) = 128;  // (128 - 0) * 2^-7 == 1.0
  qw.bias = {0};
  l.qweights = std::move(qw);
  l.out_params = q.input_params;
  q.layers.push_back(std::move(l));
  validate(q);

  const DatasetPair ds = synth_dataset(3, 64, 64, 1.0, 23);
  const std::vector<TensorF> out = infer_quantized(q, ds.noisy, 0, 3, {});
  for (int i = 0; i < 3; ++i) {
    CHECK(max_abs_diff(out[i], ds.noisy[i]) <=
          static_cast<float>(q.input_params->scale / 2 + 1e-7));
  }
}

TEST_CASE("infer_quantized: overlap 0 and 8 both cover the image") {
  const ModelGraphF g = build_reference_generator<float>(2, 3);
  const DatasetPair ds = synth_dataset(2, 128, 128, 1.0, 29);
  const ModelGraphF q = convert_model(g, ds);

  QuantInferOptions plain;
  const std::vector<TensorF> o0 = infer_quantized(q, ds.noisy, 0, 1, plain);
  QuantInferOptions blended;
  blended.overlap = 8;
  const std::vector<TensorF> o8 = infer_quantized(q, ds.noisy, 0, 1, blended);
  CHECK(o0[0].shape() == Shape{1, 128, 128, 1});
  CHECK(o8[0].shape() == Shape{1, 128, 128, 1});
}

TEST_CASE("infer_quantized is jobs-invariant") {
  const ModelGraphF g = build_reference_generator<float>(2, 3);
  const DatasetPair ds = synth_dataset(2, 128, 128, 1.0, 41);
  const ModelGraphF q = convert_model(g, ds);

  QuantInferOptions one;
  one.jobs = 1;
  QuantInferOptions four;
  four.jobs = 4;
  const std::vector<TensorF> a = infer_quantized(q, ds.noisy, 0, 2, one);
  const std::vector<TensorF> b = infer_quantized(q, ds.noisy, 0, 2, four);
  for (int i = 0; i < 2; ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("mode separation and missing-model errors") {
  const ModelGraphF g = build_reference_generator<float>(2, 3);
  const DatasetPair ds = synth_dataset(1, 64, 64, 1.0, 51);
  const ModelGraphF q = convert_model(g, ds);

  CHECK_THROWS_AS(infer_float(q, ds.noisy, 0, 1), ModelError);
  CHECK_THROWS_AS(infer_quantized(g, ds.noisy, 0, 1, {}), ModelError);

  QuantInferOptions want_ft;
  want_ft.with_finetune = true;
  CHECK_THROWS_AS(infer_quantized(q, ds.noisy, 0, 1, want_ft), ModelError);

  QuantInferOptions quant_ft;
  quant_ft.with_finetune = true;
  quant_ft.finetune = &q;  // quantized model in the float slot
  CHECK_THROWS_AS(infer_quantized(q, ds.noisy, 0, 1, quant_ft), ModelError);
}

TEST_CASE("f16 inference path stays close to float") {
  const ModelGraphF g = build_reference_generator<float>(2, 3);
  const DatasetPair ds = synth_dataset(1, 64, 64, 1.0, 61);
  const std::vector<TensorF> yf = infer_float(g, ds.noisy);
  const std::vector<TensorF> yh = infer_f16sim(g, ds.noisy);
  CHECK(yh[0].shape() == yf[0].shape());
  CHECK(max_abs_diff(yh[0], yf[0]) <= 0.01f);
}

TEST_CASE("index range validation") {
  const ModelGraphF g = build_reference_generator<float>(2, 3);
  const DatasetPair ds = synth_dataset(2, 64, 64, 1.0, 71);
  CHECK_THROWS_AS(infer_float(g, ds.noisy, 5, 1), IndexError);
  CHECK_THROWS_AS(infer_float(g, ds.noisy, 0, 3), IndexError);
  CHECK(infer_float(g, ds.noisy, 1, -1).size() == 1);
}
