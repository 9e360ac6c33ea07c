#include "qdn/cli.hpp"

#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "qdn/pipeline.hpp"
#include "qdn/tensor_io.hpp"

using namespace qdn;

namespace {

namespace fs = std::filesystem;

int run(std::vector<std::string> args) { return cli_dispatch(args); }

struct TempRun {
  fs::path dir;
  TempRun() : dir(fs::temp_directory_path() / "qdn_cli_run") {
    fs::remove_all(dir);
  }
  ~TempRun() { fs::remove_all(dir); }
  std::string str() const { return dir.string(); }
};

}  // namespace

TEST_CASE("usage errors exit with status 1") {
  CHECK(run({}) == 1);                       // subcommand required
  CHECK(run({"frobnicate"}) == 1);           // unknown subcommand
  CHECK(run({"synth", "--bogus-flag"}) == 1);
  CHECK(run({"--help"}) == 0);
}

TEST_CASE("data and model errors exit with status 2") {
  TempRun tmp;
  // no dataset yet
  CHECK(run({"train", "--out", tmp.str()}) == 2);
  // dataset exists but no quantized model
  CHECK(run({"synth", "--out", tmp.str(), "--images", "3", "--image-size",
             "64", "--eval-images", "1"}) == 0);
  CHECK(run({"infer", "--out", tmp.str(), "--mode", "quant"}) == 2);
  CHECK(run({"infer", "--out", tmp.str(), "--mode", "nonsense"}) == 2);
}

TEST_CASE("full pipeline through the cli at toy scale") {
  TempRun tmp;
  const std::string out = tmp.str();

  CHECK(run({"synth", "--out", out, "--images", "6", "--image-size", "64",
             "--eval-images", "2", "--seed", "99"}) == 0);
  CHECK(fs::exists(tmp.dir / "data" / "noisy_00005.qtns"));
  CHECK(fs::exists(tmp.dir / "config.txt"));

  // later commands pick eval_images/seed up from the pinned run config
  CHECK(run({"train", "--out", out, "--width", "2", "--iterations", "4",
             "--batch-size", "2"}) == 0);
  CHECK(fs::exists(tmp.dir / "generator.manifest.json"));
  CHECK(fs::exists(tmp.dir / "reports" / "train_loss.csv"));

  CHECK(run({"convert", "--out", out, "--representative-images", "2"}) == 0);
  CHECK(fs::exists(tmp.dir / "generator_q.manifest.json"));

  CHECK(run({"train-finetune", "--out", out, "--ft-images", "2",
             "--ft-iterations", "4", "--ft-crops-per-image", "2"}) == 0);
  CHECK(fs::exists(tmp.dir / "finetune.manifest.json"));

  CHECK(run({"infer", "--out", out, "--mode", "quant+ft", "--first", "4"}) == 0);
  CHECK(fs::exists(tmp.dir / "outputs_quant_ft" / "denoised_00004.qtns"));
  const TensorF denoised =
      read_qtns_f32(tmp.dir / "outputs_quant_ft" / "denoised_00004.qtns");
  CHECK(denoised.shape() == Shape{1, 64, 64, 1});

  CHECK(run({"infer", "--out", out, "--mode", "float", "--first", "4"}) == 0);
  CHECK(run({"infer", "--out", out, "--mode", "f16", "--first", "4",
             "--count", "1"}) == 0);

  CHECK(run({"eval", "--out", out}) == 0);
  CHECK(fs::exists(tmp.dir / "reports" / "ssim.json"));
  CHECK(fs::exists(tmp.dir / "reports" / "ssim.csv"));

  CHECK(run({"bench", "--out", out, "--mode", "quant+ft", "--repetitions", "2",
             "--warmup", "1"}) == 0);
  CHECK(fs::exists(tmp.dir / "reports" / "bench.json"));
  CHECK(fs::exists(tmp.dir / "reports" / "bench.txt"));

  CHECK(run({"count-ops", "--out", out}) == 0);
  CHECK(fs::exists(tmp.dir / "reports" / "opcounts.json"));
}

TEST_CASE("config file feeds defaults and flags override it") {
  TempRun tmp;
  const fs::path cfg_path = fs::temp_directory_path() / "qdn_cli_cfg.txt";
  {
    std::ofstream f(cfg_path, std::ios::trunc);
    f << "# toy config\n"
      << "images=3\n"
      << "image_size=48\n"
      << "eval_images=1\n"
      << "seed=5\n";
  }

  CHECK(run({"synth", "--out", tmp.str(), "--config", cfg_path.string()}) == 0);
  CHECK(fs::exists(tmp.dir / "data" / "noisy_00002.qtns"));
  CHECK_FALSE(fs::exists(tmp.dir / "data" / "noisy_00003.qtns"));

  // flag beats config: 4 images this time
  fs::remove_all(tmp.dir);
  CHECK(run({"synth", "--out", tmp.str(), "--config", cfg_path.string(),
             "--images", "4"}) == 0);
  CHECK(fs::exists(tmp.dir / "data" / "noisy_00003.qtns"));

  // broken config is a usage-level problem -> data error path (exit 2)
  {
    std::ofstream f(cfg_path, std::ios::trunc);
    f << "images: 3\n";
  }
  CHECK(run({"synth", "--out", tmp.str(), "--config", cfg_path.string()}) == 2);
  fs::remove(cfg_path);
}
