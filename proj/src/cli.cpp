#include "qdn/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "qdn/bench.hpp"
#include "qdn/config.hpp"
#include "qdn/errors.hpp"
#include "qdn/manifest.hpp"
#include "qdn/pipeline.hpp"
#include "qdn/rng.hpp"
#include "qdn/ssim.hpp"
#include "qdn/tensor_io.hpp"

namespace qdn {

namespace {

namespace fs = std::filesystem;

// Every knob has a built-in default, may be set in the key=value config
// file, and is overridden by its CLI flag.
struct RunParams {
  fs::path out = "run";
  std::uint64_t seed = 1337;

  int images = 144;
  int image_size = 256;
  double noise_level = 1.0;
  int eval_images = 16;

  int width = 8;  // generator width for training (desk scale)
  int iterations = 2500;
  int batch_size = 4;
  double learning_rate = 1e-3;

  int ft_iterations = 1500;
  int ft_batch_size = 4;
  int ft_images = 32;
  int ft_crops_per_image = 16;

  int representative_images = 8;
  int overlap = 0;
  int jobs = 1;

  int ref_width = 32;  // reference-scale generator for op counting

  int bench_repetitions = 10;
  int bench_warmup = 3;
  int bench_images = 1;
};

struct RunPaths {
  fs::path data, reports;
  fs::path generator, generator_q, finetune;
};

RunPaths run_paths(const RunParams& p) {
  RunPaths r;
  r.data = p.out / "data";
  r.reports = p.out / "reports";
  r.generator = manifest_path(p.out, "generator");
  r.generator_q = manifest_path(p.out, "generator_q");
  r.finetune = manifest_path(p.out, "finetune");
  return r;
}

void apply_config(const Config& cfg, RunParams& p) {
  p.seed = cfg.get_u64("seed", p.seed);
  p.images = cfg.get_int("images", p.images);
  p.image_size = cfg.get_int("image_size", p.image_size);
  p.noise_level = cfg.get_double("noise_level", p.noise_level);
  p.eval_images = cfg.get_int("eval_images", p.eval_images);
  p.width = cfg.get_int("width", p.width);
  p.iterations = cfg.get_int("iterations", p.iterations);
  p.batch_size = cfg.get_int("batch_size", p.batch_size);
  p.learning_rate = cfg.get_double("learning_rate", p.learning_rate);
  p.ft_iterations = cfg.get_int("ft_iterations", p.ft_iterations);
  p.ft_batch_size = cfg.get_int("ft_batch_size", p.ft_batch_size);
  p.ft_images = cfg.get_int("ft_images", p.ft_images);
  p.ft_crops_per_image = cfg.get_int("ft_crops_per_image", p.ft_crops_per_image);
  p.representative_images =
      cfg.get_int("representative_images", p.representative_images);
  p.overlap = cfg.get_int("overlap", p.overlap);
  p.jobs = cfg.get_int("jobs", p.jobs);
  p.ref_width = cfg.get_int("ref_width", p.ref_width);
  p.bench_repetitions = cfg.get_int("bench_repetitions", p.bench_repetitions);
  p.bench_warmup = cfg.get_int("bench_warmup", p.bench_warmup);
  p.bench_images = cfg.get_int("bench_images", p.bench_images);
}

ModelGraphF load_model_checked(const fs::path& path, const char* what) {
  if (!fs::exists(path)) {
    throw DataError(std::string(what) + " not found: " + path.string() +
                    " (run the producing step first)");
  }
  return load_model(path);
}

int train_image_count(const RunParams& p, const DatasetPair& ds) {
  const int train = ds.count() - p.eval_images;
  if (train < 1) {
    throw ConfigError("eval_images=" + std::to_string(p.eval_images) +
                      " leaves no training images out of " +
                      std::to_string(ds.count()));
  }
  return train;
}

DatasetPair slice_dataset(const DatasetPair& ds, int first, int count) {
  DatasetPair out;
  out.noisy.assign(ds.noisy.begin() + first, ds.noisy.begin() + first + count);
  out.clean.assign(ds.clean.begin() + first, ds.clean.begin() + first + count);
  return out;
}

TrainConfig train_cfg(const RunParams& p, int iterations, int batch) {
  TrainConfig cfg;
  cfg.learning_rate = p.learning_rate;
  cfg.batch_size = batch;
  cfg.iterations = iterations;
  cfg.seed = p.seed;
  cfg.jobs = p.jobs;
  return cfg;
}

void cmd_synth(const RunParams& p) {
  const RunPaths paths = run_paths(p);
  DatasetPair ds = synth_dataset(p.images, p.image_size, p.image_size,
                                 p.noise_level, p.seed);
  save_dataset(ds, paths.data);

  // Pin the run-defining knobs so later commands in this run directory
  // agree on the dataset identity and the train/eval split.
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "seed=%llu\nimages=%d\nimage_size=%d\nnoise_level=%.17g\n"
                "eval_images=%d\n",
                static_cast<unsigned long long>(p.seed), p.images,
                p.image_size, p.noise_level, p.eval_images);
  std::ofstream cf(p.out / "config.txt", std::ios::trunc);
  if (!cf) throw DataError("cannot write run config in " + p.out.string());
  cf << buf;

  std::printf("wrote %d noisy/clean pairs (%dx%d, noise %.3g) to %s\n",
              ds.count(), p.image_size, p.image_size, p.noise_level,
              paths.data.string().c_str());
}

void cmd_train(const RunParams& p) {
  const RunPaths paths = run_paths(p);
  const DatasetPair ds = load_dataset(paths.data);
  const int train_count = train_image_count(p, ds);

  ModelGraphF g = build_reference_generator<float>(p.width, p.seed);
  const std::vector<SamplePair> tiles =
      make_training_tiles(ds, 0, train_count, g.input_shape.h);
  std::printf("training %s on %zu tiles from %d images...\n", g.name.c_str(),
              tiles.size(), train_count);

  TrainHistory hist;
  g = train_generator(std::move(g), tiles,
                      train_cfg(p, p.iterations, p.batch_size), &hist);

  fs::create_directories(paths.reports);
  hist.write_csv(paths.reports / "train_loss.csv");
  save_model(g, paths.generator);
  std::printf("final training mse %.6g; model saved to %s\n",
              hist.entries.empty() ? 0.0 : hist.entries.back().second,
              paths.generator.string().c_str());
}

void cmd_convert(const RunParams& p) {
  const RunPaths paths = run_paths(p);
  const ModelGraphF g = load_model_checked(paths.generator, "float generator");
  const DatasetPair ds = load_dataset(paths.data);
  const int train_count = train_image_count(p, ds);
  const int rep = std::min(p.representative_images, train_count);

  ModelGraphF q = convert_model(g, slice_dataset(ds, 0, rep));
  save_model(q, paths.generator_q);
  std::printf("calibrated on %d representative images; quantized model saved "
              "to %s\n", rep, paths.generator_q.string().c_str());
}

void cmd_train_finetune(const RunParams& p) {
  const RunPaths paths = run_paths(p);
  const ModelGraphF q = load_model_checked(paths.generator_q, "quantized model");
  const DatasetPair ds = load_dataset(paths.data);
  const int train_count = train_image_count(p, ds);
  const int ft_imgs = std::min(p.ft_images, train_count);

  QuantInferOptions qopts;
  qopts.overlap = p.overlap;
  qopts.jobs = p.jobs;
  const std::vector<TensorF> outputs =
      infer_quantized(q, ds.noisy, 0, ft_imgs, qopts);

  // Train on fixed-size crops of the quantized outputs; the net is fully
  // convolutional, so crops are valid samples and keep iterations cheap.
  const int crop = 64;
  Rng rng(p.seed ^ 0x63726F70ull);
  std::vector<SamplePair> pairs;
  pairs.reserve(static_cast<std::size_t>(ft_imgs) * p.ft_crops_per_image);
  for (int i = 0; i < ft_imgs; ++i) {
    const Shape s = outputs[i].shape();
    for (int k = 0; k < p.ft_crops_per_image; ++k) {
      const int r0 = static_cast<int>(rng.bounded(s.h - crop + 1));
      const int c0 = static_cast<int>(rng.bounded(s.w - crop + 1));
      pairs.emplace_back(crop_spatial(outputs[i], r0, c0, crop, crop),
                         crop_spatial(ds.clean[i], r0, c0, crop, crop));
    }
  }
  std::printf("training fine-tune net on %zu crops from %d quantized "
              "outputs...\n", pairs.size(), ft_imgs);

  ModelGraphF ft = build_finetune_net<float>(p.seed);
  TrainHistory hist;
  ft = train_finetune(std::move(ft), pairs,
                      train_cfg(p, p.ft_iterations, p.ft_batch_size), &hist);

  fs::create_directories(paths.reports);
  hist.write_csv(paths.reports / "finetune_loss.csv");
  save_model(ft, paths.finetune);
  std::printf("final fine-tune mse %.6g; model saved to %s\n",
              hist.entries.empty() ? 0.0 : hist.entries.back().second,
              paths.finetune.string().c_str());
}

void write_output_stack(const fs::path& dir, const std::vector<TensorF>& out,
                        int first) {
  fs::create_directories(dir);
  char name[64];
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::snprintf(name, sizeof(name), "denoised_%05d.qtns",
                  first + static_cast<int>(i));
    write_qtns(dir / name, out[i]);
  }
}

void cmd_infer(const RunParams& p, const std::string& mode, int first,
               int count) {
  const RunPaths paths = run_paths(p);
  const DatasetPair ds = load_dataset(paths.data);

  std::vector<TensorF> out;
  std::string subdir;
  if (mode == "float") {
    const ModelGraphF g = load_model_checked(paths.generator, "float generator");
    out = infer_float(g, ds.noisy, first, count);
    subdir = "outputs_float";
  } else if (mode == "f16") {
    const ModelGraphF g = load_model_checked(paths.generator, "float generator");
    out = infer_f16sim(g, ds.noisy, first, count);
    subdir = "outputs_f16";
  } else if (mode == "quant" || mode == "quant+ft") {
    const ModelGraphF q =
        load_model_checked(paths.generator_q, "quantized model");
    QuantInferOptions qopts;
    qopts.overlap = p.overlap;
    qopts.jobs = p.jobs;
    ModelGraphF ft;
    if (mode == "quant+ft") {
      ft = load_model_checked(paths.finetune, "fine-tune model");
      qopts.with_finetune = true;
      qopts.finetune = &ft;
    }
    out = infer_quantized(q, ds.noisy, first, count, qopts);
    subdir = mode == "quant" ? "outputs_quant" : "outputs_quant_ft";
  } else {
    throw ConfigError("unknown mode: " + mode +
                      " (expected float|f16|quant|quant+ft)");
  }

  write_output_stack(p.out / subdir, out, first);
  std::printf("wrote %zu denoised images to %s\n", out.size(),
              (p.out / subdir).string().c_str());
}

void cmd_eval(const RunParams& p) {
  const RunPaths paths = run_paths(p);
  const DatasetPair ds = load_dataset(paths.data);
  const int train_count = train_image_count(p, ds);
  const int first = train_count;
  const int count = ds.count() - train_count;

  const ModelGraphF g = load_model_checked(paths.generator, "float generator");
  const ModelGraphF q = load_model_checked(paths.generator_q, "quantized model");
  const ModelGraphF ft = load_model_checked(paths.finetune, "fine-tune model");

  QuantInferOptions qopts;
  qopts.overlap = p.overlap;
  qopts.jobs = p.jobs;
  QuantInferOptions fopts = qopts;
  fopts.with_finetune = true;
  fopts.finetune = &ft;

  const std::vector<TensorF> out_float = infer_float(g, ds.noisy, first, count);
  const std::vector<TensorF> out_quant =
      infer_quantized(q, ds.noisy, first, count, qopts);
  const std::vector<TensorF> out_ft =
      infer_quantized(q, ds.noisy, first, count, fopts);

  auto pairs_vs_truth = [&](const std::vector<TensorF>& outs) {
    std::vector<std::pair<TensorF, TensorF>> pairs;
    for (int i = 0; i < count; ++i) {
      pairs.emplace_back(outs[i], ds.clean[first + i]);
    }
    return pairs;
  };
  const SsimParams sp;
  std::vector<SsimReport> reports;
  reports.push_back(ssim_report(pairs_vs_truth(out_float), sp, "float"));
  reports.push_back(ssim_report(pairs_vs_truth(out_quant), sp, "quantized"));
  reports.push_back(
      ssim_report(pairs_vs_truth(out_ft), sp, "quantized+finetune"));

  fs::create_directories(paths.reports);
  write_ssim_json(paths.reports / "ssim.json", reports);
  write_ssim_csv(paths.reports / "ssim.csv", reports);

  for (const auto& r : reports) {
    std::printf("%-20s mean %.5f  p25 %.5f  p50 %.5f  p75 %.5f\n",
                r.label.c_str(), r.mean, r.p25, r.p50, r.p75);
  }
  const double gap = reports[0].mean - reports[1].mean;
  const double recovered = reports[2].mean - reports[1].mean;
  std::printf("quantization gap %.5f, fine-tune recovers %.5f (%.0f%%)\n", gap,
              recovered, gap > 0 ? 100.0 * recovered / gap : 0.0);
}

void cmd_bench(const RunParams& p, const std::string& mode) {
  const RunPaths paths = run_paths(p);
  const DatasetPair ds = load_dataset(paths.data);
  const int n = std::min(p.bench_images, ds.count());
  const std::vector<TensorF> stack(ds.noisy.begin(), ds.noisy.begin() + n);

  BenchMode bmode;
  if (mode == "float") {
    bmode = BenchMode::kFloat;
  } else if (mode == "quant") {
    bmode = BenchMode::kQuantized;
  } else if (mode == "quant+ft") {
    bmode = BenchMode::kQuantizedFinetune;
  } else {
    throw ConfigError("unknown mode: " + mode +
                      " (expected float|quant|quant+ft)");
  }

  ModelGraphF g, q, ft;
  const ModelGraphF *gp = nullptr, *qp = nullptr, *ftp = nullptr;
  if (bmode == BenchMode::kFloat) {
    g = load_model_checked(paths.generator, "float generator");
    gp = &g;
  } else {
    q = load_model_checked(paths.generator_q, "quantized model");
    qp = &q;
    if (bmode == BenchMode::kQuantizedFinetune) {
      ft = load_model_checked(paths.finetune, "fine-tune model");
      ftp = &ft;
    }
  }

  BenchOptions opts;
  opts.repetitions = p.bench_repetitions;
  opts.warmup = p.bench_warmup;
  opts.overlap = p.overlap;
  opts.jobs = p.jobs;
  const BenchReport report =
      run_pipeline_bench(gp, qp, ftp, stack, bmode, opts);

  fs::create_directories(paths.reports);
  write_bench_json(paths.reports / "bench.json", report);
  const std::string table = format_bench_table(report);
  std::ofstream tf(paths.reports / "bench.txt", std::ios::trunc);
  tf << table;
  std::fputs(table.c_str(), stdout);
}

void cmd_count_ops(const RunParams& p) {
  const ModelGraphF gen = build_reference_generator<float>(p.ref_width, p.seed);
  const ModelGraphF ft = build_finetune_net<float>(p.seed);

  const Shape tile_shape{1, 64, 64, 3};
  const Shape image_shape{1, 1024, 1024, 1};
  const OpCountReport gen_tile = count_ops(gen, tile_shape);
  const OpCountReport ft_full = count_ops(ft, image_shape);
  const std::uint64_t tiles = 256;  // 1024x1024 as 64x64 tiles
  const std::uint64_t gen_image = gen_tile.total_ops() * tiles;
  const double ratio =
      static_cast<double>(ft_full.total_ops()) / static_cast<double>(gen_image);

  std::printf("reference generator (width %d):\n", p.ref_width);
  std::printf("  per 64x64 tile:   %llu MACs + %llu elementwise\n",
              static_cast<unsigned long long>(gen_tile.total_macs),
              static_cast<unsigned long long>(gen_tile.total_elementwise));
  std::printf("  per 1024x1024 image (%llu tiles): %llu ops\n",
              static_cast<unsigned long long>(tiles),
              static_cast<unsigned long long>(gen_image));
  std::printf("fine-tune net per 1024x1024 image: %llu ops\n",
              static_cast<unsigned long long>(ft_full.total_ops()));
  std::printf("fine-tune / generator ratio: %.4f%%\n", 100.0 * ratio);

  const RunPaths paths = run_paths(p);
  fs::create_directories(paths.reports);
  nlohmann::json j;
  j["reference_width"] = p.ref_width;
  j["generator_ops_per_tile"] = gen_tile.total_ops();
  j["generator_macs_per_tile"] = gen_tile.total_macs;
  j["tiles_per_image"] = tiles;
  j["generator_ops_per_image"] = gen_image;
  j["finetune_ops_per_image"] = ft_full.total_ops();
  j["finetune_macs_per_image"] = ft_full.total_macs;
  j["finetune_to_generator_ratio"] = ratio;
  j["generator_parameters"] = parameter_count(gen);
  j["finetune_parameters"] = parameter_count(ft);
  std::ofstream f(paths.reports / "opcounts.json", std::ios::trunc);
  f << j.dump(2) << "\n";
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Quantized tile-based CNN denoising pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  RunParams defaults;
  RunParams cli = defaults;
  std::string config_path;

  std::map<std::string, CLI::Option*> opts;
  auto track = [&](CLI::Option* o, const std::string& key) {
    opts[key] = o;
    return o;
  };

  app.add_option("--config", config_path, "key=value config file");
  track(app.add_option("--out", cli.out, "run directory"), "out");
  track(app.add_option("--seed", cli.seed, "master seed"), "seed");
  track(app.add_option("--images", cli.images, "dataset size"), "images");
  track(app.add_option("--image-size", cli.image_size, "image side length"),
        "image_size");
  track(app.add_option("--noise-level", cli.noise_level, "degradation level"),
        "noise_level");
  track(app.add_option("--eval-images", cli.eval_images, "held-out images"),
        "eval_images");
  track(app.add_option("--width", cli.width, "generator base width"), "width");
  track(app.add_option("--iterations", cli.iterations, "training iterations"),
        "iterations");
  track(app.add_option("--batch-size", cli.batch_size, "minibatch size"),
        "batch_size");
  track(app.add_option("--learning-rate", cli.learning_rate, "Adam step size"),
        "learning_rate");
  track(app.add_option("--ft-iterations", cli.ft_iterations,
                       "fine-tune training iterations"),
        "ft_iterations");
  track(app.add_option("--ft-batch-size", cli.ft_batch_size,
                       "fine-tune minibatch size"),
        "ft_batch_size");
  track(app.add_option("--ft-images", cli.ft_images,
                       "training images used for fine-tune data"),
        "ft_images");
  track(app.add_option("--ft-crops-per-image", cli.ft_crops_per_image,
                       "64x64 crops per fine-tune image"),
        "ft_crops_per_image");
  track(app.add_option("--representative-images", cli.representative_images,
                       "calibration subset size"),
        "representative_images");
  track(app.add_option("--overlap", cli.overlap, "tile overlap in pixels"),
        "overlap");
  track(app.add_option("--jobs", cli.jobs, "worker threads"), "jobs");
  track(app.add_option("--ref-width", cli.ref_width,
                       "reference generator width for count-ops"),
        "ref_width");
  track(app.add_option("--repetitions", cli.bench_repetitions,
                       "timed benchmark runs"),
        "bench_repetitions");
  track(app.add_option("--warmup", cli.bench_warmup, "untimed warmup runs"),
        "bench_warmup");
  track(app.add_option("--bench-images", cli.bench_images,
                       "images per benchmark run"),
        "bench_images");

  app.add_subcommand("synth", "generate a synthetic noisy/clean dataset");
  app.add_subcommand("train", "train the denoising generator");
  app.add_subcommand("convert", "calibrate and quantize the generator");
  app.add_subcommand("train-finetune",
                     "train the residual cleanup net on quantized outputs");

  auto* infer = app.add_subcommand("infer", "run a denoising pipeline");
  std::string infer_mode = "float";
  int infer_first = 0;
  int infer_count = -1;
  infer->add_option("--mode", infer_mode, "float|f16|quant|quant+ft");
  infer->add_option("--first", infer_first, "first stack index");
  infer->add_option("--count", infer_count, "image count (-1 = rest)");

  app.add_subcommand("eval",
                     "SSIM reports for float/quantized/quantized+finetune");

  auto* bench = app.add_subcommand("bench", "per-stage latency breakdown");
  std::string bench_mode = "quant+ft";
  bench->add_option("--mode", bench_mode, "float|quant|quant+ft");

  app.add_subcommand("count-ops", "analytic op counts for reference models");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    std::cerr << "run with --help for usage\n";
    return 1;
  }

  try {
    // defaults < run-dir config.txt < --config file < explicit CLI flags.
    RunParams p = defaults;
    Config cfg;
    if (!config_path.empty()) cfg = Config::from_file(config_path);

    fs::path out = p.out;
    if (opts.at("out")->count() > 0) {
      out = cli.out;
    } else if (cfg.has("out")) {
      out = cfg.get_str("out", out.string());
    }
    const fs::path run_config = out / "config.txt";
    if (fs::exists(run_config)) {
      Config base = Config::from_file(run_config);
      // Explicit config keys win over the pinned run config.
      apply_config(base, p);
    }
    apply_config(cfg, p);
    p.out = out;

    auto overlay = [&](const std::string& key, auto member) {
      if (opts.at(key)->count() > 0) p.*member = cli.*member;
    };
    overlay("out", &RunParams::out);
    overlay("seed", &RunParams::seed);
    overlay("images", &RunParams::images);
    overlay("image_size", &RunParams::image_size);
    overlay("noise_level", &RunParams::noise_level);
    overlay("eval_images", &RunParams::eval_images);
    overlay("width", &RunParams::width);
    overlay("iterations", &RunParams::iterations);
    overlay("batch_size", &RunParams::batch_size);
    overlay("learning_rate", &RunParams::learning_rate);
    overlay("ft_iterations", &RunParams::ft_iterations);
    overlay("ft_batch_size", &RunParams::ft_batch_size);
    overlay("ft_images", &RunParams::ft_images);
    overlay("ft_crops_per_image", &RunParams::ft_crops_per_image);
    overlay("representative_images", &RunParams::representative_images);
    overlay("overlap", &RunParams::overlap);
    overlay("jobs", &RunParams::jobs);
    overlay("ref_width", &RunParams::ref_width);
    overlay("bench_repetitions", &RunParams::bench_repetitions);
    overlay("bench_warmup", &RunParams::bench_warmup);
    overlay("bench_images", &RunParams::bench_images);

    if (app.got_subcommand("synth")) {
      cmd_synth(p);
    } else if (app.got_subcommand("train")) {
      cmd_train(p);
    } else if (app.got_subcommand("convert")) {
      cmd_convert(p);
    } else if (app.got_subcommand("train-finetune")) {
      cmd_train_finetune(p);
    } else if (app.got_subcommand("infer")) {
      cmd_infer(p, infer_mode, infer_first, infer_count);
    } else if (app.got_subcommand("eval")) {
      cmd_eval(p);
    } else if (app.got_subcommand("bench")) {
      cmd_bench(p, bench_mode);
    } else if (app.got_subcommand("count-ops")) {
      cmd_count_ops(p);
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

int cli_dispatch(int argc, const char* const* argv) {
  std::vector<std::string> args;
  args.reserve(argc > 0 ? argc - 1 : 0);
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return cli_dispatch(args);
}

}  // namespace qdn
