#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "qdn/tensor.hpp"

namespace qdn {

// Wang et al. defaults: 11x11 Gaussian window, sigma 1.5, K1/K2 constants,
// dynamic range of normalized images.
struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Mean SSIM over all fully valid window positions (no border padding),
// Gaussian-weighted local moments, float64 accumulation. Inputs are
// single-channel tensors of equal shape, spatial dims >= window.
double ssim(const TensorF& a, const TensorF& b, const SsimParams& p = {});

struct SsimReport {
  std::string label;
  std::vector<double> scores;
  double mean = 0.0;
  double p25 = 0.0, p50 = 0.0, p75 = 0.0;
  double min = 0.0, max = 0.0;
};

SsimReport ssim_report(const std::vector<std::pair<TensorF, TensorF>>& pairs,
                       const SsimParams& p, const std::string& label);

void write_ssim_json(const std::filesystem::path& path,
                     const std::vector<SsimReport>& reports);
// Plot-ready rows: label,score per line.
void write_ssim_csv(const std::filesystem::path& path,
                    const std::vector<SsimReport>& reports);

// Linear-interpolation percentile (q in [0,1]) of an unsorted sample.
double percentile(std::vector<double> values, double q);

}  // namespace qdn
