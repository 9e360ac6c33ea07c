#include "qdn/ssim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "qdn/errors.hpp"

namespace qdn {

namespace {

std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> g(size);
  const double center = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - center;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable valid-mode Gaussian filter of a (H x W) double field.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w,
                                 const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int ow = w - k + 1;
  const int oh = h - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[i] * img[y * w + x + i];
      rows[y * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const TensorF& a, const TensorF& b, const SsimParams& p) {
  const Shape s = a.shape();
  if (!(s == b.shape())) {
    throw ShapeError("ssim: shape mismatch " + s.str() + " vs " +
                     b.shape().str());
  }
  if (s.c != 1 || s.n != 1) {
    throw ShapeError("ssim: expected single-channel image, got " + s.str());
  }
  if (s.h < p.window || s.w < p.window) {
    throw ShapeError("ssim: image " + s.str() + " smaller than window " +
                     std::to_string(p.window));
  }

  const int h = s.h, w = s.w;
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<double> xa(n), xb(n), xaa(n), xbb(n), xab(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double va = a.data()[i];
    const double vb = b.data()[i];
    xa[i] = va;
    xb[i] = vb;
    xaa[i] = va * va;
    xbb[i] = vb * vb;
    xab[i] = va * vb;
  }

  const std::vector<double> g = gaussian_window(p.window, p.sigma);
  const std::vector<double> mu_a = filter_valid(xa, h, w, g);
  const std::vector<double> mu_b = filter_valid(xb, h, w, g);
  const std::vector<double> e_aa = filter_valid(xaa, h, w, g);
  const std::vector<double> e_bb = filter_valid(xbb, h, w, g);
  const std::vector<double> e_ab = filter_valid(xab, h, w, g);

  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);

  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma;
    const double vb = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile: empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

SsimReport ssim_report(const std::vector<std::pair<TensorF, TensorF>>& pairs,
                       const SsimParams& p, const std::string& label) {
  if (pairs.empty()) throw DataError("ssim_report: no image pairs");
  SsimReport r;
  r.label = label;
  r.scores.reserve(pairs.size());
  double sum = 0.0;
  for (const auto& [enhanced, truth] : pairs) {
    const double s = ssim(enhanced, truth, p);
    r.scores.push_back(s);
    sum += s;
  }
  r.mean = sum / static_cast<double>(r.scores.size());
  r.p25 = percentile(r.scores, 0.25);
  r.p50 = percentile(r.scores, 0.50);
  r.p75 = percentile(r.scores, 0.75);
  r.min = *std::min_element(r.scores.begin(), r.scores.end());
  r.max = *std::max_element(r.scores.begin(), r.scores.end());
  return r;
}

void write_ssim_json(const std::filesystem::path& path,
                     const std::vector<SsimReport>& reports) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : reports) {
    out.push_back({
        {"label", r.label},
        {"mean", r.mean},
        {"p25", r.p25},
        {"p50", r.p50},
        {"p75", r.p75},
        {"min", r.min},
        {"max", r.max},
        {"scores", r.scores},
    });
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << out.dump(2) << "\n";
}

void write_ssim_csv(const std::filesystem::path& path,
                    const std::vector<SsimReport>& reports) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open for writing: " + path.string());
  f << "label,score\n";
  char buf[80];
  for (const auto& r : reports) {
    for (double s : r.scores) {
      std::snprintf(buf, sizeof(buf), "%s,%.17g\n", r.label.c_str(), s);
      f << buf;
    }
  }
}

}  // namespace qdn
