#include "ocpi/losses.hpp"

#include <cmath>

#include "ocpi/errors.hpp"

namespace ocpi::nn {

namespace {

double sign(double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); }

void same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) throw ShapeError(std::string(what) + ": " + a.shape().str() + " vs " + b.shape().str());
}

double abs_diff_sum(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

void gram_item(const double* f, int c, std::size_t hw, double* g) {
  const double k = static_cast<double>(c) * static_cast<double>(hw);
  for (int i = 0; i < c; ++i) {
    for (int j = i; j < c; ++j) {
      const double* fi = f + static_cast<std::size_t>(i) * hw;
      const double* fj = f + static_cast<std::size_t>(j) * hw;
      double s = 0.0;
      for (std::size_t q = 0; q < hw; ++q) s += fi[q] * fj[q];
      g[i * c + j] = g[j * c + i] = s / k;
    }
  }
}

void check_stacks(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("feature stacks have " + std::to_string(a) + " and " + std::to_string(b) + " layers");
}

double layer_weight(const Tensor& psi, bool normalized) {
  return normalized ? static_cast<double>(psi.shape().c) * psi.shape().c : 1.0;
}

double style_term(const Tensor& g_out, const Tensor& g_gt) {
  return abs_diff_sum(g_out.data(), g_gt.data()) / static_cast<double>(g_out.shape().n);
}

double style_from_grams(const std::vector<Tensor>& maps, const std::vector<Tensor>& g_out,
                        const std::vector<Tensor>& g_gt, bool normalized) {
  double s = 0.0;
  for (std::size_t p = 0; p < maps.size(); ++p) s += style_term(g_out[p], g_gt[p]) / layer_weight(maps[p], normalized);
  return s;
}

double perceptual_value(const std::vector<Tensor>& out, const std::vector<Tensor>& gt) {
  double s = 0.0;
  for (std::size_t p = 0; p < out.size(); ++p) {
    same_shape(out[p], gt[p], "perceptual loss");
    s += abs_diff_sum(out[p].data(), gt[p].data()) / static_cast<double>(out[p].size());
  }
  return s;
}

}  // namespace

void LossWeights::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 0.0 || beta < 0.0)
    throw ConfigError("loss weights must be finite and non-negative");
}

double pixel_loss(const Tensor& out, const Tensor& gt) {
  same_shape(out, gt, "pixel loss");
  return abs_diff_sum(out.data(), gt.data()) / static_cast<double>(out.size());
}

double mse_loss(const Tensor& out, const Tensor& gt) {
  same_shape(out, gt, "mse loss");
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += (out[i] - gt[i]) * (out[i] - gt[i]);
  return s / static_cast<double>(out.size());
}

Tensor gram(const Tensor& psi) {
  const auto& s = psi.shape();
  Tensor g(Shape{s.n, 1, s.c, s.c});
  for (int n = 0; n < s.n; ++n) gram_item(psi.item(n), s.c, s.plane(), g.item(n));
  return g;
}

double perceptual_loss(const std::vector<Tensor>& out, const std::vector<Tensor>& gt) {
  check_stacks(out.size(), gt.size());
  return perceptual_value(out, gt);
}

std::vector<double> style_layer_terms(const std::vector<Tensor>& out, const std::vector<Tensor>& gt) {
  check_stacks(out.size(), gt.size());
  std::vector<double> terms;
  for (std::size_t p = 0; p < out.size(); ++p) {
    same_shape(out[p], gt[p], "style loss");
    terms.push_back(style_term(gram(out[p]), gram(gt[p])));
  }
  return terms;
}

double style_loss(const std::vector<Tensor>& out, const std::vector<Tensor>& gt, bool normalized) {
  check_stacks(out.size(), gt.size());
  std::vector<Tensor> go, gg;
  for (std::size_t p = 0; p < out.size(); ++p) {
    same_shape(out[p], gt[p], "style loss");
    go.push_back(gram(out[p]));
    gg.push_back(gram(gt[p]));
  }
  return style_from_grams(out, go, gg, normalized);
}

Var l1_mean(Tape& t, Var a, const Tensor& target) {
  const auto& av = t.value(a);
  const double v = pixel_loss(av, target);
  return t.record(Tensor(Shape{1, 1, 1, 1}, v), {a}, [a, &target](Tape& tp, const Tensor& g) {
    const auto& x = tp.value(a);
    auto& gx = tp.grad(a);
    const double k = g[0] / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += k * sign(x[i] - target[i]);
  });
}

Var l1_mean_masked(Tape& t, Var a, const Tensor& target, std::span<const std::uint8_t> keep) {
  const auto& av = t.value(a);
  same_shape(av, target, "masked pixel loss");
  if (keep.size() != av.size()) throw ShapeError("masked pixel loss: mask size does not match tensor");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (!keep[i]) continue;
    s += std::abs(av[i] - target[i]);
    ++count;
  }
  const double denom = count ? static_cast<double>(count) : 1.0;
  return t.record(Tensor(Shape{1, 1, 1, 1}, s / denom), {a}, [a, &target, keep, denom](Tape& tp, const Tensor& g) {
    const auto& x = tp.value(a);
    auto& gx = tp.grad(a);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (keep[i]) gx[i] += g[0] / denom * sign(x[i] - target[i]);
  });
}

Var sq_mean(Tape& t, Var a, const Tensor& target) {
  const double v = mse_loss(t.value(a), target);
  return t.record(Tensor(Shape{1, 1, 1, 1}, v), {a}, [a, &target](Tape& tp, const Tensor& g) {
    const auto& x = tp.value(a);
    auto& gx = tp.grad(a);
    const double k = 2.0 * g[0] / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += k * (x[i] - target[i]);
  });
}

namespace {

// d/dF of sum(dG * G(F)) for one item: (dG + dG^T) F / (C * HW).
void gram_backward_item(const double* f, const double* dg, int c, std::size_t hw, double* df) {
  const double k = static_cast<double>(c) * static_cast<double>(hw);
  for (int i = 0; i < c; ++i) {
    double* out = df + static_cast<std::size_t>(i) * hw;
    for (int j = 0; j < c; ++j) {
      const double w = (dg[i * c + j] + dg[j * c + i]) / k;
      if (w == 0.0) continue;
      const double* fj = f + static_cast<std::size_t>(j) * hw;
      for (std::size_t q = 0; q < hw; ++q) out[q] += w * fj[q];
    }
  }
}

}  // namespace

Var gram(Tape& t, Var psi) {
  return t.record(gram(t.value(psi)), {psi}, [psi](Tape& tp, const Tensor& g) {
    const auto& x = tp.value(psi);
    auto& gx = tp.grad(psi);
    const auto& s = x.shape();
    for (int n = 0; n < s.n; ++n) gram_backward_item(x.item(n), g.item(n), s.c, s.plane(), gx.item(n));
  });
}

Var perceptual_loss(Tape& t, const FeatureStack& out, const std::vector<Tensor>& gt) {
  check_stacks(out.maps.size(), gt.size());
  std::vector<Tensor> vals;
  for (auto v : out.maps) vals.push_back(t.value(v));
  const double v = perceptual_value(vals, gt);
  auto maps = out.maps;
  return t.record(Tensor(Shape{1, 1, 1, 1}, v), std::span<const Var>(maps), [maps, &gt](Tape& tp, const Tensor& g) {
    for (std::size_t p = 0; p < maps.size(); ++p) {
      if (!tp.requires_grad(maps[p])) continue;
      const auto& x = tp.value(maps[p]);
      auto& gx = tp.grad(maps[p]);
      const double k = g[0] / static_cast<double>(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) gx[i] += k * sign(x[i] - gt[p][i]);
    }
  });
}

Var style_loss(Tape& t, const FeatureStack& out, const std::vector<Tensor>& gt_grams, bool normalized) {
  check_stacks(out.maps.size(), gt_grams.size());
  std::vector<Tensor> vals, grams;
  for (std::size_t p = 0; p < out.maps.size(); ++p) {
    vals.push_back(t.value(out.maps[p]));
    grams.push_back(gram(vals.back()));
    same_shape(grams.back(), gt_grams[p], "style loss");
  }
  const double v = style_from_grams(vals, grams, gt_grams, normalized);
  auto maps = out.maps;
  return t.record(Tensor(Shape{1, 1, 1, 1}, v), std::span<const Var>(maps),
                  [maps, grams = std::move(grams), &gt_grams, normalized](Tape& tp, const Tensor& g) {
                    for (std::size_t p = 0; p < maps.size(); ++p) {
                      if (!tp.requires_grad(maps[p])) continue;
                      const auto& x = tp.value(maps[p]);
                      auto& gx = tp.grad(maps[p]);
                      const auto& s = x.shape();
                      const double k = g[0] / layer_weight(x, normalized) / static_cast<double>(s.n);
                      Tensor dg(grams[p].shape());
                      for (std::size_t i = 0; i < dg.size(); ++i) dg[i] = k * sign(grams[p][i] - gt_grams[p][i]);
                      for (int n = 0; n < s.n; ++n) gram_backward_item(x.item(n), dg.item(n), s.c, s.plane(), gx.item(n));
                    }
                  });
}

Var pixel_loss(Tape& t, Var out, const Tensor& gt) { return l1_mean(t, out, gt); }
Var mse_loss(Tape& t, Var out, const Tensor& gt) { return sq_mean(t, out, gt); }

GtFeatures gt_features(const LossNet& lossnet, const Tensor& gt) {
  GtFeatures f;
  f.maps = lossnet.feature_values(gt);
  for (const auto& m : f.maps) f.grams.push_back(gram(m));
  return f;
}

PsblResult psbl(Tape& t, Var out, const Tensor& gt, const GtFeatures& gtf, const LossNet& lossnet,
                const LossWeights& w, std::span<const std::uint8_t> keep) {
  w.validate();
  same_shape(t.value(out), gt, "psbl");
  const Var pix = w.masked_pixel ? l1_mean_masked(t, out, gt, keep) : l1_mean(t, out, gt);
  const auto fs = lossnet.features(t, out);
  const Var per = perceptual_loss(t, fs, gtf.maps);
  const Var sty = style_loss(t, fs, gtf.grams, w.style_normalized);
  PsblResult r;
  r.report.pixel = t.value(pix)[0];
  r.report.perceptual = t.value(per)[0];
  r.report.style = t.value(sty)[0];
  r.report.total = r.report.pixel + w.alpha * r.report.perceptual + w.beta * r.report.style;
  const double alpha = w.alpha, beta = w.beta;
  r.total = t.record(Tensor(Shape{1, 1, 1, 1}, r.report.total), {pix, per, sty},
                     [pix, per, sty, alpha, beta](Tape& tp, const Tensor& g) {
                       if (tp.requires_grad(pix)) tp.grad(pix)[0] += g[0];
                       if (tp.requires_grad(per)) tp.grad(per)[0] += alpha * g[0];
                       if (tp.requires_grad(sty)) tp.grad(sty)[0] += beta * g[0];
                     });
  return r;
}

LossReport psbl_value(const Tensor& out, const Tensor& gt, const LossNet& lossnet, const LossWeights& w) {
  w.validate();
  LossReport r;
  r.pixel = pixel_loss(out, gt);
  const auto fo = lossnet.feature_values(out);
  const auto fg = lossnet.feature_values(gt);
  r.perceptual = perceptual_loss(fo, fg);
  r.style = style_loss(fo, fg, w.style_normalized);
  r.total = r.pixel + w.alpha * r.perceptual + w.beta * r.style;
  return r;
}

}  // namespace ocpi::nn
