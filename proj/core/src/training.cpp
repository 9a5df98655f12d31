#include "ocpi/training.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "ocpi/adam.hpp"
#include "ocpi/errors.hpp"
#include "ocpi/metrics.hpp"
#include "ocpi/ops.hpp"
#include "ocpi/parallel.hpp"
#include "ocpi/rng.hpp"

namespace ocpi::train {

using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, std::size_t phase, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(seed, "batch-order", phase, epoch);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  return order;
}

void require_finite(double v, const std::string& what, int epoch) {
  if (!std::isfinite(v))
    throw TrainingError(what + ": non-finite loss at epoch " + std::to_string(epoch) + " (" + std::to_string(v) + ")");
}

void require_samples(const data::RasterDataset& ds) {
  if (ds.train.empty()) throw StateError("dataset has no training samples");
  if (ds.validation.empty()) throw StateError("dataset has no validation samples");
}

Tensor concat_items(const std::vector<const Tensor*>& parts) {
  Shape s = parts.front()->shape();
  s.n = 0;
  for (const auto* p : parts) s.n += p->shape().n;
  Tensor t(s);
  double* dst = t.data().data();
  for (const auto* p : parts) dst = std::copy(p->data().begin(), p->data().end(), dst);
  return t;
}

std::vector<std::uint8_t> stack_cells(const std::vector<data::RasterSample>& samples, std::span<const std::size_t> order,
                                      std::vector<std::uint8_t> data::RasterSample::*field, bool invert) {
  std::vector<std::uint8_t> out;
  for (auto i : order)
    for (auto v : samples[i].*field) out.push_back(invert ? !v : v);
  return out;
}

struct Batches {
  std::vector<std::size_t> order;
  int size;
  std::size_t count() const { return (order.size() + static_cast<std::size_t>(size) - 1) / static_cast<std::size_t>(size); }
  std::span<const std::size_t> at(std::size_t b) const {
    const std::size_t lo = b * static_cast<std::size_t>(size);
    const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(size));
    return std::span<const std::size_t>(order).subspan(lo, hi - lo);
  }
};

}  // namespace

const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::mse: return "mse";
    case LossKind::mae: return "mae";
    case LossKind::psbl: return "psbl";
  }
  return "?";
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "mae") return LossKind::mae;
  if (s == "psbl") return LossKind::psbl;
  throw ConfigError("unknown loss '" + s + "' (mse, mae, psbl)");
}

void TrainPlan::validate() const {
  if (lossnet_epochs < 1 || finetune_epochs < 1 || segment_epochs < 1 || pretrain_epochs < 0)
    throw ConfigError("plan epochs must be >= 1 (pretrain >= 0)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(collapse_threshold >= 0.0) || collapse_window < 0) throw ConfigError("invalid collapse settings");
}

TrainPlan TrainPlan::scaled(double m) const {
  if (!(m > 0.0)) throw ConfigError("plan multiplier must be positive");
  auto f = [m](int e) { return std::max(1, static_cast<int>(std::lround(e * m))); };
  TrainPlan p = *this;
  p.lossnet_epochs = f(lossnet_epochs);
  p.pretrain_epochs = pretrain_epochs == 0 ? 0 : f(pretrain_epochs);
  p.finetune_epochs = f(finetune_epochs);
  p.segment_epochs = f(segment_epochs);
  return p;
}

TrainPlan TrainPlan::paper() { return TrainPlan{}; }
TrainPlan TrainPlan::desk() { return paper().scaled(0.25); }

double mean_abs_on_object(const Tensor& output, const std::vector<data::RasterSample>& samples) {
  const auto plane = output.shape().plane();
  if (static_cast<std::size_t>(output.shape().n) != samples.size()) throw ShapeError("collapse check: batch mismatch");
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double* o = output.item(static_cast<int>(k));
    for (std::size_t c = 0; c < plane; ++c) {
      if (!samples[k].gt_valid[c]) continue;
      s += std::abs(o[c]);
      ++count;
    }
  }
  return count ? s / static_cast<double>(count) : 0.0;
}

CollapseVerdict detect_collapse(const Tensor& output, const std::vector<data::RasterSample>& samples, int epoch,
                                double threshold) {
  CollapseVerdict v;
  v.epoch = epoch;
  v.mean_abs_output = mean_abs_on_object(output, samples);
  v.collapsed = v.mean_abs_output < threshold;
  return v;
}

Tensor predict_batched(const nn::UNet& net, const Tensor& x, int batch_size) {
  const auto& s = x.shape();
  std::vector<Tensor> parts;
  for (int lo = 0; lo < s.n; lo += batch_size) {
    const int n = std::min(batch_size, s.n - lo);
    Tensor chunk(Shape{n, s.c, s.h, s.w});
    std::copy(x.item(lo), x.item(lo + n), chunk.data().data());
    parts.push_back(net.predict(chunk));
  }
  std::vector<const Tensor*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return concat_items(ptrs);
}

namespace {

Evaluation score(const Tensor& pred, const std::vector<data::RasterSample>& samples, int height, int width) {
  const auto target = data::stack(samples, data::Field::target, height, width);
  const auto reports = eval::metrics(pred, target);
  const auto summary = eval::aggregate(reports);
  Evaluation e;
  e.psnr = summary.psnr.mean;
  e.ssim = summary.ssim.mean;
  e.mae = summary.mae.mean;
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double* o = pred.item(static_cast<int>(k));
    const double* g = target.item(static_cast<int>(k));
    for (std::size_t c = 0; c < samples[k].masked.size(); ++c) {
      if (!samples[k].masked[c]) continue;
      s += std::abs(o[c] - g[c]);
      ++count;
    }
  }
  e.masked_mae = count ? s / static_cast<double>(count) : 0.0;
  e.mean_abs_on_object = mean_abs_on_object(pred, samples);
  return e;
}

}  // namespace

Evaluation evaluate_inpainter(const nn::UNet& net, const std::vector<data::RasterSample>& samples, int height, int width,
                              int batch_size) {
  const auto x = data::stack(samples, data::Field::input, height, width);
  return score(predict_batched(net, x, batch_size), samples, height, width);
}

Evaluation evaluate_copy_baseline(const std::vector<data::RasterSample>& samples, int height, int width) {
  return score(data::stack(samples, data::Field::input, height, width), samples, height, width);
}

std::string format_history(const std::vector<HistoryRow>& rows) {
  std::ostringstream ss;
  ss << std::setprecision(10);
  ss << "phase,epoch,train_loss,train_pixel,train_perceptual,train_style,val_psnr,val_ssim,val_metric,best_val\n";
  auto num = [&](double v) -> std::ostream& {
    if (std::isfinite(v)) ss << v;
    return ss;
  };
  for (const auto& r : rows) {
    ss << r.phase << "," << r.epoch << ",";
    num(r.train_loss) << ",";
    num(r.train_pixel) << ",";
    num(r.train_perceptual) << ",";
    num(r.train_style) << ",";
    num(r.val_psnr) << ",";
    num(r.val_ssim) << ",";
    num(r.val_metric) << ",";
    num(r.best_val) << "\n";
  }
  return ss.str();
}

namespace {

double lossnet_mse(const nn::LossNet& net, const Tensor& x, int batch_size) {
  const auto& s = x.shape();
  double total = 0.0;
  for (int lo = 0; lo < s.n; lo += batch_size) {
    const int n = std::min(batch_size, s.n - lo);
    Tensor chunk(Shape{n, s.c, s.h, s.w});
    std::copy(x.item(lo), x.item(lo + n), chunk.data().data());
    Tape t;
    const auto b = nn::bind(t, net.params(), false);
    const auto r = net.reconstruct(t, b, t.constant(chunk));
    total += nn::mse_loss(t.value(r.output), chunk) * n;
  }
  return total / s.n;
}

}  // namespace

LossNetResult train_lossnet(const data::RasterDataset& ds, const nn::LossNetConfig& cfg, const TrainPlan& plan,
                            std::uint64_t seed) {
  plan.validate();
  require_samples(ds);
  if (cfg.height != ds.height || cfg.width != ds.width)
    throw ConfigError("loss network input size does not match the dataset grid");
  nn::LossNet net(cfg, seed);
  nn::Adam opt({plan.lr});
  const auto train_x = data::stack(ds.train, data::Field::target, ds.height, ds.width);
  const auto val_x = data::stack(ds.validation, data::Field::target, ds.height, ds.width);

  LossNetResult res{net, {}};
  HistoryRow r0;
  r0.phase = "lossnet";
  r0.train_loss = lossnet_mse(net, train_x, plan.batch_size);
  r0.val_metric = lossnet_mse(net, val_x, plan.batch_size);
  r0.train_pixel = r0.train_perceptual = r0.train_style = r0.val_psnr = r0.val_ssim = r0.best_val = kNaN;
  res.history.push_back(r0);

  for (int epoch = 1; epoch <= plan.lossnet_epochs; ++epoch) {
    Batches batches{shuffled(ds.train.size(), seed, 0, static_cast<std::size_t>(epoch)), plan.batch_size};
    double sum = 0.0;
    for (std::size_t bi = 0; bi < batches.count(); ++bi) {
      const auto idx = batches.at(bi);
      const auto x = data::stack(ds.train, data::Field::target, idx, ds.height, ds.width);
      Tape t;
      const auto b = nn::bind(t, net.params(), true);
      const auto r = net.reconstruct(t, b, t.constant(x));
      const Var loss = nn::sq_mean(t, r.output, x);
      const double v = t.value(loss)[0];
      require_finite(v, "lossnet", epoch);
      t.backward(loss);
      opt.step(net.params(), nn::gradients(t, b, net.params()));
      sum += v * static_cast<double>(idx.size());
    }
    HistoryRow row = r0;
    row.epoch = epoch;
    row.train_loss = sum / static_cast<double>(ds.train.size());
    row.val_metric = lossnet_mse(net, val_x, plan.batch_size);
    res.history.push_back(row);
  }
  net.freeze();
  res.net = std::move(net);
  return res;
}

namespace {

struct PhaseSpec {
  std::string name;
  int epochs;
  LossKind loss;
};

struct StepReport {
  double total = 0.0, pixel = kNaN, perceptual = kNaN, style = kNaN;
};

}  // namespace

InpaintResult train_inpainter(const data::RasterDataset& ds, const nn::UNetConfig& cfg, const TrainPlan& plan,
                              const nn::LossWeights& w, const nn::LossNet* lossnet, std::uint64_t seed,
                              const nn::UNet* start) {
  plan.validate();
  w.validate();
  require_samples(ds);
  std::vector<PhaseSpec> phases;
  if (plan.pretrain_epochs > 0) phases.push_back({"pretrain", plan.pretrain_epochs, plan.pretrain_loss});
  phases.push_back({"finetune", plan.finetune_epochs, plan.finetune_loss});
  bool needs_lossnet = false;
  for (const auto& p : phases) needs_lossnet = needs_lossnet || p.loss == LossKind::psbl;
  if (needs_lossnet && (!lossnet || !lossnet->frozen())) throw StateError("psbl training needs a frozen loss network");

  nn::UNet net = start ? *start : nn::UNet(cfg, seed);
  if (net.config().describe() != cfg.describe()) throw ConfigError("starting network does not match the configuration");

  std::vector<nn::GtFeatures> gtf;
  if (needs_lossnet) {
    gtf.resize(ds.train.size());
    parallel_for(ds.train.size(), [&](std::size_t i) {
      std::vector<std::size_t> one{i};
      gtf[i] = nn::gt_features(*lossnet, data::stack(ds.train, data::Field::target, one, ds.height, ds.width));
    });
  }

  nn::Adam opt({plan.lr});
  InpaintResult res{net, 0, -std::numeric_limits<double>::infinity(), {}, {}};
  double running_best = -std::numeric_limits<double>::infinity();
  bool have_best = false;

  auto log_eval = [&](const std::string& phase, int epoch, const StepReport& rep, bool last_phase) {
    const auto e = evaluate_inpainter(net, ds.validation, ds.height, ds.width, plan.batch_size);
    running_best = std::max(running_best, e.psnr);
    res.history.push_back(
        {phase, epoch, rep.total, rep.pixel, rep.perceptual, rep.style, e.psnr, e.ssim, e.masked_mae, running_best});
    if (last_phase && (!have_best || e.psnr > res.best_psnr)) {
      res.best = net;
      res.best_epoch = epoch;
      res.best_psnr = e.psnr;
      have_best = true;
    }
    return e;
  };

  for (std::size_t pi = 0; pi < phases.size(); ++pi) {
    const auto& ph = phases[pi];
    const bool last = pi + 1 == phases.size();
    if (pi > 0 && plan.reset_adam_between_phases) opt.reset();
    StepReport none{kNaN, kNaN, kNaN, kNaN};
    log_eval(ph.name, 0, none, last);
    for (int epoch = 1; epoch <= ph.epochs; ++epoch) {
      Batches batches{shuffled(ds.train.size(), seed, pi, static_cast<std::size_t>(epoch)), plan.batch_size};
      StepReport acc{0.0, 0.0, 0.0, 0.0};
      for (std::size_t bi = 0; bi < batches.count(); ++bi) {
        const auto idx = batches.at(bi);
        const auto x = data::stack(ds.train, data::Field::input, idx, ds.height, ds.width);
        const auto gt = data::stack(ds.train, data::Field::target, idx, ds.height, ds.width);
        const auto keep = stack_cells(ds.train, idx, &data::RasterSample::masked, true);
        nn::GtFeatures bf;
        if (ph.loss == LossKind::psbl) {
          for (std::size_t p = 0; p < gtf.front().maps.size(); ++p) {
            std::vector<const Tensor*> maps, grams;
            for (auto i : idx) {
              maps.push_back(&gtf[i].maps[p]);
              grams.push_back(&gtf[i].grams[p]);
            }
            bf.maps.push_back(concat_items(maps));
            bf.grams.push_back(concat_items(grams));
          }
        }
        Tape t;
        const auto b = nn::bind(t, net.params(), true);
        const Var out = net.forward(t, b, t.constant(x));
        Var loss;
        StepReport rep;
        switch (ph.loss) {
          case LossKind::mse:
            loss = nn::sq_mean(t, out, gt);
            break;
          case LossKind::mae:
            loss = w.masked_pixel ? nn::l1_mean_masked(t, out, gt, keep) : nn::l1_mean(t, out, gt);
            rep.pixel = t.value(loss)[0];
            break;
          case LossKind::psbl: {
            const auto r = nn::psbl(t, out, gt, bf, *lossnet, w, keep);
            loss = r.total;
            rep.pixel = r.report.pixel;
            rep.perceptual = r.report.perceptual;
            rep.style = r.report.style;
            break;
          }
        }
        rep.total = t.value(loss)[0];
        require_finite(rep.total, ph.name, epoch);
        t.backward(loss);
        opt.step(net.params(), nn::gradients(t, b, net.params()));
        const double k = static_cast<double>(idx.size());
        acc.total += rep.total * k;
        acc.pixel += rep.pixel * k;
        acc.perceptual += rep.perceptual * k;
        acc.style += rep.style * k;
      }
      const double n = static_cast<double>(ds.train.size());
      const StepReport mean{acc.total / n, acc.pixel / n, acc.perceptual / n, acc.style / n};
      const auto e = log_eval(ph.name, epoch, mean, last);
      if (epoch <= plan.collapse_window && !res.collapse.collapsed) {
        if (res.collapse.epoch == 0 || e.mean_abs_on_object < res.collapse.mean_abs_output)
          res.collapse = CollapseVerdict{false, epoch, e.mean_abs_on_object};
        if (e.mean_abs_on_object < plan.collapse_threshold) {
          res.collapse.collapsed = true;
          if (plan.stop_on_collapse) {
            if (!have_best) res.best = net;
            return res;
          }
        }
      }
    }
  }
  return res;
}

double pixel_accuracy(const nn::UNet& net, const std::vector<data::RasterSample>& samples, int height, int width,
                      int batch_size) {
  const auto x = data::stack(samples, data::Field::seg_input, height, width);
  const auto logits = predict_batched(net, x, batch_size);
  const auto pred = nn::argmax_classes(logits);
  std::size_t hit = 0, k = 0;
  for (const auto& s : samples)
    for (auto c : s.classes) hit += pred[k++] == c;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

SegmentResult train_segmenter(const data::RasterDataset& ds, const nn::UNetConfig& cfg, const TrainPlan& plan,
                              std::uint64_t seed) {
  plan.validate();
  require_samples(ds);
  if (cfg.head != nn::Head::softmax || cfg.out_channels != 3) throw ConfigError("segmenter needs a 3-class softmax head");
  nn::UNet net(cfg, seed);
  nn::Adam opt({plan.lr});
  SegmentResult res{net, 0, -1.0, {}};
  double running_best = -1.0;
  auto log_eval = [&](int epoch, double loss) {
    const double acc = pixel_accuracy(net, ds.validation, ds.height, ds.width, plan.batch_size);
    running_best = std::max(running_best, acc);
    res.history.push_back({"segment", epoch, loss, kNaN, kNaN, kNaN, kNaN, kNaN, acc, running_best});
    if (acc > res.best_accuracy) {
      res.best = net;
      res.best_epoch = epoch;
      res.best_accuracy = acc;
    }
  };
  log_eval(0, kNaN);
  for (int epoch = 1; epoch <= plan.segment_epochs; ++epoch) {
    Batches batches{shuffled(ds.train.size(), seed, 0, static_cast<std::size_t>(epoch)), plan.batch_size};
    double sum = 0.0;
    for (std::size_t bi = 0; bi < batches.count(); ++bi) {
      const auto idx = batches.at(bi);
      const auto x = data::stack(ds.train, data::Field::seg_input, idx, ds.height, ds.width);
      const auto classes = stack_cells(ds.train, idx, &data::RasterSample::classes, false);
      Tape t;
      const auto b = nn::bind(t, net.params(), true);
      const Var loss = nn::softmax_cross_entropy(t, net.forward(t, b, t.constant(x)), classes);
      const double v = t.value(loss)[0];
      require_finite(v, "segment", epoch);
      t.backward(loss);
      opt.step(net.params(), nn::gradients(t, b, net.params()));
      sum += v * static_cast<double>(idx.size());
    }
    log_eval(epoch, sum / static_cast<double>(ds.train.size()));
  }
  return res;
}

nn::LossWeights SearchResult::best_weights() const {
  if (trials.empty()) throw StateError("search has no trials");
  nn::LossWeights w;
  w.alpha = trials[best].alpha;
  w.beta = trials[best].beta;
  return w;
}

SearchResult search_alpha_beta(const data::RasterDataset& ds, const nn::UNetConfig& cfg, const TrainPlan& plan,
                               const nn::LossNet& lossnet, int n_trials, std::uint64_t seed, const nn::UNet* start,
                               double lo, double hi, bool style_normalized) {
  if (n_trials < 1) throw ConfigError("search needs at least one trial");
  if (!(lo > 0.0 && hi >= lo)) throw ConfigError("search range must satisfy 0 < lo <= hi");
  TrainPlan p = plan;
  p.finetune_loss = LossKind::psbl;
  if (start) p.pretrain_epochs = 0;
  SearchResult res;
  for (int k = 0; k < n_trials; ++k) {
    auto rng = make_rng(seed, "search", static_cast<std::uint64_t>(k));
    nn::LossWeights w;
    w.alpha = std::exp(uniform(rng, std::log(lo), std::log(hi)));
    w.beta = std::exp(uniform(rng, std::log(lo), std::log(hi)));
    w.style_normalized = style_normalized;
    const auto r = train_inpainter(ds, cfg, p, w, &lossnet, seed, start);
    res.trials.push_back({w.alpha, w.beta, r.best_psnr, r.collapse.collapsed});
    if (res.trials.back().psnr > res.trials[res.best].psnr) res.best = res.trials.size() - 1;
  }
  return res;
}

std::string format_trials(const SearchResult& r) {
  std::ostringstream ss;
  ss << std::setprecision(10) << "trial,alpha,beta,val_psnr,collapsed\n";
  for (std::size_t k = 0; k < r.trials.size(); ++k) {
    const auto& t = r.trials[k];
    ss << k << "," << t.alpha << "," << t.beta << "," << t.psnr << "," << (t.collapsed ? 1 : 0) << "\n";
  }
  ss << "best," << r.trials[r.best].alpha << "," << r.trials[r.best].beta << "," << r.trials[r.best].psnr << ","
     << (r.trials[r.best].collapsed ? 1 : 0) << "\n";
  return ss.str();
}

}  // namespace ocpi::train
