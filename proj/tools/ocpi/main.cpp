// ocpi: command-line entry point for dataset generation, training, inference
// and evaluation.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ocpi/checkpoint.hpp"
#include "ocpi/config.hpp"
#include "ocpi/errors.hpp"
#include "ocpi/io.hpp"
#include "ocpi/metrics.hpp"
#include "ocpi/parallel.hpp"
#include "ocpi/pipeline.hpp"
#include "ocpi/training.hpp"

namespace fs = std::filesystem;
using namespace ocpi;

namespace {

enum Exit { ok = 0, failure = 1, invalid = 2, io_failure = 3, scan_rejected = 4, training_aborted = 5 };

struct Global {
  std::string config;
  std::uint64_t seed = 0;
  std::string out = ".";
  int threads = 1;
};

/// Key=value record of one invocation, written atomically when the command
/// finishes.
class RunManifest {
 public:
  RunManifest(std::string command, const Config& cfg, std::uint64_t seed)
      : command_(std::move(command)), hash_(cfg.hash()), seed_(seed), start_(std::chrono::steady_clock::now()) {}

  void input(const std::string& key, const fs::path& p) { inputs_.emplace_back(key, p.string()); }
  void output(const std::string& key, const fs::path& p) { outputs_.emplace_back(key, p.string()); }

  void write(const fs::path& out_dir) const {
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    std::ostringstream ss;
    ss << "command=" << command_ << "\n"
       << "config_hash=" << hash_ << "\n"
       << "seed=" << seed_ << "\n";
    for (const auto& [k, v] : inputs_) ss << "input." << k << "=" << v << "\n";
    for (const auto& [k, v] : outputs_) ss << "output." << k << "=" << v << "\n";
    ss << "version=" << OCPI_VERSION << "\n"
       << "wall_time_s=" << std::fixed << std::setprecision(3) << wall << "\n";
    io::write_text_atomic(out_dir / "run.txt", ss.str());
  }

 private:
  std::string command_, hash_;
  std::uint64_t seed_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::pair<std::string, std::string>> inputs_, outputs_;
};

Config load_config(const Global& g) {
  Config cfg = g.config.empty() ? Config{} : Config::load(g.config);
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const Global& g) {
  const fs::path out(g.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

fs::path existing(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("missing ") + what);
  if (!fs::exists(path)) throw ConfigError(std::string(what) + " not found: " + path);
  return path;
}

void apply_plan(Config& cfg, const std::string& plan) {
  if (plan == "desk") cfg.plan = train::TrainPlan::desk();
  else if (plan == "paper") cfg.plan = train::TrainPlan::paper();
  else if (plan != "config") throw ConfigError("unknown plan '" + plan + "' (desk, paper, config)");
}

void save_common(const fs::path& out, const Config& cfg, RunManifest& m) {
  io::write_text_atomic(out / "config.ini", cfg.text());
  m.output("config", out / "config.ini");
}

void save_history(const fs::path& out, const std::vector<train::HistoryRow>& rows, RunManifest& m) {
  io::write_text_atomic(out / "history.csv", train::format_history(rows));
  m.output("history", out / "history.csv");
}

data::RasterDataset load_data(const std::string& dir, const Config& cfg, RunManifest& m) {
  const auto path = existing(dir, "dataset directory");
  m.input("data", path);
  auto ds = data::load_dataset(path, cfg.raster);
  std::cerr << "dataset: train " << ds.train.size() << ", validation " << ds.validation.size() << ", test "
            << ds.test.size() << ", dropped " << ds.dropped << "\n";
  return ds;
}

// --- generate ---------------------------------------------------------------

struct GenerateArgs {
  std::size_t n = 0;
  bool dry_run = false;
};

void cmd_generate(const Global& g, const GenerateArgs& a) {
  const auto cfg = load_config(g);
  auto opts = cfg.scene;
  if (a.n > 0) opts.n = a.n;
  opts.seed = g.seed;
  opts.dry_run = a.dry_run;
  opts.scanner.validate();
  opts.space.validate();
  const auto out = prepare_out(g);
  RunManifest m("generate", cfg, g.seed);
  const auto split = scene::generate_dataset(opts, out);
  m.output("manifest", out / "manifest.txt");
  m.write(out);
  std::cout << "n=" << split.n << " train=" << split.train << " test=" << split.test
            << " validation=" << split.validation << "\n";
}

// --- preprocess -------------------------------------------------------------

void cmd_preprocess(const Global& g, const std::string& input) {
  const auto cfg = load_config(g);
  const auto in = existing(input, "input cloud");
  RunManifest m("preprocess", cfg, g.seed);
  m.input("cloud", in);
  const auto f = preprocess::filter_scan(io::read_cloud(in), cfg.raster.pre);
  const auto grid = preprocess::interpolate_to_grid(f.cloud, f.grid, cfg.raster.pre.match_distance());
  const auto out = prepare_out(g);
  io::write_cloud(out / "object.ocpc", f.cloud);
  io::write_depth(out / "depth.ocdr", grid.image);
  io::write_pgm(out / "depth.pgm", grid.image.z(), f.grid.nx, f.grid.ny, 0.0, cfg.raster.z_max);
  m.output("object", out / "object.ocpc");
  m.output("depth", out / "depth.ocdr");
  m.write(out);
  std::cout << "object points " << f.cloud.size() << ", valid cells " << grid.image.valid_count() << "\n";
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data, lossnet, start, plan = "config";
};

void cmd_train_lossnet(const Global& g, const TrainArgs& a) {
  auto cfg = load_config(g);
  apply_plan(cfg, a.plan);
  RunManifest m("train lossnet", cfg, g.seed);
  const auto ds = load_data(a.data, cfg, m);
  const auto r = train::train_lossnet(ds, cfg.lossnet(), cfg.plan, g.seed);
  const auto out = prepare_out(g);
  save_common(out, cfg, m);
  save_history(out, r.history, m);
  save_lossnet(out / "lossnet.ocwt", r.net);
  m.output("checkpoint", out / "lossnet.ocwt");
  m.write(out);
  std::cout << "lossnet reconstruction loss " << r.history.back().train_loss << "\n";
}

std::optional<nn::LossNet> maybe_lossnet(const Config& cfg, const std::string& path, RunManifest& m) {
  const bool needed = cfg.plan.finetune_loss == train::LossKind::psbl ||
                      (cfg.plan.pretrain_epochs > 0 && cfg.plan.pretrain_loss == train::LossKind::psbl);
  if (!needed && path.empty()) return std::nullopt;
  const auto p = existing(path, "loss network checkpoint (--lossnet)");
  m.input("lossnet", p);
  return nn::load_lossnet(p);
}

std::optional<nn::UNet> maybe_start(const std::string& path, RunManifest& m) {
  if (path.empty()) return std::nullopt;
  const auto p = existing(path, "start checkpoint");
  m.input("start", p);
  return nn::load_unet(p);
}

void cmd_train_inpaint(const Global& g, const TrainArgs& a) {
  auto cfg = load_config(g);
  apply_plan(cfg, a.plan);
  RunManifest m("train inpaint", cfg, g.seed);
  const auto ln = maybe_lossnet(cfg, a.lossnet, m);
  const auto start = maybe_start(a.start, m);
  const auto ds = load_data(a.data, cfg, m);
  const auto r = train::train_inpainter(ds, cfg.inpaint_net(), cfg.plan, cfg.loss, ln ? &*ln : nullptr, g.seed,
                                        start ? &*start : nullptr);
  const auto out = prepare_out(g);
  save_common(out, cfg, m);
  save_history(out, r.history, m);
  std::ostringstream report;
  report << std::setprecision(10) << "collapsed=" << r.collapse.collapsed << "\nepoch=" << r.collapse.epoch
         << "\nmean_abs_output=" << r.collapse.mean_abs_output << "\nthreshold=" << cfg.plan.collapse_threshold
         << "\n";
  io::write_text_atomic(out / "collapse.txt", report.str());
  m.output("collapse", out / "collapse.txt");
  const bool aborted = r.collapse.collapsed && cfg.plan.stop_on_collapse;
  if (!aborted) {
    save_unet(out / "inpaint.ocwt", r.best, "best_epoch=" + std::to_string(r.best_epoch));
    m.output("checkpoint", out / "inpaint.ocwt");
  }
  m.write(out);
  if (aborted)
    throw TrainingError("training collapsed at epoch " + std::to_string(r.collapse.epoch) +
                        " (mean |output| on the object " + std::to_string(r.collapse.mean_abs_output) + ")");
  std::cout << "best epoch " << r.best_epoch << ", validation psnr " << r.best_psnr << " dB\n";
}

void cmd_train_segment(const Global& g, const TrainArgs& a) {
  auto cfg = load_config(g);
  apply_plan(cfg, a.plan);
  RunManifest m("train segment", cfg, g.seed);
  const auto ds = load_data(a.data, cfg, m);
  const auto r = train::train_segmenter(ds, cfg.segment_net(), cfg.plan, g.seed);
  const auto out = prepare_out(g);
  save_common(out, cfg, m);
  save_history(out, r.history, m);
  save_unet(out / "segment.ocwt", r.best, "best_epoch=" + std::to_string(r.best_epoch));
  m.output("checkpoint", out / "segment.ocwt");
  m.write(out);
  std::cout << "best epoch " << r.best_epoch << ", validation pixel accuracy " << r.best_accuracy << "\n";
}

// --- search -----------------------------------------------------------------

struct SearchArgs {
  TrainArgs train;
  int trials = 8;
  double lo = 0.1, hi = 1000.0;
};

void cmd_search(const Global& g, const SearchArgs& a) {
  auto cfg = load_config(g);
  apply_plan(cfg, a.train.plan);
  if (a.trials < 1) throw ConfigError("--trials must be at least 1");
  if (!(a.lo > 0.0 && a.hi >= a.lo)) throw ConfigError("search range must satisfy 0 < lo <= hi");
  RunManifest m("search", cfg, g.seed);
  const auto p = existing(a.train.lossnet, "loss network checkpoint (--lossnet)");
  m.input("lossnet", p);
  const auto ln = nn::load_lossnet(p);
  const auto start = maybe_start(a.train.start, m);
  const auto ds = load_data(a.train.data, cfg, m);
  const auto r = train::search_alpha_beta(ds, cfg.inpaint_net(), cfg.plan, ln, a.trials, g.seed,
                                          start ? &*start : nullptr, a.lo, a.hi, cfg.loss.style_normalized);
  const auto out = prepare_out(g);
  save_common(out, cfg, m);
  io::write_text_atomic(out / "trials.csv", train::format_trials(r));
  m.output("trials", out / "trials.csv");
  m.write(out);
  const auto& best = r.trials[r.best];
  std::cout << "best alpha=" << best.alpha << " beta=" << best.beta << " psnr=" << best.psnr << " dB\n";
}

// --- infer ------------------------------------------------------------------

struct InferArgs {
  std::string input, segment, inpaint;
  bool rasters = false;
};

void cmd_infer(const Global& g, const InferArgs& a) {
  const auto cfg = load_config(g);
  RunManifest m("infer", cfg, g.seed);
  const auto seg_path = existing(a.segment, "segmentation checkpoint (--segment)");
  const auto inp_path = existing(a.inpaint, "inpainting checkpoint (--inpaint)");
  const auto in = existing(a.input, "input cloud");
  m.input("segment", seg_path);
  m.input("inpaint", inp_path);
  m.input("cloud", in);
  const pipeline::NetSegmenter seg(nn::load_unet(seg_path), cfg.raster.z_max);
  const pipeline::NetInpainter inp(nn::load_unet(inp_path), cfg.raster.z_max);
  const auto r = pipeline::infer(io::read_cloud(in), cfg.raster.pre, cfg.raster.z_max, seg, inp);
  const auto out = prepare_out(g);
  io::write_cloud(out / "recombined.ocpc", r.recombined);
  m.output("cloud", out / "recombined.ocpc");
  if (a.rasters || cfg.eval.previews) {
    io::write_depth(out / "masked.ocdr", r.masked);
    io::write_depth(out / "inpainted.ocdr", r.inpainted);
    const auto& s = r.masked.spec();
    io::write_pgm(out / "masked.pgm", r.masked.z(), s.nx, s.ny, 0.0, cfg.raster.z_max);
    io::write_pgm(out / "inpainted.pgm", r.inpainted.z(), s.nx, s.ny, 0.0, cfg.raster.z_max);
    m.output("masked", out / "masked.ocdr");
    m.output("inpainted", out / "inpainted.ocdr");
  }
  m.write(out);
  std::cout << "top " << r.top.size() << ", lower " << r.lower.size() << ", otsu bin " << r.otsu.bin << "\n";
}

// --- evaluate ---------------------------------------------------------------

struct EvaluateArgs {
  std::string data, split = "test";
  std::vector<std::string> models;
  bool previews = false;
};

std::string cell(const eval::Stat& s) {
  std::ostringstream ss;
  ss << std::setprecision(6) << s.mean << " (" << s.variance << ")";
  return ss.str();
}

void cmd_evaluate(const Global& g, const EvaluateArgs& a) {
  const auto cfg = load_config(g);
  if (a.models.empty()) throw ConfigError("evaluate needs at least one --model");
  RunManifest m("evaluate", cfg, g.seed);

  // label -> one report list per checkpoint
  std::vector<std::string> labels;
  std::map<std::string, std::vector<std::pair<std::string, std::optional<nn::UNet>>>> runs;
  for (const auto& spec : a.models) {
    const auto eq = spec.find('=');
    const std::string label = eq == std::string::npos ? spec : spec.substr(0, eq);
    const std::string path = eq == std::string::npos ? std::string() : spec.substr(eq + 1);
    if (label.empty()) throw ConfigError("empty model label in '" + spec + "'");
    if (!runs.count(label)) labels.push_back(label);
    if (path.empty()) {
      if (label != "copy" && label != "oracle")
        throw ConfigError("model '" + label + "' needs =<checkpoint> (builtins: copy, oracle)");
      runs[label].emplace_back("", std::nullopt);
    } else {
      const auto p = existing(path, "model checkpoint");
      m.input(label, p);
      runs[label].emplace_back(path, nn::load_unet(p));
    }
  }

  const auto ds = load_data(a.data, cfg, m);
  const std::vector<data::RasterSample>* samples = nullptr;
  if (a.split == "test") samples = &ds.test;
  else if (a.split == "validation") samples = &ds.validation;
  else if (a.split == "train") samples = &ds.train;
  else throw ConfigError("unknown split '" + a.split + "' (train, validation, test)");
  if (samples->empty()) throw ConfigError("split '" + a.split + "' is empty");

  const int h = ds.height, w = ds.width;
  const auto input = data::stack(*samples, data::Field::input, h, w);
  const auto target = data::stack(*samples, data::Field::target, h, w);
  const auto out = prepare_out(g);
  const bool previews = a.previews || cfg.eval.previews;
  const int n_previews = std::min<int>(4, static_cast<int>(samples->size()));
  if (previews) {
    fs::create_directories(out / "previews");
    for (int k = 0; k < n_previews; ++k) {
      const auto idx = std::to_string((*samples)[static_cast<std::size_t>(k)].index);
      const auto plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
      io::write_pgm(out / "previews" / ("input_" + idx + ".pgm"), {input.item(k), plane}, h, w, 0.0, 1.0);
      io::write_pgm(out / "previews" / ("target_" + idx + ".pgm"), {target.item(k), plane}, h, w, 0.0, 1.0);
    }
  }

  std::ostringstream per_image;
  per_image << std::setprecision(10) << "model,run,index,mse,mae,psnr,ssim\n";
  std::map<std::string, eval::Summary> table;
  for (const auto& label : labels) {
    const auto& list = runs[label];
    std::vector<eval::MetricReport> run_means, all;
    for (std::size_t r = 0; r < list.size(); ++r) {
      const auto& [path, net] = list[r];
      nn::Tensor pred = net ? train::predict_batched(*net, input, cfg.eval.batch_size)
                            : (label == "oracle" ? target : input);
      const auto reports = eval::metrics(pred, target);
      for (std::size_t k = 0; k < reports.size(); ++k) {
        const auto& rep = reports[k];
        per_image << label << "," << r << "," << (*samples)[k].index << "," << rep.mse << "," << rep.mae << ","
                  << rep.psnr << "," << rep.ssim << "\n";
      }
      const auto s = eval::aggregate(reports);
      run_means.push_back({s.mse.mean, s.mae.mean, s.psnr.mean, s.ssim.mean});
      all.insert(all.end(), reports.begin(), reports.end());
      if (previews && r == 0)
        for (int k = 0; k < n_previews; ++k) {
          const auto idx = std::to_string((*samples)[static_cast<std::size_t>(k)].index);
          const auto plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
          io::write_pgm(out / "previews" / (label + "_" + idx + ".pgm"), {pred.item(k), plane}, h, w, 0.0, 1.0);
        }
    }
    // Several checkpoints under one label are seeds: mean and variance
    // across their per-run means. A single run aggregates over images.
    table[label] = list.size() > 1 ? eval::aggregate(run_means) : eval::aggregate(all);
  }

  std::ostringstream csv;
  csv << "metric";
  for (const auto& l : labels) csv << "," << l;
  csv << "\n";
  auto row = [&](const char* name, eval::Stat eval::Summary::*field) {
    csv << name;
    for (const auto& l : labels) csv << "," << cell(table[l].*field);
    csv << "\n";
  };
  row("mse", &eval::Summary::mse);
  row("mae", &eval::Summary::mae);
  row("psnr", &eval::Summary::psnr);
  row("ssim", &eval::Summary::ssim);

  io::write_text_atomic(out / "per_image.csv", per_image.str());
  io::write_text_atomic(out / "table.csv", csv.str());
  m.output("per_image", out / "per_image.csv");
  m.output("table", out / "table.csv");
  m.write(out);
  std::cout << csv.str();
}

int run(int argc, char** argv) {
  CLI::App app{"Occluded point-cloud inpainting"};
  app.require_subcommand(1);
  Global g;
  app.add_option("--config", g.config, "Config file ([section] key = value)");
  app.add_option("--seed", g.seed, "Seed for every random stream");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::Range(1, 256));

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic dataset");
  generate->add_option("--n", gen.n, "Number of scene pairs (default: config scene.n)");
  generate->add_flag("--dry-run", gen.dry_run, "Write the manifest only");

  std::string pre_input;
  auto* pre = app.add_subcommand("preprocess", "Filter a scan and rasterize it");
  pre->add_option("--input", pre_input, "Point cloud (.ocpc)")->required();

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a network");
  trn->require_subcommand(1);
  for (auto* sub : {trn->add_subcommand("lossnet", "Loss network (autoencoder)"),
                    trn->add_subcommand("inpaint", "Inpainting U-Net"),
                    trn->add_subcommand("segment", "Segmentation U-Net")}) {
    sub->add_option("--data", ta.data, "Dataset directory")->required();
    sub->add_option("--plan", ta.plan, "Epoch plan: desk, paper or config");
    if (sub->get_name() == "inpaint") {
      sub->add_option("--lossnet", ta.lossnet, "Frozen loss network checkpoint");
      sub->add_option("--start", ta.start, "Continue from this inpainting checkpoint");
    }
  }

  SearchArgs sa;
  auto* search = app.add_subcommand("search", "Random search over alpha and beta");
  search->add_option("--data", sa.train.data, "Dataset directory")->required();
  search->add_option("--lossnet", sa.train.lossnet, "Frozen loss network checkpoint")->required();
  search->add_option("--start", sa.train.start, "Pretrained inpainting checkpoint");
  search->add_option("--trials", sa.trials, "Number of trials");
  search->add_option("--plan", sa.train.plan, "Epoch plan: desk, paper or config");
  search->add_option("--lo", sa.lo, "Lower end of the search range");
  search->add_option("--hi", sa.hi, "Upper end of the search range");

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Reconstruct the lower object of a scan");
  infer->add_option("--input", ia.input, "Scan (.ocpc)")->required();
  infer->add_option("--segment", ia.segment, "Segmentation checkpoint");
  infer->add_option("--inpaint", ia.inpaint, "Inpainting checkpoint");
  infer->add_flag("--rasters", ia.rasters, "Also write the masked and inpainted rasters");

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "Score inpainting models on a dataset split");
  evaluate->add_option("--data", ea.data, "Dataset directory")->required();
  evaluate->add_option("--split", ea.split, "train, validation or test");
  evaluate->add_option("--model", ea.models, "label=checkpoint, or the builtins copy / oracle");
  evaluate->add_flag("--previews", ea.previews, "Write PGM previews");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : invalid;
  }
  set_thread_count(g.threads);

  if (*generate) cmd_generate(g, gen);
  else if (*pre) cmd_preprocess(g, pre_input);
  else if (*trn) {
    if (*trn->get_subcommand("lossnet")) cmd_train_lossnet(g, ta);
    else if (*trn->get_subcommand("inpaint")) cmd_train_inpaint(g, ta);
    else cmd_train_segment(g, ta);
  } else if (*search) cmd_search(g, sa);
  else if (*infer) cmd_infer(g, ia);
  else if (*evaluate) cmd_evaluate(g, ea);
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ScanError& e) {
    std::cerr << "scan rejected: " << e.what() << "\n";
    return scan_rejected;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return io_failure;
  } catch (const TrainingError& e) {
    std::cerr << "training aborted: " << e.what() << "\n";
    return training_aborted;
  } catch (const ConfigError& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return invalid;
  } catch (const Error& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return invalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return failure;
  }
}
