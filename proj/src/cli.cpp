#include "adi/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "adi/diffusion.hpp"
#include "adi/errors.hpp"
#include "adi/evalkit.hpp"
#include "adi/inference.hpp"
#include "adi/synthdata.hpp"
#include "adi/training.hpp"
#include "file_io.hpp"

namespace adi::cli {

namespace {

const std::vector<std::string> kCommands = {"synth", "train", "detect", "eval", "render", "diffuse-demo"};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    T v;
    if (!(is >> v) || !is.eof()) throw UsageError(std::string(flag) + ": cannot parse \"" + item + "\"");
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

std::string usage() {
  return "usage: adidiff <command> [options]\n"
         "\n"
         "commands:\n"
         "  synth         --config c.json --out DIR [--seed N]\n"
         "  train         --data DIR --out CKPT --config t.json [--seed N] [--resume CKPT] [--metrics FILE]\n"
         "  detect        --ckpt CKPT [--ckpt CKPT --ckpt CKPT] --data DIR --out preds.jsonl [--jobs N]\n"
         "  eval          --preds preds.jsonl --data DIR [--thresholds 0.3,0.4,0.5,0.6,0.7]\n"
         "  render        (--gt VIDEO | --image-from CKPT --video VIDEO) --data DIR --out img.pgm\n"
         "  diffuse-demo  [--t-list 1,10,25,50] [--samples 10000]\n"
         "\n"
         "Run 'adidiff <command> --help' for the options of one command.\n";
}

struct Options {
  // synth / train
  std::string config, out, data, resume, metrics;
  // One per subcommand: CLI11 writes defaults into the bound variable.
  std::string train_split = "train", detect_split = "test", eval_split = "test";
  std::uint64_t seed = 0;
  bool seed_given = false;
  // detect
  std::vector<std::string> ckpts;
  std::size_t jobs = 1;
  std::size_t samples = 10;
  double delta = 0.9;
  // eval
  std::string preds, thresholds = "0.3,0.4,0.5,0.6,0.7", json_out;
  // render
  std::string gt, image_from, video;
  // diffuse-demo
  std::string t_list = "1,10,25,50";
  std::size_t demo_samples = 10000, classes = 6, T = 50;
  std::int64_t K = 200;
  double beta_min = 0.05, beta_max = 0.30;
};

int cmd_synth(const Options& o, std::ostream& out) {
  auto cfg = data::read_synth_config(o.config);
  if (o.seed_given) cfg.seed = o.seed;
  const auto m = data::gen_dataset(cfg, o.out);
  out << "wrote " << m.train.size() + m.test.size() << " videos (" << m.train.size() << " train, " << m.test.size()
      << " test) to " << o.out << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out) {
  const auto ds = data::load_dataset(o.data, o.train_split);
  train::Checkpoint start;
  if (!o.resume.empty()) {
    start = train::load_checkpoint(o.resume);
    out << "resuming from " << o.resume << " at epoch " << start.epoch << "\n";
  } else {
    auto cfg = train::read_train_config(o.config);
    if (o.seed_given) cfg.seed = o.seed;
    start = train::initial_checkpoint(cfg, ds);
  }
  train::TrainOptions opts;
  opts.checkpoint_path = o.out;
  opts.metrics_path = o.metrics.empty() ? std::filesystem::path(o.out + ".metrics.jsonl") : std::filesystem::path(o.metrics);
  opts.on_epoch = [&out, total = start.config.epochs](const train::EpochMetrics& m) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "epoch %zu/%zu  loss %.6f  lr %.3g  %.1fs\n", m.epoch, total, m.mean_loss, m.lr,
                  m.wall_ms / 1000.0);
    out << buf << std::flush;
  };
  train::train(std::move(start), ds, opts);
  out << "checkpoint written to " << o.out << "\n";
  return 0;
}

infer::DecodeConfig decode_config(const Options& o) {
  infer::DecodeConfig d;
  d.samples = o.samples;
  d.delta = o.delta;
  d.validate();
  return d;
}

int cmd_detect(const Options& o, std::ostream& out) {
  if (o.ckpts.size() != 1 && o.ckpts.size() != 3) {
    throw UsageError("--ckpt must be given once (combined model) or three times (action, start and end models)");
  }
  const auto ds = data::load_dataset(o.data, o.detect_split);
  const auto dcfg = decode_config(o);
  std::vector<train::Checkpoint> ck;
  for (const auto& p : o.ckpts) ck.push_back(train::load_checkpoint(p));
  const auto sched = ck.front().schedule();

  infer::VideoDetector detector;
  infer::SeparateModels separate;
  if (ck.size() == 1) {
    if (ck[0].model.config.kind != image::ImageKind::combined) {
      throw ValidationError(o.ckpts[0] + " holds a single-image model; pass the action, start and end checkpoints");
    }
    detector = [&](const data::Video& v, num::Rng& rng) {
      const std::vector<double> mask(v.features.rows(), 1.0);
      return infer::detect(ck[0].model, v.features, mask, sched, dcfg, rng, v.annotation.video_id);
    };
  } else {
    std::map<image::ImageKind, const model::ModelParams*> by_kind;
    for (const auto& c : ck) by_kind[c.model.config.kind] = &c.model;
    if (!by_kind.count(image::ImageKind::action) || !by_kind.count(image::ImageKind::start) ||
        !by_kind.count(image::ImageKind::end)) {
      throw ValidationError("the three checkpoints must hold one action, one start and one end model");
    }
    separate = {*by_kind[image::ImageKind::action], *by_kind[image::ImageKind::start], *by_kind[image::ImageKind::end]};
    detector = [&](const data::Video& v, num::Rng& rng) {
      const std::vector<double> mask(v.features.rows(), 1.0);
      return infer::detect_separate(separate, v.features, mask, sched, dcfg, rng, v.annotation.video_id);
    };
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto dets = infer::detect_dataset(ds, detector, o.seed, o.jobs);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  detail::write_file(o.out, eval::to_jsonl(dets));
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu detections on %zu videos in %.2fs (%.3f s/clip), written to %s\n", dets.size(),
                ds.videos.size(), secs, ds.videos.empty() ? 0.0 : secs / static_cast<double>(ds.videos.size()),
                o.out.c_str());
  out << buf;
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  const auto thresholds = parse_list<double>(o.thresholds, "--thresholds");
  const auto ds = data::load_dataset(o.data, o.eval_split);
  const auto dets = eval::read_jsonl(detail::read_file(o.preds), o.preds);
  const auto rep = eval::map_report(dets, ds.annotations(), thresholds);
  out << eval::table_row(rep);
  if (!o.json_out.empty()) detail::write_file(o.json_out, eval::to_json_text(rep));
  return 0;
}

int cmd_render(const Options& o, std::ostream& out) {
  const bool from_gt = !o.gt.empty();
  const bool from_model = !o.image_from.empty() || !o.video.empty();
  if (from_gt == from_model) throw UsageError("render needs either --gt VIDEO or --image-from CKPT --video VIDEO");
  if (from_model && (o.image_from.empty() || o.video.empty())) {
    throw UsageError("--image-from and --video must be given together");
  }
  const auto ds = data::load_dataset(o.data, "all");
  image::AdImage img;
  if (from_gt) {
    img = image::stitch(image::encode_ground_truth(ds.find(o.gt).annotation, ds.classes));
  } else {
    const auto ck = train::load_checkpoint(o.image_from);
    const auto& v = ds.find(o.video);
    const std::vector<double> mask(v.features.rows(), 1.0);
    num::Rng rng(o.seed);
    img = infer::reverse_chain(ck.model, v.features, mask, ck.schedule(), decode_config(o), rng);
  }
  image::write_pgm(o.out, img);
  out << "wrote " << img.width() << "x" << img.rows() << " " << image::to_string(img.kind) << " image to " << o.out
      << "\n";
  return 0;
}

int cmd_diffuse_demo(const Options& o, std::ostream& out) {
  const auto ts = parse_list<std::size_t>(o.t_list, "--t-list");
  const auto sched = diffusion::build_schedule(o.T, o.beta_min, o.beta_max, o.K);
  if (o.classes < 2) throw UsageError("--classes must be >= 2");
  if (o.demo_samples < 1) throw UsageError("--samples must be >= 1");
  for (auto t : ts) {
    if (t < 1 || t > o.T) throw UsageError("--t-list entries must lie in 1.." + std::to_string(o.T));
  }
  const std::size_t c = o.classes;
  std::vector<double> z0(c, 0.0);
  z0[0] = 1.0;
  char buf[200];
  std::snprintf(buf, sizeof buf, "C = %zu, K = %lld, T = %zu, beta %.3g..%.3g, %zu samples, z_0 = e_0\n", c,
                static_cast<long long>(o.K), o.T, o.beta_min, o.beta_max, o.demo_samples);
  out << buf;
  out << "    t   alpha_bar         B_t  trials   E[z_t]_0  expected  max|jump-steps|  max|E[z_t]-1/C|\n";
  num::Rng rng(o.seed);
  for (auto t : ts) {
    std::vector<double> jump(c, 0.0), steps(c, 0.0);
    for (std::size_t s = 0; s < o.demo_samples; ++s) {
      const auto zj = diffusion::forward_jump({z0, 0}, t, sched, rng);
      diffusion::NoisyRow z{z0, 0};
      for (std::size_t k = 1; k <= t; ++k) z = diffusion::forward_step(z, k, sched, rng);
      for (std::size_t i = 0; i < c; ++i) {
        jump[i] += zj.z[i] / static_cast<double>(o.demo_samples);
        steps[i] += z.z[i] / static_cast<double>(o.demo_samples);
      }
    }
    double gap = 0.0, drift = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      gap = std::max(gap, std::abs(jump[i] - steps[i]));
      drift = std::max(drift, std::abs(jump[i] - 1.0 / static_cast<double>(c)));
    }
    const double expected = sched.alpha_bar[t] + sched.one_minus_alpha_bar[t] / static_cast<double>(c);
    std::snprintf(buf, sizeof buf, "%5zu  %10.3e  %10.4f  %6lld  %9.5f  %8.5f  %15.5f  %15.5f\n", t, sched.alpha_bar[t],
                  sched.B[t], static_cast<long long>(sched.jump_trials(t)), jump[0], expected, gap, drift);
    out << buf;
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (args.empty()) {
    err << usage();
    return 2;
  }
  const std::string& first = args.front();
  if (first == "-h" || first == "--help") {
    out << usage();
    return 0;
  }
  if (std::find(kCommands.begin(), kCommands.end(), first) == kCommands.end()) {
    err << "error: unknown command \"" << first << "\"; valid commands are:";
    for (const auto& c : kCommands) err << " " << c;
    err << "\n\n" << usage();
    return 2;
  }

  Options o;
  CLI::App app{"Action detection as discrete diffusion over AD images", "adidiff"};
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic feature/annotation dataset");
  synth->add_option("--config", o.config, "Synthetic data config (JSON)")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--seed", o.seed, "Override the config seed");

  auto* train = app.add_subcommand("train", "Train a denoiser");
  train->add_option("--data", o.data, "Dataset directory")->required();
  train->add_option("--out", o.out, "Checkpoint path")->required();
  auto* cfg_opt = train->add_option("--config", o.config, "Training config (JSON)")->check(CLI::ExistingFile);
  auto* resume_opt = train->add_option("--resume", o.resume, "Continue from a checkpoint")->check(CLI::ExistingFile);
  cfg_opt->excludes(resume_opt);
  train->add_option("--seed", o.seed, "Override the config seed");
  train->add_option("--metrics", o.metrics, "Metrics log (default <out>.metrics.jsonl)");
  train->add_option("--split", o.train_split, "Dataset split")->default_val("train");

  auto* detect = app.add_subcommand("detect", "Detect actions with trained models");
  detect->add_option("--ckpt", o.ckpts, "Combined checkpoint, or action/start/end checkpoints")->required();
  detect->add_option("--data", o.data, "Dataset directory")->required();
  detect->add_option("--out", o.out, "Detections (JSON lines)")->required();
  detect->add_option("--split", o.detect_split, "Dataset split")->default_val("test");
  detect->add_option("--seed", o.seed, "Sampling seed")->default_val(0);
  detect->add_option("--jobs", o.jobs, "Worker threads")->default_val(1)->check(CLI::PositiveNumber);
  detect->add_option("--samples", o.samples, "Reverse chains per video (M)")->default_val(10);
  detect->add_option("--delta", o.delta, "Boundary threshold")->default_val(0.9);

  auto* evalc = app.add_subcommand("eval", "Evaluate detections");
  evalc->add_option("--preds", o.preds, "Detections (JSON lines)")->required()->check(CLI::ExistingFile);
  evalc->add_option("--data", o.data, "Dataset directory")->required();
  evalc->add_option("--thresholds", o.thresholds, "Comma-separated tIoU thresholds")->default_val(o.thresholds);
  evalc->add_option("--split", o.eval_split, "Dataset split")->default_val("test");
  evalc->add_option("--json", o.json_out, "Also write the report as JSON");

  auto* render = app.add_subcommand("render", "Render an AD image as PGM");
  render->add_option("--gt", o.gt, "Video whose ground truth to render");
  render->add_option("--image-from", o.image_from, "Checkpoint whose output to render")->check(CLI::ExistingFile);
  render->add_option("--video", o.video, "Video to run the model on");
  render->add_option("--data", o.data, "Dataset directory")->required();
  render->add_option("--out", o.out, "Output PGM")->required();
  render->add_option("--seed", o.seed, "Sampling seed")->default_val(0);
  render->add_option("--samples", o.samples, "Reverse chains (M)")->default_val(10);

  auto* demo = app.add_subcommand("diffuse-demo", "Print the forward-process drift table");
  demo->add_option("--t-list", o.t_list, "Steps to report")->default_val(o.t_list);
  demo->add_option("--samples", o.demo_samples, "Rows per step")->default_val(o.demo_samples);
  demo->add_option("--classes", o.classes, "Classes C")->default_val(o.classes);
  demo->add_option("--T", o.T, "Diffusion steps")->default_val(o.T);
  demo->add_option("--K", o.K, "Multinomial trials")->default_val(o.K);
  demo->add_option("--beta-min", o.beta_min)->default_val(o.beta_min);
  demo->add_option("--beta-max", o.beta_max)->default_val(o.beta_max);
  demo->add_option("--seed", o.seed, "Sampling seed")->default_val(0);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (!app.get_subcommands().empty()) err << app.get_subcommands().front()->help();
    return 2;
  }
  o.seed_given = (synth->parsed() && synth->count("--seed") > 0) || (train->parsed() && train->count("--seed") > 0);

  try {
    if (train->parsed() && o.config.empty() && o.resume.empty()) throw UsageError("train needs --config or --resume");
    if (synth->parsed()) return cmd_synth(o, out);
    if (train->parsed()) return cmd_train(o, out);
    if (detect->parsed()) return cmd_detect(o, out);
    if (evalc->parsed()) return cmd_eval(o, out);
    if (render->parsed()) return cmd_render(o, out);
    return cmd_diffuse_demo(o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace adi::cli
