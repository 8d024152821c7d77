// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trajdiff/diagnostics.hpp"
#include "trajdiff/errors.hpp"
#include "trajdiff/evaluation.hpp"
#include "trajdiff/gaussian_model.hpp"
#include "trajdiff/io.hpp"
#include "trajdiff/logging.hpp"
#include "trajdiff/toy_denoiser.hpp"

namespace fs = std::filesystem;
using namespace trajdiff;
using nlohmann::json;

namespace {

struct ScheduleFlags {
  std::optional<int> steps;
  std::optional<double> beta_start, beta_end;
};

struct GuidanceFlags {
  std::optional<std::string> mode, mask_mode, mask_norm, masks;
  std::optional<double> gamma, cg, omega;
  std::optional<int> inner_steps, frozen_steps;
  std::optional<std::uint64_t> seed;
  bool grad_norm = false;
  bool exact_vjp = false;
};

struct Common {
  std::optional<std::string> config;
  ScheduleFlags schedule;
  GuidanceFlags guidance;
};

void add_schedule_flags(CLI::App* app, ScheduleFlags& f) {
  app->add_option("--steps", f.steps, "Diffusion steps T")->check(CLI::PositiveNumber);
  app->add_option("--beta-start", f.beta_start, "First beta of the linear schedule");
  app->add_option("--beta-end", f.beta_end, "Last beta of the linear schedule");
}

void add_guidance_flags(CLI::App* app, GuidanceFlags& f) {
  app->add_option("--mode", f.mode, "Sampler preset")->check(CLI::IsMember({"plain", "id", "tid"}));
  app->add_option("--gamma", f.gamma, "Inner-step rate in (0,1)");
  app->add_option("--inner-steps", f.inner_steps, "Inner updates per step (M)");
  app->add_option("--cg", f.cg, "Temporal-prior guidance scale");
  app->add_option("--omega", f.omega, "Classifier-free guidance scale");
  app->add_option("--frozen-steps", f.frozen_steps, "Steps with attention masks");
  app->add_flag("--grad-norm", f.grad_norm, "Unit-normalize the prior gradient");
  app->add_flag("--exact-vjp", f.exact_vjp, "Differentiate the prior through the denoiser when possible");
  app->add_option("--seed", f.seed, "Sampling seed");
  app->add_option("--mask-mode", f.mask_mode, "Mask application")
      ->check(CLI::IsMember({"additive", "multiplicative"}));
  app->add_option("--mask-norm", f.mask_norm, "Mask normalization")->check(CLI::IsMember({"on", "off"}));
  app->add_option("--masks", f.masks, "Attention masks during frozen steps")
      ->check(CLI::IsMember({"on", "off"}));
}

void add_common(CLI::App* app, Common& c, bool guidance) {
  app->add_option("--config", c.config, "JSON config file; flags override its values");
  add_schedule_flags(app, c.schedule);
  if (guidance) add_guidance_flags(app, c.guidance);
}

json load_config(const Common& c) { return c.config ? read_json(*c.config) : json::object(); }

LinearScheduleConfig resolve_schedule(const Common& c, const json& file) {
  LinearScheduleConfig s;
  if (file.contains("schedule")) {
    const json& j = file.at("schedule");
    s.steps = j.value("steps", s.steps);
    s.beta_start = j.value("beta_start", s.beta_start);
    s.beta_end = j.value("beta_end", s.beta_end);
  }
  if (c.schedule.steps) s.steps = *c.schedule.steps;
  if (c.schedule.beta_start) s.beta_start = *c.schedule.beta_start;
  if (c.schedule.beta_end) s.beta_end = *c.schedule.beta_end;
  return s;
}

GuidanceConfig resolve_guidance(const Common& c, const json& file) {
  const GuidanceFlags& f = c.guidance;
  json j = file.contains("guidance") ? file.at("guidance") : json::object();
  // Flags are folded into the same JSON so both routes share one parser. A mode
  // flag replaces the file's preset-controlled keys.
  if (f.mode) {
    j.erase("cg");
    j.erase("inner_steps");
    j["mode"] = *f.mode;
  }
  if (f.gamma) j["gamma"] = *f.gamma;
  if (f.inner_steps) j["inner_steps"] = *f.inner_steps;
  if (f.cg) j["cg"] = *f.cg;
  if (f.omega) j["omega"] = *f.omega;
  if (f.frozen_steps) j["frozen_steps"] = *f.frozen_steps;
  if (f.grad_norm) j["grad_norm"] = true;
  if (f.exact_vjp) j["exact_vjp"] = true;
  if (f.seed) j["seed"] = *f.seed;
  if (f.mask_mode) j["mask_mode"] = *f.mask_mode;
  if (f.mask_norm) j["mask_norm"] = *f.mask_norm;
  if (f.masks) j["masks"] = *f.masks;
  return guidance_from_json(j);
}

json schedule_json(const LinearScheduleConfig& s) {
  return {{"steps", s.steps}, {"beta_start", s.beta_start}, {"beta_end", s.beta_end}};
}

// Either a trained toy checkpoint or, without one, the analytic Gaussian model
// of the trajectory.
struct LoadedDenoiser {
  std::unique_ptr<Denoiser> denoiser;
  VideoShape shape;
  Conditioning cond;
  std::string kind;
};

LoadedDenoiser load_denoiser(const std::optional<std::string>& checkpoint, const BoxTrajectory& traj,
                             int identity, const NoiseSchedule& schedule) {
  LoadedDenoiser out;
  if (checkpoint) {
    auto model = std::make_unique<ToyDenoiser>(ToyDenoiser::load(*checkpoint, schedule));
    BlobDatasetConfig data;
    data.shape = model->config().shape;
    data.prompt_tokens = model->config().prompt_tokens;
    data.identities = model->config().prompt_dim - 2;
    out.shape = model->config().shape;
    out.cond = make_conditioning(data, identity, traj);
    out.denoiser = std::move(model);
    out.kind = "toy";
  } else {
    out.shape = {traj.frames(), 2, traj.canvas_h, traj.canvas_w};
    auto model = GaussianVideoModel::from_trajectory(traj, out.shape, 1.5, 0.9, 0.25);
    out.cond = Conditioning{Eigen::MatrixXd::Zero(1, 1), TokenMask{1}, traj};
    out.denoiser = std::make_unique<GaussianDenoiser>(std::move(model), schedule);
    out.kind = "gaussian";
  }
  if (traj.frames() != out.shape.frames)
    throw ShapeError("trajectory has " + std::to_string(traj.frames()) + " frames, model expects " +
                     std::to_string(out.shape.frames));
  return out;
}

int run_generate(const Common& c, const std::string& trajectory_path,
                 const std::optional<std::string>& checkpoint, int identity, const std::string& out_dir,
                 const std::optional<std::string>& dump_tau) {
  const json file = load_config(c);
  const LinearScheduleConfig sc = resolve_schedule(c, file);
  const NoiseSchedule schedule = sc.build();
  const GuidanceConfig guidance = resolve_guidance(c, file);
  const BoxTrajectory traj = read_trajectory(trajectory_path);
  const LoadedDenoiser model = load_denoiser(checkpoint, traj, identity, schedule);

  std::ostringstream tau_csv;
  tau_csv << "step,t,pair,rho,degenerate\n";
  StepObserver observer;
  if (dump_tau) {
    observer = [&](const StepInfo& info) {
      const Video eps = cfg_noise(*model.denoiser, *info.z, info.t, model.cond, info.masks, guidance.omega);
      const TauResult tr = tau_detail(traj, tweedie_estimate(*info.z, info.t, eps, schedule), {.strict = false});
      for (std::size_t p = 0; p < tr.pair_rho.size(); ++p)
        tau_csv << info.ordinal << ',' << info.t << ',' << p << ',' << tr.pair_rho[p] << ','
                << (tr.pair_degenerate[p] ? 1 : 0) << '\n';
    };
  }
  const Video z0 = generate(*model.denoiser, model.cond, guidance, schedule, model.shape, observer);

  fs::create_directories(out_dir);
  write_raw_video(fs::path(out_dir) / "latent.f32", z0);
  write_pgm_frames(out_dir, "frame", z0);
  EvalReport report = evaluate(z0, traj);
  report.config = {{"denoiser", model.kind},
                   {"schedule", schedule_json(sc)},
                   {"guidance", guidance_to_json(guidance)},
                   {"trajectory", trajectory_path}};
  write_text(fs::path(out_dir) / "report.json", report.to_json().dump(2) + "\n");
  if (dump_tau) write_text(*dump_tau, tau_csv.str());
  std::cout << report.to_json().dump() << "\n";
  return 0;
}

int run_gen_data(int videos, std::uint64_t seed, const std::string& out) {
  const BlobDataset ds = BlobDataset::generate(BlobDatasetConfig{}, videos, seed);
  write_dataset(out, ds);
  std::cout << "wrote " << videos << " videos to " << out << "\n";
  return 0;
}

int run_train(const Common& c, const std::optional<std::string>& data_dir, int videos,
              std::uint64_t data_seed, TrainConfig train, const std::string& out) {
  const json file = load_config(c);
  const LinearScheduleConfig sc = resolve_schedule(c, file);
  const BlobDataset ds =
      data_dir ? read_dataset(*data_dir) : BlobDataset::generate(BlobDatasetConfig{}, videos, data_seed);
  ToyDenoiserConfig model;
  model.shape = ds.config.shape;
  model.prompt_tokens = ds.config.prompt_tokens;
  model.prompt_dim = ds.config.prompt_dim();
  TrainReport report;
  const ToyDenoiser trained = train_toy_denoiser(ds, sc.build(), train, model, &report);
  trained.save(out);
  std::cout << json{{"final_loss", report.final_loss},
                    {"epoch_loss", report.epoch_loss},
                    {"videos", ds.samples.size()},
                    {"schedule", schedule_json(sc)}}
                   .dump()
            << "\n";
  return 0;
}

int run_variance_study_cmd(const Common& c, const std::string& checkpoint, const std::string& layer_name,
                           std::uint64_t sample_seed, const std::string& out) {
  const json file = load_config(c);
  const LinearScheduleConfig sc = resolve_schedule(c, file);
  const NoiseSchedule schedule = sc.build();
  const GuidanceConfig guidance = resolve_guidance(c, file);
  const ToyLayer layer = parse_toy_layer(layer_name);
  const ToyDenoiser model = ToyDenoiser::load(checkpoint, schedule);
  BlobDatasetConfig data;
  data.shape = model.config().shape;
  const BlobSample sample = make_blob_sample(data, sample_seed);
  const Conditioning cond = make_conditioning(data, sample.identity, sample.trajectory);
  const auto traces = run_variance_study(model, cond, guidance, schedule, layer);
  write_text(out, variance_csv(traces));
  fs::path script = out;
  script.replace_extension(".gp");
  write_text(script, variance_gnuplot(fs::path(out).filename().string(), guidance.frozen_steps));
  json summary = json::object();
  for (std::size_t i = 1; i < traces.size(); ++i)
    summary[traces[i].config] = variance_mse(traces[i], traces[0]).mean();
  std::cout << json{{"layer", layer_name}, {"mean_mse_vs_baseline", summary}}.dump() << "\n";
  return 0;
}

int run_evaluate(const std::string& video_path, const std::string& trajectory_path,
                 std::optional<double> threshold, const std::optional<std::string>& out) {
  const Video video = read_raw_video(video_path);
  const BoxTrajectory traj = read_trajectory(trajectory_path);
  EvalReport report = evaluate(video, traj, threshold);
  report.config = {{"video", video_path}, {"trajectory", trajectory_path}};
  const std::string text = report.to_json().dump(2) + "\n";
  if (out) write_text(*out, text);
  std::cout << text;
  return 0;
}

int run_tau(const std::string& video_path, const std::string& trajectory_path, bool lenient) {
  const Video video = read_raw_video(video_path);
  const BoxTrajectory traj = read_trajectory(trajectory_path);
  const TauResult r = tau_detail(traj, video, TauOptions{!lenient});
  json pairs = json::array();
  for (std::size_t i = 0; i < r.pair_rho.size(); ++i)
    pairs.push_back({{"pair", i},
                     {"rho", r.pair_rho[i]},
                     {"degenerate", i < r.pair_degenerate.size() && r.pair_degenerate[i]}});
  std::cout << json{{"tau", r.tau}, {"pairs", pairs}}.dump(2) << "\n";
  return 0;
}

int run_sweep_cmd(const Common& c, const std::string& checkpoint, int seeds, std::uint64_t base_seed,
                  const std::string& out) {
  const json file = load_config(c);
  const LinearScheduleConfig sc = resolve_schedule(c, file);
  const NoiseSchedule schedule = sc.build();
  const GuidanceConfig guidance = resolve_guidance(c, file);
  const ToyDenoiser model = ToyDenoiser::load(checkpoint, schedule);
  BlobDatasetConfig data;
  data.shape = model.config().shape;
  const SweepResult result =
      run_sweep(model, data, schedule, default_sweep_entries(guidance), seeds, base_seed);
  write_text(out, result.rows_csv());
  json summaries = json::array();
  for (const auto& s : result.summaries)
    summaries.push_back({{"config", s.config},
                         {"videos", s.videos},
                         {"coverage", s.coverage},
                         {"miou", s.miou ? json(*s.miou) : json(nullptr)}});
  const json summary{{"summaries", summaries},
                     {"ordering", deviation_report(check_ablation_ordering(result))},
                     {"schedule", schedule_json(sc)},
                     {"guidance", guidance_to_json(guidance)}};
  fs::path summary_path = out;
  summary_path.replace_extension(".summary.json");
  write_text(summary_path, summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory-controlled video diffusion at desk scale"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "Log progress");
  app.add_flag("-q,--quiet", quiet, "Suppress warnings");

  Common gen_c;
  std::string gen_traj, gen_out = "out";
  std::optional<std::string> gen_ckpt, gen_tau;
  int gen_identity = 0;
  auto* gen = app.add_subcommand("generate", "Sample one video for a trajectory");
  add_common(gen, gen_c, true);
  gen->add_option("--trajectory", gen_traj, "Trajectory JSON")->required();
  gen->add_option("--checkpoint", gen_ckpt, "Toy denoiser checkpoint stem (default: analytic Gaussian)");
  gen->add_option("--identity", gen_identity, "Blob identity for the toy prompt");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--dump-tau", gen_tau, "CSV of per-pair correlations at every step");

  int data_videos = 256;
  std::uint64_t data_seed = 0;
  std::string data_out;
  auto* gd = app.add_subcommand("gen-data", "Write a synthetic blob dataset");
  gd->add_option("--videos", data_videos, "Number of videos")->check(CLI::PositiveNumber);
  gd->add_option("--seed", data_seed, "Dataset seed");
  gd->add_option("--out", data_out, "Output directory")->required();

  Common tr_c;
  std::optional<std::string> tr_data;
  int tr_videos = 256;
  std::uint64_t tr_data_seed = 0;
  TrainConfig tr_cfg;
  std::string tr_out;
  auto* tr = app.add_subcommand("train", "Train the toy denoiser");
  add_common(tr, tr_c, false);
  tr->add_option("--data", tr_data, "Dataset directory from gen-data (default: generate in memory)");
  tr->add_option("--videos", tr_videos, "In-memory dataset size")->check(CLI::PositiveNumber);
  tr->add_option("--data-seed", tr_data_seed, "In-memory dataset seed");
  tr->add_option("--epochs", tr_cfg.epochs, "Epochs");
  tr->add_option("--batch", tr_cfg.batch, "Batch size");
  tr->add_option("--lr", tr_cfg.learning_rate, "Adam learning rate");
  tr->add_option("--cond-drop", tr_cfg.cond_drop, "Unconditional training probability");
  tr->add_option("--seed", tr_cfg.seed, "Training seed");
  tr->add_option("--out", tr_out, "Checkpoint stem")->required();

  Common vs_c;
  std::string vs_ckpt, vs_layer = "spatial", vs_out = "trace.csv";
  std::uint64_t vs_sample = 0;
  auto* vs = app.add_subcommand("variance-study", "Activation variance across steps");
  add_common(vs, vs_c, true);
  vs->add_option("--checkpoint", vs_ckpt, "Toy denoiser checkpoint stem")->required();
  vs->add_option("--layer", vs_layer, "spatial, temporal or cross");
  vs->add_option("--sample-seed", vs_sample, "Seed of the conditioning trajectory");
  vs->add_option("--out", vs_out, "Trace CSV");

  std::string ev_video, ev_traj;
  std::optional<double> ev_thr;
  std::optional<std::string> ev_out;
  auto* ev = app.add_subcommand("evaluate", "Detect the blob and score it against a trajectory");
  ev->add_option("--video", ev_video, "Raw float32 video (with .json manifest)")->required();
  ev->add_option("--trajectory", ev_traj, "Trajectory JSON")->required();
  ev->add_option("--threshold", ev_thr, "Detection threshold (default mean + 2 std per frame)");
  ev->add_option("--out", ev_out, "Report JSON path");

  std::string tau_video, tau_traj;
  bool tau_lenient = false;
  auto* ta = app.add_subcommand("tau", "Temporal consistency score of a video along a trajectory");
  ta->add_option("--video", tau_video, "Raw float32 video (with .json manifest)")->required();
  ta->add_option("--trajectory", tau_traj, "Trajectory JSON")->required();
  ta->add_flag("--lenient", tau_lenient, "Score constant crops as 0 instead of failing");

  Common sw_c;
  std::string sw_ckpt, sw_out = "sweep.csv";
  int sw_seeds = 20;
  std::uint64_t sw_base = 1000;
  auto* sw = app.add_subcommand("sweep", "Ablation sweep over the sampler configurations");
  add_common(sw, sw_c, true);
  sw->add_option("--checkpoint", sw_ckpt, "Toy denoiser checkpoint stem")->required();
  sw->add_option("--seeds", sw_seeds, "Videos per configuration")->check(CLI::PositiveNumber);
  sw->add_option("--base-seed", sw_base, "First seed");
  sw->add_option("--out", sw_out, "Results CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  set_log_level(quiet ? LogLevel::kQuiet : verbose ? LogLevel::kInfo : LogLevel::kWarn);

  try {
    if (*gen) return run_generate(gen_c, gen_traj, gen_ckpt, gen_identity, gen_out, gen_tau);
    if (*gd) return run_gen_data(data_videos, data_seed, data_out);
    if (*tr) return run_train(tr_c, tr_data, tr_videos, tr_data_seed, tr_cfg, tr_out);
    if (*vs) return run_variance_study_cmd(vs_c, vs_ckpt, vs_layer, vs_sample, vs_out);
    if (*ev) return run_evaluate(ev_video, ev_traj, ev_thr, ev_out);
    if (*ta) return run_tau(tau_video, tau_traj, tau_lenient);
    if (*sw) return run_sweep_cmd(sw_c, sw_ckpt, sw_seeds, sw_base, sw_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
