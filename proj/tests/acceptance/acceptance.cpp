// SPDX-License-Identifier: Apache-2.0
//
// Acceptance harness. Runs criteria 1-9 and prints one PASS/FAIL line each.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "trajdiff/diagnostics.hpp"
#include "trajdiff/evaluation.hpp"
#include "trajdiff/gaussian_model.hpp"
#include "trajdiff/io.hpp"
#include "trajdiff/logging.hpp"
#include "trajdiff/mask_normalization.hpp"
#include "trajdiff/temporal_prior.hpp"
#include "trajdiff/tid_sampler.hpp"
#include "trajdiff/toy_denoiser.hpp"

namespace fs = std::filesystem;
using namespace trajdiff;
using trajdiff::testing::relative_error;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

// Criterion 1 --------------------------------------------------------------

Outcome efdm_exactness() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> len(1, 64);
  int brute = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(trial < 200 ? 1 + trial % 6 : len(rng));
    const bool ties = trial % 2 == 0;
    const auto am = testing::random_vector(rng, n, ties);
    const auto au = testing::random_vector(rng, n, ties || trial % 4 == 1);
    const auto out = efdm_match(am, au);

    auto s_out = out, s_u = au;
    std::sort(s_out.begin(), s_out.end());
    std::sort(s_u.begin(), s_u.end());
    if (s_out != s_u) return {false, "not a permutation of a_u at trial " + std::to_string(trial)};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (am[i] < am[j] && out[i] > out[j])
          return {false, "rank order broken at trial " + std::to_string(trial)};
    if (efdm_match(out, au) != out) return {false, "not idempotent at trial " + std::to_string(trial)};
    if (n <= 6) {
      double cost = 0.0;
      for (std::size_t j = 0; j < n; ++j) cost += (am[j] - out[j]) * (am[j] - out[j]);
      const double best = testing::brute_force_transport_cost(am, au);
      if (std::abs(cost - best) > 1e-9 * std::max(1.0, best))
        return {false, "transport cost above brute force at trial " + std::to_string(trial)};
      ++brute;
    }
  }
  return {true, "1000 vectors, " + std::to_string(brute) + " brute-force checked"};
}

// Criterion 2 --------------------------------------------------------------

Outcome mask_conformance() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> len(1, 48);
  auto flip = [](TokenMask m) {
    for (auto& v : m) v = 1 - v;
    return m;
  };
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = static_cast<std::size_t>(len(rng)), k = static_cast<std::size_t>(len(rng));
    const TokenMask mv = testing::random_mask(rng, n), my = testing::random_mask(rng, k);
    const BinaryMatrix self = build_self_mask(mv);
    const BinaryMatrix cross = build_cross_mask(mv, my);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j)
        if (self(i, j) != (mv[i] == mv[j] ? 1 : 0)) return {false, "self mask entry mismatch"};
      for (std::size_t j = 0; j < k; ++j)
        if (cross(i, j) != (mv[i] == my[j] ? 1 : 0)) return {false, "cross mask entry mismatch"};
    }
    if (self != self.transpose()) return {false, "self mask not symmetric"};
    if (self != build_self_mask(flip(mv))) return {false, "self mask not complement-symmetric"};
    if (cross != build_cross_mask(flip(mv), flip(my))) return {false, "cross mask not complement-symmetric"};

    const int frames = 1 + trial % 8;
    std::vector<TokenMask> fm;
    for (int f = 0; f < frames; ++f) fm.push_back(testing::random_mask(rng, n));
    const int tok = static_cast<int>(rng() % n);
    const BinaryMatrix temporal = build_temporal_mask(fm, tok);
    for (int a = 0; a < frames; ++a)
      for (int b = 0; b < frames; ++b)
        if (temporal(a, b) != (fm[a][tok] == fm[b][tok] ? 1 : 0)) return {false, "temporal mask entry mismatch"};
    if (temporal != temporal.transpose()) return {false, "temporal mask not symmetric"};
  }
  return {true, "1000 random vectors"};
}

// Criterion 3 --------------------------------------------------------------

Outcome tau_gradient_check() {
  std::mt19937_64 rng(303);
  double worst = 0.0, worst_inv = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto inst = testing::random_tau_instance(rng);
    const double value = tau(inst.traj, inst.z);
    if (!(value >= -1.0 && value <= 1.0)) return {false, "tau outside [-1, 1]"};
    const Video g = tau_gradient(inst.traj, inst.z);
    const Video fd = testing::finite_difference_gradient(
        [&](const Video& z) { return tau(inst.traj, z); }, inst.z, 1e-6);
    worst = std::max(worst, relative_error(g, fd));

    Video moved = 3.5 * inst.z;
    for (auto& v : moved.values()) v += 2.25;
    worst_inv = std::max(worst_inv, std::abs(tau(inst.traj, moved) - value));
  }
  const bool ok = worst < 1e-4 && worst_inv < 1e-10;
  return {ok, "max rel err " + fmt(worst) + ", max invariance err " + fmt(worst_inv)};
}

// Criterion 4 --------------------------------------------------------------

Outcome variance_preservation() {
  const VideoShape s{1, 1, 100, 100};
  const auto sched = make_linear_schedule(50, 1e-3, 0.3);
  GaussianDenoiser gd(GaussianVideoModel{Video(s), 0.0, 1e-6}, sched);
  const Conditioning cond{Eigen::MatrixXd::Zero(1, 1), {1}, BoxTrajectory{100, 100, {{0, 0, 100, 100}}}};
  GuidanceConfig cfg = GuidanceConfig::for_mode(SamplerMode::kTid);
  cfg.cg = 0.0;
  std::mt19937_64 rng(404);
  double worst = 0.0;
  for (int t : {0, 10, 25, 40, 49}) {
    const double v = 1.0 - sched.alpha_bar(t);
    double acc = 0.0;
    constexpr int kReps = 10;  // 10 x 1e4 entries
    for (int rep = 0; rep < kReps; ++rep) {
      Video z = std::sqrt(v) * Video::randn(s, rng);
      for (int m = 0; m < cfg.inner_steps; ++m) z = tid_inner_step(z, t, cond, nullptr, cfg, gd, sched, rng);
      acc += z.dot(z);
    }
    worst = std::max(worst, std::abs(acc / (kReps * static_cast<double>(s.numel())) / v - 1.0));
  }
  return {worst < 0.02, "max relative variance error " + fmt(worst) + " over 1e5 samples x 5 timesteps"};
}

// Criterion 5 --------------------------------------------------------------

Outcome sampler_exactness() {
  const VideoShape s{4, 1, 8, 8};
  const auto sched = make_linear_schedule(50, 1e-3, 0.3);
  const BoxTrajectory traj{8, 8, {{0, 0, 4, 4}, {1, 1, 5, 5}, {3, 2, 7, 6}, {4, 4, 8, 8}}};
  const Conditioning cond{Eigen::MatrixXd::Zero(1, 1), {1}, traj};

  GaussianDenoiser sharp(GaussianVideoModel::from_trajectory(traj, s, 1.5, 0.9, 1e-10), sched);
  GuidanceConfig plain = GuidanceConfig::for_mode(SamplerMode::kPlain);
  plain.seed = 11;
  const double recover = relative_error(generate(sharp, cond, plain, sched, s), sharp.model().mean);

  GaussianDenoiser gd(GaussianVideoModel::from_trajectory(traj, s, 1.5, 0.9, 0.25), sched);
  GuidanceConfig tid = GuidanceConfig::for_mode(SamplerMode::kTid);
  tid.seed = 12;
  const Video a = generate(gd, cond, tid, sched, s);
  const Video b = generate(gd, cond, tid, sched, s);
  const bool exact = std::equal(a.values().begin(), a.values().end(), b.values().begin());

  return {recover < 1e-4 && exact,
          "mean-field rel err " + fmt(recover) + ", repeat runs " + (exact ? "bit-identical" : "differ")};
}

// Criterion 6 --------------------------------------------------------------

Outcome coefficient_defaults() {
  const GuidanceConfig tid = GuidanceConfig::for_mode(SamplerMode::kTid);
  const GuidanceConfig id = GuidanceConfig::for_mode(SamplerMode::kId);
  const GuidanceConfig dflt;
  const nlohmann::json expected = {{"gamma", 0.05}, {"inner_steps", 2}, {"omega", 9.0}, {"frozen_steps", 4}};
  for (const auto* c : {&tid, &id, &dflt}) {
    const auto snap = guidance_to_json(*c);
    for (const auto& [key, value] : expected.items())
      if (snap.at(key) != value) return {false, key + " = " + snap.at(key).dump()};
  }
  if (tid.cg != 10000.0 || dflt.cg != 10000.0) return {false, "TID c_g = " + fmt(tid.cg)};
  if (id.cg != 0.0) return {false, "ID c_g = " + fmt(id.cg)};
  return {true, "gamma 0.05, M 2, omega 9, frozen 4, c_g 10000 / 0"};
}

// Criteria 7-9 share one trained toy model --------------------------------

struct Toy {
  NoiseSchedule schedule = LinearScheduleConfig{}.build();
  std::optional<ToyDenoiser> model;
  double train_seconds = 0.0;
};

Toy& toy() {
  static Toy t;
  if (!t.model) {
    const auto start = std::chrono::steady_clock::now();
    const BlobDataset ds = BlobDataset::generate(BlobDatasetConfig{}, 128, 1);
    TrainConfig tc;
    tc.seed = 3;
    t.model = train_toy_denoiser(ds, t.schedule, tc, ToyDenoiserConfig{});
    t.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
  return t;
}

Outcome variance_direction(const fs::path& out) {
  Toy& t = toy();
  const GuidanceConfig base;
  const BlobDatasetConfig data;
  constexpr int kSeeds = 10;
  double naive = 0.0, norm = 0.0, ours = 0.0;
  std::string csv;
  for (int s = 0; s < kSeeds; ++s) {
    const BlobSample sample = make_blob_sample(data, 5000 + static_cast<std::uint64_t>(s));
    const Conditioning cond = make_conditioning(data, sample.identity, sample.trajectory);
    GuidanceConfig cfg = base;
    cfg.seed = 77 + static_cast<std::uint64_t>(s);
    const auto traces = run_variance_study(*t.model, cond, cfg, t.schedule, ToyLayer::kSpatial);
    naive += variance_mse(traces[1], traces[0]).mean() / kSeeds;
    norm += variance_mse(traces[2], traces[0]).mean() / kSeeds;
    ours += variance_mse(traces[3], traces[0]).mean() / kSeeds;
    if (s == 0) csv = variance_csv(traces);
  }
  write_text(out / "variance_seed0.csv", csv);
  write_text(out / "variance_summary.json",
             nlohmann::json{{"seeds", kSeeds},
                            {"layer", "spatial"},
                            {"train_seconds", t.train_seconds},
                            {"mean_mse", {{"masked", naive}, {"masknorm", norm}, {"masknorm_tid", ours}}}}
                     .dump(2) + "\n");
  return {ours < naive, "mean variance MSE: masknorm+TID " + fmt(ours) + ", masknorm " + fmt(norm) +
                            ", naive " + fmt(naive) + " (10 seeds)"};
}

std::optional<SweepResult>& sweep_cache() {
  static std::optional<SweepResult> r;
  return r;
}

const SweepResult& sweep() {
  auto& r = sweep_cache();
  if (!r) {
    Toy& t = toy();
    r = run_sweep(*t.model, BlobDatasetConfig{}, t.schedule, default_sweep_entries(GuidanceConfig{}), 20, 1000);
  }
  return *r;
}

Outcome ordering_direction(const fs::path& out) {
  const SweepResult& r = sweep();
  const auto checks = check_ablation_ordering(r);
  const auto report = deviation_report(checks);
  nlohmann::json summaries = nlohmann::json::array();
  for (const auto& s : r.summaries)
    summaries.push_back({{"config", s.config},
                         {"videos", s.videos},
                         {"coverage", s.coverage},
                         {"miou", s.miou ? nlohmann::json(*s.miou) : nlohmann::json()}});
  write_text(out / "sweep_rows.csv", r.rows_csv());
  write_text(out / "sweep_summary.json",
             nlohmann::json{{"summaries", summaries}, {"ordering", report}}.dump(2) + "\n");
  std::string detail;
  for (const auto& s : r.summaries)
    if (s.config == "masked" || s.config == "masknorm_id" || s.config == "masknorm_tid")
      detail += s.config + " cov " + fmt(s.coverage) + " mIoU " + (s.miou ? fmt(*s.miou) : "n/a") + "; ";
  for (const auto& c : checks)
    if (!c.holds) detail += "deviation: " + c.claim + "; ";
  return {report.at("all_hold").get<bool>(), detail + "20 seeds"};
}

Outcome gradnorm_variant() {
  const SweepResult& r = sweep();
  int rows = 0;
  for (const auto& row : r.rows)
    if (row.config == "masknorm_tid_gradnorm") ++rows;
  const auto& gn = r.summary("masknorm_tid_gradnorm");
  const auto& plain = r.summary("masknorm_tid");
  const bool ok = rows == 20 && gn.videos == 20;
  return {ok, "recorded " + std::to_string(rows) + " videos, cov " + fmt(gn.coverage) + " mIoU " +
                  (gn.miou ? fmt(*gn.miou) : "n/a") + " vs unnormalized cov " + fmt(plain.coverage) +
                  " mIoU " + (plain.miou ? fmt(*plain.miou) : "n/a")};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::vector<int> only;
  std::string out_dir = "acceptance_out";
  app.add_option("--only", only, "Run only these criteria")->check(CLI::Range(1, 9));
  app.add_option("--out", out_dir, "Directory for reports");
  CLI11_PARSE(app, argc, argv);

  set_log_level(LogLevel::kQuiet);
  const fs::path out(out_dir);
  fs::create_directories(out);

  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "EFDM exactness", 5, efdm_exactness},
      {2, "mask formula conformance", 1, mask_conformance},
      {3, "temporal prior gradient", 30, tau_gradient_check},
      {4, "variance preservation", 60, variance_preservation},
      {5, "sampler exactness", 30, sampler_exactness},
      {6, "coefficient defaults", 1, coefficient_defaults},
      {7, "variance MSE direction (toy)", 600, [&] { return variance_direction(out); }},
      {8, "ablation ordering (toy)", 1200, [&] { return ordering_direction(out); }},
      {9, "gradient-normalized variant", 1200, gradnorm_variant},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs > c.limit_seconds) {
      o.pass = false;
      o.detail += "; over the " + fmt(c.limit_seconds) + " s budget";
    }
    failed += o.pass ? 0 : 1;
    std::printf("criterion %d %s: %s (%s) [%.2f s]\n", c.id, c.name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
