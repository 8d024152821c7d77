// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "trajdiff/blob_dataset.hpp"
#include "trajdiff/denoiser.hpp"
#include "trajdiff/schedules.hpp"

namespace trajdiff {

struct ToyDenoiserConfig {
  VideoShape shape{8, 2, 16, 16};
  int width = 16;  // token feature width D
  int heads = 2;
  int pool = 2;    // attention grid is (H / pool) x (W / pool)
  int time_features = 16;
  int prompt_tokens = 4;
  int prompt_dim = 4;

  void validate() const;
  int grid_h() const { return shape.height / pool; }
  int grid_w() const { return shape.width / pool; }
};

/// Flat parameter vector with named, shaped slices.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::size_t offset = 0;
    std::size_t count = 0;
  };

  std::size_t add(std::string name, std::vector<int> shape);
  const Entry& entry(std::string_view name) const;
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return values.size(); }

  std::vector<double> values;

 private:
  std::vector<Entry> entries_;
};

/// Attention blocks whose outputs can be inspected.
enum class ToyLayer { kSpatial, kTemporal, kCross };
ToyLayer parse_toy_layer(std::string_view name);
std::string_view to_string(ToyLayer layer);

/// Small per-frame conv encoder, spatial / temporal / cross attention blocks
/// (each mask-aware, with optional mask normalization) and a conv decoder.
class ToyDenoiser : public Denoiser {
 public:
  ToyDenoiser(ToyDenoiserConfig config, NoiseSchedule schedule, std::uint64_t init_seed);

  Video predict_noise(const Video& z, int t, const Conditioning* cond,
                      const MaskContext* masks) const override;
  std::pair<int, int> attention_grid(const VideoShape& s) const override;

  /// Output of `layer` (after its residual add), shaped (N, D, grid_h, grid_w).
  Video collect_activations(ToyLayer layer, const Video& z, int t, const Conditioning* cond,
                            const MaskContext* masks) const;

  /// Mean squared noise-prediction error for one example, accumulating
  /// d loss / d params into `grad` (same layout as params().values).
  double loss_and_grad(const Video& noisy, int t, const Video& target_noise,
                       const Conditioning* cond, std::vector<double>& grad) const;

  const ToyDenoiserConfig& config() const { return config_; }
  const NoiseSchedule& schedule() const { return schedule_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Writes `<stem>.bin` (little-endian float32) and `<stem>.json` (manifest).
  void save(const std::filesystem::path& stem) const;
  static ToyDenoiser load(const std::filesystem::path& stem, const NoiseSchedule& schedule);

  struct Layout;

 private:
  struct Tape;
  Video forward(const Video& z, int t, const Conditioning* cond, const MaskContext* masks,
                Tape* tape, ToyLayer capture_layer, Video* capture) const;

  ToyDenoiserConfig config_;
  NoiseSchedule schedule_;
  ParamStore params_;
};

struct TrainConfig {
  int epochs = 30;
  int batch = 4;
  double learning_rate = 2e-3;
  double cond_drop = 0.1;  // probability of training a sample unconditionally
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double final_loss = 0.0;
};

/// Noise-prediction regression with Adam. No attention masks are used.
ToyDenoiser train_toy_denoiser(const BlobDataset& dataset, const NoiseSchedule& schedule,
                               const TrainConfig& train, const ToyDenoiserConfig& model,
                               TrainReport* report = nullptr);

/// Mean epsilon-prediction MSE over `dataset`, one fixed (t, noise) draw per sample.
double evaluate_noise_mse(const ToyDenoiser& model, const BlobDataset& dataset,
                          std::uint64_t seed);

}  // namespace trajdiff
