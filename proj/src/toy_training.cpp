// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "trajdiff/errors.hpp"
#include "trajdiff/logging.hpp"
#include "trajdiff/toy_denoiser.hpp"

namespace trajdiff {

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

nlohmann::json config_json(const ToyDenoiserConfig& c) {
  return {{"frames", c.shape.frames},   {"channels", c.shape.channels},
          {"height", c.shape.height},   {"width", c.shape.width},
          {"features", c.width},        {"heads", c.heads},
          {"pool", c.pool},             {"time_features", c.time_features},
          {"prompt_tokens", c.prompt_tokens}, {"prompt_dim", c.prompt_dim}};
}

ToyDenoiserConfig config_from_json(const nlohmann::json& j) {
  ToyDenoiserConfig c;
  c.shape = {j.at("frames").get<int>(), j.at("channels").get<int>(), j.at("height").get<int>(),
             j.at("width").get<int>()};
  c.width = j.at("features").get<int>();
  c.heads = j.at("heads").get<int>();
  c.pool = j.at("pool").get<int>();
  c.time_features = j.at("time_features").get<int>();
  c.prompt_tokens = j.at("prompt_tokens").get<int>();
  c.prompt_dim = j.at("prompt_dim").get<int>();
  return c;
}

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big)
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
  return v;
}

}  // namespace

void ToyDenoiser::save(const std::filesystem::path& stem) const {
  auto bin_path = stem;
  bin_path += ".bin";
  auto json_path = stem;
  json_path += ".json";
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw ConfigError("cannot write " + bin_path.string());
  for (double v : params_.values) {
    const auto f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    bits = to_little_endian(bits);
    bin.write(reinterpret_cast<const char*>(&bits), sizeof bits);
  }
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& e : params_.entries())
    layers.push_back({{"name", e.name}, {"shape", e.shape}, {"offset", e.offset}, {"count", e.count}});
  nlohmann::json manifest = {
      {"format", "trajdiff-toy-denoiser"},
      {"version", 1},
      {"dtype", "float32-le"},
      {"layout", "row-major"},
      {"parameters", params_.size()},
      {"config", config_json(config_)},
      {"schedule", {{"steps", schedule_.steps()}, {"hash", hex64(schedule_.hash())}}},
      {"layers", layers},
      {"data", bin_path.filename().string()}};
  std::ofstream js(json_path);
  if (!js) throw ConfigError("cannot write " + json_path.string());
  js << manifest.dump(2) << '\n';
}

ToyDenoiser ToyDenoiser::load(const std::filesystem::path& stem, const NoiseSchedule& schedule) {
  auto json_path = stem;
  json_path += ".json";
  std::ifstream js(json_path);
  if (!js) throw ConfigError("cannot read " + json_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "trajdiff-toy-denoiser")
    throw ConfigError("not a toy denoiser checkpoint: " + json_path.string());
  const std::string want = hex64(schedule.hash());
  const std::string got = manifest.at("schedule").at("hash").get<std::string>();
  if (want != got)
    throw ConfigError("checkpoint was trained with a different noise schedule (hash " + got +
                      ", expected " + want + ")");
  ToyDenoiser model(config_from_json(manifest.at("config")), schedule, 0);
  const auto& layers = manifest.at("layers");
  if (layers.size() != model.params_.entries().size())
    throw ConfigError("checkpoint layer count does not match the model");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& e = model.params_.entries()[i];
    if (layers[i].at("name").get<std::string>() != e.name ||
        layers[i].at("shape").get<std::vector<int>>() != e.shape)
      throw ConfigError("checkpoint layer '" + layers[i].at("name").get<std::string>() +
                        "' does not match the model");
  }
  auto bin_path = json_path.parent_path() / manifest.at("data").get<std::string>();
  std::ifstream bin(bin_path, std::ios::binary);
  if (!bin) throw ConfigError("cannot read " + bin_path.string());
  for (auto& v : model.params_.values) {
    std::uint32_t bits = 0;
    if (!bin.read(reinterpret_cast<char*>(&bits), sizeof bits))
      throw ConfigError("checkpoint data is truncated");
    bits = to_little_endian(bits);
    float f;
    std::memcpy(&f, &bits, sizeof f);
    v = f;
  }
  return model;
}

namespace {

struct Adam {
  explicit Adam(std::size_t n, double lr) : m(n, 0.0), v(n, 0.0), lr(lr) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    ++t;
    const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
    }
  }

  std::vector<double> m, v;
  double lr;
  double b1 = 0.9, b2 = 0.999;
  int t = 0;
};

struct NoisedExample {
  int t = 0;
  Video noise;
  Video noisy;
};

NoisedExample noise_example(const Video& clean, const NoiseSchedule& schedule, std::mt19937_64& rng) {
  NoisedExample ex;
  ex.t = std::uniform_int_distribution<int>(0, schedule.steps() - 1)(rng);
  ex.noise = Video::randn(clean.shape(), rng);
  const double abar = schedule.alpha_bar(ex.t);
  ex.noisy = std::sqrt(abar) * clean;
  ex.noisy.axpy(std::sqrt(1.0 - abar), ex.noise);
  return ex;
}

}  // namespace

ToyDenoiser train_toy_denoiser(const BlobDataset& dataset, const NoiseSchedule& schedule,
                               const TrainConfig& train, const ToyDenoiserConfig& model_config,
                               TrainReport* report) {
  if (dataset.samples.empty()) throw ConfigError("training dataset is empty");
  if (train.epochs < 0 || train.batch < 1 || !(train.learning_rate > 0.0))
    throw ConfigError("invalid training configuration");
  std::mt19937_64 rng(train.seed);
  ToyDenoiser model(model_config, schedule, rng());
  Adam adam(model.params().size(), train.learning_rate);
  std::vector<double> grad(model.params().size(), 0.0);
  std::vector<std::size_t> order(dataset.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::bernoulli_distribution drop(train.cond_drop);

  TrainReport local;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(train.batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(train.batch));
      std::fill(grad.begin(), grad.end(), 0.0);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        const BlobSample& s = dataset.samples[order[i]];
        const NoisedExample ex = noise_example(s.video, schedule, rng);
        const bool unconditional = drop(rng);
        const Conditioning cond = make_conditioning(dataset.config, s.identity, s.trajectory);
        batch_loss += model.loss_and_grad(ex.noisy, ex.t, ex.noise,
                                          unconditional ? nullptr : &cond, grad);
      }
      const double scale = 1.0 / static_cast<double>(stop - start);
      for (double& g : grad) g *= scale;
      const double gnorm = std::sqrt(std::inner_product(grad.begin(), grad.end(), grad.begin(), 0.0));
      if (!std::isfinite(batch_loss) || !std::isfinite(gnorm))
        throw NumericError("training diverged at epoch " + std::to_string(epoch));
      if (gnorm > 1.0)
        for (double& g : grad) g /= gnorm;
      adam.step(model.params().values, grad);
      epoch_loss += batch_loss;
    }
    epoch_loss /= static_cast<double>(order.size());
    local.epoch_loss.push_back(epoch_loss);
    log_info("epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(epoch_loss));
  }
  local.final_loss = local.epoch_loss.empty() ? 0.0 : local.epoch_loss.back();
  if (report) *report = std::move(local);
  return model;
}

double evaluate_noise_mse(const ToyDenoiser& model, const BlobDataset& dataset, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double total = 0.0;
  for (const BlobSample& s : dataset.samples) {
    const NoisedExample ex = noise_example(s.video, model.schedule(), rng);
    const Conditioning cond = make_conditioning(dataset.config, s.identity, s.trajectory);
    const Video pred = model.predict_noise(ex.noisy, ex.t, &cond, nullptr);
    Video diff = pred - ex.noise;
    total += diff.dot(diff) / static_cast<double>(diff.size());
  }
  return total / static_cast<double>(dataset.samples.size());
}

}  // namespace trajdiff
