#include "oat/nn/train.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "oat/core/error.hpp"
#include "oat/core/hash.hpp"
#include "oat/diffusion/steps.hpp"
#include "oat/nn/checkpoint.hpp"

namespace oat::nn {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  optimizer.validate();
  if (batch == 0) throw ConfigError("training.batch must be positive");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"optimizer", c.optimizer}, {"epochs", c.epochs}, {"batch", c.batch}, {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("training must be an object");
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "optimizer") c.optimizer = value.get<AdamConfig>();
      else if (key == "epochs") c.epochs = value.get<std::size_t>();
      else if (key == "batch") c.batch = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else throw ConfigError("training: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("training." + key + ": " + e.what());
    }
  }
}

namespace {

// One trainable group: a parameter set, the slice of it the optimizer owns,
// and where it lives inside the checkpoint directory.
struct Group {
  std::string name;
  ParamSet<float>* set = nullptr;
  std::vector<Parameter<float>*> trained;
  AdamState<float> adam;
};

// Everything that must match for a checkpoint to be resumed. The epoch count
// is excluded so a finished run can be extended.
nlohmann::json identity(const std::string& kind, const nlohmann::json& model, const TrainConfig& config,
                        std::size_t samples) {
  nlohmann::json train = config;
  train.erase("epochs");
  return {{"kind", kind}, {"model", model}, {"training", train}, {"samples", samples}};
}

void save(const fs::path& dir, const nlohmann::json& id, std::vector<Group>& groups, const std::vector<double>& losses) {
  const fs::path staging = dir.string() + ".staging";
  fs::remove_all(staging);
  fs::create_directories(staging);
  for (auto& g : groups) {
    write_param_set(staging / g.name, *g.set);
    write_adam(staging / (g.name + "_optimizer"), g.adam, std::span<Parameter<float>* const>(g.trained));
  }
  nlohmann::json meta = id;
  meta["epochs_completed"] = losses.size();
  meta["epoch_loss"] = losses;
  write_json(staging / "meta.json", meta);
  commit_directory(staging, dir);
}

std::vector<double> load(const fs::path& dir, const nlohmann::json& id, std::vector<Group>& groups) {
  const auto meta = read_json(dir / "meta.json");
  for (const auto& key : {"kind", "model", "training", "samples"})
    if (!meta.contains(key) || meta.at(key) != id.at(key))
      throw ConfigError("checkpoint " + dir.string() + " was written with a different " + key + "; refusing to resume");
  for (auto& g : groups) {
    read_param_set(dir / g.name, *g.set);
    read_adam(dir / (g.name + "_optimizer"), g.adam, std::span<Parameter<float>* const>(g.trained));
  }
  return meta.at("epoch_loss").get<std::vector<double>>();
}

using StepFn = std::function<double(std::span<const std::size_t> batch, std::mt19937_64& rng)>;

TrainResult run_epochs(const std::string& kind, const nlohmann::json& model, const TrainConfig& config,
                       std::size_t samples, const fs::path& dir, std::vector<Group>& groups, const StepFn& step,
                       const EpochCallback& on_epoch) {
  config.validate();
  if (samples == 0) throw ConfigError(kind + ": empty training set");
  for (auto& g : groups) g.adam.config = config.optimizer;
  const auto id = identity(kind, model, config, samples);
  TrainResult result;
  if (!dir.empty() && fs::exists(dir / "meta.json")) {
    result.epoch_loss = load(dir, id, groups);
    result.resumed_from_epoch = result.epoch_loss.size();
    spdlog::info("{}: resuming after epoch {}", kind, result.resumed_from_epoch);
  }
  std::vector<std::size_t> order(samples);
  for (std::size_t epoch = result.epoch_loss.size(); epoch < config.epochs; ++epoch) {
    std::mt19937_64 rng(mix_seed(config.seed, epoch));
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = samples; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    double total = 0;
    for (std::size_t b = 0; b < samples; b += config.batch) {
      const std::span<const std::size_t> batch(order.data() + b, std::min(config.batch, samples - b));
      for (auto& g : groups) g.set->zero_grad();
      const double loss = step(batch, rng);
      if (!std::isfinite(loss))
        throw NumericalError(kind + ": non-finite loss in epoch " + std::to_string(epoch + 1) +
                             "; last checkpoint holds epoch " + std::to_string(epoch));
      for (auto& g : groups) adam_update(std::span<Parameter<float>* const>(g.trained), g.adam);
      total += loss * static_cast<double>(batch.size());
    }
    result.epoch_loss.push_back(total / static_cast<double>(samples));
    spdlog::info("{}: epoch {}/{} loss {:.6g}", kind, epoch + 1, config.epochs, result.epoch_loss.back());
    if (!dir.empty()) save(dir, id, groups, result.epoch_loss);
    if (on_epoch) on_epoch(epoch + 1, result.epoch_loss.back());
  }
  return result;
}

Tensor<float> gather(std::span<const Sample> data, std::span<const std::size_t> batch, Shape item_shape) {
  const std::size_t item = shape_size(item_shape);
  Shape shape{batch.size()};
  shape.insert(shape.end(), item_shape.begin(), item_shape.end());
  Tensor<float> out(shape);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = data[batch[i]];
    if (s.size() != item) throw ShapeError("training sample has " + std::to_string(s.size()) + " values, expected " +
                                           std::to_string(item));
    std::copy(s.begin(), s.end(), out.ptr() + i * item);
  }
  return out;
}

Group make_group(const std::string& name, ParamSet<float>& set, std::size_t first = 0,
                 std::size_t count = static_cast<std::size_t>(-1)) {
  Group g;
  g.name = name;
  g.set = &set;
  g.trained = param_pointers(set, first, count);
  return g;
}

}  // namespace

TrainResult train_fdunet(FDUNet<float>& net, std::span<const Sample> inputs, std::span<const Sample> targets,
                         const TrainConfig& config, const fs::path& checkpoint_dir, const EpochCallback& on_epoch) {
  if (inputs.size() != targets.size()) throw ShapeError("fd_unet training: inputs and targets differ in count");
  const std::size_t s = net.config().image_size;
  std::vector<Group> groups{make_group("params", net.params())};
  return run_epochs(
      "fd_unet", net.config(), config, inputs.size(), checkpoint_dir, groups,
      [&](std::span<const std::size_t> batch, std::mt19937_64&) {
        Tape<float> tape;
        const Var x = tape.constant(gather(inputs, batch, {1, s, s}));
        const Var y = tape.constant(gather(targets, batch, {1, s, s}));
        const Var loss = mse(tape, net.forward(tape, x), y);
        tape.backward(loss);
        return static_cast<double>(tape.value(loss).data[0]);
      },
      on_epoch);
}

TrainResult train_cip(CIPAutoencoder<float>& cip, std::span<const Sample> patches, const TrainConfig& config,
                      const fs::path& checkpoint_dir, const EpochCallback& on_epoch) {
  const std::size_t d = cip.config().input_dim();
  std::vector<Group> groups{make_group("params", cip.params())};
  return run_epochs(
      "cip", cip.config(), config, patches.size(), checkpoint_dir, groups,
      [&](std::span<const std::size_t> batch, std::mt19937_64&) {
        Tape<float> tape;
        const Var x = tape.constant(gather(patches, batch, {d}));
        const Var loss = mse(tape, cip.decode(tape, cip.encode(tape, x)), x);
        tape.backward(loss);
        return static_cast<double>(tape.value(loss).data[0]);
      },
      on_epoch);
}

TrainResult train_diffusion(ConditionalDenoiser<float>& denoiser, CIPAutoencoder<float>& cip,
                            std::span<const Sample> x0, std::span<const Sample> cond,
                            const diffusion::NoiseSchedule& sched, const TrainConfig& config,
                            const fs::path& checkpoint_dir, const EpochCallback& on_epoch) {
  if (x0.size() != cond.size()) throw ShapeError("diffusion training: x0 and cond differ in count");
  if (cip.config().code_dim() != denoiser.config().cond_dim)
    throw ConfigError("CIP output size " + std::to_string(cip.config().code_dim()) +
                      " does not match denoiser cond_dim " + std::to_string(denoiser.config().cond_dim));
  const std::size_t s = denoiser.config().image_size, d = cip.config().input_dim();
  if (s * s != d) throw ConfigError("CIP input size must equal the denoiser patch area");
  const std::size_t T = sched.steps();
  std::vector<Group> groups{make_group("denoiser", denoiser.params()),
                            make_group("cip", cip.params(), 0, cip.encoder_param_count())};
  nlohmann::json model = {{"denoiser", denoiser.config()}, {"cip", cip.config()}, {"schedule", sched}};
  return run_epochs(
      "diffusion", model, config, x0.size(), checkpoint_dir, groups,
      [&](std::span<const std::size_t> batch, std::mt19937_64& rng) {
        const std::size_t n = batch.size(), item = s * s;
        std::uniform_int_distribution<std::size_t> pick_t(1, T);
        std::normal_distribution<double> normal;
        std::vector<std::size_t> t(n);
        std::vector<double> eps(n * item);
        Tensor<float> x_t({n, 1, s, s});
        for (std::size_t i = 0; i < n; ++i) {
          t[i] = pick_t(rng);
          for (std::size_t j = 0; j < item; ++j) eps[i * item + j] = normal(rng);
          const std::vector<double> clean(x0[batch[i]].begin(), x0[batch[i]].end());
          if (clean.size() != item) throw ShapeError("diffusion training: x0 patch has the wrong size");
          const auto xt = diffusion::q_sample(clean, t[i], std::span<const double>(eps).subspan(i * item, item), sched);
          std::copy(xt.begin(), xt.end(), x_t.ptr() + i * item);
        }
        Tape<float> tape;
        const Var code = cip.encode(tape, tape.constant(gather(cond, batch, {d})));
        const Var eps_hat = denoiser.forward(tape, tape.constant(std::move(x_t)), code, t);
        const Var target = tape.constant(Tensor<float>({n, 1, s, s}, std::vector<float>(eps.begin(), eps.end())));
        tape.backward(mse(tape, eps_hat, target));
        const auto& pred = tape.value(eps_hat).data;
        const std::vector<double> pred_d(pred.begin(), pred.end());
        return diffusion::loss_terms(eps, pred_d, t, sched);
      },
      on_epoch);
}

}  // namespace oat::nn
