#include <doctest.h>

#include <filesystem>
#include <random>

#include "oat/core/error.hpp"
#include "oat/diffusion/schedule.hpp"
#include "oat/nn/checkpoint.hpp"
#include "oat/nn/train.hpp"
#include "tiny_models.hpp"

using namespace oat;
using namespace oat::nn;
namespace fs = std::filesystem;

namespace {

std::vector<Sample> random_samples(std::size_t count, std::size_t dim, std::uint64_t seed, float lo = 0, float hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<Sample> out(count, Sample(dim));
  for (auto& s : out)
    for (auto& v : s) v = u(rng);
  return out;
}

template <typename T>
std::vector<std::vector<T>> snapshot(const ParamSet<T>& ps) {
  std::vector<std::vector<T>> out;
  for (std::size_t i = 0; i < ps.size(); ++i) out.push_back(ps[i].value.data);
  return out;
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("oat_unit_train_" + name);
  fs::remove_all(dir);
  return dir;
}

DenoiserConfig small_denoiser() {
  auto c = oat::testing::tiny_denoiser();
  c.resblocks_per_scale = 1;
  return c;
}

}  // namespace

TEST_CASE("zero epochs leave every model unchanged") {
  TrainConfig cfg;
  cfg.epochs = 0;
  CIPAutoencoder<float> cip(oat::testing::tiny_cip(), 1);
  const auto before = snapshot(cip.params());
  const auto r = train_cip(cip, random_samples(8, 16, 1), cfg, {});
  CHECK(r.epoch_loss.empty());
  CHECK(snapshot(cip.params()) == before);

  ConditionalDenoiser<float> den(small_denoiser(), 2);
  CIPAutoencoder<float> enc(CIPConfig{{64, 16, 8}}, 3);
  const auto den_before = snapshot(den.params());
  const auto sched = diffusion::make_linear_schedule(50, 1e-4, 0.02);
  train_diffusion(den, enc, random_samples(4, 64, 2, -1, 1), random_samples(4, 64, 3), sched, cfg, {});
  CHECK(snapshot(den.params()) == den_before);
}

TEST_CASE("cip converges on a single repeated patch") {
  const auto one = random_samples(1, 16, 4);
  const std::vector<Sample> data(32, one[0]);
  CIPAutoencoder<float> cip(oat::testing::tiny_cip(), 5);
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.optimizer.learning_rate = 1e-3;
  const auto r = train_cip(cip, data, cfg, {});
  CHECK(r.epoch_loss.back() < 1e-3);
}

TEST_CASE("cip loss decreases over 20 epochs on a toy set") {
  CIPAutoencoder<float> cip(CIPConfig{{64, 32, 16, 8}}, 6);
  TrainConfig cfg;
  cfg.optimizer.learning_rate = 1e-3;
  const auto r = train_cip(cip, random_samples(64, 64, 7), cfg, {});
  REQUIRE(r.epoch_loss.size() == 20);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
}

TEST_CASE("fd_unet training lowers the reconstruction error") {
  // the target is a smoothed copy of the input, which the network can learn
  const std::size_t s = 8;
  auto inputs = random_samples(32, s * s, 8);
  std::vector<Sample> targets(inputs.size(), Sample(s * s));
  for (std::size_t n = 0; n < inputs.size(); ++n)
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        float acc = 0;
        int cnt = 0;
        for (int di = -1; di <= 1; ++di)
          for (int dj = -1; dj <= 1; ++dj) {
            const int y = static_cast<int>(i) + di, x = static_cast<int>(j) + dj;
            if (y < 0 || x < 0 || y >= static_cast<int>(s) || x >= static_cast<int>(s)) continue;
            acc += inputs[n][y * s + x];
            ++cnt;
          }
        targets[n][i * s + j] = acc / cnt;
      }
  FDUNet<float> net(oat::testing::tiny_fdunet(), 9);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.batch = 8;
  cfg.optimizer.learning_rate = 1e-3;
  const auto r = train_fdunet(net, inputs, targets, cfg, {});
  CHECK(r.epoch_loss.back() < 0.5 * r.epoch_loss.front());
}

TEST_CASE("diffusion training is reproducible and resumes bit-exactly") {
  const auto sched = diffusion::make_linear_schedule(50, 1e-4, 0.02);
  const auto x0 = random_samples(24, 64, 10, -1, 1);
  const auto cond = random_samples(24, 64, 11);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 8;
  cfg.seed = 42;
  cfg.optimizer.learning_rate = 1e-3;

  auto run = [&](const fs::path& dir, std::size_t epochs) {
    ConditionalDenoiser<float> den(small_denoiser(), 12);
    CIPAutoencoder<float> cip(CIPConfig{{64, 16, 8}}, 13);
    auto c = cfg;
    c.epochs = epochs;
    const auto r = train_diffusion(den, cip, x0, cond, sched, c, dir);
    return std::make_tuple(r, snapshot(den.params()), snapshot(cip.params()));
  };
  const auto [r1, d1, c1] = run({}, 2);
  const auto [r2, d2, c2] = run({}, 2);
  CHECK(r1.epoch_loss == r2.epoch_loss);
  CHECK(d1 == d2);
  CHECK(c1 == c2);

  const auto dir = scratch("diffusion");
  run(dir, 1);
  const auto [r3, d3, c3] = run(dir, 2);
  CHECK(r3.resumed_from_epoch == 1);
  CHECK(r3.epoch_loss == r1.epoch_loss);
  CHECK(d3 == d1);
  CHECK(c3 == c1);

  // the joint update reaches the encoder but not the decoder
  CIPAutoencoder<float> fresh(CIPConfig{{64, 16, 8}}, 13);
  const auto initial = snapshot(fresh.params());
  CHECK(c1[0] != initial[0]);
  CHECK(c1.back() == initial.back());

  auto other = cfg;
  other.batch = 4;
  ConditionalDenoiser<float> den(small_denoiser(), 12);
  CIPAutoencoder<float> cip(CIPConfig{{64, 16, 8}}, 13);
  CHECK_THROWS_AS(train_diffusion(den, cip, x0, cond, sched, other, dir), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("training rejects empty data and mismatched conditioning") {
  TrainConfig cfg;
  CIPAutoencoder<float> cip(oat::testing::tiny_cip(), 1);
  CHECK_THROWS_AS(train_cip(cip, std::vector<Sample>{}, cfg, {}), ConfigError);
  ConditionalDenoiser<float> den(small_denoiser(), 2);
  const auto sched = diffusion::make_linear_schedule(50, 1e-4, 0.02);
  CHECK_THROWS_AS(train_diffusion(den, cip, random_samples(2, 64, 1), random_samples(2, 16, 1), sched, cfg, {}),
                  ConfigError);
}

TEST_CASE("divergence aborts and keeps the previous checkpoint") {
  const auto dir = scratch("diverge");
  CIPAutoencoder<float> cip(oat::testing::tiny_cip(), 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  auto data = random_samples(8, 16, 2);
  train_cip(cip, data, cfg, dir);
  data[3][0] = std::numeric_limits<float>::infinity();
  cfg.epochs = 2;
  CHECK_THROWS_AS(train_cip(cip, data, cfg, dir), NumericalError);
  CHECK(read_json(dir / "meta.json").at("epochs_completed") == 1);
  fs::remove_all(dir);
}
