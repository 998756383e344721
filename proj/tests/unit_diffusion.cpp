#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include <nlohmann/json.hpp>

#include "oat/core/error.hpp"
#include "oat/diffusion/sampler.hpp"
#include "oat/diffusion/schedule.hpp"
#include "oat/diffusion/steps.hpp"

using namespace oat;
using namespace oat::diffusion;

namespace {

NoiseSchedule two_step() {
  // linear schedule with beta = (0.1, 0.2)
  return make_linear_schedule(2, 0.1, 0.2);
}

std::vector<double> randn(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

// The exact noise that maps x0 to x_t, i.e. a perfect denoiser for one target.
EpsilonModel oracle_denoiser(const std::vector<double>& x0, const NoiseSchedule& s) {
  return [x0, &s](std::span<const double> x, std::size_t t, std::span<double> eps) {
    const double a = std::sqrt(s.alpha_bar(t)), b = std::sqrt(1.0 - s.alpha_bar(t));
    for (std::size_t i = 0; i < x.size(); ++i) eps[i] = (x[i] - a * x0[i % x0.size()]) / b;
  };
}

// Bayes-optimal eps for data drawn per coordinate from an equal mixture of
// N(-0.6, 0.1^2) and N(0.6, 0.1^2); stands in for a fully trained model.
EpsilonModel mixture_denoiser(const NoiseSchedule& s) {
  return [&s](std::span<const double> x, std::size_t t, std::span<double> eps) {
    const double ab = s.alpha_bar(t), sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    const double var = ab * 0.01 + (1.0 - ab);
    for (std::size_t i = 0; i < x.size(); ++i) {
      double num = 0, den = 0;
      for (double mu : {-0.6, 0.6}) {
        const double m = sa * mu;
        const double w = std::exp(-(x[i] - m) * (x[i] - m) / (2 * var));
        num += w * sb * (x[i] - m) / var;
        den += w;
      }
      eps[i] = num / den;
    }
  };
}

double mse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST_CASE("linear schedule endpoints and invariants") {
  const auto s = make_linear_schedule(1000, 1e-4, 0.02);
  CHECK(s.steps() == 1000);
  CHECK(s.beta(1) == 1e-4);
  CHECK(s.beta(1000) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(s.alpha_bar(0) == 1.0);
  double prod = 1.0, logsum = 0.0;
  for (std::size_t t = 1; t <= 1000; ++t) {
    prod *= 1.0 - (1e-4 + (t - 1) * (0.02 - 1e-4) / 999.0);
    logsum += std::log1p(-s.beta(t));
    REQUIRE(s.beta(t) > 0.0);
    REQUIRE(s.beta(t) < 1.0);
    if (t > 1) REQUIRE(s.beta(t) >= s.beta(t - 1));
    REQUIRE(s.alpha_bar(t) < s.alpha_bar(t - 1));
    REQUIRE(std::abs(s.alpha_bar(t) - s.alpha_bar(t - 1) * s.alpha(t)) <= 1e-15 * s.alpha_bar(t));
    REQUIRE(std::abs(std::exp(logsum) - s.alpha_bar(t)) <= 1e-12 * s.alpha_bar(t));
    REQUIRE(s.sigma(t) == std::sqrt(s.beta(t)));
  }
  CHECK(s.alpha_bar(1000) < 5e-5);
  CHECK(std::abs(prod - s.alpha_bar(1000)) <= 1e-12 * prod);
  CHECK(make_linear_schedule(10, 1e-4, 0.02, SigmaMode::zero).sigma(5) == 0.0);
}

TEST_CASE("schedule edge cases") {
  const auto one = make_linear_schedule(1, 0.05, 0.05);
  CHECK(one.steps() == 1);
  CHECK(one.beta(1) == 0.05);
  CHECK_THROWS_AS(make_linear_schedule(0, 1e-4, 0.02), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.02), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(10, 0.03, 0.02), ConfigError);
  CHECK_THROWS_AS(make_linear_schedule(10, 1e-4, 1.0), ConfigError);
  const auto s = make_linear_schedule(200, 1e-4, 0.02);
  nlohmann::json j = s;
  const auto back = j.get<NoiseSchedule>();
  CHECK(back.alpha_bar(200) == s.alpha_bar(200));
}

TEST_CASE("q_sample") {
  const auto s = two_step();
  const std::vector<double> x0{1.0, -2.0}, zero{0.0, 0.0}, eps{1.0, 0.5};
  const auto a = q_sample(x0, 2, zero, s);
  CHECK(a[1] == doctest::Approx(-2.0 * std::sqrt(0.72)));
  const auto b = q_sample(zero, 2, eps, s);
  CHECK(b[1] == doctest::Approx(0.5 * std::sqrt(0.28)));
  const auto c = q_sample(std::vector<double>{1.0}, 2, std::vector<double>{1.0}, s);
  CHECK(c[0] == doctest::Approx(1.37769).epsilon(1e-5));
  CHECK_THROWS_AS(q_sample(x0, 3, eps, s), ConfigError);
  CHECK_THROWS_AS(q_sample(x0, 0, eps, s), ConfigError);
  CHECK_THROWS_AS(q_sample(x0, 1, std::vector<double>{1.0}, s), ShapeError);
}

TEST_CASE("q_sample mean and variance over 1e5 draws") {
  const auto s = make_linear_schedule(200, 1e-4, 0.02);
  std::mt19937_64 rng(7);
  const std::size_t n = 100000;
  for (std::size_t t : {1u, 50u, 200u}) {
    const auto eps = randn(n, rng);
    const std::vector<double> x0(n, 0.7);
    const auto x = q_sample(x0, t, eps, s);
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double var = 0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n - 1;
    const double tv = 1 - s.alpha_bar(t);
    CHECK(std::abs(mean - std::sqrt(s.alpha_bar(t)) * 0.7) <= 3 * std::sqrt(tv / n));
    CHECK(std::abs(var - tv) <= 3 * tv * std::sqrt(2.0 / (n - 1)));
  }
}

TEST_CASE("loss terms") {
  const auto s = make_linear_schedule(10, 1e-4, 0.02);
  std::mt19937_64 rng(3);
  const auto eps = randn(4 * 9, rng);
  const std::vector<std::size_t> ts{1, 4, 10, 7};
  CHECK(loss_terms(eps, eps, ts, s) == 0.0);
  std::vector<double> unit(4 * 9, 0.0), zero(4 * 9, 0.0);
  for (std::size_t b = 0; b < 4; ++b) unit[b * 9 + b] = 3.0;  // unit vector scaled by sqrt(9)
  CHECK(loss_terms(unit, zero, ts, s) == doctest::Approx(1.0));
  const auto pred = randn(4 * 9, rng);
  double ref = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) ref += (eps[i] - pred[i]) * (eps[i] - pred[i]);
  CHECK(std::abs(loss_terms(eps, pred, ts, s) - ref / 36.0) <= 1e-12);
  auto bad = pred;
  bad[5] = std::nan("");
  CHECK_THROWS_AS(loss_terms(eps, bad, ts, s), NumericalError);
  CHECK_THROWS_AS(loss_terms(eps, std::vector<double>(3), ts, s), ShapeError);
}

TEST_CASE("ancestral step") {
  const auto s = two_step();
  const auto r = ddpm_step(std::vector<double>{1.0}, std::vector<double>{0.5}, 2, std::vector<double>{0.0}, s);
  // 0.2 / sqrt(0.28) = 0.377964; (1 - 0.188982) / sqrt(0.8) = 0.906745
  CHECK(r[0] == doctest::Approx(0.906745).epsilon(1e-6));
  CHECK(r[0] == doctest::Approx((1 / std::sqrt(0.8)) * (1 - (0.2 / std::sqrt(0.28)) * 0.5)).epsilon(1e-15));
  const auto scaled = ddpm_step(std::vector<double>{2.0}, std::vector<double>{0.0}, 2, std::vector<double>{0.0}, s);
  CHECK(scaled[0] == doctest::Approx(2.0 / std::sqrt(0.8)));
  const auto last_a = ddpm_step(std::vector<double>{1.0}, std::vector<double>{0.3}, 1, std::vector<double>{5.0}, s);
  const auto last_b = ddpm_step(std::vector<double>{1.0}, std::vector<double>{0.3}, 1, std::vector<double>{-5.0}, s);
  CHECK(last_a == last_b);
  CHECK_THROWS_AS(ddpm_step(std::vector<double>{1.0}, std::vector<double>{0.3}, 3, {}, s), ConfigError);
}

TEST_CASE("ddim step with x0 clipping") {
  const auto s = make_linear_schedule(200, 1e-4, 0.02);
  const std::size_t t = 80, tp = 40;
  const double sa = std::sqrt(s.alpha_bar(t)), sb = std::sqrt(1 - s.alpha_bar(t));
  const double sp = std::sqrt(s.alpha_bar(tp)), dp = std::sqrt(1 - s.alpha_bar(tp));
  // x0 implied by (x, eps) is 0.5 for the first element and 3.0 for the second.
  const std::vector<double> eps{0.3, -0.7};
  const std::vector<double> x{sa * 0.5 + sb * eps[0], sa * 3.0 + sb * eps[1]};
  CHECK(ddim_step(x, eps, t, tp, 0.0, {}, s, true)[0] == ddim_step(x, eps, t, tp, 0.0, {}, s)[0]);
  const double e1 = (x[1] - sa * 1.0) / sb;
  CHECK(ddim_step(x, eps, t, tp, 0.0, {}, s, true)[1] == doctest::Approx(sp * 1.0 + dp * e1).epsilon(1e-14));
  CHECK(ddim_step(x, eps, t, 0, 0.0, {}, s, true)[1] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("ddim step inverts q_sample at eta 0") {
  const auto s = make_linear_schedule(200, 1e-4, 0.02);
  std::mt19937_64 rng(5);
  for (std::size_t t : {1u, 17u, 200u}) {
    const auto x0 = randn(16, rng), eps = randn(16, rng);
    const auto xt = q_sample(x0, t, eps, s);
    const auto back = ddim_step(xt, eps, t, 0, 0.0, {}, s);
    for (std::size_t i = 0; i < 16; ++i) REQUIRE(std::abs(back[i] - x0[i]) <= 1e-10);
    const auto z1 = randn(16, rng), z2 = randn(16, rng);
    if (t > 5) CHECK(ddim_step(xt, eps, t, t - 5, 0.0, z1, s) == ddim_step(xt, eps, t, t - 5, 0.0, z2, s));
  }
  CHECK_THROWS_AS(ddim_step(std::vector<double>{1}, std::vector<double>{1}, 5, 5, 0.0, {}, s), ConfigError);
  CHECK_THROWS_AS(ddim_step(std::vector<double>{1}, std::vector<double>{1}, 5, 2, 1.5, {}, s), ConfigError);
}

TEST_CASE("ddim with eta 1 on consecutive steps is the ancestral update with matched sigma") {
  const auto s = make_linear_schedule(100, 1e-4, 0.02);
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<std::size_t> td(1, 100);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t t = td(rng);
    const auto x = randn(1, rng), e = randn(1, rng), z = randn(1, rng);
    const double sigma = ddim_sigma(t, t - 1, 1.0, s);
    CHECK(sigma * sigma == doctest::Approx((1 - s.alpha_bar(t - 1)) / (1 - s.alpha_bar(t)) * s.beta(t)));
    const auto ddim = ddim_step(x, e, t, t - 1, 1.0, z, s);
    const auto mean = ddpm_step(x, e, t, std::vector<double>{0.0}, s);
    REQUIRE(std::abs(ddim[0] - (mean[0] + sigma * z[0])) <= 1e-10);
  }
}

TEST_CASE("inference timesteps") {
  std::vector<std::size_t> all(1000);
  std::iota(all.rbegin(), all.rend(), 1);
  CHECK(make_inference_timesteps(1000, 1000) == all);
  const auto five = make_inference_timesteps(1000, 5);
  REQUIRE(five.size() == 5);
  CHECK(five.front() == 1000);
  for (std::size_t i = 1; i < five.size(); ++i) CHECK(five[i] < five[i - 1]);
  CHECK(make_inference_timesteps(10, 5) == std::vector<std::size_t>{10, 8, 6, 4, 2});
  for (std::size_t T : {1u, 7u, 10u, 200u, 1000u})
    for (std::size_t nis = 1; nis <= T; nis += (T > 50 ? 13 : 1)) {
      const auto ts = make_inference_timesteps(T, nis);
      for (std::size_t j = 0; j < nis; ++j) REQUIRE(ts[j] == T - (j * T + nis - 1) / nis);
    }
  CHECK_THROWS_AS(make_inference_timesteps(10, 0), ConfigError);
  CHECK_THROWS_AS(make_inference_timesteps(10, 11), ConfigError);
}

TEST_CASE("sampling with a perfect denoiser returns the target") {
  const auto s = make_linear_schedule(200, 1e-4, 0.02);
  std::mt19937_64 rng(8);
  const auto x0 = randn(12, rng);
  for (std::size_t nis : {1u, 5u, 25u, 200u}) {
    const auto out = sample(oracle_denoiser(x0, s), 1, 12, s, {nis, 0.0, 42});
    for (std::size_t i = 0; i < 12; ++i) REQUIRE(std::abs(out[i] - x0[i]) <= 1e-8);
  }
}

TEST_CASE("sampling is reproducible, resumable and batch independent") {
  const auto s = make_linear_schedule(50, 1e-4, 0.02);
  const auto model = mixture_denoiser(s);
  for (double eta : {0.0, 1.0}) {
    const SamplerOptions opts{50, eta, 9};
    const auto a = sample(model, 3, 8, s, opts);
    CHECK(a == sample(model, 3, 8, s, opts));
    auto st = sampler_init(3, 8, s, opts);
    sampler_run(st, model, s, opts, 17);
    CHECK_FALSE(st.done());
    auto copy = st;
    sampler_run(st, model, s, opts);
    CHECK(st.done());
    CHECK(st.x == a);
    sampler_run(copy, model, s, opts);
    CHECK(copy.x == a);
    const auto second = sample(model, 1, 8, s, opts, 1);
    CHECK(std::equal(second.begin(), second.end(), a.begin() + 8));
  }
}

TEST_CASE("more inference steps converge towards the fine trajectory") {
  const auto s = make_linear_schedule(200, 1e-4, 0.02);
  const auto model = mixture_denoiser(s);
  const auto ref = sample(model, 64, 16, s, {100, 0.0, 3});
  const auto mid = sample(model, 64, 16, s, {25, 0.0, 3});
  const auto coarse = sample(model, 64, 16, s, {5, 0.0, 3});
  CHECK(mid != ref);
  CHECK(mse(mid, ref) < mse(coarse, ref));
}

TEST_CASE("model range mapping") {
  const std::vector<double> x{0.0, 0.25, 1.0};
  CHECK(to_model_range(x) == std::vector<double>{-1.0, -0.5, 1.0});
  CHECK(from_model_range(to_model_range(x)) == x);
}
