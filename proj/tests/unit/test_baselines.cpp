#include "doctest.h"

#include "aepam/baselines.hpp"
#include "aepam/metrics.hpp"
#include "aepam/mixed_noise.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <vector>

using namespace aepam;

namespace {

std::vector<double> pam_stream(std::size_t n, RandomStream& rng) {
  std::vector<double> x(n);
  for (double& v : x) v = static_cast<double>(rng.uniform_index(4));
  return x;
}

// y[k] = sum_j h[j] x[k - j], circular
std::vector<double> convolve(const std::vector<double>& x, const std::vector<double>& h) {
  const std::size_t n = x.size();
  std::vector<double> y(n, 0.0);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < h.size(); ++j) y[k] += h[j] * x[(k + n - j) % n];
  return y;
}

}  // namespace

TEST_CASE("mmse on an identity channel is a delta") {
  RandomStream rng(1);
  const auto x = pam_stream(4000, rng);
  const auto f = mmse_train(x, x, 15);
  REQUIRE(f.taps.size() == 15);
  for (std::size_t j = 0; j < f.taps.size(); ++j) {
    CHECK(std::abs(f.taps[j] - (static_cast<int>(j) == f.reference ? 1.0 : 0.0)) < 1e-6);
  }
  int first = -1;
  const auto y = mmse_apply(f, x, &first);
  REQUIRE(first >= 0);
  for (std::size_t k = 0; k < y.size(); ++k) CHECK(std::abs(y[k] - x[k + static_cast<std::size_t>(first)]) < 1e-6);
}

TEST_CASE("mmse inverts a known three-tap channel") {
  RandomStream rng(2);
  const auto x = pam_stream(8000, rng);
  const auto r = convolve(x, {1.0, 0.3, 0.1});
  const auto f = mmse_train_circular(r, x, 15);
  const auto y = mmse_apply_circular(f, r);
  CHECK(mean_squared_error(y, x) < 1e-6);

  // linear (edge-trimmed) training gives the same answer on interior symbols
  const auto g = mmse_train(r, x, 15);
  int first = 0;
  const auto z = mmse_apply(g, r, &first);
  std::vector<double> ref(x.begin() + first, x.begin() + first + static_cast<long>(z.size()));
  CHECK(mean_squared_error(z, ref) < 1e-6);
}

TEST_CASE("mmse on pure noise gives near-zero taps") {
  RandomStream rng(3);
  const auto x = pam_stream(20000, rng);
  std::vector<double> noise(x.size());
  for (double& v : noise) v = rng.gaussian();
  const auto f = mmse_train(noise, x, 9);
  // least squares against an independent reference; the mean is absorbed by
  // the taps only through the noise mean, so each tap is O(mean(x) / sqrt(n))
  for (double t : f.taps) CHECK(std::abs(t) < 6.0 * 1.5 / std::sqrt(20000.0));
}

TEST_CASE("mmse apply: linearity, delta taps, training residual") {
  RandomStream rng(4);
  std::vector<double> a(500), b(500);
  for (double& v : a) v = rng.gaussian();
  for (double& v : b) v = rng.gaussian();
  FirTaps f;
  for (int j = 0; j < 7; ++j) f.taps.push_back(rng.gaussian());
  f.reference = 3;
  std::vector<double> mix(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) mix[i] = 2.0 * a[i] - 0.5 * b[i];
  const auto ya = mmse_apply(f, a), yb = mmse_apply(f, b), ym = mmse_apply(f, mix);
  for (std::size_t i = 0; i < ym.size(); ++i) CHECK(std::abs(ym[i] - (2.0 * ya[i] - 0.5 * yb[i])) < 1e-12);

  FirTaps delta{{0, 0, 1, 0, 0}, 2, 1};
  const auto yd = mmse_apply_circular(delta, a);
  CHECK(yd == a);

  const auto x = pam_stream(3000, rng);
  auto r = convolve(x, {0.8, 0.4});
  for (double& v : r) v += 0.05 * rng.gaussian();
  const auto t = mmse_train_circular(r, x, 11);
  const double e1 = mean_squared_error(mmse_apply_circular(t, r), x);
  const double e2 = mean_squared_error(mmse_apply_circular(t, r), x);
  CHECK(e1 == e2);
  CHECK_THROWS(mmse_apply(f, std::vector<double>(4, 0.0)));
}

TEST_CASE("mmse training error is non-increasing in the tap count") {
  RandomStream rng(5);
  const auto x = pam_stream(6000, rng);
  auto r = convolve(x, {0.2, 1.0, 0.5, -0.2});
  for (double& v : r) v += 0.1 * rng.gaussian();
  double prev = 1e300;
  for (int n = 1; n <= 21; n += 2) {
    const auto f = mmse_train_circular(r, x, n);
    const double e = mean_squared_error(mmse_apply_circular(f, r), x);
    CHECK(e <= prev * (1.0 + 1e-9));
    prev = e;
  }
}

TEST_CASE("mmse fractional spacing and input checks") {
  RandomStream rng(6);
  const auto x = pam_stream(4000, rng);
  std::vector<double> r2(2 * x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    r2[2 * k] = 0.9 * x[k] + 0.2 * x[(k + x.size() - 1) % x.size()];
    r2[2 * k + 1] = 0.5 * (x[k] + x[(k + 1) % x.size()]) + 1e-3 * rng.gaussian();
  }
  const auto f = mmse_train_circular(r2, x, 19, 2);
  CHECK(f.samples_per_symbol == 2);
  CHECK(mean_squared_error(mmse_apply_circular(f, r2), x) < 1e-5);
  // odd samples that are exact averages of even ones carry no new direction
  std::vector<double> dep(2 * x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    dep[2 * k] = x[k];
    dep[2 * k + 1] = 0.5 * (x[k] + x[(k + 1) % x.size()]);
  }
  CHECK_THROWS_AS(mmse_train_circular(dep, x, 19, 2), std::runtime_error);
  CHECK_THROWS(mmse_train(std::vector<double>(100, 1.0), std::vector<double>(100, 1.0), 15));
  CHECK_THROWS(mmse_train(std::vector<double>(2000, 1.0), std::vector<double>(2000, 1.0), 15));
}

TEST_CASE("iterative construction on an equal-variance gaussian channel") {
  // thermal only: t_i = P_i + sigma z, P_{i+1} = t_i + sigma z with Q(z) = target
  const double sigma = 0.05;
  AnalyticTailSampler sampler(noise_from_variances(0.0, sigma * sigma));
  IterativeOptions opt;
  opt.dynamic_range = 4.0;
  const auto r = iterative_optimize(sampler, opt);
  const double z = -boost::math::quantile(boost::math::normal(), opt.ser_target);
  REQUIRE(r.raw_levels.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(r.raw_levels[static_cast<std::size_t>(i)] == doctest::Approx(2.0 * i * sigma * z).epsilon(1e-6));
  for (int i = 0; i < 3; ++i) {
    CHECK(r.raw_thresholds[static_cast<std::size_t>(i)] == doctest::Approx((2.0 * i + 1.0) * sigma * z).epsilon(1e-6));
    CHECK(sampler.upper_tail(r.raw_levels[static_cast<std::size_t>(i)], r.raw_thresholds[static_cast<std::size_t>(i)]) == doctest::Approx(opt.ser_target).epsilon(1e-6));
    CHECK(sampler.lower_tail(r.raw_levels[static_cast<std::size_t>(i) + 1], r.raw_thresholds[static_cast<std::size_t>(i)]) == doctest::Approx(opt.ser_target).epsilon(1e-4));
  }
  double mean = 0.0;
  for (double v : r.levels) mean += v;
  CHECK(mean / 4.0 == doctest::Approx(1.0));
  CHECK(r.thresholds.values[1] * r.scale == doctest::Approx(r.raw_thresholds[1]));
}

TEST_CASE("iterative construction honours the extinction floor") {
  AnalyticTailSampler sampler(noise_from_variances(0.0, 0.01));
  IterativeOptions opt;
  opt.er_floor = 0.1;
  const auto r = iterative_optimize(sampler, opt);
  CHECK(r.raw_levels.front() == doctest::Approx(0.1 * r.raw_levels.back()).epsilon(1e-9));
  CHECK(r.floor_iterations > 1);

  opt.dynamic_range = 0.5;
  CHECK_THROWS_AS(iterative_optimize(sampler, opt), std::runtime_error);
}

TEST_CASE("ase-dominated iterative levels spread with amplitude, boundary errors on target") {
  const double s2a = 0.004, s2t = 1e-4;
  MonteCarloTailSampler sampler(s2a, s2t, false, 1000000, 7);
  IterativeOptions opt;
  const auto r = iterative_optimize(sampler, opt);
  for (int i = 1; i < 3; ++i) {
    const auto k = static_cast<std::size_t>(i);
    CHECK(r.raw_levels[k + 1] - r.raw_levels[k] > r.raw_levels[k] - r.raw_levels[k - 1]);
  }
  // fresh draws: each boundary crossing probability equals the target within 20%
  RandomStream rng(99);
  const long n = 2000000;
  for (std::size_t i = 0; i < 3; ++i) {
    long up = 0, down = 0;
    const double t = r.raw_thresholds[i];
    const double a = std::sqrt(r.raw_levels[i]);
    const double b = std::sqrt(r.raw_levels[i + 1]);
    for (long k = 0; k < n; ++k) {
      auto draw = [&](double amp) {
        const double re = amp + std::sqrt(0.5 * s2a) * rng.gaussian();
        const double im = std::sqrt(0.5 * s2a) * rng.gaussian();
        return re * re + im * im + std::sqrt(s2t) * rng.gaussian();
      };
      up += draw(a) > t;
      down += draw(b) < t;
    }
    CHECK(static_cast<double>(up) / n == doctest::Approx(opt.ser_target).epsilon(0.2));
    CHECK(static_cast<double>(down) / n == doctest::Approx(opt.ser_target).epsilon(0.2));
  }
}

TEST_CASE("tail samplers agree in the in-phase limit") {
  const auto p = noise_from_variances(0.02, 0.001);
  AnalyticTailSampler exact(p);
  MonteCarloTailSampler mc(0.02, 0.001, true, 1000000, 3);
  for (double d : {0.2, 1.0, 2.0}) {
    for (double t : {0.5 * d, d, 1.5 * d}) {
      const double e = exact.upper_tail(d, t);
      const double se = std::sqrt(e * (1.0 - e) / 1e6);
      CHECK(std::abs(mc.upper_tail(d, t) - e) < 5.0 * se + 1e-6);
    }
    const double q = exact.upper_quantile(d, 1e-3, 10.0);
    CHECK(exact.upper_tail(d, q) == doctest::Approx(1e-3).epsilon(1e-6));
  }
}
