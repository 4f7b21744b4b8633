#include "doctest.h"

#include "aepam/link.hpp"
#include "aepam/mixed_noise.hpp"
#include "aepam/network.hpp"
#include "aepam/surrogate.hpp"
#include "aepam/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

using namespace aepam;

namespace {

struct FdReport {
  double worst_rel = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Central differences on every parameter against the analytic gradient, with
// the channel noise frozen. Relative error uses max(|g|, |fd|) with a floor at
// 1e-6 of the largest gradient so exact zeros do not divide by zero.
FdReport check_all(Network net, ChannelSurrogate& channel, const std::vector<int>& symbols,
                   RandomStream& rng) {
  std::vector<double> g;
  compute_gradients(net, channel, symbols, rng, g);
  double gmax = 0.0;
  for (double v : g) gmax = std::max(gmax, std::abs(v));
  FdReport r;
  const double h = 1e-5;
  auto& p = net.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p[i];
    p[i] = keep + h;
    const double up = replay_loss(net, channel, symbols);
    p[i] = keep - h;
    const double dn = replay_loss(net, channel, symbols);
    p[i] = keep;
    const double fd = (up - dn) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6 * gmax});
    const double rel = std::abs(fd - g[i]) / denom;
    if (rel > r.worst_rel) {
      r.worst_rel = rel;
      r.worst_index = i;
    }
    ++r.checked;
  }
  return r;
}

std::vector<int> symbols_for(int n, int m, RandomStream& rng) {
  std::vector<int> s(static_cast<std::size_t>(n));
  for (int& v : s) v = rng.uniform_index(m);
  return s;
}

}  // namespace

TEST_CASE("finite-difference gradients through the memoryless channel") {
  for (int m : {4, 8}) {
    for (int w : {1, 5}) {
      RandomStream rng(100 + m + w);
      const auto net = Network::create(m, w, 15, rng);
      MemorylessChannel ch(split_noise(0.05, 0.4));
      const auto sym = symbols_for(96, m, rng);
      const auto r = check_all(net, ch, sym, rng);
      INFO("M=" << m << " W=" << w << " worst index " << r.worst_index);
      CHECK(r.checked == net.params().size());
      CHECK(r.worst_rel < 1e-4);
    }
  }
}

// Smallest shaped transmit power relative to the mean for this batch. Near
// zero the modulator's sqrt has unbounded curvature and a 1e-5 central
// difference stops being a valid oracle.
static double min_relative_power(const Network& net, const LinkConfig& cfg, const std::vector<int>& sym) {
  const auto enc = forward_encoder(net);
  std::vector<double> w;
  for (double s : enc.levels) w.push_back(s * s);
  const auto mapped = apply_extinction(w, cfg.extinction_ratio_db);
  std::vector<double> a;
  for (int k : sym) a.push_back(mapped[static_cast<std::size_t>(k)]);
  const auto p = shape_pulse(a, cfg);
  return *std::min_element(p.begin(), p.end());
}

TEST_CASE("finite-difference gradients through the waveform channel") {
  for (auto mode : {PulseMode::kRaisedCosine, PulseMode::kMatchedRrc}) {
    for (int w : {1, 5}) {
      LinkConfig cfg;
      cfg.pulse = mode;
      cfg.extinction_ratio_db = 5.0;
      cfg.wavelength_nm = 1271.0;
      cfg.length_km = 15.0;
      cfg.soa_gain_db = 10.0;
      cfg.rx_power_dbm = -20.0;
      RandomStream rng(200 + w);
      const auto net = Network::create(4, w, 15, rng);
      WaveformChannel ch(cfg);
      const auto sym = symbols_for(64, 4, rng);
      REQUIRE(min_relative_power(net, cfg, sym) > 0.05);
      const auto r = check_all(net, ch, sym, rng);
      INFO("mode " << static_cast<int>(mode) << " W=" << w << " worst index " << r.worst_index);
      CHECK(r.worst_rel < 1e-4);
    }
  }
}

TEST_CASE("scaling the raw encoder output is a null direction") {
  // s = u^2 / sqrt(mean u^4) is invariant to u -> c u, so the loss gradient
  // along the final encoder layer's own parameters vanishes
  RandomStream rng(17);
  const auto net = Network::create(4, 5, 15, rng);
  MemorylessChannel ch(split_noise(0.1, 0.5));
  const auto sym = symbols_for(256, 4, rng);
  std::vector<double> g;
  compute_gradients(net, ch, sym, rng, g);
  const auto& last = net.layers()[2];
  double dir = 0.0, norm = 0.0;
  for (std::size_t i = last.w_offset; i < last.b_offset + 1; ++i) {
    dir += g[i] * net.params()[i];
    norm += g[i] * g[i];
  }
  CHECK(norm > 0.0);
  CHECK(std::abs(dir) < 1e-10 * std::sqrt(norm));
}

TEST_CASE("gradients are deterministic for a seed") {
  MemorylessChannel ch(split_noise(0.1, 0.5));
  RandomStream init(3);
  const auto net = Network::create(4, 1, 15, init);
  std::vector<int> sym(128);
  RandomStream srng(4);
  for (int& s : sym) s = srng.uniform_index(4);
  std::vector<double> a, b;
  RandomStream r1(9), r2(9);
  const double la = compute_gradients(net, ch, sym, r1, a);
  const double lb = compute_gradients(net, ch, sym, r2, b);
  CHECK(la == lb);
  CHECK(a == b);
}

TEST_CASE("surrogate adjoints match perturbed levels") {
  RandomStream rng(21);
  LinkConfig cfg;
  cfg.length_km = 20.0;
  cfg.wavelength_nm = 1271.0;
  cfg.soa_gain_db = 8.0;
  cfg.rx_power_dbm = -16.0;
  std::unique_ptr<ChannelSurrogate> chans[] = {std::make_unique<MemorylessChannel>(split_noise(0.05, 0.3)),
                                                std::make_unique<WaveformChannel>(cfg)};
  for (auto& ch : chans) {
    std::vector<double> levels{0.3, 0.7, 1.1, 1.4};
    const auto sym = symbols_for(64, 4, rng);
    std::vector<double> weights(64);
    for (double& v : weights) v = rng.gaussian();
    auto objective = [&](const std::vector<double>& lv) {
      const auto y = ch->evaluate(lv);
      double acc = 0.0;
      for (std::size_t k = 0; k < y.size(); ++k) acc += weights[k] * y[k];
      return acc;
    };
    ch->forward(levels, sym, rng);
    const auto g = ch->backward(weights);
    for (std::size_t j = 0; j < levels.size(); ++j) {
      auto up = levels, dn = levels;
      up[j] += 1e-6;
      dn[j] -= 1e-6;
      const double fd = (objective(up) - objective(dn)) / 2e-6;
      CHECK(g[j] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}
