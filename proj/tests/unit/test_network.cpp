#include "doctest.h"

#include "aepam/network.hpp"
#include "aepam/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

using namespace aepam;

TEST_CASE("celu") {
  CHECK(celu(0.0) == 0.0);
  CHECK(celu(2.0) == 2.0);
  CHECK(celu(-1.0) == doctest::Approx(std::exp(-1.0) - 1.0).epsilon(1e-15));
  CHECK(celu(-1.0) == doctest::Approx(-0.63212).epsilon(1e-5));
  CHECK(celu_grad(0.5) == 1.0);
  CHECK(celu_grad(-2.0) == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("softmax") {
  const auto u = softmax(std::vector<double>{0, 0, 0, 0});
  for (double p : u) CHECK(p == doctest::Approx(0.25).epsilon(1e-15));
  const auto a = softmax(std::vector<double>{1, 0, 0, 0});
  CHECK(a[0] == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 3.0)).epsilon(1e-14));
  CHECK(a[0] == doctest::Approx(0.47536).epsilon(1e-5));

  RandomStream rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> s(8);
    for (double& v : s) v = 20.0 * rng.gaussian();
    auto shifted = s;
    for (double& v : shifted) v += 700.0;
    const auto p = softmax(s);
    const auto q = softmax(shifted);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1.0) < 1e-12);
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] >= 0.0);
      CHECK(p[i] <= 1.0);
      CHECK(q[i] == doctest::Approx(p[i]).epsilon(1e-12).scale(1e-300));
    }
  }
}

TEST_CASE("cross entropy") {
  CHECK(cross_entropy(std::vector<double>{0, 1, 0, 0}, 1) == 0.0);
  CHECK(cross_entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 2) == doctest::Approx(std::log(4.0)));
  CHECK(cross_entropy(std::vector<double>{0.5, 0.5}, 0) == doctest::Approx(0.69315).epsilon(1e-5));
  CHECK(cross_entropy(std::vector<double>{1, 0}, 1) == doctest::Approx(-std::log(kLogFloor)));
}

TEST_CASE("table-one layer shapes") {
  RandomStream rng(3);
  const auto net = Network::create(4, 5, 15, rng);
  const auto& L = net.layers();
  REQUIRE(L.size() == 6);
  const int dims[6][2] = {{4, 15}, {15, 15}, {15, 1}, {5, 15}, {15, 15}, {15, 4}};
  for (int i = 0; i < 6; ++i) {
    CHECK(L[static_cast<std::size_t>(i)].in == dims[i][0]);
    CHECK(L[static_cast<std::size_t>(i)].out == dims[i][1]);
  }
  CHECK(net.params().size() == (4 * 15 + 15) + (15 * 15 + 15) + (15 + 1) + (5 * 15 + 15) + (15 * 15 + 15) + (15 * 4 + 4));
  // glorot bounds, zero biases
  for (const auto& l : L) {
    const double lim = std::sqrt(6.0 / (l.in + l.out));
    for (int i = 0; i < l.in * l.out; ++i) CHECK(std::abs(net.params()[l.w_offset + static_cast<std::size_t>(i)]) <= lim);
    for (int i = 0; i < l.out; ++i) CHECK(net.params()[l.b_offset + static_cast<std::size_t>(i)] == 0.0);
  }
  CHECK_THROWS(Network::create(1, 1, 15, rng));
}

TEST_CASE("encoder output is nonnegative with unit mean square") {
  RandomStream rng(4);
  for (int m : {4, 8}) {
    auto net = Network::create(m, 1, 15, rng);
    const auto t = forward_encoder(net);
    double ms = 0.0;
    for (double s : t.levels) {
      CHECK(s >= 0.0);
      ms += s * s;
    }
    CHECK(ms / m == doctest::Approx(1.0).epsilon(1e-12));
    const auto again = forward_encoder(net);
    CHECK(again.levels == t.levels);
  }

  // symbols 0 and 1 see identical input weights
  auto net = Network::create(4, 1, 15, rng);
  const auto& first = net.layers()[0];
  for (int o = 0; o < first.out; ++o) {
    net.params()[first.w_offset + static_cast<std::size_t>(o * first.in + 1)] =
        net.params()[first.w_offset + static_cast<std::size_t>(o * first.in)];
  }
  const auto t = forward_encoder(net);
  CHECK(t.levels[0] == t.levels[1]);

  // zero final layer: every raw output equal
  const auto& last = net.layers()[2];
  for (int i = 0; i < last.in; ++i) net.params()[last.w_offset + static_cast<std::size_t>(i)] = 0.0;
  net.params()[last.b_offset] = 0.3;
  const auto z = forward_encoder(net);
  for (double u : z.raw) CHECK(u == z.raw[0]);
  for (double s : z.levels) CHECK(s == doctest::Approx(1.0));
}

TEST_CASE("extracted constellation is sorted with a consistent rank") {
  RandomStream rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto net = Network::create(8, 1, 15, rng);
    const auto raw = forward_encoder(net).levels;
    const auto ex = extract_constellation(net);
    const auto& lv = ex.constellation.levels();
    for (std::size_t i = 1; i < lv.size(); ++i) CHECK(lv[i] > lv[i - 1]);
    for (std::size_t s = 0; s < raw.size(); ++s) {
      CHECK(lv[static_cast<std::size_t>(ex.rank[s])] == doctest::Approx(raw[s]).epsilon(1e-12));
    }
  }
}

TEST_CASE("decoder windows") {
  RandomStream rng(6);
  const auto w1 = Network::create(4, 1, 15, rng);
  CHECK(decoder_scores(w1, std::vector<double>{0.7}).size() == 4);
  const auto w5 = Network::create(4, 5, 15, rng);
  const std::vector<double> win{0.1, 0.5, 0.9, 1.3, 0.2};
  const auto s = decoder_scores(w5, win);
  CHECK(s.size() == 4);
  auto perm = win;
  std::reverse(perm.begin(), perm.end());
  const auto sp = decoder_scores(w5, perm);
  double diff = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) diff += std::abs(s[i] - sp[i]);
  CHECK(diff > 1e-6);
  CHECK_THROWS(decoder_scores(w5, std::vector<double>{1.0}));
  CHECK_THROWS(forward_decoder(w5, std::vector<double>(7, 0.0)));

  // batch forward agrees with single-window scoring
  std::vector<double> batch;
  for (int i = 0; i < 3; ++i) batch.insert(batch.end(), win.begin(), win.end());
  const auto t = forward_decoder(w5, batch);
  const auto p = softmax(s);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) CHECK(t.probs[static_cast<std::size_t>(i * 4 + j)] == doctest::Approx(p[static_cast<std::size_t>(j)]));
}

TEST_CASE("adam") {
  RandomStream rng(7);
  auto net = Network::create(4, 1, 15, rng);
  const auto p0 = net.params();
  std::vector<double> g(p0.size(), 0.0);
  AdamConfig cfg;
  adam_step(net, g, cfg);
  CHECK(net.params() == p0);
  CHECK(net.adam().step == 1);
  adam_step(net, g, cfg);
  CHECK(net.adam().step == 2);

  // constant gradient: bias-corrected moments give steps of exactly lr * sign(g)
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (i % 2 ? 1.0 : -1.0) * (1e-3 + 1e-3 * static_cast<double>(i));
  auto fresh = Network::create(4, 1, 15, rng);
  for (int k = 0; k < 200; ++k) {
    const auto before = fresh.params();
    adam_step(fresh, g, cfg);
    if (k < 195) continue;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double step = before[i] - fresh.params()[i];
      CHECK(step == doctest::Approx(cfg.learning_rate * (g[i] > 0 ? 1.0 : -1.0)).epsilon(1e-4));
    }
  }
  CHECK_THROWS(adam_step(fresh, std::vector<double>(3, 0.0), cfg));
}

TEST_CASE("multiplication count and instrumented decoder") {
  CHECK(count_multiplications(4) == 151);
  CHECK(count_multiplications(8) == 227);
  CHECK(count_multiplications(2) == 113);
  CHECK(count_multiplications(4, 1, 15) == 15 + 60 + 16);

  RandomStream rng(8);
  for (int m : {4, 8}) {
    const auto net = Network::create(m, 5, 15, rng);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> win(5);
      for (double& v : win) v = 2.0 * rng.gaussian();
      MultiplyTally tally;
      const int got = decoder_classify_instrumented(net, win, tally);
      CHECK(got == decoder_classify(net, win));
      CHECK(tally.counted() == count_multiplications(m));
      CHECK(tally.hidden_layer == 225);
    }
  }
}

TEST_CASE("checkpoint round trip") {
  RandomStream rng(9);
  auto net = Network::create(8, 5, 15, rng);
  std::vector<double> g(net.params().size(), 0.01);
  adam_step(net, g, {});
  const auto path = std::filesystem::temp_directory_path() / "aepam_ckpt_test.bin";
  save_checkpoint(path, net, {{"note", "unit"}});
  nlohmann::json meta;
  const auto back = load_checkpoint(path, &meta);
  CHECK(back.params() == net.params());
  CHECK(back.adam().m == net.adam().m);
  CHECK(back.adam().v == net.adam().v);
  CHECK(back.adam().step == 1);
  CHECK(back.order() == 8);
  CHECK(back.window() == 5);
  CHECK(meta.at("note") == "unit");

  // corrupt magic
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  CHECK_THROWS(load_checkpoint(path));
  std::filesystem::remove(path);
  CHECK_THROWS(load_checkpoint(path));
}
