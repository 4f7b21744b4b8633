#include "doctest.h"

#include "aepam/constellation.hpp"
#include "aepam/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

using namespace aepam;

namespace {

int hamming(const std::string& a, const std::string& b) {
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

}  // namespace

TEST_CASE("gray labels") {
  CHECK(gray_map(4) == std::vector<std::string>{"00", "01", "11", "10"});
  CHECK(gray_map(8) == std::vector<std::string>{"000", "001", "011", "010", "110", "111", "101", "100"});
  CHECK_THROWS_AS(gray_map(3), std::invalid_argument);
  for (int m : {4, 8}) {
    const auto g = gray_map(m);
    for (std::size_t i = 1; i < g.size(); ++i) CHECK(hamming(g[i - 1], g[i]) == 1);
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t j = i + 1; j < g.size(); ++j) CHECK(g[i] != g[j]);
  }
}

TEST_CASE("normalize scales to unit mean square") {
  const std::vector<double> raw{0, 1, 2, 3};
  const auto n = normalize_levels(raw);
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK(n[i] == doctest::Approx(raw[i] / std::sqrt(3.5)).epsilon(1e-15));
  const auto flat = normalize_levels(std::vector<double>{2, 2, 2, 2});
  for (double v : flat) CHECK(v == doctest::Approx(1.0));

  // measured levels: mean square is 1.4888, so they are rescaled, ratios kept
  const std::vector<double> meas{0, 0.98, 1.39, 1.75};
  const auto m = normalize_levels(meas);
  CHECK(moments(m).es2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m[2] / m[1] == doctest::Approx(1.39 / 0.98));
  // relative detected powers stay close to the measured 0, 0.97, 1.92, 3.06
  CHECK(m[1] * m[1] / (m[3] * m[3]) == doctest::Approx(0.97 / 3.06).epsilon(0.02));
  CHECK(m[2] * m[2] / (m[3] * m[3]) == doctest::Approx(1.92 / 3.06).epsilon(0.02));

  CHECK_THROWS_AS(normalize_levels(std::vector<double>{0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(normalize_levels(std::vector<double>{-1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(normalize_levels(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("normalize is idempotent and gives unit power") {
  RandomStream rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> x(static_cast<std::size_t>(trial % 2 ? 4 : 8));
    for (double& v : x) v = 10.0 * rng.uniform();
    const auto a = normalize_levels(x);
    const auto b = normalize_levels(a);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
    CHECK(std::abs(moments(a).es2 - 1.0) < 1e-9);
  }
}

TEST_CASE("standard PAM alphabets") {
  const auto f = standard_pam(4, PamDomain::kField);
  for (int i = 0; i < 4; ++i) CHECK(f.levels()[static_cast<std::size_t>(i)] == doctest::Approx(i / std::sqrt(3.5)));
  const auto in = standard_pam(4, PamDomain::kIntensity);
  for (int i = 0; i < 4; ++i) CHECK(in.levels()[static_cast<std::size_t>(i)] == doctest::Approx(std::sqrt(i / 1.5)));
  CHECK(in.moments().es2 == doctest::Approx(1.0).epsilon(1e-12));

  for (auto domain : {PamDomain::kField, PamDomain::kIntensity}) {
    const auto e = standard_pam(4, domain, 0.1);
    const auto d = e.detected_levels();
    CHECK(d.front() == doctest::Approx(0.1 * d.back()).epsilon(1e-12));
    CHECK(e.moments().es2 == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(standard_pam(8, PamDomain::kIntensity).order() == 8);
  CHECK_THROWS_AS(parse_pam_domain("power"), std::invalid_argument);
  CHECK(parse_pam_domain("field") == PamDomain::kField);
  CHECK_THROWS_AS(standard_pam(4, PamDomain::kField, 1.0), std::invalid_argument);
}

TEST_CASE("moments of reference alphabets") {
  const auto f = standard_pam(4, PamDomain::kField).moments();
  CHECK(f.es2 == doctest::Approx(1.0));
  CHECK(f.es4 == doctest::Approx(2.0));
  const auto flat = moments(std::vector<double>{1, 1, 1, 1});
  CHECK(flat.es2 == 1.0);
  CHECK(flat.es4 == 1.0);
  const auto in = standard_pam(4, PamDomain::kIntensity).moments();
  CHECK(in.es4 == doctest::Approx(14.0 / (4.0 * 1.5 * 1.5)));
}

TEST_CASE("constellation validation and json round trip") {
  CHECK_THROWS_AS(Constellation::from_levels(std::vector<double>{0, 2, 1, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Constellation::from_levels(std::vector<double>{0, 1, 1, 3}), std::invalid_argument);
  CHECK_THROWS_AS(Constellation::from_levels(std::vector<double>{0, 1, 2}), std::invalid_argument);
  const auto c = Constellation::from_levels(std::vector<double>{0.1, 0.7, 1.1, 1.5});
  const auto j = to_json(c);
  CHECK(j.at("labels").get<std::vector<std::string>>() == gray_map(4));
  const auto back = constellation_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back == c);
}
