#include "aepam/constellation.hpp"

#include <cmath>
#include <stdexcept>

namespace aepam {

PamDomain parse_pam_domain(const std::string& tag) {
  if (tag == "field") return PamDomain::kField;
  if (tag == "intensity") return PamDomain::kIntensity;
  throw std::invalid_argument("unknown PAM domain '" + tag + "' (expected field|intensity)");
}

std::string to_string(PamDomain domain) {
  return domain == PamDomain::kField ? "field" : "intensity";
}

int bits_per_symbol(int order) {
  if (order != 4 && order != 8) {
    throw std::invalid_argument("unsupported PAM order " + std::to_string(order));
  }
  return order == 4 ? 2 : 3;
}

std::vector<unsigned> gray_codes(int order) {
  bits_per_symbol(order);
  std::vector<unsigned> codes(static_cast<std::size_t>(order));
  for (unsigned i = 0; i < codes.size(); ++i) codes[i] = i ^ (i >> 1);
  return codes;
}

std::vector<std::string> gray_map(int order) {
  const int bits = bits_per_symbol(order);
  std::vector<std::string> labels;
  for (unsigned code : gray_codes(order)) {
    std::string s(static_cast<std::size_t>(bits), '0');
    for (int b = 0; b < bits; ++b) {
      if (code & (1u << (bits - 1 - b))) s[static_cast<std::size_t>(b)] = '1';
    }
    labels.push_back(std::move(s));
  }
  return labels;
}

std::vector<double> normalize_levels(std::span<const double> levels) {
  if (levels.empty()) throw std::invalid_argument("normalize: empty level set");
  double sum_sq = 0.0;
  for (double v : levels) {
    if (!std::isfinite(v)) throw std::invalid_argument("normalize: non-finite level");
    if (v < 0.0) throw std::invalid_argument("normalize: negative level");
    sum_sq += v * v;
  }
  if (sum_sq == 0.0) throw std::invalid_argument("normalize: all levels are zero");
  const double scale = 1.0 / std::sqrt(sum_sq / static_cast<double>(levels.size()));
  std::vector<double> out(levels.begin(), levels.end());
  for (double& v : out) v *= scale;
  return out;
}

Moments moments(std::span<const double> levels) {
  Moments m;
  for (double v : levels) {
    const double v2 = v * v;
    m.es2 += v2;
    m.es4 += v2 * v2;
  }
  const auto n = static_cast<double>(levels.size());
  m.es2 /= n;
  m.es4 /= n;
  return m;
}

Constellation Constellation::from_levels(std::span<const double> levels) {
  const int order = static_cast<int>(levels.size());
  auto codes = gray_codes(order);
  auto norm = normalize_levels(levels);
  for (std::size_t i = 1; i < norm.size(); ++i) {
    if (!(norm[i] > norm[i - 1])) {
      throw std::invalid_argument("constellation levels must be strictly ascending");
    }
  }
  return Constellation(std::move(norm), std::move(codes));
}

std::vector<double> Constellation::detected_levels() const {
  std::vector<double> out(levels_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = levels_[i] * levels_[i];
  return out;
}

Constellation standard_pam(int order, PamDomain domain, std::optional<double> er_floor) {
  bits_per_symbol(order);
  if (er_floor && (*er_floor < 0.0 || *er_floor >= 1.0)) {
    throw std::invalid_argument("extinction floor must lie in [0, 1)");
  }
  const double floor = er_floor.value_or(0.0);
  std::vector<double> amps(static_cast<std::size_t>(order));
  const double steps = static_cast<double>(order - 1);
  for (int i = 0; i < order; ++i) {
    const double frac = static_cast<double>(i) / steps;
    if (domain == PamDomain::kField) {
      const double lo = std::sqrt(floor);
      amps[static_cast<std::size_t>(i)] = lo + (1.0 - lo) * frac;
    } else {
      amps[static_cast<std::size_t>(i)] = std::sqrt(floor + (1.0 - floor) * frac);
    }
  }
  return Constellation::from_levels(amps);
}

nlohmann::json to_json(const Constellation& c) {
  return {{"order", c.order()}, {"levels", c.levels()}, {"labels", c.labels()}};
}

Constellation constellation_from_json(const nlohmann::json& j) {
  auto levels = j.at("levels").get<std::vector<double>>();
  auto c = Constellation::from_levels(levels);
  if (j.contains("order") && j.at("order").get<int>() != c.order()) {
    throw std::invalid_argument("constellation record: order does not match level count");
  }
  return c;
}

}  // namespace aepam
