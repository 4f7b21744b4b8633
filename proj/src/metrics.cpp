#include "aepam/metrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace aepam {
namespace {

// Probability mass of each decision region for one transmitted level, from
// cdf/sf callbacks; regions left of the level use cdf differences and regions
// right of it use sf differences to keep small tails accurate.
template <class Cdf, class Sf>
std::vector<double> region_mass(std::span<const double> thresholds, std::size_t level, Cdf cdf, Sf sf) {
  const std::size_t m = thresholds.size() + 1;
  std::vector<double> mass(m, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    if (k < level) {
      const double hi = cdf(thresholds[k]);
      const double lo = k == 0 ? 0.0 : cdf(thresholds[k - 1]);
      mass[k] = hi - lo;
    } else if (k > level) {
      const double lo = sf(thresholds[k - 1]);
      const double hi = k + 1 == m ? 0.0 : sf(thresholds[k]);
      mass[k] = lo - hi;
    }
  }
  return mass;
}

template <class Cdf, class Sf>
std::pair<double, double> ser_ber(std::span<const double> thresholds, std::size_t m, Cdf cdf_of, Sf sf_of) {
  double ser = 0.0;
  double ber = 0.0;
  const int order = static_cast<int>(m);
  const double bits = order == 4 || order == 8 ? bits_per_symbol(order) : std::log2(static_cast<double>(order));
  for (std::size_t j = 0; j < m; ++j) {
    auto mass = region_mass(thresholds, j, [&](double t) { return cdf_of(j, t); }, [&](double t) { return sf_of(j, t); });
    for (std::size_t k = 0; k < m; ++k) {
      if (k == j) continue;
      ser += mass[k];
      if (order == 4 || order == 8) ber += mass[k] * gray_bit_errors(order, static_cast<int>(j), static_cast<int>(k));
    }
  }
  return {ser / static_cast<double>(m), ber / (static_cast<double>(m) * bits)};
}

std::pair<double, double> map_ser_ber(const Constellation& c, const MixedNoiseParams& p, const DecisionMap& d) {
  const auto& s = c.levels();
  const int order = c.order();
  if (d.symbols.size() != d.cuts.size() + 1) throw std::invalid_argument("decision map: symbols must be cuts + 1");
  double ser = 0.0, ber = 0.0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    const double centre = s[j] * s[j];
    auto cdf = [&](std::size_t k) { return k == 0 ? 0.0 : mixed_cdf(d.cuts[k - 1], s[j], p); };
    auto sf = [&](std::size_t k) { return k == d.cuts.size() ? 0.0 : mixed_sf(d.cuts[k], s[j], p); };
    for (std::size_t k = 0; k < d.symbols.size(); ++k) {
      const int decided = d.symbols[k];
      if (decided == static_cast<int>(j)) continue;
      const double a = k == 0 ? -std::numeric_limits<double>::infinity() : d.cuts[k - 1];
      const double b = k == d.cuts.size() ? std::numeric_limits<double>::infinity() : d.cuts[k];
      // tails from the side away from the level keep small masses accurate
      double mass;
      if (b <= centre) mass = mixed_cdf(b, s[j], p) - cdf(k);
      else if (a >= centre) mass = mixed_sf(a, s[j], p) - sf(k);
      else mass = 1.0 - cdf(k) - sf(k);
      mass = std::max(mass, 0.0);
      ser += mass;
      ber += mass * gray_bit_errors(order, static_cast<int>(j), decided);
    }
  }
  const double m = static_cast<double>(s.size());
  return {ser / m, ber / (m * bits_per_symbol(order))};
}

}  // namespace

double mixed_noise_ser_oracle(const Constellation& c, const MixedNoiseParams& p, const DecisionMap& d) {
  return map_ser_ber(c, p, d).first;
}

double mixed_noise_ber_oracle(const Constellation& c, const MixedNoiseParams& p, const DecisionMap& d) {
  return map_ser_ber(c, p, d).second;
}

double BerEstimate::ser_sigma() const {
  if (symbols_sent == 0) return 0.0;
  return std::sqrt(ser * (1.0 - ser) / static_cast<double>(symbols_sent));
}

double BerEstimate::ber_sigma() const {
  const double bits = static_cast<double>(symbols_sent) * bits_per_symbol;
  if (bits == 0.0) return 0.0;
  return std::sqrt(ber * (1.0 - ber) / bits);
}

nlohmann::json to_json(const BerEstimate& e) {
  return {{"bit_errors", e.bit_errors}, {"symbol_errors", e.symbol_errors},
          {"symbols_sent", e.symbols_sent}, {"ber", e.ber}, {"ser", e.ser},
          {"seed", e.seed}, {"upper_bound", e.upper_bound}};
}

BerEstimate estimate_ber(const BlockRunner& block, int order, const BerOptions& opt) {
  if (opt.max_symbols < 1 || opt.min_errors < 0) throw std::invalid_argument("estimate_ber: bad limits");
  BerEstimate e;
  e.bits_per_symbol = bits_per_symbol(order);
  e.seed = opt.seed;
  const int threads = std::max(1, opt.threads);
  std::uint64_t next_block = 0;
  bool done = false;
  while (!done) {
    // run a wave of blocks, then fold them in block order
    std::vector<std::future<BlockCounts>> wave;
    std::vector<BlockCounts> results;
    if (threads == 1) {
      RandomStream rng = RandomStream::derive(opt.seed, next_block++);
      results.push_back(block(rng));
    } else {
      for (int t = 0; t < threads; ++t) {
        const std::uint64_t id = next_block++;
        wave.push_back(std::async(std::launch::async, [&block, seed = opt.seed, id] {
          RandomStream rng = RandomStream::derive(seed, id);
          return block(rng);
        }));
      }
      for (auto& f : wave) results.push_back(f.get());
    }
    for (const auto& c : results) {
      if (c.symbols <= 0) throw std::runtime_error("estimate_ber: block produced no symbols");
      e.symbols_sent += c.symbols;
      e.symbol_errors += c.symbol_errors;
      e.bit_errors += c.bit_errors;
      if ((e.symbol_errors >= opt.min_errors && e.symbols_sent >= opt.min_symbols) ||
          e.symbols_sent >= opt.max_symbols) {
        done = true;
        break;
      }
    }
  }
  e.ser = static_cast<double>(e.symbol_errors) / static_cast<double>(e.symbols_sent);
  e.ber = static_cast<double>(e.bit_errors) / (static_cast<double>(e.symbols_sent) * e.bits_per_symbol);
  e.upper_bound = e.symbol_errors == 0;
  return e;
}

int gray_bit_errors(int order, int a, int b) {
  const auto codes = gray_codes(order);
  return std::popcount(codes[static_cast<std::size_t>(a)] ^ codes[static_cast<std::size_t>(b)]);
}

double q_function(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double awgn_ser_oracle(std::span<const double> levels, std::span<const double> thresholds, double sigma) {
  if (levels.size() < 2) return 0.0;
  if (sigma == 0.0) return 0.0;
  return ser_ber(thresholds, levels.size(),
                 [&](std::size_t j, double t) { return q_function((levels[j] - t) / sigma); },
                 [&](std::size_t j, double t) { return q_function((t - levels[j]) / sigma); })
      .first;
}

double awgn_ber_oracle(std::span<const double> levels, std::span<const double> thresholds, double sigma) {
  if (levels.size() < 2 || sigma == 0.0) return 0.0;
  return ser_ber(thresholds, levels.size(),
                 [&](std::size_t j, double t) { return q_function((levels[j] - t) / sigma); },
                 [&](std::size_t j, double t) { return q_function((t - levels[j]) / sigma); })
      .second;
}

double mixed_noise_ser_oracle(const Constellation& c, const MixedNoiseParams& p, const ThresholdSet& t) {
  const auto& s = c.levels();
  return ser_ber(t.values, s.size(), [&](std::size_t j, double x) { return mixed_cdf(x, s[j], p); },
                 [&](std::size_t j, double x) { return mixed_sf(x, s[j], p); })
      .first;
}

double mixed_noise_ber_oracle(const Constellation& c, const MixedNoiseParams& p, const ThresholdSet& t) {
  const auto& s = c.levels();
  return ser_ber(t.values, s.size(), [&](std::size_t j, double x) { return mixed_cdf(x, s[j], p); },
                 [&](std::size_t j, double x) { return mixed_sf(x, s[j], p); })
      .second;
}

double interpolate_crossing(std::span<const double> x, std::span<const double> ber, double target) {
  if (x.size() != ber.size() || x.size() < 2) throw std::invalid_argument("interpolate: need at least two points");
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (!(x[i] > x[i - 1])) throw std::invalid_argument("interpolate: grid must be ascending");
    if (ber[i] > ber[i - 1]) throw std::invalid_argument("interpolate: BER is not monotone over the grid");
  }
  if (!(target > 0.0)) throw std::invalid_argument("interpolate: target must be positive");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (ber[i] == target) return x[i];
  }
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (ber[i - 1] > target && ber[i] < target) {
      const double la = std::log10(ber[i - 1]);
      const double lb = ber[i] > 0.0 ? std::log10(ber[i]) : -std::numeric_limits<double>::infinity();
      if (!std::isfinite(lb)) return x[i];
      const double f = (std::log10(target) - la) / (lb - la);
      return x[i - 1] + f * (x[i] - x[i - 1]);
    }
  }
  throw std::domain_error("interpolate: target BER not bracketed by the grid");
}

double required_snr(std::span<const double> snr_db, std::span<const double> ber, double target_ber) {
  return interpolate_crossing(snr_db, ber, target_ber);
}

nlohmann::json to_json(const SensitivityResult& r) {
  nlohmann::json j = {{"improvement_db", r.improvement_db}, {"unrecoverable", r.unrecoverable},
                      {"at_floor", r.at_floor}, {"powers", r.powers}, {"bers", r.bers}};
  j["required_dbm"] = r.required_dbm ? nlohmann::json(*r.required_dbm) : nlohmann::json(nullptr);
  return j;
}

SensitivityResult sensitivity(const std::function<BerEstimate(double)>& ber_at,
                              std::span<const double> grid, double target, std::size_t start) {
  if (grid.empty()) throw std::invalid_argument("sensitivity: empty power grid");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("sensitivity: power grid must be ascending");
  }
  start = std::min(start, grid.size() - 1);
  std::vector<std::optional<double>> value(grid.size());
  auto eval = [&](std::size_t i) {
    if (!value[i]) {
      const auto e = ber_at(grid[i]);
      const double bits = static_cast<double>(e.symbols_sent) * e.bits_per_symbol;
      value[i] = e.upper_bound ? 0.5 / bits : e.ber;
    }
    return *value[i];
  };
  SensitivityResult r;
  std::size_t i = start;
  std::optional<std::size_t> lo_idx;  // highest power still above target
  if (eval(i) > target) {
    while (i + 1 < grid.size() && eval(i + 1) > target) ++i;
    if (i + 1 == grid.size()) r.unrecoverable = true;
    else lo_idx = i;
  } else {
    while (i > 0 && eval(i - 1) <= target) --i;
    if (i == 0) r.at_floor = true;
    else lo_idx = i - 1;
  }
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (value[k]) {
      r.powers.push_back(grid[k]);
      r.bers.push_back(*value[k]);
    }
  }
  if (r.unrecoverable) return r;
  if (r.at_floor) {
    r.required_dbm = grid.front();
  } else {
    const double xs[2] = {grid[*lo_idx], grid[*lo_idx + 1]};
    const double bs[2] = {*value[*lo_idx], *value[*lo_idx + 1]};
    if (bs[1] > bs[0]) {
      // noisy non-monotone pair straddling the target: take the midpoint
      r.required_dbm = 0.5 * (xs[0] + xs[1]);
    } else {
      r.required_dbm = interpolate_crossing(xs, bs, target);
    }
  }
  r.improvement_db = kSensitivityAnchorDbm - *r.required_dbm;
  return r;
}

double reach(std::span<const double> lengths, std::span<const double> imp, double margin) {
  if (lengths.size() != imp.size() || lengths.empty()) throw std::invalid_argument("reach: size mismatch");
  if (imp[0] < margin) return 0.0;
  for (std::size_t i = 1; i < lengths.size(); ++i) {
    if (imp[i] < margin) {
      const double f = (imp[i - 1] - margin) / (imp[i - 1] - imp[i]);
      return lengths[i - 1] + f * (lengths[i] - lengths[i - 1]);
    }
  }
  return lengths.back();
}

std::vector<double> normalize_histogram(std::span<const double> samples, std::span<const double> means) {
  if (means.size() != 4) throw std::invalid_argument("normalize_histogram: needs four level means");
  for (std::size_t i = 1; i < means.size(); ++i) {
    if (!(means[i] > means[i - 1])) throw std::invalid_argument("normalize_histogram: means must be ascending");
  }
  double ss = 0.0;
  for (double m : means) ss += (m - means[0]) * (m - means[0]);
  const double scale = std::sqrt(14.0) / std::sqrt(ss);
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (samples[i] - means[0]) * scale;
  return out;
}

}  // namespace aepam
