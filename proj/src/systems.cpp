#include "aepam/systems.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace aepam {
namespace {

std::vector<int> draw_symbols(int n, int order, RandomStream& rng) {
  std::vector<int> s(static_cast<std::size_t>(n));
  for (int& v : s) v = rng.uniform_index(order);
  return s;
}

// stream ids reserved for MMSE training, far from block indices
constexpr std::uint64_t kMmseStream = 0x4d4d5345ULL << 20;

}  // namespace

void count_errors(int order, std::span<const int> sent, std::span<const int> decided, BlockCounts& c) {
  const auto codes = gray_codes(order);
  c.symbols += static_cast<long>(sent.size());
  for (std::size_t i = 0; i < sent.size(); ++i) {
    if (sent[i] != decided[i]) {
      ++c.symbol_errors;
      c.bit_errors += std::popcount(codes[static_cast<std::size_t>(sent[i])] ^ codes[static_cast<std::size_t>(decided[i])]);
    }
  }
}

BlockRunner memoryless_threshold_runner(const Constellation& c, const MixedNoiseParams& p,
                                        const ThresholdSet& t, int block_symbols) {
  check_interleaved(t, c.detected_levels());
  return [c, p, t, block_symbols](RandomStream& rng) {
    BlockCounts counts;
    std::vector<int> sent(static_cast<std::size_t>(block_symbols));
    std::vector<int> got(sent.size());
    for (std::size_t i = 0; i < sent.size(); ++i) {
      sent[i] = rng.uniform_index(c.order());
      got[i] = threshold_detect(transmit(c.levels()[static_cast<std::size_t>(sent[i])], p, rng), t);
    }
    count_errors(c.order(), sent, got, counts);
    return counts;
  };
}

BlockRunner memoryless_map_runner(const Constellation& c, const MixedNoiseParams& p, const DecisionMap& d,
                                  int block_symbols) {
  if (d.symbols.size() != d.cuts.size() + 1) throw std::invalid_argument("decision map: symbols must be cuts + 1");
  return [c, p, d, block_symbols](RandomStream& rng) {
    BlockCounts counts;
    std::vector<int> sent(static_cast<std::size_t>(block_symbols));
    std::vector<int> got(sent.size());
    for (std::size_t i = 0; i < sent.size(); ++i) {
      sent[i] = rng.uniform_index(c.order());
      got[i] = map_detect(transmit(c.levels()[static_cast<std::size_t>(sent[i])], p, rng), d);
    }
    count_errors(c.order(), sent, got, counts);
    return counts;
  };
}

MemorylessAe train_memoryless_ae(int order, double alpha, double sigma2_n, const TrainConfig& cfg) {
  const auto noise = split_noise(sigma2_n, alpha, 1.0);
  MemorylessChannel channel(noise);
  auto trained = train(channel, order, 1, cfg);
  const auto levels = trained.extracted.constellation.detected_levels();
  auto thresholds = bisection_thresholds(decoder_classifier(trained.net, trained.extracted.rank), levels);
  return {std::move(trained), noise, std::move(thresholds)};
}

LinkSystem standard_link_system(const LinkConfig& cfg, std::optional<int> mmse_taps) {
  const auto c = standard_pam(4, PamDomain::kIntensity);
  LinkSystem s;
  s.name = "standard";
  s.level_powers = c.detected_levels();
  s.thresholds = midpoint_thresholds(link_detected_levels(s.level_powers, cfg));
  s.mmse_taps = mmse_taps;
  return s;
}

LinkSystem threshold_link_system(std::string name, const Constellation& c, const ThresholdSet& t,
                                 std::optional<int> mmse_taps) {
  LinkSystem s;
  s.name = std::move(name);
  s.level_powers = c.detected_levels();
  s.thresholds = t;
  s.mmse_taps = mmse_taps;
  return s;
}

LinkSystem decoder_link_system(std::string name, const TrainResult& trained) {
  LinkSystem s;
  s.name = std::move(name);
  s.level_powers = trained.extracted.constellation.detected_levels();
  s.decoder = std::make_shared<Network>(trained.net);
  s.rank = trained.extracted.rank;
  return s;
}

BerEstimate evaluate_link(const LinkSystem& sys, const LinkConfig& cfg, const BerOptions& opt) {
  cfg.validate();
  const int order = static_cast<int>(sys.level_powers.size());
  const auto mapped = link_detected_levels(sys.level_powers, cfg);
  std::optional<FirTaps> taps;
  if (sys.mmse_taps && !sys.decoder) {
    RandomStream rng = RandomStream::derive(opt.seed, kMmseStream);
    const auto sym = draw_symbols(kMmseTrainingSymbols, order, rng);
    const auto rx = run_link_powers(sys.level_powers, cfg, sym, rng, sys.mmse_samples_per_symbol);
    std::vector<double> target(sym.size());
    for (std::size_t i = 0; i < sym.size(); ++i) target[i] = mapped[static_cast<std::size_t>(sym[i])];
    taps = mmse_train_circular(rx.samples, target, *sys.mmse_taps, sys.mmse_samples_per_symbol);
  }
  if (sys.decoder) {
    if (sys.decoder->order() != order) throw std::invalid_argument("evaluate_link: decoder order mismatch");
  } else {
    check_interleaved(sys.thresholds, mapped);
  }
  const int out_rate = taps ? sys.mmse_samples_per_symbol : 1;
  BlockRunner runner = [&](RandomStream& rng) {
    BlockCounts counts;
    const auto sent = draw_symbols(cfg.block_symbols, order, rng);
    const auto rx = run_link_powers(sys.level_powers, cfg, sent, rng, out_rate);
    std::vector<int> got(sent.size());
    if (sys.decoder) {
      const auto windows = circular_windows(rx.samples, sys.decoder->window());
      const auto trace = forward_decoder(*sys.decoder, windows);
      for (std::size_t i = 0; i < got.size(); ++i) {
        const auto* p = trace.probs.data() + i * static_cast<std::size_t>(order);
        int best = 0;
        for (int j = 1; j < order; ++j) {
          if (p[j] > p[best]) best = j;
        }
        got[i] = sys.rank[static_cast<std::size_t>(best)];
      }
    } else {
      const auto y = taps ? mmse_apply_circular(*taps, rx.samples) : rx.samples;
      for (std::size_t i = 0; i < got.size(); ++i) got[i] = threshold_detect(y[i], sys.thresholds);
    }
    count_errors(order, sent, got, counts);
    return counts;
  };
  return estimate_ber(runner, order, opt);
}

TrainResult train_link_ae(int order, int window, const LinkConfig& cfg, const TrainConfig& tcfg) {
  WaveformChannel channel(cfg);
  return train(channel, order, window, tcfg);
}

IterativeDesign iterative_link_design(const LinkConfig& cfg, double ser_target, std::size_t draws,
                                      std::uint64_t seed) {
  LinkConfig base = cfg;
  base.length_km = 0.0;
  IterativeOptions opt;
  opt.ser_target = ser_target;
  opt.order = 4;
  opt.er_floor = std::isfinite(cfg.extinction_ratio_db) ? std::pow(10.0, -cfg.extinction_ratio_db / 10.0) : 0.0;
  opt.dynamic_range = 20.0;

  auto design_at = [&](double dbm) -> std::optional<IterativeResult> {
    LinkConfig c = base;
    c.rx_power_dbm = dbm;
    const auto n = link_noise(c);
    MonteCarloTailSampler sampler(n.sigma2_ase, n.sigma2_th, n.in_phase_only, draws, seed);
    try {
      return iterative_optimize(sampler, opt);
    } catch (const std::runtime_error&) {
      return std::nullopt;  // too noisy for the dynamic range
    }
  };
  // the raw mean level falls as power rises; find where it equals one
  double lo = -45.0;
  double hi = 15.0;
  auto hi_design = design_at(hi);
  if (!hi_design || hi_design->scale > 1.0) {
    throw std::runtime_error("iterative_link_design: no self-consistent power below 15 dBm");
  }
  for (int it = 0; it < 40 && hi - lo > 1e-3; ++it) {
    const double mid = 0.5 * (lo + hi);
    const auto d = design_at(mid);
    if (!d || d->scale > 1.0) lo = mid;
    else hi = mid;
  }
  IterativeDesign out{*design_at(hi), hi, base};
  out.design_config.rx_power_dbm = hi;
  return out;
}

}  // namespace aepam
