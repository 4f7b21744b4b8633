#include "aepam/experiments.hpp"

#include <Eigen/Core>
#include <boost/version.hpp>
#include <fftw3.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace aepam {
namespace {

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::uint64_t tag_seed(std::uint64_t master, const nlohmann::json& tag) {
  return splitmix64(master ^ config_hash(tag));
}

// Training settings minus the seed, which the cache keys separately.
nlohmann::json train_key(const TrainConfig& t) {
  auto j = to_json(t);
  j.erase("seed");
  return j;
}

TrainResult cached_train(CheckpointCache* cache, const nlohmann::json& key, std::uint64_t seed,
                         const std::function<TrainResult()>& trainer) {
  return cache ? cache->get_or_train(key, seed, trainer) : trainer();
}

std::size_t nearest_index(std::span<const double> grid, double x) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (std::abs(grid[i] - x) < std::abs(grid[best] - x)) best = i;
  }
  return best;
}

// Runs fn(i) for i < n on a pool; an exception fails only its own item.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn,
                  const std::function<void(std::size_t, const std::string&)>& on_error) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (const std::exception& e) {
        on_error(i, e.what());
      }
    }
  };
  const int k = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int t = 1; t < k; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

class Csv {
 public:
  Csv(std::string hash, std::vector<std::string> columns) : hash_(std::move(hash)) {
    body_ << "config_hash,seed";
    for (const auto& c : columns) body_ << ',' << c;
    body_ << '\n';
  }
  void row(std::uint64_t seed, const std::vector<std::string>& cells) {
    body_ << hash_ << ',' << seed;
    for (const auto& c : cells) body_ << ',' << c;
    body_ << '\n';
  }
  std::string str() const { return body_.str(); }

 private:
  std::string hash_;
  std::ostringstream body_;
};

struct Context {
  const ExperimentConfig& cfg;
  std::string hash;
  CheckpointCache cache;
  std::filesystem::path dir;
  std::vector<std::filesystem::path> files;
  nlohmann::json failures = nlohmann::json::array();
  std::mutex mu;

  Context(const ExperimentConfig& c, std::string h, std::filesystem::path d)
      : cfg(c), hash(std::move(h)), cache(c.resolved_cache_dir()), dir(std::move(d)) {}

  void fail(const std::string& point, const std::string& what) {
    std::lock_guard lock(mu);
    failures.push_back({{"point", point}, {"error", what}});
  }
  void write(const std::string& name, const std::string& body) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    out << body;
    if (!out) throw std::runtime_error("cannot write " + path.string());
    files.push_back(path);
  }
  void write_json(const std::string& name, const nlohmann::json& j) { write(name, j.dump(2) + "\n"); }
};

std::vector<double> field_levels(std::span<const double> detected) {
  std::vector<double> f;
  for (double d : detected) f.push_back(std::sqrt(std::max(d, 0.0)));
  return f;
}

// ---------------------------------------------------------------- memoryless

struct MemorylessPoint {
  int order = 4;
  double alpha = 0.0;
  double snr_db = 0.0;
};

struct MemorylessOutcome {
  std::uint64_t seed = 0;
  TrainResult trained;
  ThresholdSet thresholds;  // empty when merged
  // the decoder's own rule when two levels merged and no threshold exists
  std::optional<DecisionMap> merged;

  nlohmann::json rule_json() const {
    nlohmann::json j = {{"thresholds", merged ? nlohmann::json(nullptr) : to_json(thresholds)}};
    if (merged) j["decision_map"] = to_json(*merged);
    return j;
  }
  std::string threshold_cell(std::size_t k) const { return k < thresholds.values.size() ? fmt(thresholds.values[k]) : ""; }
};

MemorylessOutcome train_memoryless_point(Context& ctx, const MemorylessPoint& p) {
  const double sigma2 = noise_for_snr(standard_pam(p.order), p.snr_db);
  const auto noise = split_noise(sigma2, p.alpha);
  const nlohmann::json key = {{"kind", "memoryless_ae"}, {"order", p.order},    {"alpha", p.alpha},
                              {"snr_db", p.snr_db},      {"sigma2_n", sigma2}, {"train", train_key(ctx.cfg.train)}};
  const std::uint64_t seed = tag_seed(ctx.cfg.seed, key);
  TrainConfig tc = ctx.cfg.train;
  tc.seed = seed;
  auto trained = ctx.cache.get_or_train(key, seed, [&] {
    MemorylessChannel channel(noise);
    return train(channel, p.order, 1, tc);
  });
  const auto levels = trained.extracted.constellation.detected_levels();
  ThresholdSet thresholds;
  std::optional<DecisionMap> merged;
  {
    const auto classify = decoder_classifier(trained.net, trained.extracted.rank);
    try {
      thresholds = bisection_thresholds(classify, levels);
    } catch (const NoBoundaryError&) {
      merged = scan_decision_map(classify, levels);
    }
  }
  return {seed, std::move(trained), std::move(thresholds), std::move(merged)};
}

std::vector<MemorylessPoint> memoryless_grid(const ExperimentConfig& cfg, bool with_snr) {
  std::vector<MemorylessPoint> pts;
  const std::vector<int> orders = cfg.experiment == "fig4" ? std::vector<int>{4} : cfg.orders;
  for (int m : orders) {
    const auto& snrs = cfg.snr_db.at(m);
    for (double a : cfg.alphas) {
      if (with_snr) {
        for (double s : snrs) pts.push_back({m, a, s});
      } else {
        pts.push_back({m, a, snrs.front()});
      }
    }
  }
  return pts;
}

std::string point_name(const MemorylessPoint& p) {
  return "M=" + std::to_string(p.order) + " alpha=" + fmt(p.alpha) + " snr=" + fmt(p.snr_db);
}

void run_fig4(Context& ctx) {
  const auto pts = memoryless_grid(ctx.cfg, false);
  std::vector<std::optional<MemorylessOutcome>> res(pts.size());
  parallel_for(
      pts.size(), ctx.cfg.threads, [&](std::size_t i) { res[i] = train_memoryless_point(ctx, pts[i]); },
      [&](std::size_t i, const std::string& e) { ctx.fail(point_name(pts[i]), e); });

  Csv csv(ctx.hash, {"alpha", "snr_db", "index", "label", "level", "detected_level", "standard_detected_level",
                     "threshold", "midpoint"});
  nlohmann::json results = nlohmann::json::array();
  const auto standard = standard_pam(4).detected_levels();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!res[i]) continue;
    const auto& c = res[i]->trained.extracted.constellation;
    const auto d = c.detected_levels();
    const auto mid = midpoint_thresholds(d);
    const auto labels = c.labels();
    for (int k = 0; k < 4; ++k) {
      const bool has_t = k < 3;
      csv.row(res[i]->seed, {fmt(pts[i].alpha), fmt(pts[i].snr_db), std::to_string(k), labels[k], fmt(c.levels()[k]),
                             fmt(d[k]), fmt(standard[k]), res[i]->threshold_cell(static_cast<std::size_t>(k)),
                             has_t ? fmt(mid.values[k]) : ""});
    }
    results.push_back({{"alpha", pts[i].alpha},
                       {"snr_db", pts[i].snr_db},
                       {"seed", res[i]->seed},
                       {"constellation", to_json(c)},
                       {"best_validation", res[i]->trained.best_validation}});
    results.back().update(res[i]->rule_json());
  }
  ctx.write("fig4_constellations.csv", csv.str());
  ctx.write_json("fig4_results.json", results);
}

struct MemorylessEval {
  MemorylessOutcome ae;
  BerEstimate standard_mc, ae_mc;
  double standard_oracle = 0.0, ae_oracle = 0.0;
};

MemorylessEval eval_memoryless_point(Context& ctx, const MemorylessPoint& p) {
  MemorylessEval ev{.ae = train_memoryless_point(ctx, p), .standard_mc = {}, .ae_mc = {}};
  const auto std_c = standard_pam(p.order);
  const auto std_t = midpoint_thresholds(std_c.detected_levels());
  const auto std_n = split_noise(noise_for_snr(std_c, p.snr_db), p.alpha);
  // the AE is held to the same SNR measured on its own constellation
  const auto& ae_c = ev.ae.trained.extracted.constellation;
  const auto ae_n = split_noise(noise_for_snr(ae_c, p.snr_db), p.alpha);
  BerOptions opt = ctx.cfg.ber;
  opt.threads = 1;
  opt.seed = ev.ae.seed;
  ev.standard_mc = estimate_ber(memoryless_threshold_runner(std_c, std_n, std_t), p.order, opt);
  ev.standard_oracle = mixed_noise_ber_oracle(std_c, std_n, std_t);
  if (ev.ae.merged) {
    ev.ae_mc = estimate_ber(memoryless_map_runner(ae_c, ae_n, *ev.ae.merged), p.order, opt);
    ev.ae_oracle = mixed_noise_ber_oracle(ae_c, ae_n, *ev.ae.merged);
  } else {
    ev.ae_mc = estimate_ber(memoryless_threshold_runner(ae_c, ae_n, ev.ae.thresholds), p.order, opt);
    ev.ae_oracle = mixed_noise_ber_oracle(ae_c, ae_n, ev.ae.thresholds);
  }
  return ev;
}

std::optional<double> try_required(std::span<const double> snr, std::span<const double> ber) {
  if (snr.size() < 2) return std::nullopt;
  try {
    return required_snr(snr, ber, 3.8e-3);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

void run_memoryless_sweep(Context& ctx, bool emit_ber) {
  const auto pts = memoryless_grid(ctx.cfg, true);
  std::vector<std::optional<MemorylessEval>> res(pts.size());
  parallel_for(
      pts.size(), ctx.cfg.threads, [&](std::size_t i) { res[i] = eval_memoryless_point(ctx, pts[i]); },
      [&](std::size_t i, const std::string& e) { ctx.fail(point_name(pts[i]), e); });

  const std::string prefix = ctx.cfg.experiment;
  Csv levels(ctx.hash, {"order", "alpha", "snr_db", "index", "label", "level", "detected_level", "threshold"});
  Csv ber(ctx.hash, {"order", "alpha", "snr_db", "system", "ber", "ser", "bit_errors", "symbol_errors", "symbols",
                     "upper_bound", "ber_oracle"});
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!res[i]) continue;
    const auto& p = pts[i];
    const auto& r = *res[i];
    const auto& c = r.ae.trained.extracted.constellation;
    const auto d = c.detected_levels();
    const auto labels = c.labels();
    for (int k = 0; k < p.order; ++k) {
      levels.row(r.ae.seed, {std::to_string(p.order), fmt(p.alpha), fmt(p.snr_db), std::to_string(k), labels[k],
                             fmt(c.levels()[k]), fmt(d[k]), r.ae.threshold_cell(static_cast<std::size_t>(k))});
    }
    for (const auto& [name, e, oracle] : {std::tuple{"standard", r.standard_mc, r.standard_oracle},
                                          std::tuple{"ae", r.ae_mc, r.ae_oracle}}) {
      ber.row(r.ae.seed, {std::to_string(p.order), fmt(p.alpha), fmt(p.snr_db), name, fmt(e.ber), fmt(e.ser),
                          std::to_string(e.bit_errors), std::to_string(e.symbol_errors), std::to_string(e.symbols_sent),
                          e.upper_bound ? "1" : "0", fmt(oracle)});
    }
    points.push_back({{"order", p.order},
                      {"alpha", p.alpha},
                      {"snr_db", p.snr_db},
                      {"seed", r.ae.seed},
                      {"constellation", to_json(c)},
                      {"standard", to_json(r.standard_mc)},
                      {"ae", to_json(r.ae_mc)},
                      {"standard_ber_oracle", r.standard_oracle},
                      {"ae_ber_oracle", r.ae_oracle}});
    points.back().update(r.ae.rule_json());
  }
  ctx.write(prefix + "_levels.csv", levels.str());
  nlohmann::json results = {{"points", points}};
  if (emit_ber) {
    ctx.write(prefix + "_ber.csv", ber.str());
    // required SNR per (order, alpha) from the exact oracle and from Monte Carlo
    Csv req(ctx.hash, {"order", "alpha", "standard_required_db", "ae_required_db", "ae_gain_db",
                       "standard_required_mc_db", "ae_required_mc_db"});
    nlohmann::json table = nlohmann::json::array();
    for (int m : ctx.cfg.orders) {
      for (double a : ctx.cfg.alphas) {
        std::vector<double> snr, so, ao, sm, am;
        for (std::size_t i = 0; i < pts.size(); ++i) {
          if (pts[i].order != m || pts[i].alpha != a || !res[i]) continue;
          snr.push_back(pts[i].snr_db);
          so.push_back(res[i]->standard_oracle);
          ao.push_back(res[i]->ae_oracle);
          sm.push_back(res[i]->standard_mc.ber);
          am.push_back(res[i]->ae_mc.ber);
        }
        const auto s_req = try_required(snr, so), a_req = try_required(snr, ao);
        const auto s_mc = try_required(snr, sm), a_mc = try_required(snr, am);
        const double gain = s_req && a_req ? *s_req - *a_req : std::nan("");
        req.row(ctx.cfg.seed, {std::to_string(m), fmt(a), fmt(s_req), fmt(a_req), fmt(gain), fmt(s_mc), fmt(a_mc)});
        auto opt_json = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
        table.push_back({{"order", m},
                         {"alpha", a},
                         {"standard_required_db", opt_json(s_req)},
                         {"ae_required_db", opt_json(a_req)},
                         {"ae_gain_db", std::isnan(gain) ? nlohmann::json(nullptr) : nlohmann::json(gain)},
                         {"standard_required_mc_db", opt_json(s_mc)},
                         {"ae_required_mc_db", opt_json(a_mc)}});
      }
    }
    ctx.write(prefix + "_required_snr.csv", req.str());
    results["required_snr"] = table;
  }
  ctx.write_json(prefix + "_results.json", results);
}

// ---------------------------------------------------------------------- link

LinkConfig point_link(const ExperimentConfig& cfg, double wavelength, double length, double gain) {
  LinkConfig c = cfg.link;
  c.wavelength_nm = wavelength;
  c.dispersion = cfg.dispersion_for(wavelength);
  c.length_km = length;
  c.soa_gain_db = gain;
  c.osnr_db.reset();
  return c;
}

struct LinkPoint {
  double wavelength = 0.0, length = 0.0, gain = 0.0;
};

std::string point_name(const LinkPoint& p) {
  return "lambda=" + fmt(p.wavelength) + " L=" + fmt(p.length) + " gain=" + fmt(p.gain);
}

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

void run_link_sweep(Context& ctx) {
  const auto& cfg = ctx.cfg;
  std::vector<LinkPoint> pts;
  for (double w : cfg.wavelengths_nm) {
    for (double l : cfg.lengths_km) {
      for (double g : cfg.gains_db) pts.push_back({w, l, g});
    }
  }
  // the iterative design ignores dispersion: one per (wavelength, gain)
  std::vector<std::pair<double, double>> design_keys;
  for (double w : cfg.wavelengths_nm) {
    for (double g : cfg.gains_db) design_keys.emplace_back(w, g);
  }
  std::vector<std::optional<IterativeDesign>> designs(design_keys.size());
  parallel_for(
      design_keys.size(), cfg.threads,
      [&](std::size_t i) {
        const auto [w, g] = design_keys[i];
        const auto c = point_link(cfg, w, 0.0, g);
        const nlohmann::json tag = {{"kind", "iterative"}, {"link", to_json(c)}};
        designs[i] = iterative_link_design(c, 3.6e-4, 1000000, tag_seed(cfg.seed, tag));
      },
      [&](std::size_t i, const std::string& e) {
        ctx.fail("iterative design lambda=" + fmt(design_keys[i].first) + " gain=" + fmt(design_keys[i].second), e);
      });

  std::vector<std::optional<LinkComparison>> res(pts.size());
  std::vector<std::uint64_t> seeds(pts.size());
  parallel_for(
      pts.size(), cfg.threads,
      [&](std::size_t i) {
        const auto& p = pts[i];
        const auto c = point_link(cfg, p.wavelength, p.length, p.gain);
        seeds[i] = tag_seed(cfg.seed, {{"kind", "link_point"}, {"link", to_json(c)}});
        LinkSweepOptions opt;
        opt.powers_dbm = cfg.powers_dbm;
        opt.ber = cfg.ber;
        opt.ber.seed = seeds[i];
        opt.ber.threads = 1;
        opt.train = cfg.train;
        opt.train.seed = seeds[i];
        opt.window = cfg.window;
        opt.mmse_taps = cfg.mmse_taps;
        opt.train_backoff_db = cfg.train_backoff_db;
        opt.train_passes = cfg.train_passes;
        opt.cache = &ctx.cache;
        const IterativeDesign* design = nullptr;
        for (std::size_t k = 0; k < design_keys.size(); ++k) {
          if (design_keys[k] == std::pair{p.wavelength, p.gain} && designs[k]) design = &*designs[k];
        }
        res[i] = compare_link_systems(c, opt, design);
      },
      [&](std::size_t i, const std::string& e) { ctx.fail(point_name(pts[i]), e); });

  Csv sens(ctx.hash, {"wavelength_nm", "length_km", "gain_db", "dispersion", "alpha", "system", "required_dbm",
                      "improvement_db", "unrecoverable", "at_floor", "train_power_dbm"});
  Csv ber(ctx.hash, {"wavelength_nm", "length_km", "gain_db", "system", "power_dbm", "ber"});
  Csv diff(ctx.hash, {"wavelength_nm", "length_km", "gain_db", "ae_vs_standard_db", "ae_vs_iterative_db"});
  nlohmann::json points = nlohmann::json::array();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!res[i]) continue;
    const auto& p = pts[i];
    const auto& r = *res[i];
    const auto head = std::vector<std::string>{fmt(p.wavelength), fmt(p.length), fmt(p.gain)};
    auto emit = [&](const char* name, const SensitivityResult& s, const std::string& train_power) {
      auto cells = head;
      cells.insert(cells.end(), {fmt(*cfg.dispersion_for(p.wavelength)), fmt(r.alpha_at_standard), name,
                                 fmt(s.required_dbm), fmt(s.improvement_db), s.unrecoverable ? "1" : "0",
                                 s.at_floor ? "1" : "0", train_power});
      sens.row(seeds[i], cells);
      for (std::size_t k = 0; k < s.powers.size(); ++k) {
        auto b = head;
        b.insert(b.end(), {name, fmt(s.powers[k]), fmt(s.bers[k])});
        ber.row(seeds[i], b);
      }
    };
    emit("standard", r.standard, "");
    if (r.iterative) emit("iterative", *r.iterative, "");
    emit("ae", r.ae, r.ae_train_power_dbm.empty() ? "" : fmt(r.ae_train_power_dbm.back()));
    const double vs_std = r.ae.improvement_db - r.standard.improvement_db;
    const std::optional<double> vs_it =
        r.iterative && !r.iterative->unrecoverable
            ? std::optional<double>(r.ae.improvement_db - r.iterative->improvement_db)
            : std::nullopt;
    auto d = head;
    d.insert(d.end(), {fmt(vs_std), fmt(vs_it)});
    diff.row(seeds[i], d);
    nlohmann::json pj = {{"wavelength_nm", p.wavelength},
                         {"length_km", p.length},
                         {"gain_db", p.gain},
                         {"seed", seeds[i]},
                         {"alpha_at_standard", r.alpha_at_standard},
                         {"standard", to_json(r.standard)},
                         {"ae", to_json(r.ae)},
                         {"ae_train_power_dbm", r.ae_train_power_dbm},
                         {"ae_levels", r.ae_levels}};
    pj["iterative"] = r.iterative ? to_json(*r.iterative) : nlohmann::json(nullptr);
    if (r.design) {
      pj["iterative_levels"] = r.design->result.levels;
      pj["iterative_thresholds"] = r.design->result.thresholds.values;
      pj["iterative_design_power_dbm"] = r.design->design_power_dbm;
    }
    points.push_back(pj);
  }
  const std::string prefix = cfg.experiment;
  ctx.write(prefix + "_sensitivity.csv", sens.str());
  ctx.write(prefix + "_ber.csv", ber.str());
  ctx.write(prefix + "_improvement.csv", diff.str());
  nlohmann::json results = {{"points", points}};

  if (cfg.experiment == "fig10") {
    // reach with the 4 dB margin rule; an unrecoverable point never meets it
    Csv reach_csv(ctx.hash, {"wavelength_nm", "gain_db", "system", "reach_km", "complete"});
    nlohmann::json reach_json = nlohmann::json::array();
    for (double w : cfg.wavelengths_nm) {
      for (double g : cfg.gains_db) {
        for (const char* name : {"standard", "iterative", "ae"}) {
          std::vector<double> lengths, imp;
          bool complete = true;
          for (std::size_t i = 0; i < pts.size(); ++i) {
            if (pts[i].wavelength != w || pts[i].gain != g) continue;
            if (!res[i]) {
              complete = false;
              continue;
            }
            const SensitivityResult* s = std::string(name) == "standard" ? &res[i]->standard
                                         : std::string(name) == "ae"     ? &res[i]->ae
                                         : res[i]->iterative             ? &*res[i]->iterative
                                                                         : nullptr;
            if (!s) {
              complete = false;
              continue;
            }
            lengths.push_back(pts[i].length);
            imp.push_back(s->unrecoverable ? -1e9 : s->improvement_db);
          }
          if (lengths.empty()) continue;
          const double km = reach(lengths, imp, 4.0);
          reach_csv.row(cfg.seed, {fmt(w), fmt(g), name, fmt(km), complete ? "1" : "0"});
          reach_json.push_back(
              {{"wavelength_nm", w}, {"gain_db", g}, {"system", name}, {"reach_km", km}, {"complete", complete}});
        }
      }
    }
    ctx.write("fig10_reach.csv", reach_csv.str());
    results["reach"] = reach_json;
  }
  ctx.write_json(prefix + "_results.json", results);
}

// ---------------------------------------------------------------------- fig7

void run_fig7(Context& ctx) {
  const auto& cfg = ctx.cfg;
  const double w = cfg.wavelengths_nm.front();
  const double g = cfg.gains_db.front();
  const double l = cfg.lengths_km.front();
  const auto base = point_link(cfg, w, 0.0, g);
  const nlohmann::json tag = {{"kind", "iterative"}, {"link", to_json(base)}};
  const std::uint64_t seed = tag_seed(cfg.seed, tag);
  const auto design = iterative_link_design(base, 3.6e-4, 1000000, seed);
  const auto& levels = design.result.levels;
  const auto& thresholds = design.result.thresholds;

  struct Scenario {
    std::string name;
    double length;
    bool mmse;
  };
  const std::vector<Scenario> scenarios = {{"b2b", 0.0, false}, {"raw", l, false}, {"mmse", l, true}};
  std::vector<std::vector<double>> samples(scenarios.size());
  std::vector<std::vector<int>> sent(scenarios.size());
  std::vector<long> errors(scenarios.size(), 0);
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    LinkConfig c = design.design_config;
    c.length_km = scenarios[s].length;
    const auto mapped = link_detected_levels(levels, c);
    std::optional<FirTaps> taps;
    if (scenarios[s].mmse) {
      RandomStream rng = RandomStream::derive(seed, 1u << 30);
      std::vector<int> sym(kMmseTrainingSymbols);
      for (int& v : sym) v = rng.uniform_index(4);
      const auto rx = run_link_powers(levels, c, sym, rng);
      std::vector<double> target;
      for (int v : sym) target.push_back(mapped[static_cast<std::size_t>(v)]);
      taps = mmse_train_circular(rx.samples, target, cfg.mmse_taps);
    }
    for (std::uint64_t b = 0; static_cast<long>(samples[s].size()) < cfg.histogram_symbols; ++b) {
      RandomStream rng = RandomStream::derive(seed, b);
      std::vector<int> sym(static_cast<std::size_t>(c.block_symbols));
      for (int& v : sym) v = rng.uniform_index(4);
      auto rx = run_link_powers(levels, c, sym, rng).samples;
      if (taps) rx = mmse_apply_circular(*taps, rx);
      for (std::size_t k = 0; k < sym.size() && static_cast<long>(samples[s].size()) < cfg.histogram_symbols; ++k) {
        samples[s].push_back(rx[k]);
        sent[s].push_back(sym[k]);
        if (threshold_detect(rx[k], thresholds) != sym[k]) ++errors[s];
      }
    }
  }
  double lo = samples[0][0], hi = lo;
  for (const auto& v : samples) {
    lo = std::min(lo, *std::min_element(v.begin(), v.end()));
    hi = std::max(hi, *std::max_element(v.begin(), v.end()));
  }
  const int bins = cfg.histogram_bins;
  const double width = (hi - lo) / bins;
  const auto mapped = link_detected_levels(levels, design.design_config);
  Csv hist(ctx.hash, {"scenario", "symbol", "bin_lo", "bin_hi", "h_lo", "h_hi", "density"});
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    std::vector<std::vector<long>> counts(4, std::vector<long>(static_cast<std::size_t>(bins), 0));
    for (std::size_t k = 0; k < samples[s].size(); ++k) {
      const int b = std::clamp(static_cast<int>((samples[s][k] - lo) / width), 0, bins - 1);
      ++counts[static_cast<std::size_t>(sent[s][k])][static_cast<std::size_t>(b)];
    }
    const double n = static_cast<double>(samples[s].size());
    for (int sym = 0; sym < 4; ++sym) {
      for (int b = 0; b < bins; ++b) {
        const double edges[2] = {lo + b * width, lo + (b + 1) * width};
        const auto h = normalize_histogram(edges, mapped);
        hist.row(seed, {scenarios[s].name, std::to_string(sym), fmt(edges[0]), fmt(edges[1]), fmt(h[0]), fmt(h[1]),
                        fmt(static_cast<double>(counts[static_cast<std::size_t>(sym)][static_cast<std::size_t>(b)]) /
                            (n * width))});
      }
    }
  }
  Csv table(ctx.hash, {"index", "level", "threshold"});
  for (std::size_t k = 0; k < levels.size(); ++k) {
    table.row(seed, {std::to_string(k), fmt(levels[k]), k < thresholds.values.size() ? fmt(thresholds.values[k]) : ""});
  }
  nlohmann::json scen = nlohmann::json::array();
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    scen.push_back({{"scenario", scenarios[s].name},
                    {"length_km", scenarios[s].length},
                    {"mmse", scenarios[s].mmse},
                    {"symbols", samples[s].size()},
                    {"symbol_errors", errors[s]},
                    {"ser", static_cast<double>(errors[s]) / static_cast<double>(samples[s].size())}});
  }
  ctx.write("fig7_histograms.csv", hist.str());
  ctx.write("fig7_design.csv", table.str());
  ctx.write_json("fig7_results.json", {{"seed", seed},
                                       {"design_power_dbm", design.design_power_dbm},
                                       {"levels", levels},
                                       {"thresholds", thresholds.values},
                                       {"scenarios", scen}});
}

// ------------------------------------------------------------------ osnr-b2b

void run_osnr(Context& ctx) {
  const auto& cfg = ctx.cfg;
  LinkConfig base = cfg.link;
  base.dispersion = cfg.dispersion_for(base.wavelength_nm);
  TrainConfig tc = cfg.train;
  tc.seed = tag_seed(cfg.seed, {{"kind", "osnr_ae"}, {"link", to_json(base)}, {"design_osnr_db", cfg.design_osnr_db}});
  BerOptions ber = cfg.ber;
  ber.seed = tc.seed;
  ber.threads = cfg.threads;
  const auto sweep = osnr_b2b_sweep(base, cfg.osnrs_db, cfg.design_osnr_db, tc, ber, &ctx.cache);
  Csv csv(ctx.hash, {"osnr_db", "system", "ber", "ser", "bit_errors", "symbols", "upper_bound", "thresholds"});
  for (std::size_t i = 0; i < sweep.osnr_db.size(); ++i) {
    for (const auto& [name, e] : {std::pair{"standard", sweep.standard[i]}, std::pair{"ae", sweep.ae[i]}}) {
      std::string th;
      if (std::string(name) == "ae") {
        for (double t : sweep.ae_thresholds[i].values) th += (th.empty() ? "" : " ") + fmt(t);
      }
      csv.row(tc.seed, {fmt(sweep.osnr_db[i]), name, fmt(e.ber), fmt(e.ser), std::to_string(e.bit_errors),
                        std::to_string(e.symbols_sent), e.upper_bound ? "1" : "0", th});
    }
  }
  Csv req(ctx.hash, {"standard_required_db", "ae_required_db", "advantage_db"});
  const double adv = sweep.standard_required_db && sweep.ae_required_db
                         ? *sweep.standard_required_db - *sweep.ae_required_db
                         : std::nan("");
  req.row(tc.seed, {fmt(sweep.standard_required_db), fmt(sweep.ae_required_db), fmt(adv)});
  nlohmann::json std_j = nlohmann::json::array(), ae_j = nlohmann::json::array();
  for (std::size_t i = 0; i < sweep.osnr_db.size(); ++i) {
    std_j.push_back(to_json(sweep.standard[i]));
    ae_j.push_back(to_json(sweep.ae[i]));
  }
  ctx.write("osnr_b2b_ber.csv", csv.str());
  ctx.write("osnr_b2b_required.csv", req.str());
  ctx.write_json("osnr_b2b_results.json", {{"osnr_db", sweep.osnr_db},
                                           {"ae_levels", sweep.ae_levels},
                                           {"standard", std_j},
                                           {"ae", ae_j},
                                           {"standard_required_db", opt_json(sweep.standard_required_db)},
                                           {"ae_required_db", opt_json(sweep.ae_required_db)},
                                           {"advantage_db", std::isnan(adv) ? nlohmann::json(nullptr) : nlohmann::json(adv)}});
}

nlohmann::json versions() {
  char eigen[32], json[32];
  std::snprintf(eigen, sizeof eigen, "%d.%d.%d", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
  std::snprintf(json, sizeof json, "%d.%d.%d", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                NLOHMANN_JSON_VERSION_PATCH);
  return {{"compiler", __VERSION__}, {"fftw", std::string(fftw_version)}, {"eigen", std::string(eigen)},
          {"boost", BOOST_LIB_VERSION}, {"nlohmann_json", std::string(json)}, {"cplusplus", __cplusplus}};
}

}  // namespace

// ---------------------------------------------------------------- checkpoints

std::filesystem::path CheckpointCache::path_for(const nlohmann::json& key, std::uint64_t seed) const {
  return dir_ / (hex64(config_hash(key)) + "-" + std::to_string(seed) + ".ckpt");
}

TrainResult CheckpointCache::get_or_train(const nlohmann::json& key, std::uint64_t seed,
                                          const std::function<TrainResult()>& trainer) {
  const auto path = path_for(key, seed);
  auto from_file = [&]() -> TrainResult {
    nlohmann::json meta;
    Network net = load_checkpoint(path, &meta);
    if (meta.value("key", nlohmann::json()) != key || meta.value("seed", std::uint64_t{0}) != seed) {
      throw std::runtime_error("checkpoint " + path.string() + " belongs to a different key");
    }
    TrainResult r{.net = net, .extracted = extract_constellation(net), .loss_trace = {}, .validation_trace = {}};
    r.iterations = meta.at("iterations").get<int>();
    r.best_validation = meta.at("best_validation").get<double>();
    r.early_stopped = meta.at("early_stopped").get<bool>();
    r.restart = meta.at("restart").get<int>();
    return r;
  };
  if (std::filesystem::exists(path)) {
    ++hits_;
    return from_file();
  }
  ++misses_;
  TrainResult r = trainer();
  std::filesystem::create_directories(dir_);
  const nlohmann::json meta = {{"key", key},
                               {"seed", seed},
                               {"iterations", r.iterations},
                               {"best_validation", r.best_validation},
                               {"early_stopped", r.early_stopped},
                               {"restart", r.restart}};
  std::ostringstream tmp_name;
  tmp_name << path.filename().string() << ".tmp." << std::this_thread::get_id();
  const auto tmp = dir_ / tmp_name.str();
  save_checkpoint(tmp, r.net, meta);
  // a hard link publishes the file without replacing one that appeared meanwhile
  std::error_code ec;
  std::filesystem::create_hard_link(tmp, path, ec);
  std::filesystem::remove(tmp);
  return r;
}

// ----------------------------------------------------------- link comparison

LinkComparison compare_link_systems(const LinkConfig& cfg, const LinkSweepOptions& opt,
                                    const IterativeDesign* design) {
  if (opt.powers_dbm.size() < 2) throw std::invalid_argument("compare_link_systems: power grid needs two points");
  const auto& grid = opt.powers_dbm;
  auto sens = [&](const LinkSystem& sys, std::size_t start) {
    return sensitivity(
        [&](double dbm) {
          LinkConfig c = cfg;
          c.rx_power_dbm = dbm;
          return evaluate_link(sys, c, opt.ber);
        },
        grid, 1.8e-4, start);
  };
  LinkComparison out;
  out.standard = sens(standard_link_system(cfg, opt.mmse_taps), nearest_index(grid, -13.0 - 0.3 * cfg.soa_gain_db));
  const double std_req = out.standard.required_dbm.value_or(cfg.rx_power_dbm);
  {
    LinkConfig c = cfg;
    c.rx_power_dbm = std_req;
    out.alpha_at_standard = alpha_equivalent(c, standard_pam(4));
  }
  if (design) {
    out.design = *design;
    const auto& lv = design->result.levels;
    const auto sys = threshold_link_system("iterative", Constellation::from_levels(field_levels(lv)),
                                           design->result.thresholds, opt.mmse_taps);
    out.iterative = sens(sys, nearest_index(grid, std_req - 1.0));
  }
  double power = std_req - opt.train_backoff_db;
  std::optional<TrainResult> best;
  for (int pass = 0; pass < opt.train_passes; ++pass) {
    LinkConfig tc = cfg;
    tc.rx_power_dbm = power;
    const nlohmann::json key = {{"kind", "link_ae"},
                                {"order", 4},
                                {"window", opt.window},
                                {"link", to_json(tc)},
                                {"train", train_key(opt.train)}};
    auto trained = cached_train(opt.cache, key, opt.train.seed, [&] { return train_link_ae(4, opt.window, tc, opt.train); });
    const auto r = sens(decoder_link_system("ae", trained), nearest_index(grid, power));
    out.ae_train_power_dbm.push_back(power);
    out.ae = r;
    out.ae_levels = trained.extracted.constellation.detected_levels();
    if (!r.required_dbm) break;
    power = *r.required_dbm;
  }
  return out;
}

// ------------------------------------------------------------------ osnr-b2b

OsnrSweep osnr_b2b_sweep(const LinkConfig& base, std::span<const double> osnr_db, double design_osnr_db,
                         const TrainConfig& train_cfg, const BerOptions& ber, CheckpointCache* cache) {
  LinkConfig design = base;
  design.osnr_db = design_osnr_db;
  const nlohmann::json ae_key = {
      {"kind", "link_ae"}, {"order", 4}, {"window", 1}, {"link", to_json(design)}, {"train", train_key(train_cfg)}};
  const auto ae = cached_train(cache, ae_key, train_cfg.seed, [&] { return train_link_ae(4, 1, design, train_cfg); });
  OsnrSweep out;
  out.ae_levels = ae.extracted.constellation.detected_levels();
  for (double o : osnr_db) {
    LinkConfig c = base;
    c.osnr_db = o;
    const nlohmann::json tag = {{"osnr_db", o}};
    BerOptions opt = ber;
    opt.seed = splitmix64(ber.seed ^ config_hash(tag));
    out.osnr_db.push_back(o);
    out.standard.push_back(evaluate_link(standard_link_system(c, std::nullopt), c, opt));

    TrainConfig dt = train_cfg;
    dt.restarts = 1;
    dt.max_iterations = std::min(dt.max_iterations, 3000);
    dt.seed = splitmix64(train_cfg.seed ^ config_hash(tag));
    const nlohmann::json dec_key = {{"kind", "link_decoder"},
                                    {"start", ae_key},
                                    {"start_seed", train_cfg.seed},
                                    {"link", to_json(c)},
                                    {"train", train_key(dt)}};
    const auto dec = cached_train(cache, dec_key, dt.seed, [&] {
      WaveformChannel channel(c);
      return train_decoder(channel, ae.net, dt);
    });
    // thresholds live where the decoder reads: link-normalized samples
    const auto th = bisection_thresholds(decoder_classifier(dec.net, dec.extracted.rank),
                                         link_detected_levels(out.ae_levels, c));
    out.ae_thresholds.push_back(th);
    out.ae.push_back(evaluate_link(threshold_link_system("ae", dec.extracted.constellation, th, std::nullopt), c, opt));
  }
  auto crossing = [&](const std::vector<BerEstimate>& est) -> std::optional<double> {
    if (out.osnr_db.size() < 2) return std::nullopt;
    const auto r = sensitivity(
        [&](double o) {
          const auto i = nearest_index(out.osnr_db, o);
          return est[i];
        },
        out.osnr_db, 1e-4, 0);
    return r.required_dbm;
  };
  out.standard_required_db = crossing(out.standard);
  out.ae_required_db = crossing(out.ae);
  return out;
}

// ------------------------------------------------------------------- runner

ExperimentOutcome run_experiment(const ExperimentConfig& cfg_in) {
  const auto t0 = std::chrono::steady_clock::now();
  const nlohmann::json full = to_json(cfg_in);
  const ExperimentConfig cfg = experiment_config_from_json(full);
  // results do not depend on where they are written or on the thread count
  nlohmann::json hashed = full;
  for (const char* k : {"out", "cache", "threads"}) hashed.erase(k);
  Context ctx(cfg, hex64(config_hash(hashed)), cfg.out_dir / cfg.experiment);
  std::filesystem::create_directories(ctx.dir);

  try {
    const auto& e = cfg.experiment;
    if (e == "fig4") run_fig4(ctx);
    else if (e == "fig5") run_memoryless_sweep(ctx, true);
    else if (e == "appendixB") run_memoryless_sweep(ctx, false);
    else if (e == "fig7") run_fig7(ctx);
    else if (e == "osnr-b2b") run_osnr(ctx);
    else run_link_sweep(ctx);
  } catch (const std::exception& ex) {
    ctx.fail("experiment", ex.what());
  }

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::json files = nlohmann::json::array();
  for (const auto& f : ctx.files) files.push_back(f.filename().string());
  const nlohmann::json manifest = {{"experiment", cfg.experiment},
                                   {"config", full},
                                   {"config_hash", ctx.hash},
                                   {"seed", cfg.seed},
                                   {"versions", versions()},
                                   {"wall_time_s", wall},
                                   {"files", files},
                                   {"failures", ctx.failures},
                                   {"cache", {{"dir", cfg.resolved_cache_dir().string()},
                                              {"hits", ctx.cache.hits()},
                                              {"misses", ctx.cache.misses()}}}};
  ctx.write_json("manifest.json", manifest);
  return {ctx.dir, ctx.files, static_cast<int>(ctx.failures.size())};
}

}  // namespace aepam
