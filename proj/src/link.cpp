#include "aepam/link.hpp"

#include "aepam/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace aepam {
namespace {

double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
double dbm_to_w(double dbm) { return 1e-3 * db_to_lin(dbm); }

// sqrt of the raised-cosine spectrum or the spectrum itself, per bin.
std::vector<double> nyquist_response(std::size_t n, const LinkConfig& cfg, bool root) {
  std::vector<double> h(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double f = fft_frequency(k, n, cfg.sample_rate()) / cfg.baud;
    const double rc = raised_cosine_spectrum(f, cfg.rolloff);
    h[k] = root ? std::sqrt(rc) : rc;
  }
  return h;
}

void filter_real(std::vector<double>& x, const std::vector<double>& h) {
  std::vector<cplx> buf(x.begin(), x.end());
  fft_forward(buf);
  for (std::size_t k = 0; k < buf.size(); ++k) buf[k] *= h[k];
  fft_inverse(buf);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = buf[i].real();
}

}  // namespace

std::optional<double> cwdm_dispersion(double wavelength_nm) {
  struct Entry {
    double nm;
    double d;
  };
  static constexpr Entry kTable[] = {{1271.0, -3.74}, {1291.0, -1.79}, {1310.0, 0.0}, {1331.0, 1.92}};
  for (const auto& e : kTable) {
    if (std::abs(e.nm - wavelength_nm) < 1e-9) return e.d;
  }
  return std::nullopt;
}

void LinkConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("link config: " + msg); };
  if (!(baud > 0.0)) fail("baud must be positive");
  if (samples_per_symbol < 2) fail("samples_per_symbol must be >= 2");
  if (!(rolloff > 0.0 && rolloff <= 1.0)) fail("rolloff must lie in (0, 1]");
  if (!(length_km >= 0.0)) fail("length must be >= 0");
  if (!(soa_gain_db >= 0.0)) fail("soa_gain_db must be >= 0");
  if (!(extinction_ratio_db > 0.0)) fail("extinction_ratio_db must be positive");
  if (!(wavelength_nm > 0.0)) fail("wavelength must be positive");
  if (!dispersion && !cwdm_dispersion(wavelength_nm)) {
    fail("no dispersion given for custom wavelength " + std::to_string(wavelength_nm) + " nm");
  }
  if (optical_bandwidth < 0.0) fail("optical_bandwidth must be >= 0");
  if (block_symbols < 8) fail("block_symbols must be >= 8");
  if (!(thermal_reference_ohm > 0.0)) fail("thermal_reference_ohm must be positive");
}

double LinkConfig::dispersion_ps_nm_km() const {
  if (dispersion) return *dispersion;
  if (auto d = cwdm_dispersion(wavelength_nm)) return *d;
  throw std::invalid_argument("link config: no dispersion for wavelength");
}

double LinkConfig::rx_power_w() const { return dbm_to_w(rx_power_dbm); }
double LinkConfig::gain_linear() const { return db_to_lin(soa_gain_db); }

nlohmann::json to_json(const LinkConfig& cfg) {
  nlohmann::json j = {
      {"baud", cfg.baud},
      {"samples_per_symbol", cfg.samples_per_symbol},
      {"rolloff", cfg.rolloff},
      {"wavelength_nm", cfg.wavelength_nm},
      {"dispersion", cfg.dispersion_ps_nm_km()},
      {"length_km", cfg.length_km},
      {"soa_gain_db", cfg.soa_gain_db},
      {"noise_figure_db", cfg.noise_figure_db},
      {"thermal_reference_ohm", cfg.thermal_reference_ohm},
      {"rx_power_dbm", cfg.rx_power_dbm},
      {"optical_bandwidth", cfg.ase_bandwidth()},
      {"ase_in_phase_only", cfg.ase_in_phase_only},
      {"pulse", cfg.pulse == PulseMode::kRaisedCosine ? "rc" : "matched_rrc"},
      {"block_symbols", cfg.block_symbols},
  };
  // JSON has no infinities; null marks a disabled stage
  j["extinction_ratio_db"] = std::isfinite(cfg.extinction_ratio_db)
                                 ? nlohmann::json(cfg.extinction_ratio_db)
                                 : nlohmann::json(nullptr);
  j["thermal_power_dbm"] = std::isfinite(cfg.thermal_power_dbm)
                               ? nlohmann::json(cfg.thermal_power_dbm)
                               : nlohmann::json(nullptr);
  j["osnr_db"] = cfg.osnr_db ? nlohmann::json(*cfg.osnr_db) : nlohmann::json(nullptr);
  return j;
}

LinkConfig link_config_from_json(const nlohmann::json& j, LinkConfig cfg) {
  auto read = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  read("baud", cfg.baud);
  read("samples_per_symbol", cfg.samples_per_symbol);
  read("rolloff", cfg.rolloff);
  read("wavelength_nm", cfg.wavelength_nm);
  if (j.contains("dispersion")) {
    if (j.at("dispersion").is_null()) cfg.dispersion.reset();
    else cfg.dispersion = j.at("dispersion").get<double>();
  }
  read("length_km", cfg.length_km);
  read("soa_gain_db", cfg.soa_gain_db);
  read("noise_figure_db", cfg.noise_figure_db);
  read("thermal_reference_ohm", cfg.thermal_reference_ohm);
  read("rx_power_dbm", cfg.rx_power_dbm);
  read("optical_bandwidth", cfg.optical_bandwidth);
  read("ase_in_phase_only", cfg.ase_in_phase_only);
  read("block_symbols", cfg.block_symbols);
  if (j.contains("extinction_ratio_db")) {
    const auto& v = j.at("extinction_ratio_db");
    cfg.extinction_ratio_db = v.is_null() ? std::numeric_limits<double>::infinity() : v.get<double>();
  }
  if (j.contains("thermal_power_dbm")) {
    const auto& v = j.at("thermal_power_dbm");
    cfg.thermal_power_dbm = v.is_null() ? -std::numeric_limits<double>::infinity() : v.get<double>();
  }
  if (j.contains("osnr_db")) {
    const auto& v = j.at("osnr_db");
    if (v.is_null()) cfg.osnr_db.reset();
    else cfg.osnr_db = v.get<double>();
  }
  if (j.contains("pulse")) {
    const auto tag = j.at("pulse").get<std::string>();
    if (tag == "rc") cfg.pulse = PulseMode::kRaisedCosine;
    else if (tag == "matched_rrc") cfg.pulse = PulseMode::kMatchedRrc;
    else throw std::invalid_argument("link config: unknown pulse mode '" + tag + "'");
  }
  return cfg;
}

double raised_cosine_spectrum(double f, double rolloff) {
  const double a = std::abs(f);
  const double lo = 0.5 * (1.0 - rolloff);
  const double hi = 0.5 * (1.0 + rolloff);
  if (a <= lo) return 1.0;
  if (a > hi) return 0.0;
  return 0.5 * (1.0 + std::cos(std::numbers::pi / rolloff * (a - lo)));
}

std::vector<double> rrc_taps(double rolloff, int sps, int span_symbols) {
  if (sps < 1 || span_symbols < 1 || !(rolloff > 0.0 && rolloff <= 1.0)) {
    throw std::invalid_argument("rrc_taps: bad parameters");
  }
  const int half = span_symbols * sps / 2;
  std::vector<double> h(static_cast<std::size_t>(2 * half + 1));
  const double b = rolloff;
  const double pi = std::numbers::pi;
  for (int i = -half; i <= half; ++i) {
    const double t = static_cast<double>(i) / sps;
    double v;
    if (i == 0) {
      v = 1.0 - b + 4.0 * b / pi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-12) {
      v = b / std::numbers::sqrt2 *
          ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * b)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * b)));
    } else {
      const double num = std::sin(pi * t * (1.0 - b)) + 4.0 * b * t * std::cos(pi * t * (1.0 + b));
      const double den = pi * t * (1.0 - (4.0 * b * t) * (4.0 * b * t));
      v = num / den;
    }
    h[static_cast<std::size_t>(i + half)] = v;
  }
  double energy = 0.0;
  for (double v : h) energy += v * v;
  for (double& v : h) v /= std::sqrt(energy);
  return h;
}

std::vector<double> shape_pulse(std::span<const double> symbols, const LinkConfig& cfg) {
  if (symbols.empty()) throw std::invalid_argument("shape_pulse: empty symbol stream");
  const auto sps = static_cast<std::size_t>(cfg.samples_per_symbol);
  std::vector<double> up(symbols.size() * sps, 0.0);
  for (std::size_t k = 0; k < symbols.size(); ++k) up[k * sps] = symbols[k];
  auto h = nyquist_response(up.size(), cfg, cfg.pulse == PulseMode::kMatchedRrc);
  for (double& v : h) v *= static_cast<double>(sps);
  filter_real(up, h);
  return up;
}

double extinction_offset(double pmin, double pmax, double er_db) {
  if (!std::isfinite(er_db)) return 0.0;
  const double r = std::pow(10.0, -er_db / 10.0);
  return std::max(0.0, (r * pmax - pmin) / (1.0 - r));
}

std::vector<double> apply_extinction(std::span<const double> powers, double er_db) {
  const auto [lo, hi] = std::minmax_element(powers.begin(), powers.end());
  const double gamma = extinction_offset(*lo, *hi, er_db);
  double mean = 0.0;
  for (double p : powers) mean += p;
  mean /= static_cast<double>(powers.size());
  std::vector<double> out(powers.begin(), powers.end());
  for (double& p : out) p = mean * (p + gamma) / (mean + gamma);
  return out;
}

std::vector<double> apply_extinction_waveform(std::span<const double> power, double er_db,
                                              double mean_power) {
  const auto [lo, hi] = std::minmax_element(power.begin(), power.end());
  const double gamma = extinction_offset(*lo, *hi, er_db);
  double mean = 0.0;
  for (double p : power) mean += p;
  mean /= static_cast<double>(power.size());
  std::vector<double> out(power.begin(), power.end());
  for (double& p : out) p = mean_power * (p + gamma) / (mean + gamma);
  return out;
}

FieldWaveform modulate(std::span<const double> power, double sample_rate, std::size_t* clipped) {
  FieldWaveform w;
  w.sample_rate = sample_rate;
  w.samples.resize(power.size());
  std::size_t n_clip = 0;
  for (std::size_t i = 0; i < power.size(); ++i) {
    if (power[i] < 0.0) ++n_clip;
    w.samples[i] = std::sqrt(std::max(power[i], 0.0));
  }
  if (clipped) *clipped = n_clip;
  return w;
}

void propagate_cd(FieldWaveform& field, double dispersion_ps_nm_km, double length_km,
                  double wavelength_nm) {
  if (dispersion_ps_nm_km == 0.0 || length_km == 0.0) return;
  const double d = dispersion_ps_nm_km * 1e-6;  // s/m^2
  const double lambda = wavelength_nm * 1e-9;
  const double beta2 = -d * lambda * lambda / (2.0 * std::numbers::pi * kSpeedOfLight);
  const double length = length_km * 1e3;
  const std::size_t n = field.samples.size();
  fft_forward(field.samples);
  for (std::size_t k = 0; k < n; ++k) {
    const double w = 2.0 * std::numbers::pi * fft_frequency(k, n, field.sample_rate);
    field.samples[k] *= std::polar(1.0, 0.5 * beta2 * w * w * length);
  }
  fft_inverse(field.samples);
}

double ase_psd(double gain_db, double nf_db, double wavelength_nm) {
  const double g = db_to_lin(gain_db);
  const double nsp = db_to_lin(nf_db) / 2.0;
  const double nu = kSpeedOfLight / (wavelength_nm * 1e-9);
  return nsp * (g - 1.0) * kPlanck * nu;
}

void add_ase(FieldWaveform& field, double psd, double optical_bandwidth, RandomStream& rng,
             bool in_phase_only) {
  if (psd <= 0.0) return;
  const std::size_t n = field.samples.size();
  // complex white noise with E|n|^2 = psd * fs, split equally over quadratures
  const double sd = std::sqrt(psd * field.sample_rate / 2.0);
  std::vector<cplx> noise(n);
  for (auto& v : noise) {
    const double re = rng.gaussian();
    const double im = rng.gaussian();
    v = cplx(sd * re, sd * im);
  }
  if (optical_bandwidth < field.sample_rate) {
    fft_forward(noise);
    for (std::size_t k = 0; k < n; ++k) {
      if (std::abs(fft_frequency(k, n, field.sample_rate)) > 0.5 * optical_bandwidth) noise[k] = 0.0;
    }
    fft_inverse(noise);
  }
  for (std::size_t i = 0; i < n; ++i) {
    // in-phase only keeps the full power on one real quadrature
    field.samples[i] += in_phase_only ? cplx(std::numbers::sqrt2 * noise[i].real(), 0.0) : noise[i];
  }
}

void amplify_soa(FieldWaveform& field, double gain_db, double nf_db, double optical_bandwidth,
                 double wavelength_nm, RandomStream& rng, bool in_phase_only) {
  const double g = db_to_lin(gain_db);
  const double a = std::sqrt(g);
  for (auto& v : field.samples) v *= a;
  add_ase(field, ase_psd(gain_db, nf_db, wavelength_nm), optical_bandwidth, rng, in_phase_only);
}

std::vector<double> detect(const FieldWaveform& field, double thermal_power_dbm,
                           double reference_ohm, RandomStream& rng) {
  std::vector<double> out(field.samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::norm(field.samples[i]);
  if (std::isfinite(thermal_power_dbm)) {
    const double sd = std::sqrt(dbm_to_w(thermal_power_dbm) / reference_ohm);
    for (double& v : out) v += sd * rng.gaussian();
  }
  return out;
}

std::vector<double> receiver_frontend(std::span<const double> samples, const LinkConfig& cfg,
                                      int delay, int out_per_symbol) {
  const int sps = cfg.samples_per_symbol;
  if (out_per_symbol < 1 || sps % out_per_symbol != 0) {
    throw std::invalid_argument("receiver_frontend: samples per symbol not divisible by output rate");
  }
  if (samples.size() % static_cast<std::size_t>(sps) != 0 || samples.size() < static_cast<std::size_t>(2 * sps)) {
    throw std::invalid_argument("receiver_frontend: stream too short or not a whole number of symbols");
  }
  std::vector<double> x(samples.begin(), samples.end());
  if (cfg.pulse == PulseMode::kMatchedRrc) filter_real(x, nyquist_response(x.size(), cfg, true));
  const std::size_t n = x.size();
  const std::size_t step = static_cast<std::size_t>(sps / out_per_symbol);
  const std::size_t start = static_cast<std::size_t>(((delay % static_cast<long>(n)) + static_cast<long>(n))) % n;
  std::vector<double> out(n / step);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[(start + i * step) % n];
  return out;
}

double ase_power(const LinkConfig& cfg) {
  const double bo = std::min(cfg.ase_bandwidth(), cfg.sample_rate());
  if (cfg.osnr_db) {
    // OSNR counts ASE in both polarizations; only the co-polarized half
    // beats with the signal
    const double psd = 0.5 * cfg.gain_linear() * cfg.rx_power_w() /
                       (db_to_lin(*cfg.osnr_db) * kOsnrReferenceBandwidth);
    return psd * bo;
  }
  return ase_psd(cfg.soa_gain_db, cfg.noise_figure_db, cfg.wavelength_nm) * bo;
}

double thermal_variance(const LinkConfig& cfg) {
  if (!std::isfinite(cfg.thermal_power_dbm)) return 0.0;
  return dbm_to_w(cfg.thermal_power_dbm) / cfg.thermal_reference_ohm;
}

std::vector<double> link_detected_levels(std::span<const double> level_powers,
                                         const LinkConfig& cfg) {
  return apply_extinction(level_powers, cfg.extinction_ratio_db);
}

LinkOutput run_link_powers(std::span<const double> level_powers, const LinkConfig& cfg,
                           std::span<const int> symbols, RandomStream& rng, int out_per_symbol) {
  cfg.validate();
  const auto levels = link_detected_levels(level_powers, cfg);
  const double p_rx = cfg.rx_power_w();
  std::vector<double> a(symbols.size());
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    const int s = symbols[k];
    if (s < 0 || static_cast<std::size_t>(s) >= levels.size()) {
      throw std::out_of_range("run_link: symbol index out of range");
    }
    a[k] = p_rx * levels[static_cast<std::size_t>(s)];
  }
  LinkOutput out;
  auto power = shape_pulse(a, cfg);
  auto field = modulate(power, cfg.sample_rate(), &out.clipped);
  propagate_cd(field, cfg.dispersion_ps_nm_km(), cfg.length_km, cfg.wavelength_nm);
  const double g = cfg.gain_linear();
  if (cfg.osnr_db) {
    for (auto& v : field.samples) v *= std::sqrt(g);
    add_ase(field, ase_power(cfg) / std::min(cfg.ase_bandwidth(), cfg.sample_rate()),
            cfg.ase_bandwidth(), rng, cfg.ase_in_phase_only);
  } else {
    amplify_soa(field, cfg.soa_gain_db, cfg.noise_figure_db, cfg.ase_bandwidth(), cfg.wavelength_nm,
                rng, cfg.ase_in_phase_only);
  }
  auto detected = detect(field, cfg.thermal_power_dbm, cfg.thermal_reference_ohm, rng);
  out.samples = receiver_frontend(detected, cfg, 0, out_per_symbol);
  const double scale = 1.0 / (g * p_rx);
  for (double& v : out.samples) v *= scale;
  return out;
}

LinkOutput run_link(const Constellation& c, const LinkConfig& cfg, std::span<const int> symbols,
                    RandomStream& rng, int out_per_symbol) {
  return run_link_powers(c.detected_levels(), cfg, symbols, rng, out_per_symbol);
}

LinkNoise link_noise(const LinkConfig& cfg) {
  const double gp = cfg.gain_linear() * cfg.rx_power_w();
  LinkNoise n;
  n.sigma2_ase = ase_power(cfg) / gp;
  n.sigma2_th = thermal_variance(cfg) / (gp * gp);
  n.in_phase_only = cfg.ase_in_phase_only;
  if (cfg.pulse == PulseMode::kMatchedRrc) {
    // the matched filter passes 1/sps of white detector noise
    n.sigma2_th /= cfg.samples_per_symbol;
  }
  return n;
}

double alpha_equivalent(const LinkConfig& cfg, const Constellation& c) {
  const auto n = link_noise(cfg);
  const auto levels = link_detected_levels(c.detected_levels(), cfg);
  double mean_p = 0.0;
  for (double p : levels) mean_p += p;
  mean_p /= static_cast<double>(levels.size());
  double ase_moment;
  if (n.in_phase_only) {
    ase_moment = 4.0 * mean_p * n.sigma2_ase + 3.0 * n.sigma2_ase * n.sigma2_ase;
  } else {
    const double si = 0.5 * n.sigma2_ase;
    ase_moment = 4.0 * mean_p * si + 8.0 * si * si;
  }
  const double total = ase_moment + n.sigma2_th;
  return total > 0.0 ? n.sigma2_th / total : 1.0;
}

double calibrate_thermal_reference(double target_ber, double rx_power_dbm,
                                   double thermal_power_dbm, double er_db) {
  const auto c = standard_pam(4, PamDomain::kIntensity);
  const auto levels = apply_extinction(c.detected_levels(), er_db);
  std::vector<double> scaled(levels.size());
  const double p = dbm_to_w(rx_power_dbm);
  for (std::size_t i = 0; i < levels.size(); ++i) scaled[i] = p * levels[i];
  std::vector<double> thr;
  for (std::size_t i = 1; i < scaled.size(); ++i) thr.push_back(0.5 * (scaled[i] + scaled[i - 1]));
  // BER falls monotonically in 1/sigma; bisect on log sigma
  double lo = std::log(1e-3 * p);
  double hi = std::log(10.0 * p);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double ber = awgn_ber_oracle(scaled, thr, std::exp(mid));
    if (ber > target_ber) hi = mid;
    else lo = mid;
  }
  const double sigma = std::exp(0.5 * (lo + hi));
  return dbm_to_w(thermal_power_dbm) / (sigma * sigma);
}

}  // namespace aepam
