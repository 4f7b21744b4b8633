#include "aepam/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace aepam {
namespace {

// p'_j = mu (w_j + gamma) / (mu + gamma), mu = mean(w),
// gamma = max(0, (r w_max - w_min) / (1 - r)).
struct ExtinctionMap {
  double mu = 0.0;
  double gamma = 0.0;
  double r = 0.0;
  std::size_t imin = 0;
  std::size_t imax = 0;
  bool active = false;
};

ExtinctionMap extinction_map(std::span<const double> w, double er_db) {
  ExtinctionMap m;
  m.imin = static_cast<std::size_t>(std::min_element(w.begin(), w.end()) - w.begin());
  m.imax = static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
  for (double v : w) m.mu += v;
  m.mu /= static_cast<double>(w.size());
  if (std::isfinite(er_db)) {
    m.r = std::pow(10.0, -er_db / 10.0);
    m.gamma = extinction_offset(w[m.imin], w[m.imax], er_db);
    m.active = m.gamma > 0.0;
  }
  return m;
}

std::vector<double> extinction_backward(const ExtinctionMap& m, std::span<const double> w,
                                        std::span<const double> grad_mapped) {
  const std::size_t n = w.size();
  const double d = m.mu + m.gamma;
  std::vector<double> dgamma(n, 0.0);
  if (m.active) {
    dgamma[m.imax] += m.r / (1.0 - m.r);
    dgamma[m.imin] -= 1.0 / (1.0 - m.r);
  }
  const double dmu = 1.0 / static_cast<double>(n);
  std::vector<double> out(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double g = grad_mapped[j];
    if (g == 0.0) continue;
    const double num = w[j] + m.gamma;
    for (std::size_t k = 0; k < n; ++k) {
      const double dnum = (j == k ? 1.0 : 0.0) + dgamma[k];
      const double dden = dmu + dgamma[k];
      // d/dw_k of mu * num / d
      out[k] += g * ((dmu * num + m.mu * dnum) / d - m.mu * num * dden / (d * d));
    }
  }
  return out;
}

void apply_real_filter(std::vector<double>& x, const std::vector<double>& h) {
  std::vector<cplx> buf(x.begin(), x.end());
  fft_forward(buf);
  for (std::size_t k = 0; k < buf.size(); ++k) buf[k] *= h[k];
  fft_inverse(buf);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = buf[i].real();
}

}  // namespace

void MemorylessChannel::draw(std::span<const int> symbols, RandomStream& rng) {
  symbols_.assign(symbols.begin(), symbols.end());
  ase_.resize(symbols.size());
  thermal_.resize(symbols.size());
  // same draw order as transmit(): ASE then thermal per symbol
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    ase_[i] = rng.gaussian();
    thermal_[i] = rng.gaussian();
  }
}

std::vector<double> MemorylessChannel::evaluate(std::span<const double> levels) {
  order_ = levels.size();
  const double sa = std::sqrt(params_.sigma2_ase);
  const double st = std::sqrt(params_.sigma2_th);
  std::vector<double> r(symbols_.size());
  field_.resize(symbols_.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double f = levels[static_cast<std::size_t>(symbols_[i])] + sa * ase_[i];
    field_[i] = f;
    r[i] = f * f + st * thermal_[i];
  }
  return r;
}

std::vector<double> MemorylessChannel::backward(std::span<const double> grad_received) {
  std::vector<double> g(order_, 0.0);
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    g[static_cast<std::size_t>(symbols_[i])] += grad_received[i] * 2.0 * field_[i];
  }
  return g;
}

nlohmann::json MemorylessChannel::describe() const {
  return {{"channel", "memoryless"},
          {"sigma2_ase", params_.sigma2_ase},
          {"sigma2_th", params_.sigma2_th},
          {"sigma2_n", params_.sigma2_n},
          {"alpha", params_.alpha}};
}

WaveformChannel::WaveformChannel(LinkConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  noise_ = link_noise(cfg_);
}

nlohmann::json WaveformChannel::describe() const {
  return {{"channel", "waveform"}, {"link", to_json(cfg_)}};
}

void WaveformChannel::prepare(std::size_t n) {
  if (n == cached_n_) return;
  cached_n_ = n;
  const double fs = cfg_.sample_rate();
  const bool matched = cfg_.pulse == PulseMode::kMatchedRrc;
  tx_response_.assign(n, 0.0);
  rx_response_.clear();
  if (matched) rx_response_.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    const double rc = raised_cosine_spectrum(fft_frequency(k, n, fs) / cfg_.baud, cfg_.rolloff);
    tx_response_[k] = cfg_.samples_per_symbol * (matched ? std::sqrt(rc) : rc);
    if (matched) rx_response_[k] = std::sqrt(rc);
  }
  cd_response_.clear();
  const double d = cfg_.dispersion_ps_nm_km();
  if (d != 0.0 && cfg_.length_km != 0.0) {
    const double lambda = cfg_.wavelength_nm * 1e-9;
    const double beta2 = -d * 1e-6 * lambda * lambda / (2.0 * std::numbers::pi * kSpeedOfLight);
    cd_response_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double w = 2.0 * std::numbers::pi * fft_frequency(k, n, fs);
      cd_response_[k] = std::polar(1.0, 0.5 * beta2 * w * w * cfg_.length_km * 1e3);
    }
  }
}

void WaveformChannel::draw(std::span<const int> symbols, RandomStream& rng) {
  symbols_.assign(symbols.begin(), symbols.end());
  const std::size_t n = symbols.size() * static_cast<std::size_t>(cfg_.samples_per_symbol);
  prepare(n);
  // same draw order as run_link: ASE over the whole block, then thermal
  FieldWaveform noise;
  noise.sample_rate = cfg_.sample_rate();
  noise.samples.assign(n, cplx(0.0, 0.0));
  if (noise_.sigma2_ase > 0.0) {
    const double psd = noise_.sigma2_ase / std::min(cfg_.ase_bandwidth(), cfg_.sample_rate());
    add_ase(noise, psd, cfg_.ase_bandwidth(), rng, cfg_.ase_in_phase_only);
  }
  ase_ = std::move(noise.samples);
  thermal_.assign(n, 0.0);
  const double gp = cfg_.gain_linear() * cfg_.rx_power_w();
  const double sd = std::sqrt(thermal_variance(cfg_)) / gp;
  if (sd > 0.0) {
    for (double& v : thermal_) v = sd * rng.gaussian();
  }
}

std::vector<double> WaveformChannel::evaluate(std::span<const double> levels) {
  const std::size_t sps = static_cast<std::size_t>(cfg_.samples_per_symbol);
  const std::size_t n = symbols_.size() * sps;
  levels_.assign(levels.begin(), levels.end());
  std::vector<double> w(levels.size());
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = levels[j] * levels[j];
  const auto map = extinction_map(w, cfg_.extinction_ratio_db);
  gamma_ = map.gamma;
  mapped_.resize(w.size());
  for (std::size_t j = 0; j < w.size(); ++j) mapped_[j] = map.mu * (w[j] + map.gamma) / (map.mu + map.gamma);

  power_.assign(n, 0.0);
  for (std::size_t k = 0; k < symbols_.size(); ++k) power_[k * sps] = mapped_[static_cast<std::size_t>(symbols_[k])];
  apply_real_filter(power_, tx_response_);

  field_.resize(n);
  for (std::size_t i = 0; i < n; ++i) field_[i] = std::sqrt(std::max(power_[i], 0.0));
  if (!cd_response_.empty()) {
    fft_forward(field_);
    for (std::size_t k = 0; k < n; ++k) field_[k] *= cd_response_[k];
    fft_inverse(field_);
  }
  for (std::size_t i = 0; i < n; ++i) field_[i] += ase_[i];

  std::vector<double> intensity(n);
  for (std::size_t i = 0; i < n; ++i) intensity[i] = std::norm(field_[i]) + thermal_[i];
  if (!rx_response_.empty()) apply_real_filter(intensity, rx_response_);
  std::vector<double> y(symbols_.size());
  for (std::size_t k = 0; k < y.size(); ++k) y[k] = intensity[k * sps];
  return y;
}

std::vector<double> WaveformChannel::backward(std::span<const double> grad_received) {
  const std::size_t sps = static_cast<std::size_t>(cfg_.samples_per_symbol);
  const std::size_t n = symbols_.size() * sps;
  std::vector<double> gi(n, 0.0);
  for (std::size_t k = 0; k < symbols_.size(); ++k) gi[k * sps] = grad_received[k];
  // both filters have real even responses, so each is its own adjoint
  if (!rx_response_.empty()) apply_real_filter(gi, rx_response_);

  std::vector<cplx> ga(n);
  for (std::size_t i = 0; i < n; ++i) ga[i] = 2.0 * field_[i] * gi[i];
  if (!cd_response_.empty()) {
    fft_forward(ga);
    for (std::size_t k = 0; k < n; ++k) ga[k] *= std::conj(cd_response_[k]);
    fft_inverse(ga);
  }
  std::vector<double> gp(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (power_[i] > 0.0) gp[i] = ga[i].real() / (2.0 * std::sqrt(power_[i]));
  }
  apply_real_filter(gp, tx_response_);
  std::vector<double> gmapped(levels_.size(), 0.0);
  for (std::size_t k = 0; k < symbols_.size(); ++k) gmapped[static_cast<std::size_t>(symbols_[k])] += gp[k * sps];

  std::vector<double> w(levels_.size());
  for (std::size_t j = 0; j < w.size(); ++j) w[j] = levels_[j] * levels_[j];
  const auto map = extinction_map(w, cfg_.extinction_ratio_db);
  auto gw = extinction_backward(map, w, gmapped);
  std::vector<double> gs(levels_.size());
  for (std::size_t j = 0; j < gs.size(); ++j) gs[j] = 2.0 * levels_[j] * gw[j];
  return gs;
}

std::vector<double> circular_windows(std::span<const double> received, int width) {
  if (width < 1) throw std::invalid_argument("circular_windows: width must be positive");
  const long n = static_cast<long>(received.size());
  const long half = width / 2;
  std::vector<double> out(received.size() * static_cast<std::size_t>(width));
  for (long k = 0; k < n; ++k) {
    for (long j = 0; j < width; ++j) {
      const long idx = ((k + j - half) % n + n) % n;
      out[static_cast<std::size_t>(k * width + j)] = received[static_cast<std::size_t>(idx)];
    }
  }
  return out;
}

std::vector<double> fold_window_gradient(std::span<const double> grad_windows, int width) {
  const long n = static_cast<long>(grad_windows.size()) / width;
  const long half = width / 2;
  std::vector<double> out(static_cast<std::size_t>(n), 0.0);
  for (long k = 0; k < n; ++k) {
    for (long j = 0; j < width; ++j) {
      const long idx = ((k + j - half) % n + n) % n;
      out[static_cast<std::size_t>(idx)] += grad_windows[static_cast<std::size_t>(k * width + j)];
    }
  }
  return out;
}

}  // namespace aepam
