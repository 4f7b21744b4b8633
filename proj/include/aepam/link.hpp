#pragma once

#include "aepam/constellation.hpp"
#include "aepam/fft.hpp"
#include "aepam/rng.hpp"
#include "json.hpp"

#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace aepam {

/// Thermal reference resistance [ohm]. Thermal current variance is
/// P_th / R_ref; the value puts ER 10 dB intensity PAM4 with midpoint
/// thresholds at BER 1.8e-4 for -13 dBm received power.
/// Recomputed by calibrate_thermal_reference() in the unit tests.
inline constexpr double kThermalReferenceOhm = 3.2704743868685;

inline constexpr double kSpeedOfLight = 299792458.0;
inline constexpr double kPlanck = 6.62607015e-34;
inline constexpr double kOsnrReferenceBandwidth = 12.5e9;

enum class PulseMode {
  kRaisedCosine,  // RC-shaped power, sampled at symbol centres
  kMatchedRrc,    // RRC-shaped power, matched RRC after detection
};

struct LinkConfig {
  double baud = 53e9;
  int samples_per_symbol = 4;
  double rolloff = 0.1;
  double wavelength_nm = 1291.0;
  /// ps/(nm km); looked up from the CWDM table when absent.
  std::optional<double> dispersion;
  double length_km = 0.0;
  double soa_gain_db = 0.0;
  double noise_figure_db = 6.0;
  /// Infinity disables the extinction map.
  double extinction_ratio_db = 10.0;
  /// -infinity disables thermal noise.
  double thermal_power_dbm = -73.0;
  double thermal_reference_ohm = kThermalReferenceOhm;
  double rx_power_dbm = -13.0;
  /// ASE filter bandwidth [Hz]; 0 means twice the symbol rate.
  double optical_bandwidth = 0.0;
  /// When set, ASE is loaded to this OSNR (dB, 12.5 GHz reference, both
  /// polarizations) instead of being derived from the SOA gain. The
  /// orthogonal polarization is dropped.
  std::optional<double> osnr_db;
  bool ase_in_phase_only = false;
  PulseMode pulse = PulseMode::kRaisedCosine;
  int block_symbols = 4096;

  void validate() const;
  double dispersion_ps_nm_km() const;
  double sample_rate() const { return baud * samples_per_symbol; }
  double ase_bandwidth() const { return optical_bandwidth > 0.0 ? optical_bandwidth : 2.0 * baud; }
  double rx_power_w() const;
  double gain_linear() const;
};

/// Dispersion of standard fibre at the CWDM grid used here, or nullopt.
std::optional<double> cwdm_dispersion(double wavelength_nm);

nlohmann::json to_json(const LinkConfig& cfg);
/// Reads the fields present in `j` on top of `base`.
LinkConfig link_config_from_json(const nlohmann::json& j, LinkConfig base = {});

struct FieldWaveform {
  std::vector<cplx> samples;
  double sample_rate = 0.0;
};

/// Unit-energy, even-symmetric root-raised-cosine taps spanning `span_symbols`.
std::vector<double> rrc_taps(double rolloff, int samples_per_symbol, int span_symbols = 32);

/// Raised-cosine spectrum, unit height in the passband; f in units of the
/// symbol rate.
double raised_cosine_spectrum(double f, double rolloff);

/// Circular Nyquist shaping of a symbol-rate sequence to samples_per_symbol.
/// kRaisedCosine applies sps*RC(f); kMatchedRrc applies sps*sqrt(RC(f)).
/// A constant stream a maps to the constant a; the result is real.
std::vector<double> shape_pulse(std::span<const double> symbols, const LinkConfig& cfg);

/// Offset of the affine power map p -> (p + gamma) scale that enforces the
/// extinction ratio, gamma = max(0, (r pmax - pmin) / (1 - r)).
double extinction_offset(double pmin, double pmax, double er_db);

/// Remaps detected level powers so min/max = 10^(-er/10), keeping the mean.
std::vector<double> apply_extinction(std::span<const double> powers, double er_db);

/// Affine remap of a power waveform with the same rule; the result has the
/// requested mean power.
std::vector<double> apply_extinction_waveform(std::span<const double> power, double er_db,
                                              double mean_power);

/// Chirp-free modulator: field = sqrt(max(P, 0)). Returns the number of
/// clipped samples through `clipped` when non-null.
FieldWaveform modulate(std::span<const double> power, double sample_rate,
                       std::size_t* clipped = nullptr);

/// All-pass fibre dispersion, exp(j beta2/2 w^2 L).
void propagate_cd(FieldWaveform& field, double dispersion_ps_nm_km, double length_km,
                  double wavelength_nm);

/// ASE power spectral density [W/Hz] for a given gain and noise figure.
double ase_psd(double gain_db, double nf_db, double wavelength_nm);

/// Scales by sqrt(G) and adds complex ASE with PSD ase_psd(), band-limited to
/// `optical_bandwidth`; total ASE power psd * B_o. With in_phase_only the
/// quadrature component is dropped.
void amplify_soa(FieldWaveform& field, double gain_db, double nf_db, double optical_bandwidth,
                 double wavelength_nm, RandomStream& rng, bool in_phase_only = false);

/// Adds band-limited complex white noise of the given PSD.
void add_ase(FieldWaveform& field, double psd, double optical_bandwidth, RandomStream& rng,
             bool in_phase_only);

/// |E|^2 plus white thermal noise of variance P_th / R_ref per sample.
std::vector<double> detect(const FieldWaveform& field, double thermal_power_dbm,
                           double reference_ohm, RandomStream& rng);

/// Receiver filter (matched RRC or none) and decimation from the timing
/// phase `delay` to `out_per_symbol` samples per symbol.
std::vector<double> receiver_frontend(std::span<const double> samples, const LinkConfig& cfg,
                                      int delay = 0, int out_per_symbol = 1);

/// Per-sample ASE variance seen at the receiver [W], both quadratures.
double ase_power(const LinkConfig& cfg);
double thermal_variance(const LinkConfig& cfg);

struct LinkOutput {
  /// Samples normalized by G * P_rx, out_per_symbol per symbol.
  std::vector<double> samples;
  std::size_t clipped = 0;
};

/// Full link for one circular block of symbol indices.
LinkOutput run_link(const Constellation& c, const LinkConfig& cfg, std::span<const int> symbols,
                    RandomStream& rng, int out_per_symbol = 1);

/// Same, starting from arbitrary unit-mean level powers (ER map applied here).
LinkOutput run_link_powers(std::span<const double> level_powers, const LinkConfig& cfg,
                           std::span<const int> symbols, RandomStream& rng,
                           int out_per_symbol = 1);

/// Expected normalized detected levels after the extinction map, no noise.
std::vector<double> link_detected_levels(std::span<const double> level_powers,
                                         const LinkConfig& cfg);

/// Normalized noise parameters of the L = 0 link at symbol centres.
struct LinkNoise {
  double sigma2_ase = 0.0;  // total complex ASE, normalized by G P_rx
  double sigma2_th = 0.0;   // normalized by (G P_rx)^2
  bool in_phase_only = false;
};
LinkNoise link_noise(const LinkConfig& cfg);

/// Thermal share of the detected noise second moment at the operating point.
double alpha_equivalent(const LinkConfig& cfg, const Constellation& c);

/// Reference resistance that puts ER-mapped intensity PAM4 with midpoint
/// thresholds at `target_ber` for `rx_power_dbm` (thermal noise only).
double calibrate_thermal_reference(double target_ber = 1.8e-4, double rx_power_dbm = -13.0,
                                   double thermal_power_dbm = -73.0, double er_db = 10.0);

}  // namespace aepam
