#pragma once

#include "aepam/constellation.hpp"
#include "aepam/mixed_noise.hpp"
#include "aepam/rng.hpp"
#include "aepam/thresholds.hpp"
#include "json.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace aepam {

struct BlockCounts {
  long symbols = 0;
  long symbol_errors = 0;
  long bit_errors = 0;
};

/// Simulates one block; must be a pure function of the stream it is given.
using BlockRunner = std::function<BlockCounts(RandomStream& rng)>;

struct BerOptions {
  long min_errors = 100;
  /// Lower bound on symbols before the error floor may stop the run.
  long min_symbols = 0;
  long max_symbols = 500000;
  std::uint64_t seed = 1;
  /// Blocks evaluated concurrently; the result does not depend on it.
  int threads = 1;
};

struct BerEstimate {
  long bit_errors = 0;
  long symbol_errors = 0;
  long symbols_sent = 0;
  int bits_per_symbol = 2;
  double ber = 0.0;
  double ser = 0.0;
  std::uint64_t seed = 0;
  /// Zero errors observed: ber is 0 and only bounded above.
  bool upper_bound = false;

  /// Binomial standard error of the symbol error rate.
  double ser_sigma() const;
  double ber_sigma() const;
};

nlohmann::json to_json(const BerEstimate& e);

/// Block b uses RandomStream::derive(seed, b). Stops after the first block at
/// which both min_errors symbol errors and min_symbols are reached, or once
/// max_symbols is reached.
BerEstimate estimate_ber(const BlockRunner& block, int order, const BerOptions& opt);

/// Bit errors between two ascending positions under Gray labels.
int gray_bit_errors(int order, int a, int b);

/// Exact SER of Gaussian noise around detected levels.
double awgn_ser_oracle(std::span<const double> levels, std::span<const double> thresholds,
                       double sigma);
/// Exact Gray-labelled BER of the same channel.
double awgn_ber_oracle(std::span<const double> levels, std::span<const double> thresholds,
                       double sigma);

/// Exact SER / BER of the memoryless mixed channel with threshold detection.
double mixed_noise_ser_oracle(const Constellation& c, const MixedNoiseParams& p,
                              const ThresholdSet& t);
double mixed_noise_ber_oracle(const Constellation& c, const MixedNoiseParams& p,
                              const ThresholdSet& t);
/// Same for a general decision map.
double mixed_noise_ser_oracle(const Constellation& c, const MixedNoiseParams& p, const DecisionMap& d);
double mixed_noise_ber_oracle(const Constellation& c, const MixedNoiseParams& p, const DecisionMap& d);

/// Gaussian tail, Q(x) = P(N(0,1) > x).
double q_function(double x);

/// Linear interpolation of log10(BER) against x at `target`. BER must fall
/// monotonically over the grid; throws if non-monotone or not bracketed.
double interpolate_crossing(std::span<const double> x, std::span<const double> ber, double target);

/// Required SNR on a dB grid at the target BER.
double required_snr(std::span<const double> snr_db, std::span<const double> ber,
                    double target_ber = 3.8e-3);

inline constexpr double kSensitivityAnchorDbm = -13.0;

struct SensitivityResult {
  std::optional<double> required_dbm;
  double improvement_db = 0.0;  // anchor - required
  bool unrecoverable = false;   // target missed at every grid power
  bool at_floor = false;        // target met at the lowest grid power
  std::vector<double> powers;   // evaluated points, ascending
  std::vector<double> bers;
};

nlohmann::json to_json(const SensitivityResult& r);

/// Walks the ascending power grid from `start_index` until two neighbours
/// bracket the target, then interpolates in log10(BER). A zero-error point
/// enters the interpolation at half a bit error.
SensitivityResult sensitivity(const std::function<BerEstimate(double)>& ber_at,
                              std::span<const double> power_grid, double target_ber = 1.8e-4,
                              std::size_t start_index = 0);

/// Largest length with improvement >= margin, interpolating linearly between
/// grid lengths; 0 when the margin is never met.
double reach(std::span<const double> lengths, std::span<const double> improvement,
             double margin_db = 4.0);

/// h = (r - mu0) sqrt(14) / sqrt(sum (mu_i - mu0)^2), M = 4.
std::vector<double> normalize_histogram(std::span<const double> samples, std::span<const double> means);

}  // namespace aepam
