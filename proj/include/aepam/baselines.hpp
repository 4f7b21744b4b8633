#pragma once

#include "aepam/link.hpp"
#include "aepam/mixed_noise.hpp"
#include "aepam/thresholds.hpp"
#include "json.hpp"

#include <memory>
#include <span>
#include <vector>

namespace aepam {

/// Fractionally spaced FIR: output k = sum_j taps[j] x[k*sps + j - reference].
struct FirTaps {
  std::vector<double> taps;
  int reference = 0;
  int samples_per_symbol = 1;
};

/// Relative ridge added to the normal equations.
inline constexpr double kMmseRidge = 1e-9;

/// Least-squares taps mapping `received` (sps samples per symbol) onto
/// `targets`. Only symbols whose full tap span lies inside the stream are
/// used. Throws if fewer than 50 x n_taps symbols are usable or the smallest
/// eigenvalue of the sample correlation matrix is below the ridge.
FirTaps mmse_train(std::span<const double> received, std::span<const double> targets, int n_taps,
                   int samples_per_symbol = 1);
/// Same with the stream treated as circular (all symbols usable).
FirTaps mmse_train_circular(std::span<const double> received, std::span<const double> targets,
                            int n_taps, int samples_per_symbol = 1);

/// Linear convolution, reference aligned; symbols whose span leaves the
/// stream are dropped. Output index k corresponds to symbol first_symbol + k.
std::vector<double> mmse_apply(const FirTaps& f, std::span<const double> samples,
                               int* first_symbol = nullptr);
std::vector<double> mmse_apply_circular(const FirTaps& f, std::span<const double> samples);

double mean_squared_error(std::span<const double> a, std::span<const double> b);

/// Tail probabilities of the detected sample for a candidate level `d`
/// (detected domain, sampler units).
class TailSampler {
 public:
  virtual ~TailSampler() = default;
  virtual double upper_tail(double d, double t) = 0;  // P(r > t | d)
  virtual double lower_tail(double d, double t) = 0;  // P(r < t | d)
  /// Threshold with upper_tail(d, t) = p.
  virtual double upper_quantile(double d, double p, double t_max);
};

/// Exact memoryless densities, field amplitude sqrt(d).
class AnalyticTailSampler final : public TailSampler {
 public:
  explicit AnalyticTailSampler(MixedNoiseParams p) : p_(p) {}
  double upper_tail(double d, double t) override;
  double lower_tail(double d, double t) override;

 private:
  MixedNoiseParams p_;
};

/// Fixed common random draws r = |sqrt(d) + n|^2 + th with complex (or
/// in-phase) ASE n and Gaussian thermal noise, counted empirically.
class MonteCarloTailSampler final : public TailSampler {
 public:
  MonteCarloTailSampler(double sigma2_ase, double sigma2_th, bool in_phase_only, std::size_t draws,
                        std::uint64_t seed);
  double upper_tail(double d, double t) override;
  double lower_tail(double d, double t) override;
  double upper_quantile(double d, double p, double t_max) override;

 private:
  void fill(double d);
  std::vector<double> nr_, ni_, th_, buf_;
};

struct IterativeResult {
  std::vector<double> levels;      // detected levels, mean 1
  ThresholdSet thresholds;         // same scale as levels
  std::vector<double> raw_levels;  // sampler units
  std::vector<double> raw_thresholds;
  double scale = 1.0;              // raw = scale * normalized
  int floor_iterations = 0;
};

struct IterativeOptions {
  double ser_target = 3.6e-4;
  /// Lowest level as a fraction of the highest (linear extinction floor).
  double er_floor = 0.0;
  int order = 4;
  /// Upper end of the level sweep, sampler units.
  double dynamic_range = 10.0;
  /// Sweep granularity as a fraction of the dynamic range.
  double sweep_step = 1e-3;
};

/// Sequential level/threshold construction: each decision boundary carries
/// ser_target of tail mass on both sides. Throws if the sweep leaves the
/// dynamic range.
IterativeResult iterative_optimize(TailSampler& sampler, const IterativeOptions& opt);

nlohmann::json to_json(const FirTaps& f);

}  // namespace aepam
