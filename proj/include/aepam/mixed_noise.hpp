#pragma once

#include "aepam/constellation.hpp"
#include "aepam/rng.hpp"

namespace aepam {

/// Noise budget of the memoryless channel r = (s + n_ase)^2 + n_th.
///
/// sigma2_n is the second moment of r - s^2, which includes the sigma2_ase
/// offset of the square-law term.
struct MixedNoiseParams {
  double sigma2_ase = 0.0;
  double sigma2_th = 0.0;
  double sigma2_n = 0.0;
  double alpha = 1.0;
};

/// Splits sigma2_n so that sigma2_th = alpha * sigma2_n and the ASE part
/// 4 es2 x + 3 x^2 carries the remainder.
MixedNoiseParams split_noise(double sigma2_n, double alpha, double es2 = 1.0);

double total_noise_variance(double sigma2_ase, double sigma2_th, double es2 = 1.0);

/// Builds params from explicit variances; alpha follows from the total.
MixedNoiseParams noise_from_variances(double sigma2_ase, double sigma2_th, double es2 = 1.0);

/// One detected sample. May be negative.
double transmit(double s, const MixedNoiseParams& p, RandomStream& rng);

double snr_db(const Constellation& c, double sigma2_n);
/// Total noise second moment giving the requested SNR for this constellation.
double noise_for_snr(const Constellation& c, double snr_db);

// Exact conditional statistics of r given the field amplitude s.
double mixed_cdf(double x, double s, const MixedNoiseParams& p);
/// 1 - mixed_cdf, evaluated without cancellation.
double mixed_sf(double x, double s, const MixedNoiseParams& p);
double mixed_pdf(double x, double s, const MixedNoiseParams& p);

}  // namespace aepam
