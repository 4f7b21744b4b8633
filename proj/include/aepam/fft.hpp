#pragma once

#include <complex>
#include <span>

namespace aepam {

using cplx = std::complex<double>;

// In-place DFTs backed by FFTW. Plans are cached per length and created with
// FFTW_ESTIMATE so that results are bit-identical from run to run.
void fft_forward(std::span<cplx> data);
/// Inverse transform including the 1/N factor.
void fft_inverse(std::span<cplx> data);

/// Signed frequency of bin k for an n-point DFT at the given sample rate.
double fft_frequency(std::size_t k, std::size_t n, double sample_rate);

}  // namespace aepam
