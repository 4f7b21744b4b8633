#include "aepam/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>
#include <vector>

namespace aepam {
namespace {

std::mutex g_plan_mutex;

fftw_plan plan_for(std::size_t n, int sign) {
  static std::map<std::pair<std::size_t, int>, fftw_plan> cache;
  std::lock_guard lock(g_plan_mutex);
  auto it = cache.find({n, sign});
  if (it != cache.end()) return it->second;
  std::vector<cplx> scratch(n);
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  fftw_plan p = fftw_plan_dft_1d(static_cast<int>(n), buf, buf, sign,
                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
  cache.emplace(std::make_pair(n, sign), p);
  return p;
}

void execute(std::span<cplx> data, int sign) {
  if (data.empty()) return;
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan_for(data.size(), sign), buf, buf);
}

}  // namespace

void fft_forward(std::span<cplx> data) { execute(data, FFTW_FORWARD); }

void fft_inverse(std::span<cplx> data) {
  execute(data, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (auto& v : data) v *= scale;
}

double fft_frequency(std::size_t k, std::size_t n, double sample_rate) {
  const auto half = (n + 1) / 2;
  const double idx = k < half ? static_cast<double>(k)
                              : static_cast<double>(k) - static_cast<double>(n);
  return idx * sample_rate / static_cast<double>(n);
}

}  // namespace aepam
