#include "aepam/mixed_noise.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace aepam {
namespace {

constexpr double kSpan = 12.0;  // integration half-width in standard deviations

double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double cdf_norm(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double sf_norm(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

// Square-law part only: y = (s + n)^2, n ~ N(0, var).
double chi_cdf(double y, double s, double sd) {
  if (y <= 0.0) return 0.0;
  const double r = std::sqrt(y);
  if (sd == 0.0) return s * s <= y ? 1.0 : 0.0;
  return cdf_norm((r - s) / sd) - cdf_norm((-r - s) / sd);
}

double chi_sf(double y, double s, double sd) {
  if (y <= 0.0) return 1.0;
  const double r = std::sqrt(y);
  if (sd == 0.0) return s * s > y ? 1.0 : 0.0;
  return sf_norm((r - s) / sd) + cdf_norm((-r - s) / sd);
}

// Piecewise adaptive Gauss-Kronrod over sorted breakpoints.
template <class F>
double integrate(F f, std::vector<double> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  double total = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i] <= pts[i - 1]) continue;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, pts[i - 1], pts[i], 12, 1e-11);
  }
  return total;
}

std::vector<double> clip_points(double lo, double hi, std::initializer_list<double> inner) {
  std::vector<double> pts{lo, hi};
  for (double v : inner) {
    if (v > lo && v < hi) pts.push_back(v);
  }
  return pts;
}

// Adds points at c +- k w around a peak of width w so that narrow features
// get their own panels.
void add_peak(std::vector<double>& pts, double c, double w, double lo, double hi) {
  for (double k : {0.0, 1.0, 3.0, 8.0}) {
    for (double v : {c - k * w, c + k * w}) {
      if (v > lo && v < hi) pts.push_back(v);
    }
  }
}

// Expectation over thermal noise of a function of the square-law sample.
template <class G>
double thermal_average(double x, const MixedNoiseParams& p, G g) {
  const double st = std::sqrt(p.sigma2_th);
  const double lo = -kSpan * st;
  const double hi = kSpan * st;
  auto f = [&](double t) { return phi(t / st) / st * g(x - t); };
  auto pts = clip_points(lo, hi, {x, 0.0});
  // square-root kink of the square-law cdf at y = 0
  add_peak(pts, x, 0.1 * st, lo, hi);
  return integrate(f, std::move(pts));
}

}  // namespace

MixedNoiseParams split_noise(double sigma2_n, double alpha, double es2) {
  if (!(sigma2_n > 0.0)) throw std::invalid_argument("split_noise: sigma2_N must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("split_noise: alpha outside [0,1]");
  if (!(es2 > 0.0)) throw std::invalid_argument("split_noise: E[s^2] must be positive");
  MixedNoiseParams p;
  p.sigma2_n = sigma2_n;
  p.alpha = alpha;
  p.sigma2_th = alpha * sigma2_n;
  // positive root of 3x^2 + b x - c, written to avoid cancellation
  const double b = 4.0 * es2;
  const double c = (1.0 - alpha) * sigma2_n;
  p.sigma2_ase = c > 0.0 ? 2.0 * c / (b + std::sqrt(b * b + 12.0 * c)) : 0.0;
  return p;
}

double total_noise_variance(double sigma2_ase, double sigma2_th, double es2) {
  if (sigma2_ase < 0.0 || sigma2_th < 0.0 || es2 < 0.0) {
    throw std::invalid_argument("total_noise_variance: negative input");
  }
  return 4.0 * es2 * sigma2_ase + 3.0 * sigma2_ase * sigma2_ase + sigma2_th;
}

MixedNoiseParams noise_from_variances(double sigma2_ase, double sigma2_th, double es2) {
  MixedNoiseParams p;
  p.sigma2_ase = sigma2_ase;
  p.sigma2_th = sigma2_th;
  p.sigma2_n = total_noise_variance(sigma2_ase, sigma2_th, es2);
  p.alpha = p.sigma2_n > 0.0 ? sigma2_th / p.sigma2_n : 1.0;
  return p;
}

double transmit(double s, const MixedNoiseParams& p, RandomStream& rng) {
  const double field = s + std::sqrt(p.sigma2_ase) * rng.gaussian();
  return field * field + std::sqrt(p.sigma2_th) * rng.gaussian();
}

double snr_db(const Constellation& c, double sigma2_n) {
  if (!(sigma2_n > 0.0)) throw std::invalid_argument("snr: sigma2_N must be positive");
  return 10.0 * std::log10(c.moments().es4 / sigma2_n);
}

double noise_for_snr(const Constellation& c, double snr) {
  return c.moments().es4 / std::pow(10.0, snr / 10.0);
}

double mixed_cdf(double x, double s, const MixedNoiseParams& p) {
  const double sa = std::sqrt(p.sigma2_ase);
  if (p.sigma2_th == 0.0) return chi_cdf(x, s, sa);
  if (p.sigma2_ase == 0.0) return cdf_norm((x - s * s) / std::sqrt(p.sigma2_th));
  return thermal_average(x, p, [&](double y) { return chi_cdf(y, s, sa); });
}

double mixed_sf(double x, double s, const MixedNoiseParams& p) {
  const double sa = std::sqrt(p.sigma2_ase);
  if (p.sigma2_th == 0.0) return chi_sf(x, s, sa);
  if (p.sigma2_ase == 0.0) return sf_norm((x - s * s) / std::sqrt(p.sigma2_th));
  return thermal_average(x, p, [&](double y) { return chi_sf(y, s, sa); });
}

double mixed_pdf(double x, double s, const MixedNoiseParams& p) {
  const double sa = std::sqrt(p.sigma2_ase);
  const double st = std::sqrt(p.sigma2_th);
  if (p.sigma2_ase == 0.0) {
    if (st == 0.0) throw std::invalid_argument("mixed_pdf: noiseless channel has no density");
    return phi((x - s * s) / st) / st;
  }
  if (st == 0.0) {
    if (x <= 0.0) return 0.0;
    const double r = std::sqrt(x);
    return (phi((r - s) / sa) + phi((-r - s) / sa)) / (sa * 2.0 * r);
  }
  // integrate over the field noise; peaks sit where (s + n)^2 = x
  auto f = [&](double n) {
    const double y = (s + n) * (s + n);
    return phi(n / sa) / sa * phi((x - y) / st) / st;
  };
  const double lo = -kSpan * sa;
  const double hi = kSpan * sa;
  std::vector<double> pts = clip_points(lo, hi, {-s});
  if (x > 0.0) {
    // (s + n)^2 = x at n = +-sqrt(x) - s; the thermal kernel there has
    // width st / (2 sqrt(x)) in n
    const double r = std::sqrt(x);
    const double w = std::min(sa, st / (2.0 * r));
    add_peak(pts, r - s, w, lo, hi);
    add_peak(pts, -r - s, w, lo, hi);
  }
  return integrate(f, std::move(pts));
}

}  // namespace aepam
