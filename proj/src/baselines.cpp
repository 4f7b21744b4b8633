#include "aepam/baselines.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace aepam {
namespace {

// Builds the normal equations over the symbols listed by `index(k, j)`.
template <class Index>
FirTaps solve_taps(std::span<const double> x, std::span<const double> targets, int n_taps, int sps,
                   long first, long last, Index index) {
  FirTaps f;
  f.reference = n_taps / 2;
  f.samples_per_symbol = sps;
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n_taps, n_taps);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n_taps);
  Eigen::VectorXd row(n_taps);
  for (long k = first; k < last; ++k) {
    for (int j = 0; j < n_taps; ++j) row[j] = x[static_cast<std::size_t>(index(k, j))];
    r.selfadjointView<Eigen::Lower>().rankUpdate(row);
    p += row * targets[static_cast<std::size_t>(k)];
  }
  r = r.selfadjointView<Eigen::Lower>();
  const double ridge = kMmseRidge * std::max(r.diagonal().mean(), 1e-300);
  // a direction the data pins down less firmly than the ridge is a rank
  // deficiency, not a conditioning problem
  const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(r, Eigen::EigenvaluesOnly).eigenvalues()[0];
  if (!(lmin > ridge)) {
    throw std::runtime_error("mmse_train: received samples are rank deficient beyond the ridge");
  }
  r.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(r);
  if (ldlt.info() != Eigen::Success) throw std::runtime_error("mmse_train: factorization failed");
  Eigen::VectorXd w = ldlt.solve(p);
  f.taps.assign(w.data(), w.data() + w.size());
  return f;
}

}  // namespace

FirTaps mmse_train(std::span<const double> received, std::span<const double> targets, int n_taps,
                   int sps) {
  if (n_taps < 1 || sps < 1) throw std::invalid_argument("mmse_train: bad tap count");
  const long n_sym = static_cast<long>(targets.size());
  if (static_cast<long>(received.size()) < n_sym * sps) {
    throw std::invalid_argument("mmse_train: received stream shorter than target sequence");
  }
  const long ref = n_taps / 2;
  // symbol k uses samples k*sps - ref .. k*sps - ref + n_taps - 1
  const long first = (ref + sps - 1) / sps;
  long last = n_sym;
  while (last > first && (last - 1) * sps - ref + n_taps > static_cast<long>(received.size())) --last;
  if (last - first < 50L * n_taps) throw std::invalid_argument("mmse_train: need at least 50 x taps symbols");
  return solve_taps(received, targets, n_taps, sps, first, last,
                    [&](long k, int j) { return k * sps + j - ref; });
}

FirTaps mmse_train_circular(std::span<const double> received, std::span<const double> targets,
                            int n_taps, int sps) {
  if (n_taps < 1 || sps < 1) throw std::invalid_argument("mmse_train: bad tap count");
  const long n_sym = static_cast<long>(targets.size());
  const long n = static_cast<long>(received.size());
  if (n != n_sym * sps) throw std::invalid_argument("mmse_train: stream length must be symbols x sps");
  if (n_sym < 50L * n_taps) throw std::invalid_argument("mmse_train: need at least 50 x taps symbols");
  const long ref = n_taps / 2;
  return solve_taps(received, targets, n_taps, sps, 0, n_sym,
                    [&](long k, int j) { return ((k * sps + j - ref) % n + n) % n; });
}

std::vector<double> mmse_apply(const FirTaps& f, std::span<const double> x, int* first_symbol) {
  const long n_taps = static_cast<long>(f.taps.size());
  const long sps = f.samples_per_symbol;
  const long ref = f.reference;
  const long n_sym = static_cast<long>(x.size()) / sps;
  const long first = (ref + sps - 1) / sps;
  long last = n_sym;
  while (last > first && (last - 1) * sps - ref + n_taps > static_cast<long>(x.size())) --last;
  if (last <= first) throw std::invalid_argument("mmse_apply: stream shorter than the tap span");
  std::vector<double> out(static_cast<std::size_t>(last - first));
  for (long k = first; k < last; ++k) {
    double acc = 0.0;
    for (long j = 0; j < n_taps; ++j) acc += f.taps[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(k * sps + j - ref)];
    out[static_cast<std::size_t>(k - first)] = acc;
  }
  if (first_symbol) *first_symbol = static_cast<int>(first);
  return out;
}

std::vector<double> mmse_apply_circular(const FirTaps& f, std::span<const double> x) {
  const long n = static_cast<long>(x.size());
  const long sps = f.samples_per_symbol;
  const long ref = f.reference;
  if (n < static_cast<long>(f.taps.size())) throw std::invalid_argument("mmse_apply: stream shorter than the tap span");
  std::vector<double> out(static_cast<std::size_t>(n / sps));
  for (long k = 0; k < n / sps; ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j < f.taps.size(); ++j) {
      acc += f.taps[j] * x[static_cast<std::size_t>(((k * sps + static_cast<long>(j) - ref) % n + n) % n)];
    }
    out[static_cast<std::size_t>(k)] = acc;
  }
  return out;
}

double mean_squared_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("mean_squared_error: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

double TailSampler::upper_quantile(double d, double p, double t_max) {
  double lo = -t_max;
  double hi = t_max;
  if (upper_tail(d, hi) > p) throw std::runtime_error("upper_quantile: tail exceeds target at range end");
  for (int it = 0; it < 200 && hi - lo > 1e-15 * t_max; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (upper_tail(d, mid) > p) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

double AnalyticTailSampler::upper_tail(double d, double t) { return mixed_sf(t, std::sqrt(std::max(d, 0.0)), p_); }
double AnalyticTailSampler::lower_tail(double d, double t) { return mixed_cdf(t, std::sqrt(std::max(d, 0.0)), p_); }

MonteCarloTailSampler::MonteCarloTailSampler(double sigma2_ase, double sigma2_th, bool in_phase_only,
                                             std::size_t draws, std::uint64_t seed) {
  RandomStream rng(seed);
  nr_.resize(draws);
  ni_.resize(draws);
  th_.resize(draws);
  const double sq = in_phase_only ? std::sqrt(sigma2_ase) : std::sqrt(0.5 * sigma2_ase);
  const double st = std::sqrt(sigma2_th);
  for (std::size_t i = 0; i < draws; ++i) {
    nr_[i] = sq * rng.gaussian();
    ni_[i] = in_phase_only ? 0.0 : sq * rng.gaussian();
    th_[i] = st * rng.gaussian();
  }
}

void MonteCarloTailSampler::fill(double d) {
  const double a = std::sqrt(std::max(d, 0.0));
  buf_.resize(nr_.size());
  for (std::size_t i = 0; i < buf_.size(); ++i) {
    const double re = a + nr_[i];
    buf_[i] = re * re + ni_[i] * ni_[i] + th_[i];
  }
}

double MonteCarloTailSampler::upper_tail(double d, double t) {
  fill(d);
  const auto n = std::count_if(buf_.begin(), buf_.end(), [t](double r) { return r > t; });
  return static_cast<double>(n) / static_cast<double>(buf_.size());
}

double MonteCarloTailSampler::lower_tail(double d, double t) {
  fill(d);
  const auto n = std::count_if(buf_.begin(), buf_.end(), [t](double r) { return r < t; });
  return static_cast<double>(n) / static_cast<double>(buf_.size());
}

double MonteCarloTailSampler::upper_quantile(double d, double p, double) {
  fill(d);
  const auto n = buf_.size();
  // the sample with exactly floor(p n) draws above it
  const std::size_t above = static_cast<std::size_t>(std::floor(p * static_cast<double>(n)));
  const std::size_t idx = n - 1 - std::min(above, n - 1);
  std::nth_element(buf_.begin(), buf_.begin() + static_cast<long>(idx), buf_.end());
  return buf_[idx];
}

IterativeResult iterative_optimize(TailSampler& sampler, const IterativeOptions& opt) {
  bits_per_symbol(opt.order);
  if (!(opt.ser_target > 0.0 && opt.ser_target < 0.5)) throw std::invalid_argument("iterative: ser_target out of range");
  if (!(opt.er_floor >= 0.0 && opt.er_floor < 1.0)) throw std::invalid_argument("iterative: er_floor must lie in [0,1)");
  const double range = opt.dynamic_range;
  const double dp = opt.sweep_step * range;

  auto build = [&](double p0, std::vector<double>& lv, std::vector<double>& th) {
    lv.assign(1, p0);
    th.clear();
    for (int i = 1; i < opt.order; ++i) {
      const double t = sampler.upper_quantile(lv.back(), opt.ser_target, range);
      th.push_back(t);
      // lower tail of the next level across t falls as the level rises
      auto excess = [&](double d) { return sampler.lower_tail(d, t) > opt.ser_target; };
      const long k_max = static_cast<long>(std::floor((range - t) / dp));
      if (k_max < 1 || excess(t + static_cast<double>(k_max) * dp)) {
        throw std::runtime_error("iterative: sweep for level " + std::to_string(i) + " exhausts the dynamic range");
      }
      long lo = 0;  // excess at t + lo*dp (level on the threshold: half the mass is below)
      long hi = k_max;
      while (hi - lo > 1) {
        const long mid = (lo + hi) / 2;
        if (excess(t + static_cast<double>(mid) * dp)) lo = mid;
        else hi = mid;
      }
      double a = t + static_cast<double>(lo) * dp;
      double b = t + static_cast<double>(hi) * dp;
      for (int it = 0; it < 40; ++it) {
        const double m = 0.5 * (a + b);
        if (excess(m)) a = m;
        else b = m;
      }
      lv.push_back(b);
    }
  };

  IterativeResult res;
  // P0 solves f(P0) = er_floor * P_top(P0) - P0 = 0; secant steps with a
  // fall-back to the plain fixed-point step when the secant misbehaves
  auto residual = [&](double p0) {
    build(p0, res.raw_levels, res.raw_thresholds);
    ++res.floor_iterations;
    return opt.er_floor * res.raw_levels.back() - p0;
  };
  const double tol = 1e-12 * range;
  double x0 = 0.0;
  double f0 = residual(x0);
  if (std::abs(f0) > tol) {
    double x1 = x0 + f0;
    double f1 = residual(x1);
    for (int it = 0; it < 200 && std::abs(f1) > tol; ++it) {
      double x2 = x1 + f1;
      if (f1 != f0) {
        const double sec = x1 - f1 * (x1 - x0) / (f1 - f0);
        if (sec >= 0.0 && sec < range) x2 = sec;
      }
      x0 = x1;
      f0 = f1;
      x1 = x2;
      f1 = residual(x1);
    }
    if (std::abs(f1) > tol) throw std::runtime_error("iterative: extinction floor did not converge");
  }
  double mean = 0.0;
  for (double v : res.raw_levels) mean += v;
  mean /= static_cast<double>(res.raw_levels.size());
  res.scale = mean;
  for (double v : res.raw_levels) res.levels.push_back(v / mean);
  for (double v : res.raw_thresholds) res.thresholds.values.push_back(v / mean);
  return res;
}

nlohmann::json to_json(const FirTaps& f) {
  return {{"taps", f.taps}, {"reference", f.reference}, {"samples_per_symbol", f.samples_per_symbol}};
}

}  // namespace aepam
