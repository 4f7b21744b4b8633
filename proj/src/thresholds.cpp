#include "aepam/thresholds.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace aepam {

void check_interleaved(const ThresholdSet& t, std::span<const double> levels) {
  if (t.values.size() + 1 != levels.size()) {
    throw std::invalid_argument("threshold count must be one less than level count");
  }
  for (std::size_t i = 0; i < t.values.size(); ++i) {
    if (!(t.values[i] > levels[i] && t.values[i] < levels[i + 1])) {
      throw std::invalid_argument("threshold " + std::to_string(i) + " does not separate its levels");
    }
  }
}

ThresholdSet midpoint_thresholds(std::span<const double> levels) {
  ThresholdSet t;
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(levels[i] > levels[i - 1])) throw std::invalid_argument("midpoints: levels must be strictly ascending");
    t.values.push_back(0.5 * (levels[i - 1] + levels[i]));
  }
  return t;
}

ThresholdSet bisection_thresholds(const SampleClassifier& classify, std::span<const double> levels,
                                  const BisectionOptions& opt) {
  ThresholdSet out;
  for (std::size_t i = 0; i + 1 < levels.size(); ++i) {
    const int lo_sym = static_cast<int>(i);
    const int hi_sym = lo_sym + 1;
    const double gap = levels[i + 1] - levels[i];
    if (!(gap > 0.0)) throw std::invalid_argument("bisection: levels must be strictly ascending");
    double t = levels[i] + 0.5 * gap;
    double step = 0.25 * gap;
    int last_dir = 0;
    bool done = false;
    for (long it = 0; it < opt.max_iterations; ++it) {
      const int a = classify(t - opt.probe);
      const int b = classify(t + opt.probe);
      if (a == lo_sym && b == hi_sym) {
        done = true;
        break;
      }
      int dir;
      if (a <= lo_sym && b <= lo_sym) dir = +1;       // both on the lower side: move up
      else if (a >= hi_sym && b >= hi_sym) dir = -1;  // both on the upper side: move down
      else {
        throw std::runtime_error("bisection: decision regions around threshold " + std::to_string(i) +
                                 " are not an interval partition (classes " + std::to_string(a) +
                                 ", " + std::to_string(b) + ")");
      }
      if (last_dir != 0 && dir != last_dir) step *= 0.5;
      last_dir = dir;
      // never step onto or past a level
      while (t + dir * step <= levels[i] || t + dir * step >= levels[i + 1]) step *= 0.5;
      t += dir * step;
      if (step < 1e-3 * opt.probe) {
        throw NoBoundaryError("bisection: no boundary between levels " + std::to_string(i) + " and " +
                                 std::to_string(i + 1));
      }
    }
    if (!done) throw std::runtime_error("bisection: iteration cap reached for threshold " + std::to_string(i));
    out.values.push_back(t);
  }
  return out;
}

DecisionMap scan_decision_map(const SampleClassifier& classify, std::span<const double> levels,
                              const BisectionOptions& opt, int scan_points) {
  if (levels.size() < 2 || scan_points < 2) throw std::invalid_argument("decision map: need two levels and two scan points");
  const double span = levels.back() - levels.front();
  if (!(span > 0.0)) throw std::invalid_argument("decision map: levels must span a positive range");
  const double lo = levels.front() - 0.5 * span;
  const double hi = levels.back() + 0.5 * span;
  DecisionMap d;
  int prev = classify(lo);
  d.symbols.push_back(prev);
  double x_prev = lo;
  for (int i = 1; i <= scan_points; ++i) {
    const double x = lo + (hi - lo) * i / scan_points;
    const int c = classify(x);
    if (c != prev) {
      double a = x_prev, b = x;
      while (b - a > opt.probe) {
        const double mid = 0.5 * (a + b);
        (classify(mid) == prev ? a : b) = mid;
      }
      d.cuts.push_back(0.5 * (a + b));
      d.symbols.push_back(c);
      prev = c;
    }
    x_prev = x;
  }
  return d;
}

DecisionMap to_decision_map(const ThresholdSet& t) {
  DecisionMap d{t.values, {}};
  for (std::size_t k = 0; k <= t.values.size(); ++k) d.symbols.push_back(static_cast<int>(k));
  return d;
}

int map_detect(double sample, const DecisionMap& d) {
  const auto k = std::upper_bound(d.cuts.begin(), d.cuts.end(), sample) - d.cuts.begin();
  return d.symbols[static_cast<std::size_t>(k)];
}

std::vector<int> unused_symbols(const DecisionMap& d, int order) {
  std::vector<int> out;
  for (int s = 0; s < order; ++s) {
    if (std::find(d.symbols.begin(), d.symbols.end(), s) == d.symbols.end()) out.push_back(s);
  }
  return out;
}

nlohmann::json to_json(const DecisionMap& d) { return {{"cuts", d.cuts}, {"symbols", d.symbols}}; }

int threshold_detect(double sample, const ThresholdSet& t) {
  return static_cast<int>(std::upper_bound(t.values.begin(), t.values.end(), sample) - t.values.begin());
}

SampleClassifier decoder_classifier(const Network& net, std::vector<int> rank) {
  if (net.window() != 1) throw std::invalid_argument("threshold extraction needs a W=1 decoder");
  return [&net, rank = std::move(rank)](double x) {
    const double w[1] = {x};
    return rank[static_cast<std::size_t>(decoder_classify(net, w))];
  };
}

SampleClassifier map_classifier(const Constellation& c, const MixedNoiseParams& p) {
  return [levels = c.levels(), p](double x) {
    int best = 0;
    double best_pdf = -1.0;
    for (std::size_t j = 0; j < levels.size(); ++j) {
      const double f = mixed_pdf(x, levels[j], p);
      if (f > best_pdf) {
        best_pdf = f;
        best = static_cast<int>(j);
      }
    }
    return best;
  };
}

nlohmann::json to_json(const ThresholdSet& t) { return {{"thresholds", t.values}}; }

ThresholdSet thresholds_from_json(const nlohmann::json& j) {
  ThresholdSet t;
  t.values = j.at("thresholds").get<std::vector<double>>();
  for (std::size_t i = 1; i < t.values.size(); ++i) {
    if (!(t.values[i] > t.values[i - 1])) throw std::invalid_argument("thresholds must be strictly ascending");
  }
  return t;
}

}  // namespace aepam
