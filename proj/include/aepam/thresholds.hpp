#pragma once

#include "aepam/constellation.hpp"
#include "aepam/mixed_noise.hpp"
#include "aepam/network.hpp"
#include "json.hpp"

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace aepam {

/// M-1 ascending decision thresholds in the detected-sample domain.
struct ThresholdSet {
  std::vector<double> values;
};

/// General 1-D decision rule: region k is [cuts[k-1], cuts[k]) and decides
/// symbols[k]. Needed when a decoder's regions are not one interval per
/// symbol in level order, as happens once two levels merge.
struct DecisionMap {
  std::vector<double> cuts;
  std::vector<int> symbols;  // cuts.size() + 1 entries
};

/// Throws unless thresholds are strictly ascending and each lies strictly
/// between its two neighbouring levels.
void check_interleaved(const ThresholdSet& t, std::span<const double> detected_levels);

ThresholdSet midpoint_thresholds(std::span<const double> detected_levels);

/// Maps a detected sample to a position in the ascending constellation.
using SampleClassifier = std::function<int(double)>;

struct NoBoundaryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BisectionOptions {
  double probe = 1e-5;
  long max_iterations = 1000000;
};

/// For each adjacent pair, walks from the midpoint until the points
/// threshold -/+ probe classify to the lower and upper symbol. Steps start at
/// a quarter of the level gap and halve on every reversal.
/// Throws NoBoundaryError when the classifier never picks one of a pair
/// between their levels.
ThresholdSet bisection_thresholds(const SampleClassifier& classify,
                                  std::span<const double> detected_levels,
                                  const BisectionOptions& opt = {});

/// The classifier's regions over the levels' span plus half of it on each
/// side, found on a scan grid and refined to the probe width. Outside that
/// range the outermost decisions are extended.
DecisionMap scan_decision_map(const SampleClassifier& classify, std::span<const double> detected_levels,
                              const BisectionOptions& opt = {}, int scan_points = 20000);

DecisionMap to_decision_map(const ThresholdSet& t);
int map_detect(double sample, const DecisionMap& d);
/// Symbols that own no region.
std::vector<int> unused_symbols(const DecisionMap& d, int order);

nlohmann::json to_json(const DecisionMap& d);

/// Number of thresholds <= sample; a tie goes to the upper symbol.
int threshold_detect(double sample, const ThresholdSet& t);

/// W = 1 decoder, with decoder classes mapped to ascending positions.
SampleClassifier decoder_classifier(const Network& net, std::vector<int> rank);

/// Maximum-likelihood rule on the exact conditional densities of the
/// memoryless channel (equiprobable symbols).
SampleClassifier map_classifier(const Constellation& c, const MixedNoiseParams& p);

nlohmann::json to_json(const ThresholdSet& t);
ThresholdSet thresholds_from_json(const nlohmann::json& j);

}  // namespace aepam
