#pragma once

#include "aepam/baselines.hpp"
#include "aepam/link.hpp"
#include "aepam/metrics.hpp"
#include "aepam/network.hpp"
#include "aepam/thresholds.hpp"
#include "aepam/trainer.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace aepam {

/// Memoryless channel with threshold detection; symbols drawn uniformly.
BlockRunner memoryless_threshold_runner(const Constellation& c, const MixedNoiseParams& p,
                                        const ThresholdSet& t, int block_symbols = 1 << 16);
/// Same with a general decision map.
BlockRunner memoryless_map_runner(const Constellation& c, const MixedNoiseParams& p, const DecisionMap& d,
                                  int block_symbols = 1 << 16);

/// Gray-labelled error counting of ascending positions.
void count_errors(int order, std::span<const int> sent, std::span<const int> decided, BlockCounts& c);

struct MemorylessAe {
  TrainResult training;
  MixedNoiseParams noise;
  ThresholdSet thresholds;
};

/// Trains a W = 1 autoencoder at (alpha, sigma2_n) for unit E[s^2] and
/// extracts bisection thresholds from its decoder.
MemorylessAe train_memoryless_ae(int order, double alpha, double sigma2_n, const TrainConfig& cfg);

/// What is transmitted over the link and how it is detected.
struct LinkSystem {
  std::string name;
  /// Ascending unit-mean detected level powers before the extinction map.
  std::vector<double> level_powers;
  /// Decision thresholds on normalized samples (threshold and MMSE modes).
  ThresholdSet thresholds;
  /// Trains an MMSE equalizer with this many taps before thresholding.
  std::optional<int> mmse_taps;
  int mmse_samples_per_symbol = 1;
  /// Decoder mode: network with window W and class -> position map.
  std::shared_ptr<const Network> decoder;
  std::vector<int> rank;
};

LinkSystem standard_link_system(const LinkConfig& cfg, std::optional<int> mmse_taps = 15);
LinkSystem threshold_link_system(std::string name, const Constellation& c, const ThresholdSet& t,
                                 std::optional<int> mmse_taps = std::nullopt);
LinkSystem decoder_link_system(std::string name, const TrainResult& trained);

/// Symbols used to fit MMSE taps, drawn from a stream separate from the
/// evaluation blocks.
inline constexpr int kMmseTrainingSymbols = 1 << 15;

/// BER of a system over the link; blocks are circular and cfg.block_symbols long.
BerEstimate evaluate_link(const LinkSystem& sys, const LinkConfig& cfg, const BerOptions& opt);

/// Trains an autoencoder through the waveform link.
TrainResult train_link_ae(int order, int window, const LinkConfig& cfg, const TrainConfig& tcfg);

struct IterativeDesign {
  IterativeResult result;
  double design_power_dbm = 0.0;
  LinkConfig design_config;
};

/// Iterative levels/thresholds for the dispersion-free link, built with
/// Monte Carlo tails through the link noise. The design power is the received
/// power at which the construction has unit mean level, so the normalized
/// design is self-consistent.
IterativeDesign iterative_link_design(const LinkConfig& cfg, double ser_target = 3.6e-4,
                                      std::size_t draws = 1000000, std::uint64_t seed = 7);

}  // namespace aepam
