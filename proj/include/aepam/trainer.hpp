#pragma once

#include "aepam/network.hpp"
#include "aepam/surrogate.hpp"
#include "json.hpp"

#include <cstdint>
#include <vector>

namespace aepam {

struct TrainConfig {
  double learning_rate = 0.05;
  int batch_size = 2048;
  int max_iterations = 20000;
  /// Iterations without a validation improvement larger than `tolerance`.
  int patience = 500;
  double tolerance = 1e-5;
  int validation_symbols = 1 << 16;
  int validation_every = 50;
  /// Learning-rate factor applied after `decay_patience` iterations without
  /// improvement; 1 disables decay.
  double decay_factor = 0.5;
  int decay_patience = 250;
  double min_learning_rate = 1e-4;
  int hidden = 15;
  /// Independent initializations; the one with the lowest validation loss
  /// is kept. All restarts share the validation set.
  int restarts = 1;
  /// Adam steps fitting a fresh encoder to standard PAM, in the rank order of
  /// its initial levels, before end-to-end training; 0 starts from the raw
  /// initialization.
  int encoder_warmup = 300;
  std::uint64_t seed = 1;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
/// Missing keys keep the values in `base`; the result is validated.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct TrainResult {
  Network net;
  ExtractedConstellation extracted;
  std::vector<double> loss_trace;        // training loss per iteration
  std::vector<double> validation_trace;  // one entry per validation check
  int iterations = 0;
  double best_validation = 0.0;
  bool early_stopped = false;
  int restart = 0;  // index of the kept initialization
};

/// Gradients of the mean cross-entropy for one batch through the channel.
/// Uses the supplied channel state; returns the loss.
double compute_gradients(const Network& net, ChannelSurrogate& channel,
                         std::span<const int> symbols, RandomStream& rng,
                         std::vector<double>& grads);
/// Same loss with the channel's remembered noise (no new draws).
double replay_loss(const Network& net, ChannelSurrogate& channel, std::span<const int> symbols);

/// End-to-end training; returns the parameters with the best validation loss.
/// Throws std::runtime_error if the loss becomes non-finite.
TrainResult train(ChannelSurrogate& channel, int order, int window, const TrainConfig& cfg);

/// Retrains only the decoder of `start` (same window); the encoder and hence
/// the constellation stay fixed. Adam moments restart from zero.
TrainResult train_decoder(ChannelSurrogate& channel, const Network& start, const TrainConfig& cfg);

}  // namespace aepam
