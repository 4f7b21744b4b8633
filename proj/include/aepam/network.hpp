#pragma once

#include "aepam/constellation.hpp"
#include "aepam/rng.hpp"
#include "json.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace aepam {

double celu(double x);
double celu_grad(double x);

/// Max-shifted softmax.
std::vector<double> softmax(std::span<const double> scores);

/// Lower clamp applied to probabilities inside the log.
inline constexpr double kLogFloor = 1e-30;
double cross_entropy(std::span<const double> probs, int label);

struct LayerShape {
  int in = 0;
  int out = 0;
  std::size_t w_offset = 0;  // row-major out x in
  std::size_t b_offset = 0;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

struct AdamConfig {
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Encoder [M -> h -> h -> 1] and decoder [W -> h -> h -> M], CELU on hidden
/// layers, all parameters in one flat vector.
class Network {
 public:
  static constexpr int kLayersPerStack = 3;

  /// Glorot-uniform weights, zero biases.
  static Network create(int order, int window, int hidden, RandomStream& rng);

  int order() const { return order_; }
  int window() const { return window_; }
  int hidden() const { return hidden_; }

  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }
  const std::vector<LayerShape>& layers() const { return layers_; }
  std::size_t encoder_size() const { return layers_[kLayersPerStack].w_offset; }

  AdamState& adam() { return adam_; }
  const AdamState& adam() const { return adam_; }

  nlohmann::json shape_json() const;

 private:
  friend Network load_checkpoint(const std::filesystem::path&, nlohmann::json*);

  Network(int order, int window, int hidden);

  int order_;
  int window_;
  int hidden_;
  std::vector<LayerShape> layers_;
  std::vector<double> params_;
  AdamState adam_;
};

/// Activations of one stack for a batch; row-major n x width per layer.
struct StackTrace {
  int batch = 0;
  std::vector<double> input;
  std::vector<std::vector<double>> pre;   // pre-activation per layer
  std::vector<std::vector<double>> post;  // post-activation per layer
};

struct EncoderTrace {
  StackTrace stack;
  std::vector<double> raw;     // u, one per symbol
  std::vector<double> levels;  // s = u^2 / sqrt(mean(u^4))
};

/// Encoder applied to all M one-hot vectors; levels have unit mean square.
EncoderTrace forward_encoder(const Network& net);
/// Accumulates encoder parameter gradients for dL/ds.
void backward_encoder(const Network& net, const EncoderTrace& trace,
                      std::span<const double> grad_levels, std::span<double> grads);

/// Extracted constellation with the symbol -> sorted rank mapping.
struct ExtractedConstellation {
  Constellation constellation;
  std::vector<int> rank;  // rank[symbol] = position in ascending order
};
ExtractedConstellation extract_constellation(const Network& net);

struct DecoderTrace {
  StackTrace stack;
  std::vector<double> probs;  // n x M
};

/// Decoder on n windows of W samples (row-major n x W).
DecoderTrace forward_decoder(const Network& net, std::span<const double> windows);
/// Scores only, single window.
std::vector<double> decoder_scores(const Network& net, std::span<const double> window);
int decoder_classify(const Network& net, std::span<const double> window);

/// Mean cross-entropy of a traced batch.
double batch_loss(const DecoderTrace& trace, std::span<const int> labels, int order);

/// Accumulates decoder parameter gradients of the mean cross-entropy and
/// writes dL/d(window input) into grad_input when it is non-empty.
void backward_decoder(const Network& net, const DecoderTrace& trace, std::span<const int> labels,
                      std::span<double> grads, std::span<double> grad_input);

/// Plain Adam; zero gradient leaves parameters unchanged.
void adam_step(Network& net, std::span<const double> grads, const AdamConfig& cfg);

/// Multiplications per decision of a W-window decoder: input and output
/// layers plus the Taylor-series activations on the scores.
long count_multiplications(int order, int window = 5, int hidden = 15);

struct MultiplyTally {
  long input_layer = 0;
  long hidden_layer = 0;  // not part of the counted stages
  long output_layer = 0;
  long taylor = 0;        // CELU and exp polynomials over the M scores
  long hidden_activation = 0;
  long counted() const { return input_layer + output_layer + taylor; }
};

/// Hardware-style decision path: exact hidden stack, then third-order Taylor
/// CELU and Taylor exp over the M scores, then argmax. Both polynomials are
/// increasing, so the decision equals the exact argmax.
int decoder_classify_instrumented(const Network& net, std::span<const double> window,
                                  MultiplyTally& tally);

/// Binary checkpoint: "AEPAMNN1", uint64 header length, JSON header, then
/// little-endian float64 params, Adam m and v.
void save_checkpoint(const std::filesystem::path& path, const Network& net,
                     const nlohmann::json& meta);
Network load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

}  // namespace aepam
