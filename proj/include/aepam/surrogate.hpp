#pragma once

#include "aepam/fft.hpp"
#include "aepam/link.hpp"
#include "aepam/mixed_noise.hpp"
#include "aepam/rng.hpp"
#include "json.hpp"

#include <memory>
#include <span>
#include <vector>

namespace aepam {

/// Differentiable channel used during training.
///
/// forward() draws fresh noise for a circular block of symbols and remembers
/// it; evaluate() re-runs the channel with the remembered noise and symbols,
/// which is what finite-difference checks need; backward() returns dL/dlevels
/// for the most recent evaluation.
class ChannelSurrogate {
 public:
  virtual ~ChannelSurrogate() = default;

  std::vector<double> forward(std::span<const double> levels, std::span<const int> symbols,
                              RandomStream& rng) {
    draw(symbols, rng);
    return evaluate(levels);
  }
  virtual std::vector<double> evaluate(std::span<const double> levels) = 0;
  virtual std::vector<double> backward(std::span<const double> grad_received) = 0;
  virtual std::unique_ptr<ChannelSurrogate> clone() const = 0;
  virtual nlohmann::json describe() const = 0;

 protected:
  virtual void draw(std::span<const int> symbols, RandomStream& rng) = 0;
};

/// r = (s + sigma_ase eps)^2 + sigma_th eta, with dr/ds = 2 (s + sigma_ase eps).
class MemorylessChannel final : public ChannelSurrogate {
 public:
  explicit MemorylessChannel(MixedNoiseParams p) : params_(p) {}

  std::vector<double> evaluate(std::span<const double> levels) override;
  std::vector<double> backward(std::span<const double> grad_received) override;
  std::unique_ptr<ChannelSurrogate> clone() const override {
    return std::make_unique<MemorylessChannel>(params_);
  }
  nlohmann::json describe() const override;
  const MixedNoiseParams& params() const { return params_; }

 protected:
  void draw(std::span<const int> symbols, RandomStream& rng) override;

 private:
  MixedNoiseParams params_;
  std::vector<int> symbols_;
  std::vector<double> ase_;
  std::vector<double> thermal_;
  std::vector<double> field_;  // s + sigma_ase eps of the last evaluation
  std::size_t order_ = 0;
};

/// The waveform link in normalized units (field in sqrt(G P_rx)), with the
/// adjoint of each linear stage and of the square law.
class WaveformChannel final : public ChannelSurrogate {
 public:
  explicit WaveformChannel(LinkConfig cfg);

  std::vector<double> evaluate(std::span<const double> levels) override;
  std::vector<double> backward(std::span<const double> grad_received) override;
  std::unique_ptr<ChannelSurrogate> clone() const override {
    return std::make_unique<WaveformChannel>(cfg_);
  }
  nlohmann::json describe() const override;
  const LinkConfig& config() const { return cfg_; }

 protected:
  void draw(std::span<const int> symbols, RandomStream& rng) override;

 private:
  void prepare(std::size_t n_samples);

  LinkConfig cfg_;
  LinkNoise noise_;
  std::size_t cached_n_ = 0;
  std::vector<double> tx_response_;
  std::vector<double> rx_response_;  // empty for symbol-centre sampling
  std::vector<cplx> cd_response_;    // empty when dispersion-free

  std::vector<int> symbols_;
  std::vector<cplx> ase_;
  std::vector<double> thermal_;

  // state of the last evaluation
  std::vector<double> levels_;
  std::vector<double> mapped_;
  std::vector<double> power_;
  std::vector<cplx> field_;  // after dispersion and noise
  double gamma_ = 0.0;
};

/// Windows of `width` samples centred on each symbol, wrapping around the
/// circular block; row-major n x width.
std::vector<double> circular_windows(std::span<const double> received, int width);
/// Adjoint of circular_windows.
std::vector<double> fold_window_gradient(std::span<const double> grad_windows, int width);

}  // namespace aepam
