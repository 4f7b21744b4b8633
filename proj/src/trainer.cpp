#include "aepam/trainer.hpp"

#include "aepam/constellation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace aepam {
namespace {

std::vector<int> random_symbols(int n, int order, RandomStream& rng) {
  std::vector<int> s(static_cast<std::size_t>(n));
  for (int& v : s) v = rng.uniform_index(order);
  return s;
}

double loss_of(const Network& net, std::span<const double> received, std::span<const int> symbols,
               DecoderTrace* keep, std::vector<double>* windows_out) {
  auto windows = circular_windows(received, net.window());
  auto trace = forward_decoder(net, windows);
  const double loss = batch_loss(trace, symbols, net.order());
  if (keep) *keep = std::move(trace);
  if (windows_out) *windows_out = std::move(windows);
  return loss;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (!(learning_rate > 0.0)) fail("learning_rate must be positive");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (max_iterations < 1) fail("max_iterations must be >= 1");
  if (patience < 1) fail("patience must be >= 1");
  if (tolerance < 0.0) fail("tolerance must be >= 0");
  if (validation_symbols < 1 || validation_every < 1) fail("validation settings must be positive");
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) fail("decay_factor must lie in (0, 1]");
  if (hidden < 1) fail("hidden must be >= 1");
  if (restarts < 1) fail("restarts must be >= 1");
  if (encoder_warmup < 0) fail("encoder_warmup must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"max_iterations", c.max_iterations}, {"patience", c.patience},
          {"tolerance", c.tolerance}, {"validation_symbols", c.validation_symbols},
          {"validation_every", c.validation_every}, {"decay_factor", c.decay_factor},
          {"decay_patience", c.decay_patience}, {"min_learning_rate", c.min_learning_rate},
          {"hidden", c.hidden}, {"restarts", c.restarts}, {"encoder_warmup", c.encoder_warmup},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  auto read = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  read("learning_rate", c.learning_rate);
  read("batch_size", c.batch_size);
  read("max_iterations", c.max_iterations);
  read("patience", c.patience);
  read("tolerance", c.tolerance);
  read("validation_symbols", c.validation_symbols);
  read("validation_every", c.validation_every);
  read("decay_factor", c.decay_factor);
  read("decay_patience", c.decay_patience);
  read("min_learning_rate", c.min_learning_rate);
  read("hidden", c.hidden);
  read("restarts", c.restarts);
  read("encoder_warmup", c.encoder_warmup);
  read("seed", c.seed);
  c.validate();
  return c;
}

double compute_gradients(const Network& net, ChannelSurrogate& channel, std::span<const int> symbols,
                         RandomStream& rng, std::vector<double>& grads) {
  grads.assign(net.params().size(), 0.0);
  const auto enc = forward_encoder(net);
  const auto received = channel.forward(enc.levels, symbols, rng);
  DecoderTrace trace;
  std::vector<double> windows;
  const double loss = loss_of(net, received, symbols, &trace, &windows);
  std::vector<double> grad_windows(windows.size());
  backward_decoder(net, trace, symbols, grads, grad_windows);
  const auto grad_received = fold_window_gradient(grad_windows, net.window());
  const auto grad_levels = channel.backward(grad_received);
  backward_encoder(net, enc, grad_levels, grads);
  return loss;
}

double replay_loss(const Network& net, ChannelSurrogate& channel, std::span<const int> symbols) {
  const auto enc = forward_encoder(net);
  const auto received = channel.evaluate(enc.levels);
  return loss_of(net, received, symbols, nullptr, nullptr);
}

namespace {

// Levels crushed toward zero by the u^2 map have vanishing gradient, and two
// low symbols can stay merged there for good. Starting from standard PAM
// keeps every level clear of that point.
void warm_up_encoder(Network& net, int steps) {
  if (steps == 0) return;
  const int m = net.order();
  const auto initial = extract_constellation(net);
  const auto target = standard_pam(m).levels();
  const std::size_t n_enc = net.encoder_size();
  AdamConfig adam;
  std::vector<double> grads;
  std::vector<double> grad_levels(static_cast<std::size_t>(m));
  for (int it = 0; it < steps; ++it) {
    const auto enc = forward_encoder(net);
    for (int k = 0; k < m; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      grad_levels[kk] = 2.0 * (enc.levels[kk] - target[static_cast<std::size_t>(initial.rank[kk])]);
    }
    grads.assign(net.params().size(), 0.0);
    backward_encoder(net, enc, grad_levels, grads);
    std::fill(grads.begin() + static_cast<long>(n_enc), grads.end(), 0.0);
    adam_step(net, grads, adam);
  }
  net.adam().m.assign(net.params().size(), 0.0);
  net.adam().v.assign(net.params().size(), 0.0);
  net.adam().step = 0;
}

TrainResult train_once(ChannelSurrogate& channel, ChannelSurrogate& validation,
                       std::span<const int> vsymbols, int order, int window, const TrainConfig& cfg,
                       std::uint64_t seed, const Network* start) {
  RandomStream init = RandomStream::derive(seed, 0);
  RandomStream batches = RandomStream::derive(seed, 1);
  Network net = start ? *start : Network::create(order, window, cfg.hidden, init);
  if (!start) warm_up_encoder(net, cfg.encoder_warmup);
  // encoder parameters precede the decoder's; a warm start freezes them
  const std::size_t frozen = start ? net.layers()[3].w_offset : 0;
  if (start) {
    net.adam().m.assign(net.params().size(), 0.0);
    net.adam().v.assign(net.params().size(), 0.0);
    net.adam().step = 0;
  }
  std::vector<double> loss_trace;
  std::vector<double> validation_trace;
  int iterations = 0;
  bool early_stopped = false;
  AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;

  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_params = net.params();
  AdamState best_adam = net.adam();
  int best_iter = 0;
  int last_decay = 0;
  std::vector<double> grads;
  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const auto symbols = random_symbols(cfg.batch_size, order, batches);
    const double loss = compute_gradients(net, channel, symbols, batches, grads);
    if (!std::isfinite(loss)) {
      throw std::runtime_error("training diverged at iteration " + std::to_string(it) + " (loss " +
                               std::to_string(loss) + ")");
    }
    loss_trace.push_back(loss);
    const std::size_t hold = !start && it <= cfg.encoder_warmup ? net.encoder_size() : frozen;
    std::fill(grads.begin(), grads.begin() + static_cast<long>(hold), 0.0);
    adam_step(net, grads, adam);
    iterations = it;

    if (it % cfg.validation_every != 0 && it != cfg.max_iterations) continue;
    const double vloss = replay_loss(net, validation, vsymbols);
    if (!std::isfinite(vloss)) {
      throw std::runtime_error("validation loss non-finite at iteration " + std::to_string(it));
    }
    validation_trace.push_back(vloss);
    if (vloss < best) {
      // only gains above tolerance reset the patience clock
      if (vloss < best - cfg.tolerance) {
        best_iter = it;
        last_decay = it;
      }
      best = vloss;
      best_params = net.params();
      best_adam = net.adam();
    }
    // the patience clock starts once the encoder is released
    if (it - std::max(best_iter, start ? 0 : cfg.encoder_warmup) >= cfg.patience) {
      early_stopped = true;
      break;
    }
    if (cfg.decay_factor < 1.0 && it - last_decay >= cfg.decay_patience &&
        adam.learning_rate > cfg.min_learning_rate) {
      adam.learning_rate = std::max(cfg.min_learning_rate, adam.learning_rate * cfg.decay_factor);
      last_decay = it;
    }
  }
  net.params() = best_params;
  net.adam() = best_adam;
  auto extracted = extract_constellation(net);
  return TrainResult{std::move(net),        std::move(extracted), std::move(loss_trace),
                     std::move(validation_trace), iterations,     best,
                     early_stopped,         0};
}

}  // namespace

namespace {

TrainResult train_impl(ChannelSurrogate& channel, int order, int window, const TrainConfig& cfg,
                       const Network* start) {
  cfg.validate();
  const std::uint64_t validation_seed = splitmix64(cfg.seed ^ 0x5eedULL);
  auto validation = channel.clone();
  RandomStream vsym = RandomStream::derive(validation_seed, 0);
  const auto vsymbols = random_symbols(cfg.validation_symbols, order, vsym);
  {
    RandomStream vnoise = RandomStream::derive(validation_seed, 1);
    // fixes the validation noise; levels are re-applied at each check
    std::vector<double> dummy(static_cast<std::size_t>(order), 1.0);
    validation->forward(dummy, vsymbols, vnoise);
  }

  std::optional<TrainResult> kept;
  for (int r = 0; r < cfg.restarts; ++r) {
    const std::uint64_t seed = r == 0 ? cfg.seed : splitmix64(cfg.seed + static_cast<std::uint64_t>(r));
    auto result = train_once(channel, *validation, vsymbols, order, window, cfg, seed, start);
    result.restart = r;
    if (!kept || result.best_validation < kept->best_validation) kept = std::move(result);
  }
  return std::move(*kept);
}

}  // namespace

TrainResult train(ChannelSurrogate& channel, int order, int window, const TrainConfig& cfg) {
  return train_impl(channel, order, window, cfg, nullptr);
}

TrainResult train_decoder(ChannelSurrogate& channel, const Network& start, const TrainConfig& cfg) {
  return train_impl(channel, start.order(), start.window(), cfg, &start);
}

}  // namespace aepam
