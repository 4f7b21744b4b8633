#include "aepam/network.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace aepam {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using ConstMapVec = Eigen::Map<const Eigen::VectorXd>;

constexpr char kMagic[8] = {'A', 'E', 'P', 'A', 'M', 'N', 'N', '1'};

StackTrace stack_forward(const std::vector<double>& params, std::span<const LayerShape> layers,
                         std::span<const double> input, int batch) {
  StackTrace t;
  t.batch = batch;
  t.input.assign(input.begin(), input.end());
  const double* x = t.input.data();
  int width = layers.front().in;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    if (L.in != width) throw std::logic_error("stack_forward: layer width mismatch");
    ConstMapMat X(x, batch, L.in);
    ConstMapMat W(params.data() + L.w_offset, L.out, L.in);
    ConstMapVec b(params.data() + L.b_offset, L.out);
    std::vector<double> z(static_cast<std::size_t>(batch) * L.out);
    MapMat Z(z.data(), batch, L.out);
    Z.noalias() = X * W.transpose();
    Z.rowwise() += b.transpose();
    std::vector<double> a = z;
    if (l + 1 < layers.size()) {
      for (double& v : a) v = celu(v);
    }
    t.pre.push_back(std::move(z));
    t.post.push_back(std::move(a));
    x = t.post.back().data();
    width = L.out;
  }
  return t;
}

// grad_out is dL/d(last post-activation), n x out.
void stack_backward(const std::vector<double>& params, std::span<const LayerShape> layers,
                    const StackTrace& t, std::vector<double> grad_out, std::span<double> grads,
                    std::span<double> grad_input) {
  const int n = t.batch;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& L = layers[l];
    if (l + 1 < layers.size()) {
      const auto& z = t.pre[l];
      for (std::size_t i = 0; i < grad_out.size(); ++i) grad_out[i] *= celu_grad(z[i]);
    }
    const double* x = l == 0 ? t.input.data() : t.post[l - 1].data();
    ConstMapMat X(x, n, L.in);
    ConstMapMat G(grad_out.data(), n, L.out);
    MapMat gW(grads.data() + L.w_offset, L.out, L.in);
    Eigen::Map<Eigen::VectorXd> gb(grads.data() + L.b_offset, L.out);
    gW.noalias() += G.transpose() * X;
    gb.noalias() += G.colwise().sum().transpose();
    if (l == 0 && grad_input.empty()) break;
    ConstMapMat W(params.data() + L.w_offset, L.out, L.in);
    std::vector<double> gx(static_cast<std::size_t>(n) * L.in);
    MapMat GX(gx.data(), n, L.in);
    GX.noalias() = G * W;
    if (l == 0) {
      std::copy(gx.begin(), gx.end(), grad_input.begin());
    } else {
      grad_out = std::move(gx);
    }
  }
}

}  // namespace

double celu(double x) { return x > 0.0 ? x : std::expm1(x); }
double celu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

std::vector<double> softmax(std::span<const double> scores) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> p(scores.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(scores[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double cross_entropy(std::span<const double> probs, int label) {
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], kLogFloor));
}

Network::Network(int order, int window, int hidden) : order_(order), window_(window), hidden_(hidden) {
  if (order < 2 || window < 1 || hidden < 1) throw std::invalid_argument("network: bad dimensions");
  const int dims[2][4] = {{order, hidden, hidden, 1}, {window, hidden, hidden, order}};
  std::size_t off = 0;
  for (const auto& stack : dims) {
    for (int l = 0; l < kLayersPerStack; ++l) {
      LayerShape s;
      s.in = stack[l];
      s.out = stack[l + 1];
      s.w_offset = off;
      off += static_cast<std::size_t>(s.in) * s.out;
      s.b_offset = off;
      off += static_cast<std::size_t>(s.out);
      layers_.push_back(s);
    }
  }
  params_.assign(off, 0.0);
  adam_.m.assign(off, 0.0);
  adam_.v.assign(off, 0.0);
}

Network Network::create(int order, int window, int hidden, RandomStream& rng) {
  Network net(order, window, hidden);
  for (const auto& L : net.layers_) {
    const double limit = std::sqrt(6.0 / (L.in + L.out));
    for (int i = 0; i < L.in * L.out; ++i) {
      net.params_[L.w_offset + static_cast<std::size_t>(i)] = limit * (2.0 * rng.uniform() - 1.0);
    }
  }
  return net;
}

nlohmann::json Network::shape_json() const {
  return {{"order", order_}, {"window", window_}, {"hidden", hidden_}, {"activation", "celu"},
          {"param_count", params_.size()}};
}

EncoderTrace forward_encoder(const Network& net) {
  const int m = net.order();
  std::vector<double> eye(static_cast<std::size_t>(m * m), 0.0);
  for (int i = 0; i < m; ++i) eye[static_cast<std::size_t>(i * m + i)] = 1.0;
  EncoderTrace t;
  std::span<const LayerShape> enc(net.layers().data(), Network::kLayersPerStack);
  t.stack = stack_forward(net.params(), enc, eye, m);
  t.raw = t.stack.post.back();
  double q = 0.0;
  for (double u : t.raw) q += u * u * u * u;
  q = std::max(q / m, 1e-300);
  t.levels.resize(t.raw.size());
  for (std::size_t i = 0; i < t.raw.size(); ++i) t.levels[i] = t.raw[i] * t.raw[i] / std::sqrt(q);
  return t;
}

void backward_encoder(const Network& net, const EncoderTrace& t, std::span<const double> grad_levels,
                      std::span<double> grads) {
  const int m = net.order();
  double q = 0.0;
  for (double u : t.raw) q += u * u * u * u;
  q = std::max(q / m, 1e-300);
  const double rq = 1.0 / std::sqrt(q);
  double gv_dot = 0.0;
  for (int i = 0; i < m; ++i) gv_dot += grad_levels[static_cast<std::size_t>(i)] * t.raw[static_cast<std::size_t>(i)] * t.raw[static_cast<std::size_t>(i)];
  std::vector<double> gu(static_cast<std::size_t>(m));
  for (std::size_t i = 0; i < gu.size(); ++i) {
    const double v = t.raw[i] * t.raw[i];
    const double gv = grad_levels[i] * rq - v * gv_dot * rq * rq * rq / m;
    gu[i] = 2.0 * t.raw[i] * gv;
  }
  std::span<const LayerShape> enc(net.layers().data(), Network::kLayersPerStack);
  stack_backward(net.params(), enc, t.stack, std::move(gu), grads, {});
}

ExtractedConstellation extract_constellation(const Network& net) {
  const auto t = forward_encoder(net);
  const int m = net.order();
  std::vector<int> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return t.levels[static_cast<std::size_t>(a)] < t.levels[static_cast<std::size_t>(b)];
  });
  std::vector<double> sorted;
  std::vector<int> rank(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    sorted.push_back(t.levels[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]);
    rank[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i;
  }
  return {Constellation::from_levels(sorted), rank};
}

DecoderTrace forward_decoder(const Network& net, std::span<const double> windows) {
  const int w = net.window();
  if (windows.size() % static_cast<std::size_t>(w) != 0) {
    throw std::invalid_argument("forward_decoder: input is not a whole number of windows");
  }
  const int n = static_cast<int>(windows.size() / static_cast<std::size_t>(w));
  std::span<const LayerShape> dec(net.layers().data() + Network::kLayersPerStack, Network::kLayersPerStack);
  DecoderTrace t;
  t.stack = stack_forward(net.params(), dec, windows, n);
  const int m = net.order();
  const auto& scores = t.stack.post.back();
  t.probs.resize(scores.size());
  for (int i = 0; i < n; ++i) {
    auto p = softmax(std::span(scores).subspan(static_cast<std::size_t>(i * m), static_cast<std::size_t>(m)));
    std::copy(p.begin(), p.end(), t.probs.begin() + i * m);
  }
  return t;
}

std::vector<double> decoder_scores(const Network& net, std::span<const double> window) {
  if (static_cast<int>(window.size()) != net.window()) {
    throw std::invalid_argument("decoder: window length does not match network");
  }
  std::span<const LayerShape> dec(net.layers().data() + Network::kLayersPerStack, Network::kLayersPerStack);
  return stack_forward(net.params(), dec, window, 1).post.back();
}

int decoder_classify(const Network& net, std::span<const double> window) {
  const auto s = decoder_scores(net, window);
  return static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin());
}

double batch_loss(const DecoderTrace& t, std::span<const int> labels, int order) {
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    loss += cross_entropy(std::span(t.probs).subspan(i * static_cast<std::size_t>(order), static_cast<std::size_t>(order)), labels[i]);
  }
  return loss / static_cast<double>(labels.size());
}

void backward_decoder(const Network& net, const DecoderTrace& t, std::span<const int> labels,
                      std::span<double> grads, std::span<double> grad_input) {
  const int m = net.order();
  const auto n = labels.size();
  std::vector<double> g(t.probs);
  for (std::size_t i = 0; i < n; ++i) g[i * static_cast<std::size_t>(m) + static_cast<std::size_t>(labels[i])] -= 1.0;
  for (double& v : g) v /= static_cast<double>(n);
  std::span<const LayerShape> dec(net.layers().data() + Network::kLayersPerStack, Network::kLayersPerStack);
  stack_backward(net.params(), dec, t.stack, std::move(g), grads, grad_input);
}

void adam_step(Network& net, std::span<const double> grads, const AdamConfig& cfg) {
  auto& p = net.params();
  auto& st = net.adam();
  if (grads.size() != p.size()) throw std::invalid_argument("adam_step: gradient shape mismatch");
  ++st.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < p.size(); ++i) {
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * grads[i];
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    const double mh = st.m[i] / c1;
    const double vh = st.v[i] / c2;
    p[i] -= cfg.learning_rate * mh / (std::sqrt(vh) + cfg.epsilon);
  }
}

long count_multiplications(int order, int window, int hidden) {
  if (order < 1 || window < 1 || hidden < 1) throw std::invalid_argument("count_multiplications: bad dimensions");
  return static_cast<long>(window) * hidden + static_cast<long>(hidden) * order + order * 2L * 2L;
}

int decoder_classify_instrumented(const Network& net, std::span<const double> window,
                                  MultiplyTally& tally) {
  if (static_cast<int>(window.size()) != net.window()) {
    throw std::invalid_argument("decoder: window length does not match network");
  }
  const auto& p = net.params();
  std::vector<double> x(window.begin(), window.end());
  for (int l = 0; l < Network::kLayersPerStack; ++l) {
    const auto& L = net.layers()[static_cast<std::size_t>(Network::kLayersPerStack + l)];
    std::vector<double> y(static_cast<std::size_t>(L.out));
    for (int o = 0; o < L.out; ++o) {
      double acc = p[L.b_offset + static_cast<std::size_t>(o)];
      for (int i = 0; i < L.in; ++i) acc += p[L.w_offset + static_cast<std::size_t>(o * L.in + i)] * x[static_cast<std::size_t>(i)];
      y[static_cast<std::size_t>(o)] = acc;
    }
    const long muls = static_cast<long>(L.in) * L.out;
    if (l == 0) tally.input_layer += muls;
    else if (l == Network::kLayersPerStack - 1) tally.output_layer += muls;
    else tally.hidden_layer += muls;
    if (l + 1 < Network::kLayersPerStack) {
      for (double& v : y) v = celu(v);
      tally.hidden_activation += L.out;
    }
    x = std::move(y);
  }
  // third-order Taylor exp: 1 + x + x^2/2 + x^3/6, two variable products;
  // the constant coefficients are scalings and not counted
  auto taylor_exp = [&](double v) {
    const double v2 = v * v;
    const double v3 = v2 * v;
    tally.taylor += 2;
    return 1.0 + v + 0.5 * v2 + v3 / 6.0;
  };
  int best = 0;
  double best_val = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    // the polynomial is evaluated for every score, as a fixed datapath would
    const double t = taylor_exp(x[i]);
    const double c = x[i] > 0.0 ? x[i] : t - 1.0;
    const double e = taylor_exp(c);
    if (i == 0 || e > best_val) {
      best_val = e;
      best = static_cast<int>(i);
    }
  }
  return best;
}

void save_checkpoint(const std::filesystem::path& path, const Network& net, const nlohmann::json& meta) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes little-endian host");
  nlohmann::json header = meta;
  header["network"] = net.shape_json();
  header["adam_step"] = net.adam().step;
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* block : {&net.params(), &net.adam().m, &net.adam().v}) {
    out.write(reinterpret_cast<const char*>(block->data()), static_cast<std::streamsize>(block->size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("short write on checkpoint " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path, nlohmann::json* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  auto header = nlohmann::json::parse(text);
  const auto& shape = header.at("network");
  Network net(shape.at("order").get<int>(), shape.at("window").get<int>(), shape.at("hidden").get<int>());
  for (auto* block : {&net.params_, &net.adam_.m, &net.adam_.v}) {
    in.read(reinterpret_cast<char*>(block->data()), static_cast<std::streamsize>(block->size() * sizeof(double)));
  }
  if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
  net.adam_.step = header.at("adam_step").get<long>();
  if (meta) *meta = std::move(header);
  return net;
}

}  // namespace aepam
