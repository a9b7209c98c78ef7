#include "mpcgrad/neural.hpp"

#include "mpcgrad/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace mpcgrad {

void MlpArchitecture::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ArgumentError("architecture: dimensions must be >= 1");
  if (hidden.empty()) throw ArgumentError("architecture: at least one hidden layer is required");
  for (int w : hidden)
    if (w < 1) throw ArgumentError("architecture: hidden widths must be >= 1");
}

MlpArchitecture MlpParams::architecture() const {
  MlpArchitecture arch;
  if (layers.empty()) return arch;
  arch.input_dim = static_cast<int>(layers.front().W.cols());
  arch.output_dim = static_cast<int>(layers.back().W.rows());
  arch.hidden.clear();
  for (std::size_t l = 0; l + 1 < layers.size(); ++l)
    arch.hidden.push_back(static_cast<int>(layers[l].W.rows()));
  return arch;
}

std::size_t MlpParams::size() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size() + l.b.size());
  return n;
}

MlpParams init_params(const MlpArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  std::mt19937_64 rng(seed);
  std::vector<int> widths{arch.input_dim};
  widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
  widths.push_back(arch.output_dim);
  MlpParams p;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    DenseLayer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (int r = 0; r < fan_out; ++r)
      for (int c = 0; c < fan_in; ++c) layer.W(r, c) = dist(rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

Vector flatten(const MlpParams& params) {
  Vector theta(static_cast<Eigen::Index>(params.size()));
  Eigen::Index k = 0;
  for (const auto& l : params.layers) {
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) theta(k++) = l.W(r, c);
    theta.segment(k, l.b.size()) = l.b;
    k += l.b.size();
  }
  return theta;
}

MlpParams unflatten(const MlpArchitecture& arch, const Vector& theta) {
  MlpParams p = init_params(arch, 0);
  if (static_cast<std::size_t>(theta.size()) != p.size())
    throw ArgumentError("unflatten: parameter vector has the wrong length");
  Eigen::Index k = 0;
  for (auto& l : p.layers) {
    for (Eigen::Index r = 0; r < l.W.rows(); ++r)
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = theta(k++);
    l.b = theta.segment(k, l.b.size());
    k += l.b.size();
  }
  return p;
}

namespace {

// Column-batched buffers: sample s occupies column s of the vector quantities
// and columns [s n, s n + n) of the Jacobian quantities. Sized once per batch
// width, so the training loop never allocates. Products are coefficient-based
// (lazyProduct): the matrices are far too small for the blocked GEMM path.
struct Workspace {
  Eigen::Index n = 0;
  Eigen::Index cols = 0;
  std::vector<Matrix> h;   // h[0] = X, h[l] = post-activations of hidden layer l
  std::vector<Matrix> z;   // pre-activations of hidden layers
  std::vector<Matrix> J;   // J[l] = d h[l] / dx
  std::vector<Matrix> dz;  // dz[l] = d loss / d (output of layer l)
  std::vector<Matrix> DZ;  // same for the Jacobian term
  Matrix out;
  Matrix jac;
  Matrix U, G;             // targets of the current batch

  Workspace(const MlpParams& p, Eigen::Index batch) : n(p.layers.front().W.cols()), cols(batch) {
    const std::size_t L = p.layers.size();
    const Eigen::Index m = p.layers.back().W.rows();
    h.resize(L);
    J.resize(L);
    z.resize(L - 1);
    dz.resize(L);
    DZ.resize(L);
    h[0].resize(n, batch);
    J[0].resize(n, n * batch);
    for (Eigen::Index s = 0; s < batch; ++s) J[0].middleCols(s * n, n).setIdentity();
    for (std::size_t l = 0; l < L; ++l) {
      const Eigen::Index w = p.layers[l].W.rows();
      dz[l].resize(w, batch);
      DZ[l].resize(w, n * batch);
      if (l + 1 == L) break;
      z[l].resize(w, batch);
      h[l + 1].resize(w, batch);
      J[l + 1].resize(w, n * batch);
    }
    out.resize(m, batch);
    jac.resize(m, n * batch);
    U.resize(m, batch);
    G.resize(m, n * batch);
  }

  void load(const SampleTriplet& s, Eigen::Index col) {
    h[0].col(col) = s.x;
    U.col(col) = s.u;
    G.middleCols(col * n, n) = s.u_grad;
  }
};

void check_input(const MlpParams& p, const Vector& x) {
  if (p.layers.empty()) throw ArgumentError("network has no layers");
  if (x.size() != p.layers.front().W.cols()) throw ArgumentError("network input has the wrong dimension");
}

void check_sample(const MlpParams& p, const SampleTriplet& s) {
  check_input(p, s.x);
  const Eigen::Index m = p.layers.back().W.rows();
  if (s.u.size() != m || s.u_grad.rows() != m || s.u_grad.cols() != s.x.size())
    throw ArgumentError("network target has the wrong dimension");
}

// Zeroes the Jacobian columns of every sample whose unit r is inactive.
void mask_jacobian(Matrix& Jm, const Matrix& pre, Eigen::Index n) {
  for (Eigen::Index s = 0; s < pre.cols(); ++s)
    for (Eigen::Index r = 0; r < pre.rows(); ++r)
      if (!(pre(r, s) > 0.0)) Jm.block(r, s * n, 1, n).setZero();
}

// Forward pass over the columns of ws.h[0].
void run_forward(const MlpParams& p, Workspace& ws, bool with_jacobian) {
  const std::size_t L = p.layers.size();
  for (std::size_t l = 0; l + 1 < L; ++l) {
    const DenseLayer& layer = p.layers[l];
    ws.z[l].noalias() = layer.W.lazyProduct(ws.h[l]);
    ws.z[l].colwise() += layer.b;
    ws.h[l + 1] = ws.z[l].cwiseMax(0.0);
    if (with_jacobian) {
      ws.J[l + 1].noalias() = layer.W.lazyProduct(ws.J[l]);
      mask_jacobian(ws.J[l + 1], ws.z[l], ws.n);
    }
  }
  const DenseLayer& last = p.layers.back();
  ws.out.noalias() = last.W.lazyProduct(ws.h[L - 1]);
  ws.out.colwise() += last.b;
  if (with_jacobian) ws.jac.noalias() = last.W.lazyProduct(ws.J[L - 1]);
}

double batch_loss(const Workspace& ws, double gamma) {
  double loss = (ws.out - ws.U).squaredNorm();
  if (gamma != 0.0) loss += gamma * (ws.jac - ws.G).squaredNorm();
  return loss;
}

// Adds d(batch loss)/d(theta) into grad.
void accumulate_gradient(const MlpParams& p, double gamma, Workspace& ws, MlpParams& grad) {
  const std::size_t L = p.layers.size();
  const bool sobolev = gamma != 0.0;
  ws.dz[L - 1] = 2.0 * (ws.out - ws.U);
  if (sobolev) ws.DZ[L - 1] = (2.0 * gamma) * (ws.jac - ws.G);

  for (std::size_t l = L; l-- > 0;) {
    DenseLayer& g = grad.layers[l];
    g.W.noalias() += ws.dz[l].lazyProduct(ws.h[l].transpose());
    g.b += ws.dz[l].rowwise().sum();
    if (sobolev) g.W.noalias() += ws.DZ[l].lazyProduct(ws.J[l].transpose());
    if (l == 0) break;

    const Matrix& W = p.layers[l].W;
    Matrix& dh = ws.dz[l - 1];
    dh.noalias() = W.transpose().lazyProduct(ws.dz[l]);
    dh = (ws.z[l - 1].array() > 0.0).select(dh, 0.0);
    if (sobolev) {
      ws.DZ[l - 1].noalias() = W.transpose().lazyProduct(ws.DZ[l]);
      mask_jacobian(ws.DZ[l - 1], ws.z[l - 1], ws.n);
    }
  }
}

MlpParams zeros_like(const MlpParams& p) {
  MlpParams g;
  for (const auto& l : p.layers)
    g.layers.push_back({Matrix::Zero(l.W.rows(), l.W.cols()), Vector::Zero(l.b.size())});
  return g;
}

void set_zero(MlpParams& g) {
  for (auto& l : g.layers) {
    l.W.setZero();
    l.b.setZero();
  }
}

}  // namespace

Vector forward(const MlpParams& params, const Vector& x) {
  check_input(params, x);
  Workspace ws(params, 1);
  ws.h[0].col(0) = x;
  run_forward(params, ws, false);
  return ws.out.col(0);
}

Matrix input_jacobian(const MlpParams& params, const Vector& x) {
  check_input(params, x);
  Workspace ws(params, 1);
  ws.h[0].col(0) = x;
  run_forward(params, ws, true);
  return ws.jac;
}

namespace {

Workspace load_batch(const MlpParams& params, std::span<const SampleTriplet> batch) {
  Workspace ws(params, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t k = 0; k < batch.size(); ++k) {
    check_sample(params, batch[k]);
    ws.load(batch[k], static_cast<Eigen::Index>(k));
  }
  return ws;
}

}  // namespace

double sobolev_loss(const MlpParams& params, std::span<const SampleTriplet> batch, double gamma) {
  if (batch.empty()) throw ArgumentError("sobolev_loss: batch is empty");
  Workspace ws = load_batch(params, batch);
  run_forward(params, ws, gamma != 0.0);
  return batch_loss(ws, gamma);
}

MlpParams loss_gradient(const MlpParams& params, std::span<const SampleTriplet> batch,
                        double gamma) {
  if (batch.empty()) throw ArgumentError("loss_gradient: batch is empty");
  Workspace ws = load_batch(params, batch);
  MlpParams grad = zeros_like(params);
  run_forward(params, ws, gamma != 0.0);
  accumulate_gradient(params, gamma, ws, grad);
  return grad;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
  if (!(loss_target > 0.0)) throw ArgumentError("train: loss_target must be > 0");
  if (!(gamma >= 0.0)) throw ArgumentError("train: gamma must be >= 0");
  if (!(learning_rate > 0.0)) throw ArgumentError("train: learning_rate must be > 0");
  if (max_epochs < 1) throw ArgumentError("train: max_epochs must be >= 1");
}

const char* to_string(StopReason r) {
  return r == StopReason::TargetReached ? "target_reached" : "epoch_cap";
}

TrainReport train(const Dataset& ds, const MlpArchitecture& arch, const TrainConfig& cfg) {
  return train_from(ds, init_params(arch, cfg.seed), cfg);
}

TrainReport train_from(const Dataset& ds, MlpParams params, const TrainConfig& cfg) {
  cfg.validate();
  const MlpArchitecture arch = params.architecture();
  arch.validate();
  if (ds.kind != DatasetKind::Train) throw ArgumentError("train: dataset kind must be 'train'");
  if (ds.samples.empty()) throw ArgumentError("train: dataset is empty");
  if (ds.state_dim != arch.input_dim || ds.input_dim != arch.output_dim)
    throw ArgumentError("train: dataset dimensions do not match the architecture");

  const std::vector<SampleTriplet>& data = ds.samples;
  const std::size_t count = data.size();
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  const bool sobolev = cfg.gamma != 0.0;

  std::mt19937_64 rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (const SampleTriplet& s : data) check_sample(params, s);
  const std::size_t tail = count % batch;
  Workspace ws_full(params, static_cast<Eigen::Index>(std::min(batch, count)));
  Workspace ws_tail(params, static_cast<Eigen::Index>(tail == 0 ? 1 : tail));
  Workspace ws_all(params, static_cast<Eigen::Index>(count));
  for (std::size_t k = 0; k < count; ++k) ws_all.load(data[k], static_cast<Eigen::Index>(k));
  MlpParams grad = zeros_like(params);
  MlpParams m1 = zeros_like(params);
  MlpParams m2 = zeros_like(params);
  double b1t = 1.0;
  double b2t = 1.0;

  TrainReport report;
  report.loss_history.reserve(static_cast<std::size_t>(std::min(cfg.max_epochs, 100000)));
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < count; start += batch) {
      const std::size_t stop = std::min(count, start + batch);
      Workspace& ws = stop - start == batch || tail == 0 ? ws_full : ws_tail;
      for (std::size_t k = start; k < stop; ++k)
        ws.load(data[order[k]], static_cast<Eigen::Index>(k - start));
      set_zero(grad);
      run_forward(params, ws, sobolev);
      accumulate_gradient(params, cfg.gamma, ws, grad);
      b1t *= cfg.beta1;
      b2t *= cfg.beta2;
      const double step = cfg.learning_rate * std::sqrt(1.0 - b2t) / (1.0 - b1t);
      const double eps = cfg.adam_eps * std::sqrt(1.0 - b2t);
      for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto update = [&](auto& theta, auto& g, auto& m, auto& v) {
          m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
          v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
          theta.array() -= step * m.array() / (v.array().sqrt() + eps);
        };
        update(params.layers[l].W, grad.layers[l].W, m1.layers[l].W, m2.layers[l].W);
        update(params.layers[l].b, grad.layers[l].b, m1.layers[l].b, m2.layers[l].b);
      }
    }

    run_forward(params, ws_all, sobolev);
    const double loss = batch_loss(ws_all, cfg.gamma);
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "train: non-finite loss at epoch " << epoch << " (learning rate " << cfg.learning_rate
         << "); lower the learning rate or the regularization constant";
      throw NumericalError(os.str());
    }
    report.loss_history.push_back(loss);
    report.epochs_run = epoch;
    if (loss <= cfg.loss_target) {
      report.stop_reason = StopReason::TargetReached;
      break;
    }
  }
  report.final_params = std::move(params);
  return report;
}

Json params_to_json(const MlpParams& params) {
  const MlpArchitecture arch = params.architecture();
  Json j;
  j["architecture"] = {{"input_dim", arch.input_dim},
                       {"hidden", arch.hidden},
                       {"output_dim", arch.output_dim},
                       {"hidden_activation", "relu"},
                       {"output_activation", "affine"}};
  Json layers = Json::array();
  for (const auto& l : params.layers) {
    Json layer;
    layer["W"] = matrix_to_json(l.W);
    layer["b"] = vector_to_json(l.b);
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  return j;
}

MlpParams params_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("architecture") || !j.contains("layers"))
    throw ParseError("network: expected 'architecture' and 'layers'");
  MlpArchitecture arch;
  try {
    const Json& a = j["architecture"];
    arch.input_dim = a.at("input_dim").get<int>();
    arch.hidden = a.at("hidden").get<std::vector<int>>();
    arch.output_dim = a.at("output_dim").get<int>();
  } catch (const Json::exception& e) {
    throw ParseError(std::string("network: malformed architecture: ") + e.what());
  }
  arch.validate();
  MlpParams p = init_params(arch, 0);
  const Json& layers = j["layers"];
  if (!layers.is_array() || layers.size() != p.layers.size())
    throw ParseError("network: layer count does not match the architecture");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string name = "layers[" + std::to_string(l) + "]";
    if (!layers[l].contains("W") || !layers[l].contains("b"))
      throw ParseError("network: " + name + " needs 'W' and 'b'");
    Matrix W = matrix_from_json(layers[l]["W"], name + ".W");
    Vector b = vector_from_json(layers[l]["b"], name + ".b");
    if (W.rows() != p.layers[l].W.rows() || W.cols() != p.layers[l].W.cols() ||
        b.size() != p.layers[l].b.size())
      throw ParseError("network: " + name + " has the wrong shape");
    p.layers[l] = {std::move(W), std::move(b)};
  }
  return p;
}

}  // namespace mpcgrad
