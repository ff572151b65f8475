#pragma once

// Two-layer graph convolutional classifier,
//   p = sigmoid(A . relu(A . X . W1 + b1) . W2 + b2),
// with A the self-loop symmetric-normalized adjacency. Gradients are
// written out by hand; training is full-batch gradient descent on a
// class-weighted binary cross-entropy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stm/error.hpp"
#include "stm/event_mapping.hpp"
#include "stm/graph.hpp"
#include "stm/metrics.hpp"
#include "stm/temporal.hpp"

namespace stm {

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  friend bool operator==(const Matrix&, const Matrix&) = default;
};

// D^-1/2 (A + I) D^-1/2 with D = rowsum(A + I). Stored densely; products
// run over the nonzeros in column order, which gives the same sums as the
// dense loop.
class NormalizedAdjacency {
 public:
  NormalizedAdjacency(std::size_t n, std::span<const GraphEdge> edges, bool binary = true) : n_(n), dense_(n, n) {
    for (std::size_t i = 0; i < n; ++i) dense_(i, i) = 1.0;
    for (const auto& e : edges) {
      if (e.u >= n || e.v >= n || e.u == e.v) throw Error("normalize_adjacency: invalid edge");
      const double w = binary ? 1.0 : e.weight;
      dense_(e.u, e.v) += w;
      dense_(e.v, e.u) += w;
    }
    std::vector<double> sqrt_deg(n), row;
    for (std::size_t i = 0; i < n; ++i) {
      row.clear();
      for (std::size_t j = 0; j < n; ++j)
        if (dense_(i, j) != 0.0) row.push_back(dense_(i, j));
      sqrt_deg[i] = std::sqrt(sorted_sum(row));
    }
    row_start_.assign(n + 1, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double& a = dense_(i, j);
        if (a == 0.0) continue;
        a = a / (sqrt_deg[i] * sqrt_deg[j]);
        col_.push_back(j);
        val_.push_back(a);
      }
      row_start_[i + 1] = col_.size();
    }
  }

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return dense_(i, j); }
  const Matrix& dense() const { return dense_; }

  // A . X for X with size() rows. Row terms are summed in sorted order so
  // the result does not depend on how nodes are numbered.
  Matrix multiply(const Matrix& x) const {
    if (x.rows != n_) throw Error("adjacency multiply: row count mismatch");
    Matrix out(n_, x.cols);
    std::vector<double> terms;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t c = 0; c < x.cols; ++c) {
        terms.clear();
        for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) terms.push_back(val_[k] * x(col_[k], c));
        out(i, c) = sorted_sum(terms);
      }
    return out;
  }

  std::vector<double> multiply(std::span<const double> v) const {
    if (v.size() != n_) throw Error("adjacency multiply: length mismatch");
    std::vector<double> out(n_, 0.0), terms;
    for (std::size_t i = 0; i < n_; ++i) {
      terms.clear();
      for (std::size_t k = row_start_[i]; k < row_start_[i + 1]; ++k) terms.push_back(val_[k] * v[col_[k]]);
      out[i] = sorted_sum(terms);
    }
    return out;
  }

  static double sorted_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += t;
    return s;
  }

 private:
  std::size_t n_;
  Matrix dense_;
  std::vector<std::size_t> row_start_;
  std::vector<std::size_t> col_;
  std::vector<double> val_;
};

inline NormalizedAdjacency normalize_adjacency(const RegionGraph& g, bool binary = true) {
  return NormalizedAdjacency(g.size(), g.edges, binary);
}

// Per-column affine standardization fitted on training rows.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  bool empty() const { return mean.empty(); }
  void apply(Matrix& x) const {
    if (empty()) return;
    if (x.cols != mean.size()) throw Error("standardizer: column count mismatch");
    for (std::size_t r = 0; r < x.rows; ++r)
      for (std::size_t c = 0; c < x.cols; ++c) x(r, c) = (x(r, c) - mean[c]) / scale[c];
  }
  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

struct GCNModel {
  Matrix w1;                // F x H
  std::vector<double> b1;   // H
  std::vector<double> w2;   // H
  double b2 = 0.0;
  Standardizer standardizer;
  std::size_t window = 0;   // input bins; 0 when built from raw features

  std::size_t inputs() const { return w1.rows; }
  std::size_t hidden() const { return w1.cols; }
  friend bool operator==(const GCNModel&, const GCNModel&) = default;
};

// Glorot-uniform weights from a seeded mt19937_64, zero biases.
inline GCNModel init_model(std::size_t inputs, std::size_t hidden, std::uint64_t seed) {
  if (inputs == 0 || hidden == 0) throw Error("init_model: layer sizes must be positive");
  std::mt19937_64 rng(seed);
  GCNModel m;
  m.w1 = Matrix(inputs, hidden);
  const double l1 = std::sqrt(6.0 / static_cast<double>(inputs + hidden));
  std::uniform_real_distribution<double> u1(-l1, l1);
  for (auto& w : m.w1.data) w = u1(rng);
  m.b1.assign(hidden, 0.0);
  m.w2.resize(hidden);
  const double l2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
  std::uniform_real_distribution<double> u2(-l2, l2);
  for (auto& w : m.w2) w = u2(rng);
  return m;
}

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

struct Activations {
  Matrix pre1;                // A X W1 + b1
  std::vector<double> logit;  // per node
};

// Forward pass given AX = A . X.
inline Activations forward_from_ax(const GCNModel& m, const NormalizedAdjacency& adj, const Matrix& ax) {
  const std::size_t n = ax.rows, f = ax.cols, h = m.hidden();
  Activations act;
  act.pre1 = Matrix(n, h);
  std::vector<double> s(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = &act.pre1.data[i * h];
    for (std::size_t c = 0; c < h; ++c) row[c] = m.b1[c];
    for (std::size_t k = 0; k < f; ++k) {
      const double a = ax(i, k);
      const double* w = &m.w1.data[k * h];
      for (std::size_t c = 0; c < h; ++c) row[c] += a * w[c];
    }
    double acc = 0.0;
    for (std::size_t c = 0; c < h; ++c) acc += std::max(row[c], 0.0) * m.w2[c];
    s[i] = acc;
  }
  act.logit = adj.multiply(s);
  for (auto& z : act.logit) z += m.b2;
  return act;
}

inline void check_shapes(const GCNModel& m, const NormalizedAdjacency& adj, const Matrix& x) {
  if (x.rows != adj.size()) throw Error("forward: input rows do not match node count");
  if (x.cols != m.inputs()) throw Error("forward: input width does not match model");
  if (m.b1.size() != m.hidden() || m.w2.size() != m.hidden()) throw Error("forward: inconsistent model shapes");
}

}  // namespace detail

// Node probabilities for an already-standardized input X (n x F).
inline std::vector<double> forward(const GCNModel& m, const NormalizedAdjacency& adj, const Matrix& x) {
  detail::check_shapes(m, adj, x);
  auto act = detail::forward_from_ax(m, adj, adj.multiply(x));
  for (auto& z : act.logit) z = detail::sigmoid(z);
  return act.logit;
}

// Standardized inputs with per-node labels, one entry per window sample.
struct Batch {
  std::vector<Matrix> x;
  std::vector<std::vector<std::uint8_t>> y;

  std::size_t size() const { return x.size(); }
};

struct Gradients {
  double loss = 0.0;
  Matrix w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
};

// Precomputed A . X for every sample of a batch.
struct PropagatedBatch {
  std::vector<Matrix> ax;
  const std::vector<std::vector<std::uint8_t>>* y = nullptr;

  PropagatedBatch(const NormalizedAdjacency& adj, const Batch& b) : y(&b.y) {
    ax.reserve(b.size());
    for (const auto& x : b.x) ax.push_back(adj.multiply(x));
  }
};

// Mean over (sample, node) of w * BCE, w = pos_weight for positives and 1
// otherwise, together with its exact gradient.
inline Gradients loss_and_gradients(const GCNModel& m, const NormalizedAdjacency& adj, const PropagatedBatch& batch,
                                    double pos_weight) {
  const std::size_t n = adj.size(), h = m.hidden(), f = m.inputs();
  Gradients g;
  g.w1 = Matrix(f, h);
  g.b1.assign(h, 0.0);
  g.w2.assign(h, 0.0);
  const double denom = static_cast<double>(batch.ax.size() * n);
  if (denom == 0.0) throw Error("loss: empty batch");
  std::vector<double> dz(n);
  Matrix dpre(n, h);
  for (std::size_t s = 0; s < batch.ax.size(); ++s) {
    const Matrix& ax = batch.ax[s];
    const auto& y = (*batch.y)[s];
    const auto act = detail::forward_from_ax(m, adj, ax);
    for (std::size_t i = 0; i < n; ++i) {
      const double z = act.logit[i];
      const bool pos = y[i] != 0;
      const double w = pos ? pos_weight : 1.0;
      g.loss += w * (pos ? detail::softplus(-z) : detail::softplus(z));
      dz[i] = w * (detail::sigmoid(z) - (pos ? 1.0 : 0.0)) / denom;
      g.b2 += dz[i];
    }
    // A is symmetric, so A^T dz = A dz.
    const std::vector<double> u = adj.multiply(dz);
    for (std::size_t i = 0; i < n; ++i) {
      const double* pre = &act.pre1.data[i * h];
      double* dp = &dpre.data[i * h];
      for (std::size_t c = 0; c < h; ++c) {
        const bool on = pre[c] > 0.0;
        if (on) g.w2[c] += pre[c] * u[i];
        dp[c] = on ? u[i] * m.w2[c] : 0.0;
        g.b1[c] += dp[c];
      }
      for (std::size_t k = 0; k < f; ++k) {
        const double a = ax(i, k);
        double* gw = &g.w1.data[k * h];
        for (std::size_t c = 0; c < h; ++c) gw[c] += a * dp[c];
      }
    }
  }
  g.loss /= denom;
  return g;
}

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 200;
  std::size_t hidden = 16;
  std::uint64_t seed = 0;
  // nullopt: n_neg / n_pos over the training labels.
  std::optional<double> pos_weight;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  std::optional<double> val_auc;
};

struct TrainResult {
  GCNModel model;       // best-on-validation parameters
  GCNModel final_model; // parameters after the last update
  std::vector<EpochRecord> trace;
  std::size_t best_epoch = 0;
  double pos_weight = 1.0;
};

inline double auto_pos_weight(const Batch& b) {
  std::uint64_t pos = 0, total = 0;
  for (const auto& y : b.y)
    for (auto v : y) {
      pos += v != 0;
      ++total;
    }
  if (pos == 0 || pos == total) return 1.0;
  return static_cast<double>(total - pos) / static_cast<double>(pos);
}

namespace detail {

inline void flatten_scores(const GCNModel& m, const NormalizedAdjacency& adj, const PropagatedBatch& b,
                           std::vector<double>& scores, std::vector<std::uint8_t>& labels) {
  scores.clear();
  labels.clear();
  for (std::size_t s = 0; s < b.ax.size(); ++s) {
    const auto act = forward_from_ax(m, adj, b.ax[s]);
    for (std::size_t i = 0; i < act.logit.size(); ++i) {
      scores.push_back(sigmoid(act.logit[i]));
      labels.push_back((*b.y)[s][i]);
    }
  }
}

}  // namespace detail

// Full-batch gradient descent from `model`. Each trace row holds the
// training loss and validation AUC of the parameters at the start of that
// epoch; the returned `model` is the snapshot with the best validation AUC
// (or lowest validation loss while AUC is undefined), earliest on ties.
inline TrainResult train(GCNModel model, const NormalizedAdjacency& adj, const Batch& train_set, const Batch& val_set,
                         const TrainConfig& cfg,
                         const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (!(cfg.learning_rate > 0.0)) throw Error("train: learning rate must be positive");
  if (cfg.epochs < 1) throw Error("train: epochs must be >= 1");
  if (train_set.size() == 0) throw Error("train: empty training split");
  const PropagatedBatch tr(adj, train_set);
  const PropagatedBatch va(adj, val_set);
  TrainResult res;
  res.pos_weight = cfg.pos_weight ? *cfg.pos_weight : auto_pos_weight(train_set);

  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  // (has_auc, score): any defined AUC beats an undefined one.
  std::pair<bool, double> best{false, -std::numeric_limits<double>::infinity()};
  auto consider = [&](const GCNModel& m, std::size_t epoch) -> std::optional<double> {
    if (va.ax.empty()) {
      // Without validation data the latest parameters win.
      res.model = m;
      res.best_epoch = epoch;
      return std::nullopt;
    }
    detail::flatten_scores(m, adj, va, scores, labels);
    const auto rep = evaluate_scores(scores, labels);
    std::pair<bool, double> key;
    if (rep.auc) key = {true, *rep.auc};
    else key = {false, -loss_and_gradients(m, adj, va, res.pos_weight).loss};
    if (key > best) {
      best = key;
      res.model = m;
      res.best_epoch = epoch;
    }
    return rep.auc;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Gradients g = loss_and_gradients(model, adj, tr, res.pos_weight);
    if (!std::isfinite(g.loss)) throw Error("train: loss diverged (non-finite) at epoch " + std::to_string(epoch));
    EpochRecord rec{epoch, g.loss, consider(model, epoch)};
    res.trace.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const double lr = cfg.learning_rate;
    for (std::size_t k = 0; k < model.w1.data.size(); ++k) model.w1.data[k] -= lr * g.w1.data[k];
    for (std::size_t c = 0; c < model.hidden(); ++c) {
      model.b1[c] -= lr * g.b1[c];
      model.w2[c] -= lr * g.w2[c];
    }
    model.b2 -= lr * g.b2;
  }
  consider(model, cfg.epochs);
  res.final_model = model;
  return res;
}

// ---------------------------------------------------------------------------
// Window samples -> standardized feature batches.

// X[r] = (counts of the W input bins, static features of r).
inline Matrix raw_features(const WindowSample& s, const UrbanFeatures& stat) {
  const std::size_t n = s.regions(), w = s.window(), k = stat.empty() ? 0 : stat.cols();
  if (k && stat.rows != n) throw Error("features: static feature rows do not match node count");
  Matrix x(n, w + k);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t t = 0; t < w; ++t) x(r, t) = static_cast<double>(s.input(r, t));
    for (std::size_t c = 0; c < k; ++c) x(r, w + c) = stat.at(r, c);
  }
  return x;
}

// Column statistics over every (training sample, node) row. Zero-variance
// columns get scale 1.
inline Standardizer fit_standardizer(const std::vector<WindowSample>& train, const UrbanFeatures& stat) {
  if (train.empty()) throw Error("standardizer: empty training split");
  Standardizer st;
  std::vector<double> sum, sq;
  double count = 0.0;
  for (const auto& s : train) {
    const Matrix x = raw_features(s, stat);
    if (sum.empty()) {
      sum.assign(x.cols, 0.0);
      sq.assign(x.cols, 0.0);
    }
    for (std::size_t r = 0; r < x.rows; ++r)
      for (std::size_t c = 0; c < x.cols; ++c) sum[c] += x(r, c);
    count += static_cast<double>(x.rows);
  }
  st.mean.resize(sum.size());
  for (std::size_t c = 0; c < sum.size(); ++c) st.mean[c] = sum[c] / count;
  for (const auto& s : train) {
    const Matrix x = raw_features(s, stat);
    for (std::size_t r = 0; r < x.rows; ++r)
      for (std::size_t c = 0; c < x.cols; ++c) {
        const double d = x(r, c) - st.mean[c];
        sq[c] += d * d;
      }
  }
  st.scale.resize(sum.size());
  for (std::size_t c = 0; c < sum.size(); ++c) {
    const double sd = std::sqrt(sq[c] / count);
    st.scale[c] = sd > 1e-12 ? sd : 1.0;
  }
  return st;
}

inline Batch make_batch(const std::vector<WindowSample>& samples, const UrbanFeatures& stat, const Standardizer& st) {
  Batch b;
  b.x.reserve(samples.size());
  b.y.reserve(samples.size());
  for (const auto& s : samples) {
    Matrix x = raw_features(s, stat);
    st.apply(x);
    b.x.push_back(std::move(x));
    std::vector<std::uint8_t> y(s.regions());
    for (std::size_t r = 0; r < y.size(); ++r) y[r] = s.target(r);
    b.y.push_back(std::move(y));
  }
  return b;
}

// Fits the standardizer on the training split, initializes from cfg.seed
// and trains.
inline TrainResult train(const NormalizedAdjacency& adj, const SplitDataset& data, const UrbanFeatures& stat,
                         const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch = {}) {
  if (data.train.empty()) throw Error("train: empty training split");
  const Standardizer st = fit_standardizer(data.train, stat);
  const std::size_t window = data.train.front().window();
  GCNModel m = init_model(window + (stat.empty() ? 0 : stat.cols()), cfg.hidden, cfg.seed);
  m.standardizer = st;
  m.window = window;
  return train(std::move(m), adj, make_batch(data.train, stat, st), make_batch(data.val, stat, st), cfg, on_epoch);
}

inline EvaluationReport evaluate(const GCNModel& m, const NormalizedAdjacency& adj, const Batch& b) {
  if (b.size() == 0) throw Error("evaluate: empty split");
  for (const auto& x : b.x) detail::check_shapes(m, adj, x);
  const PropagatedBatch pb(adj, b);
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  detail::flatten_scores(m, adj, pb, scores, labels);
  return evaluate_scores(scores, labels);
}

inline EvaluationReport evaluate(const GCNModel& m, const NormalizedAdjacency& adj,
                                 const std::vector<WindowSample>& samples, const UrbanFeatures& stat) {
  if (samples.empty()) throw Error("evaluate: empty split");
  return evaluate(m, adj, make_batch(samples, stat, m.standardizer));
}

// ---------------------------------------------------------------------------
// Checkpoint and trace files.

inline nlohmann::ordered_json checkpoint_json(const GCNModel& m, const TrainConfig& cfg, double pos_weight) {
  nlohmann::ordered_json j;
  j["shapes"] = {{"inputs", m.inputs()}, {"hidden", m.hidden()}, {"window", m.window}};
  j["parameters"] = {{"w1", m.w1.data}, {"b1", m.b1}, {"w2", m.w2}, {"b2", m.b2}};
  j["standardizer"] = {{"mean", m.standardizer.mean}, {"scale", m.standardizer.scale}};
  j["config"] = {{"learning_rate", cfg.learning_rate},
                 {"epochs", cfg.epochs},
                 {"hidden", cfg.hidden},
                 {"pos_weight", pos_weight}};
  j["seed"] = cfg.seed;
  return j;
}

inline GCNModel model_from_checkpoint(const nlohmann::json& j) {
  try {
    GCNModel m;
    const auto& sh = j.at("shapes");
    const std::size_t f = sh.at("inputs").get<std::size_t>(), h = sh.at("hidden").get<std::size_t>();
    m.window = sh.at("window").get<std::size_t>();
    const auto& p = j.at("parameters");
    m.w1 = Matrix(f, h);
    m.w1.data = p.at("w1").get<std::vector<double>>();
    m.b1 = p.at("b1").get<std::vector<double>>();
    m.w2 = p.at("w2").get<std::vector<double>>();
    m.b2 = p.at("b2").get<double>();
    if (m.w1.data.size() != f * h || m.b1.size() != h || m.w2.size() != h)
      throw Error("checkpoint: parameter sizes do not match shapes");
    m.standardizer.mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    m.standardizer.scale = j.at("standardizer").at("scale").get<std::vector<double>>();
    for (double v : m.w1.data)
      if (!std::isfinite(v)) throw Error("checkpoint: non-finite parameter");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string loss_trace_csv(const std::vector<EpochRecord>& trace) {
  std::string out = "epoch,train_loss,val_auc\n";
  for (const auto& r : trace) {
    out += std::to_string(r.epoch) + "," + format_double(r.train_loss) + ",";
    if (r.val_auc) out += format_double(*r.val_auc);
    out += "\n";
  }
  return out;
}

}  // namespace stm
