#pragma once

// Oracles and small instances shared by the predictor and metrics suites.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "stm/metrics.hpp"
#include "stm/predictor.hpp"

namespace stm::testing {

// O(n^2) pairwise AUC with ties counted as one half.
inline double brute_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] && !y[j]) {
        den += 1.0;
        num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return num / den;
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c, double scale = 1.0) {
  Matrix m(r, c);
  std::normal_distribution<double> nd(0.0, scale);
  for (auto& v : m.data) v = nd(rng);
  return m;
}

// Random connected graph on n nodes: a path plus a few chords.
inline std::vector<GraphEdge> random_graph(std::mt19937_64& rng, std::size_t n) {
  std::vector<GraphEdge> e;
  for (std::size_t i = 0; i + 1 < n; ++i) e.push_back({i, i + 1, 1.0});
  std::uniform_int_distribution<std::size_t> u(0, n - 1);
  for (std::size_t k = 0; k < n / 2; ++k) {
    std::size_t a = u(rng), b = u(rng);
    if (a == b || (std::max(a, b) - std::min(a, b)) == 1) continue;
    if (a > b) std::swap(a, b);
    bool dup = false;
    for (const auto& x : e) dup |= x.u == a && x.v == b;
    if (!dup) e.push_back({a, b, 1.0});
  }
  return e;
}

inline Batch random_batch(std::mt19937_64& rng, std::size_t samples, std::size_t n, std::size_t f) {
  Batch b;
  std::bernoulli_distribution coin(0.3);
  for (std::size_t s = 0; s < samples; ++s) {
    b.x.push_back(random_matrix(rng, n, f));
    std::vector<std::uint8_t> y(n);
    for (auto& v : y) v = coin(rng);
    b.y.push_back(y);
  }
  return b;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // perturbation crossed a relu kink
};

// Central differences over every parameter. Perturbations that change the
// sign pattern of any hidden pre-activation are skipped, since the loss is
// not differentiable across them.
inline GradCheck finite_difference_check(const GCNModel& m, const NormalizedAdjacency& adj, const Batch& batch,
                                         double pos_weight, double eps = 1e-4) {
  const PropagatedBatch pb(adj, batch);
  const Gradients g = loss_and_gradients(m, adj, pb, pos_weight);
  auto signs = [&](const GCNModel& mm) {
    std::vector<bool> out;
    for (const auto& ax : pb.ax)
      for (double v : detail::forward_from_ax(mm, adj, ax).pre1.data) out.push_back(v > 0.0);
    return out;
  };
  const auto base = signs(m);
  GradCheck res;
  auto probe = [&](const std::function<double&(GCNModel&)>& ref, double analytic) {
    GCNModel plus = m, minus = m;
    ref(plus) += eps;
    ref(minus) -= eps;
    if (signs(plus) != base || signs(minus) != base) {
      ++res.skipped;
      return;
    }
    const double numeric =
        (loss_and_gradients(plus, adj, pb, pos_weight).loss - loss_and_gradients(minus, adj, pb, pos_weight).loss) / (2 * eps);
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(analytic - numeric) / scale);
    ++res.checked;
  };
  for (std::size_t k = 0; k < m.w1.data.size(); ++k) probe([k](GCNModel& x) -> double& { return x.w1.data[k]; }, g.w1.data[k]);
  for (std::size_t c = 0; c < m.hidden(); ++c) {
    probe([c](GCNModel& x) -> double& { return x.b1[c]; }, g.b1[c]);
    probe([c](GCNModel& x) -> double& { return x.w2[c]; }, g.w2[c]);
  }
  probe([](GCNModel& x) -> double& { return x.b2; }, g.b2);
  return res;
}

// Two isolated nodes, one input feature; the label is the sign of the input.
struct SeparableToy {
  NormalizedAdjacency adj{2, std::vector<GraphEdge>{}};
  Batch batch;
};

inline SeparableToy separable_toy(std::uint64_t seed, std::size_t samples = 20) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(0.5, 2.0);
  std::bernoulli_distribution coin(0.5);
  SeparableToy t;
  for (std::size_t s = 0; s < samples; ++s) {
    Matrix x(2, 1);
    std::vector<std::uint8_t> y(2);
    for (std::size_t i = 0; i < 2; ++i) {
      // Alternate signs across samples so both classes appear at each node.
      const bool pos = (s + i) % 2 == 0 ? true : coin(rng);
      x(i, 0) = pos ? mag(rng) : -mag(rng);
      y[i] = pos;
    }
    t.batch.x.push_back(x);
    t.batch.y.push_back(y);
  }
  return t;
}

}  // namespace stm::testing
