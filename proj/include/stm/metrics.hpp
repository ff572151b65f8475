#pragma once

// Binary classification metrics, micro-averaged over every scored
// (sample, node) pair.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stm/error.hpp"

namespace stm {

struct Confusion {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

// A prediction is positive iff score >= threshold.
inline Confusion confusion(std::span<const double> scores, std::span<const std::uint8_t> labels, double threshold = 0.5) {
  if (scores.size() != labels.size()) throw Error("confusion: scores and labels differ in length");
  if (scores.empty()) throw Error("confusion: no scores");
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool pos = labels[i] != 0;
    if (pred && pos) ++c.tp;
    else if (pred) ++c.fp;
    else if (pos) ++c.fn;
    else ++c.tn;
  }
  return c;
}

// Mann-Whitney rank statistic with average ranks over ties.
inline double auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw Error("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::uint64_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    // Ranks i+1 .. j+1 share their average.
    const double avg = 0.5 * static_cast<double>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k)
      if (labels[idx[k]]) {
        rank_sum += avg;
        ++n_pos;
      }
    i = j + 1;
  }
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error("auc: undefined for single-class labels");
  const double np = static_cast<double>(n_pos);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

struct EvaluationReport {
  std::optional<double> auc;  // nullopt when labels are single-class
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double f1 = 0.0;
  double mcc = 0.0;
  Confusion confusion;
};

// Any metric whose denominator is zero is reported as 0.
inline EvaluationReport derived_metrics(const Confusion& c) {
  if (c.total() == 0) throw Error("derived_metrics: empty confusion matrix");
  const double tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const double fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  EvaluationReport r;
  r.confusion = c;
  r.accuracy = (tp + tn) / static_cast<double>(c.total());
  r.balanced_accuracy = (ratio(tp, tp + fn) + ratio(tn, tn + fp)) / 2.0;
  r.f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn);
  const double den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
  r.mcc = den > 0.0 ? (tp * tn - fp * fn) / std::sqrt(den) : 0.0;
  return r;
}

inline EvaluationReport evaluate_scores(std::span<const double> scores, std::span<const std::uint8_t> labels,
                                        double threshold = 0.5) {
  EvaluationReport r = derived_metrics(confusion(scores, labels, threshold));
  if (r.confusion.tp + r.confusion.fn > 0 && r.confusion.tn + r.confusion.fp > 0) r.auc = auc(scores, labels);
  return r;
}

inline nlohmann::ordered_json to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["auc"] = r.auc ? nlohmann::ordered_json(*r.auc) : nlohmann::ordered_json(nullptr);
  j["accuracy"] = r.accuracy;
  j["balanced_accuracy"] = r.balanced_accuracy;
  j["f1"] = r.f1;
  j["mcc"] = r.mcc;
  j["confusion"] = {{"tp", r.confusion.tp}, {"tn", r.confusion.tn}, {"fp", r.confusion.fp}, {"fn", r.confusion.fn}};
  return j;
}

inline EvaluationReport report_from_json(const nlohmann::json& j) {
  EvaluationReport r;
  if (!j.at("auc").is_null()) r.auc = j["auc"].get<double>();
  r.accuracy = j.at("accuracy").get<double>();
  r.balanced_accuracy = j.at("balanced_accuracy").get<double>();
  r.f1 = j.at("f1").get<double>();
  r.mcc = j.at("mcc").get<double>();
  const auto& c = j.at("confusion");
  r.confusion = {c.at("tp").get<std::uint64_t>(), c.at("tn").get<std::uint64_t>(), c.at("fp").get<std::uint64_t>(),
                 c.at("fn").get<std::uint64_t>()};
  return r;
}

}  // namespace stm
