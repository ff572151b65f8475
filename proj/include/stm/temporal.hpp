#pragma once

// Region x time-bin count matrices, sliding-window samples and the
// chronological train/val/test split.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "stm/csv.hpp"
#include "stm/error.hpp"
#include "stm/event_mapping.hpp"

namespace stm {

class CountMatrix {
 public:
  CountMatrix(std::size_t regions, std::size_t bins, std::int64_t t0, std::int64_t bin_width)
      : regions_(regions), bins_(bins), t0_(t0), bin_width_(bin_width), counts_(regions * bins, 0) {
    if (bins == 0) throw Error("count matrix: needs at least one time bin");
    if (bin_width <= 0) throw Error("count matrix: bin width must be positive");
  }

  std::size_t regions() const { return regions_; }
  std::size_t bins() const { return bins_; }
  std::int64_t t0() const { return t0_; }
  std::int64_t bin_width() const { return bin_width_; }

  std::uint32_t at(std::size_t r, std::size_t t) const { return counts_[r * bins_ + t]; }
  std::uint32_t& at(std::size_t r, std::size_t t) { return counts_[r * bins_ + t]; }

  std::uint64_t total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
  }
  std::uint64_t region_total(std::size_t r) const {
    std::uint64_t s = 0;
    for (std::size_t t = 0; t < bins_; ++t) s += at(r, t);
    return s;
  }

  friend bool operator==(const CountMatrix&, const CountMatrix&) = default;

 private:
  std::size_t regions_;
  std::size_t bins_;
  std::int64_t t0_;
  std::int64_t bin_width_;
  std::vector<std::uint32_t> counts_;
};

namespace detail {

inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

}  // namespace detail

inline CountMatrix bin_events(std::span<const AssignedEvent> assigned, std::size_t n_regions, std::int64_t bin_width) {
  if (bin_width <= 0) throw Error("bin_events: bin width must be positive");
  std::int64_t lo = std::numeric_limits<std::int64_t>::max();
  std::int64_t hi = std::numeric_limits<std::int64_t>::min();
  std::size_t inside = 0;
  for (const auto& a : assigned) {
    if (!a.inside()) continue;
    if (a.region_id >= n_regions) throw Error("bin_events: region id out of range");
    lo = std::min(lo, a.timestamp);
    hi = std::max(hi, a.timestamp);
    ++inside;
  }
  if (inside == 0) throw Error("bin_events: no events fall inside any region");
  const std::int64_t t0 = detail::floor_div(lo, bin_width) * bin_width;
  const auto bins = static_cast<std::size_t>((hi - t0) / bin_width + 1);
  CountMatrix cm(n_regions, bins, t0, bin_width);
  for (const auto& a : assigned)
    if (a.inside()) ++cm.at(a.region_id, static_cast<std::size_t>((a.timestamp - t0) / bin_width));
  return cm;
}

// Supervised window over a shared count matrix: input bins t..t+W-1 for
// every region, target = occurrence in bin t+W.
class WindowSample {
 public:
  WindowSample(std::shared_ptr<const CountMatrix> cm, std::size_t t, std::size_t window)
      : cm_(std::move(cm)), t_(t), window_(window) {}

  std::size_t t() const { return t_; }
  std::size_t window() const { return window_; }
  std::size_t regions() const { return cm_->regions(); }
  std::uint32_t input(std::size_t r, std::size_t k) const { return cm_->at(r, t_ + k); }
  std::uint8_t target(std::size_t r) const { return cm_->at(r, t_ + window_) > 0 ? 1 : 0; }
  // Last bin touched, i.e. the target bin.
  std::size_t last_bin() const { return t_ + window_; }
  const CountMatrix& matrix() const { return *cm_; }

 private:
  std::shared_ptr<const CountMatrix> cm_;
  std::size_t t_;
  std::size_t window_;
};

inline std::vector<WindowSample> make_windows(std::shared_ptr<const CountMatrix> cm, std::size_t window) {
  if (window < 1) throw Error("make_windows: window must be >= 1");
  if (window >= cm->bins())
    throw Error("make_windows: window " + std::to_string(window) + " must be smaller than the " +
                std::to_string(cm->bins()) + " available bins");
  std::vector<WindowSample> out;
  out.reserve(cm->bins() - window);
  for (std::size_t t = 0; t + window < cm->bins(); ++t) out.emplace_back(cm, t, window);
  return out;
}

inline std::vector<WindowSample> make_windows(const CountMatrix& cm, std::size_t window) {
  return make_windows(std::make_shared<const CountMatrix>(cm), window);
}

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct SplitDataset {
  std::vector<WindowSample> train, val, test;
  // Bin index boundaries: train bins < b1 <= val bins < b2 <= test bins.
  std::size_t b1 = 0, b2 = 0;
  std::size_t dropped = 0;
};

// Split by bin index at floor(train * T) and floor((train + val) * T); a
// sample is kept only if all its bins fall within one split.
inline SplitDataset chronological_split(const std::vector<WindowSample>& samples, SplitFractions f = {}) {
  if (f.train < 0.0 || f.val < 0.0 || f.test < 0.0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw Error("chronological_split: fractions must be non-negative and sum to 1");
  if (samples.size() < 3) throw Error("chronological_split: needs at least 3 samples");
  const std::size_t bins = samples.front().matrix().bins();
  const double tb = static_cast<double>(bins);
  SplitDataset out;
  out.b1 = static_cast<std::size_t>(std::floor(f.train * tb + 1e-9));
  out.b2 = static_cast<std::size_t>(std::floor((f.train + f.val) * tb + 1e-9));
  for (const auto& s : samples) {
    const std::size_t lo = s.t(), hi = s.last_bin();
    if (hi < out.b1) out.train.push_back(s);
    else if (lo >= out.b1 && hi < out.b2) out.val.push_back(s);
    else if (lo >= out.b2 && hi < bins) out.test.push_back(s);
    else ++out.dropped;
  }
  auto hint = [&](const char* which) {
    return Error(std::string("chronological_split: ") + which + " split is empty (bins " + std::to_string(bins) +
                 ", boundaries " + std::to_string(out.b1) + "/" + std::to_string(out.b2) +
                 "); use a smaller window or bin width");
  };
  if (out.train.empty()) throw hint("train");
  if (out.val.empty()) throw hint("validation");
  if (out.test.empty()) throw hint("test");
  return out;
}

// ---------------------------------------------------------------------------
// Files: counts CSV (row r = region r, column t = bin t, no header) plus a
// sidecar JSON {t0, bin_width, n_regions, T}.

inline std::string counts_csv(const CountMatrix& cm) {
  std::string out;
  for (std::size_t r = 0; r < cm.regions(); ++r) {
    for (std::size_t t = 0; t < cm.bins(); ++t) {
      if (t) out.push_back(',');
      out += std::to_string(cm.at(r, t));
    }
    out.push_back('\n');
  }
  return out;
}

inline nlohmann::ordered_json counts_sidecar(const CountMatrix& cm) {
  return {{"t0", cm.t0()}, {"bin_width", cm.bin_width()}, {"n_regions", cm.regions()}, {"T", cm.bins()}};
}

inline CountMatrix read_counts(std::string_view csv_bytes, const nlohmann::json& sidecar) {
  CountMatrix cm(sidecar.at("n_regions").get<std::size_t>(), sidecar.at("T").get<std::size_t>(),
                 sidecar.at("t0").get<std::int64_t>(), sidecar.at("bin_width").get<std::int64_t>());
  csv::Reader reader(csv_bytes);
  csv::Row row;
  std::size_t r = 0;
  while (reader.next(row)) {
    if (r >= cm.regions()) throw ParseError("counts csv: more rows than n_regions", reader.line());
    if (row.size() != cm.bins()) throw ParseError("counts csv: row width does not match T", reader.line());
    for (std::size_t t = 0; t < cm.bins(); ++t) {
      std::uint32_t v = 0;
      const auto& s = row[t];
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size()) throw ParseError("counts csv: invalid count", reader.line());
      cm.at(r, t) = v;
    }
    ++r;
  }
  if (r != cm.regions()) throw Error("counts csv: fewer rows than n_regions");
  return cm;
}

}  // namespace stm
