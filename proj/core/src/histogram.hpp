#pragma once

// Partial-volume joint histogram shared by the MI metric and refinement.
// Not installed.

#include <algorithm>
#include <cmath>
#include <vector>

namespace longreg::detail {

class JointHistogram {
 public:
  explicit JointHistogram(int bins)
      : bins_(bins), cells_(static_cast<std::size_t>(bins) * static_cast<std::size_t>(bins), 0.0) {}

  void clear() { std::fill(cells_.begin(), cells_.end(), 0.0); }

  /// a and b in [0, 1].
  void add(double a, double b) {
    const double top = static_cast<double>(bins_ - 1);
    const double pa = std::clamp(a, 0.0, 1.0) * top;
    const double pb = std::clamp(b, 0.0, 1.0) * top;
    const int ia = std::min(static_cast<int>(pa), bins_ - 2);
    const int ib = std::min(static_cast<int>(pb), bins_ - 2);
    const double fa = pa - ia;
    const double fb = pb - ib;
    double* row0 = &cells_[static_cast<std::size_t>(ia) * static_cast<std::size_t>(bins_)];
    double* row1 = row0 + bins_;
    row0[ib] += (1 - fa) * (1 - fb);
    row0[ib + 1] += (1 - fa) * fb;
    row1[ib] += fa * (1 - fb);
    row1[ib + 1] += fa * fb;
  }

  /// Mutual information in nats; 0 for an empty histogram.
  double mutual_information() const {
    const auto n = static_cast<std::size_t>(bins_);
    std::vector<double> pa(n, 0.0);
    std::vector<double> pb(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double c = cells_[i * n + j];
        pa[i] += c;
        pb[j] += c;
        total += c;
      }
    }
    if (!(total > 0.0)) return 0.0;
    auto plogp = [&](double c) { return c > 0.0 ? (c / total) * std::log(c / total) : 0.0; };
    double ha = 0.0;
    double hb = 0.0;
    double hab = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ha -= plogp(pa[i]);
      hb -= plogp(pb[i]);
      for (std::size_t j = 0; j < n; ++j) hab -= plogp(cells_[i * n + j]);
    }
    return ha + hb - hab;
  }

 private:
  int bins_;
  std::vector<double> cells_;
};

}  // namespace longreg::detail
