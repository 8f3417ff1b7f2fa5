#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ratelab/core.hpp"
#include "ratelab/pipeline.hpp"

namespace ratelab {

struct RdPoint {
  double rate = 0.0;     // average P-frame bpp
  double quality = 0.0;  // dB
};

// Average relative bitrate error, in percent.
inline double delta_r(double actual_avg, double target) {
  if (!(target > 0.0)) throw std::invalid_argument("delta_r: target must be > 0");
  return std::abs(actual_avg - target) / target * 100.0;
}

enum class BdFitMethod { cubic_poly, pchip };

namespace detail {

inline void validate_curve(const std::vector<RdPoint>& curve, const char* name) {
  if (curve.size() < 4) {
    throw std::invalid_argument(std::string("bd_rate: ") + name +
                                " curve needs at least 4 points");
  }
  for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
    if (!(curve[i].rate > 0.0)) {
      throw std::invalid_argument(std::string("bd_rate: ") + name + " curve has rate <= 0");
    }
    if (!(curve[i].rate < curve[i + 1].rate)) {
      throw std::invalid_argument(std::string("bd_rate: ") + name +
                                  " curve must be strictly increasing in rate");
    }
    if (!(curve[i].quality < curve[i + 1].quality)) {
      throw std::invalid_argument(std::string("bd_rate: ") + name +
                                  " curve must be strictly increasing in quality");
    }
  }
  if (!(curve.back().rate > 0.0)) {
    throw std::invalid_argument(std::string("bd_rate: ") + name + " curve has rate <= 0");
  }
}

// Least-squares cubic fit of y(x); x is centered and scaled first.
class CubicFit {
 public:
  CubicFit(const std::vector<double>& x, const std::vector<double>& y) {
    x0_ = (x.front() + x.back()) / 2.0;
    xs_ = (x.back() - x.front()) / 2.0;
    if (xs_ <= 0.0) xs_ = 1.0;

    std::array<std::array<double, 4>, 4> ata{};
    std::array<double, 4> aty{};
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double u = (x[i] - x0_) / xs_;
      std::array<double, 4> row{1.0, u, u * u, u * u * u};
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) ata[r][c] += row[r] * row[c];
        aty[r] += row[r] * y[i];
      }
    }
    // Gaussian elimination with partial pivoting on the 4x4 system.
    std::array<std::array<double, 5>, 4> m{};
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) m[r][c] = ata[r][c];
      m[r][4] = aty[r];
    }
    for (int col = 0; col < 4; ++col) {
      int pivot = col;
      for (int r = col + 1; r < 4; ++r) {
        if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
      }
      std::swap(m[col], m[pivot]);
      if (std::abs(m[col][col]) < 1e-14) {
        throw std::runtime_error("bd_rate: singular polynomial fit");
      }
      for (int r = col + 1; r < 4; ++r) {
        const double f = m[r][col] / m[col][col];
        for (int c = col; c < 5; ++c) m[r][c] -= f * m[col][c];
      }
    }
    for (int r = 3; r >= 0; --r) {
      double acc = m[r][4];
      for (int c = r + 1; c < 4; ++c) acc -= m[r][c] * coef_[c];
      coef_[r] = acc / m[r][r];
    }
  }

  double operator()(double x) const {
    const double u = (x - x0_) / xs_;
    return coef_[0] + u * (coef_[1] + u * (coef_[2] + u * coef_[3]));
  }

 private:
  double x0_ = 0.0, xs_ = 1.0;
  std::array<double, 4> coef_{};
};

// Piecewise cubic Hermite with Fritsch-Carlson slopes; clamps queries to
// the data range.
class PchipFit {
 public:
  PchipFit(std::vector<double> x, std::vector<double> y)
      : x_(std::move(x)), y_(std::move(y)), d_(x_.size(), 0.0) {
    const std::size_t n = x_.size();
    std::vector<double> h(n - 1), s(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      s[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    d_[0] = s[0];
    d_[n - 1] = s[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
      if (s[i - 1] * s[i] <= 0.0) {
        d_[i] = 0.0;
      } else {
        const double w1 = 2.0 * h[i] + h[i - 1];
        const double w2 = h[i] + 2.0 * h[i - 1];
        d_[i] = (w1 + w2) / (w1 / s[i - 1] + w2 / s[i]);
      }
    }
  }

  double operator()(double x) const {
    const std::size_t n = x_.size();
    if (x <= x_.front()) return y_.front();
    if (x >= x_.back()) return y_.back();
    std::size_t k = 0;
    while (k + 2 < n && x_[k + 1] < x) ++k;
    const double h = x_[k + 1] - x_[k];
    const double t = (x - x_[k]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return y_[k] * (2 * t3 - 3 * t2 + 1) + h * d_[k] * (t3 - 2 * t2 + t) +
           y_[k + 1] * (-2 * t3 + 3 * t2) + h * d_[k + 1] * (t3 - t2);
  }

 private:
  std::vector<double> x_, y_, d_;
};

}  // namespace detail

// Bjontegaard delta rate between two RD curves: fits log-rate as a
// function of quality, averages the difference over the overlapping
// quality interval, and converts back to a percentage.
inline double bd_rate(const std::vector<RdPoint>& anchor, const std::vector<RdPoint>& test,
                      BdFitMethod method = BdFitMethod::cubic_poly,
                      std::size_t samples = 1000) {
  detail::validate_curve(anchor, "anchor");
  detail::validate_curve(test, "test");

  const double lo = std::max(anchor.front().quality, test.front().quality);
  const double hi = std::min(anchor.back().quality, test.back().quality);
  if (!(lo < hi)) {
    throw std::invalid_argument("bd_rate: curves have no overlapping quality range");
  }

  auto extract = [](const std::vector<RdPoint>& c, std::vector<double>& q,
                    std::vector<double>& lr) {
    for (const auto& p : c) {
      q.push_back(p.quality);
      lr.push_back(std::log(p.rate));
    }
  };
  std::vector<double> qa, la, qt, lt;
  extract(anchor, qa, la);
  extract(test, qt, lt);

  auto integrate = [&](auto&& fa, auto&& ft) {
    double acc = 0.0;
    const double step = (hi - lo) / static_cast<double>(samples);
    for (std::size_t i = 0; i <= samples; ++i) {
      const double x = lo + step * static_cast<double>(i);
      const double diff = ft(x) - fa(x);
      acc += (i == 0 || i == samples) ? 0.5 * diff : diff;
    }
    return acc * step / (hi - lo);
  };

  double mean_diff = 0.0;
  if (method == BdFitMethod::cubic_poly) {
    detail::CubicFit fa(qa, la), ft(qt, lt);
    mean_diff = integrate(fa, ft);
  } else {
    detail::PchipFit fa(qa, la), ft(qt, lt);
    mean_diff = integrate(fa, ft);
  }
  return (std::exp(mean_diff) - 1.0) * 100.0;
}

struct MinigopAlignment {
  long index = 0;
  double budget = 0.0;
  double spent = 0.0;
  double ratio = 0.0;  // spent / budget
};

struct AlignmentReport {
  std::vector<MinigopAlignment> minigops;
  double mean_abs_deviation = 0.0;  // mean |spent - budget| / budget
  double max_ratio_deviation = 0.0;  // max |ratio - 1|
};

// Groups one run's P-frames by mini-GOP and compares expenditure with the
// allocated budget. Mini-GOPs with nonpositive budgets (possible after a
// deep deficit) are listed but excluded from the ratio aggregates.
inline AlignmentReport alignment_report(const std::vector<FrameRecord>& records) {
  std::map<long, MinigopAlignment> groups;
  for (const auto& r : records) {
    if (r.kind != 'P') continue;
    auto& g = groups[r.minigop];
    g.index = r.minigop;
    g.budget = r.minigop_budget;
    g.spent += r.bpp_total;
  }

  AlignmentReport report;
  double dev_sum = 0.0;
  std::size_t dev_count = 0;
  for (auto& [idx, g] : groups) {
    if (g.budget > kEps) {
      g.ratio = g.spent / g.budget;
      dev_sum += std::abs(g.spent - g.budget) / g.budget;
      ++dev_count;
      report.max_ratio_deviation =
          std::max(report.max_ratio_deviation, std::abs(g.ratio - 1.0));
    }
    report.minigops.push_back(g);
  }
  report.mean_abs_deviation =
      dev_count == 0 ? 0.0 : dev_sum / static_cast<double>(dev_count);
  return report;
}

}  // namespace ratelab
