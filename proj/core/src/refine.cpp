#include "longreg/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "histogram.hpp"
#include "longreg/errors.hpp"
#include "sampling.hpp"

namespace longreg {

namespace {

using Params = std::array<double, 6>;

// Finite-difference steps: rad for rotation, mm for translation.
constexpr Params kGradStep{1e-3, 1e-3, 1e-3, 1e-2, 1e-2, 1e-2};

class Cost {
 public:
  Cost(const Volume& m, const Volume& f, const RefineConfig& cfg) : m_(m), f_(f), cfg_(cfg) {
    if (cfg_.mask && !same_geometry(cfg_.mask->geometry(), f.geometry())) {
      throw Error(ErrorCode::GeometryMismatch, "refinement mask must share the fixed geometry");
    }
    if (cfg_.metric.type == MetricKind::Type::MI) {
      std::tie(m_lo_, m_scale_) = range(m);
      std::tie(f_lo_, f_scale_) = range(f);
    }
  }

  double operator()(const RigidTransform& t) {
    ++evaluations;
    const Geometry& grid = f_.geometry();
    const Dims& n = grid.dims;
    const float* md = m_.data().data();
    const float* fd = f_.data().data();
    const std::int32_t* mask = cfg_.mask ? cfg_.mask->data().data() : nullptr;

    detail::VoxelMap map_m;
    detail::VoxelMap map_f;
    if (cfg_.use_halfway_space) {
      const RigidTransform half = sqrt_rigid(t);
      map_m = detail::voxel_map(m_.geometry(), half, grid);
      map_f = detail::voxel_map(grid, invert(half), grid);
    } else {
      map_m = detail::voxel_map(m_.geometry(), t, grid);
    }
    const Vec3 step_f = map_f.linear.col(0);

    // Visits (m value, f value) at every included grid voxel.
    auto visit = [&](auto&& fn) {
      detail::for_each_mapped(n, map_m, [&](std::int64_t idx, const Vec3& pm) {
        if (mask && mask[idx] == 0) return;
        const double vm = detail::border_at(md, m_.dims(), pm.x(), pm.y(), pm.z());
        double vf;
        if (cfg_.use_halfway_space) {
          const std::int64_t i = idx % n[0];
          const std::int64_t jk = idx / n[0];
          const Vec3 pf = map_f(0.0, static_cast<double>(jk % n[1]), static_cast<double>(jk / n[1])) +
                          static_cast<double>(i) * step_f;
          vf = detail::border_at(fd, n, pf.x(), pf.y(), pf.z());
        } else {
          vf = fd[idx];
        }
        fn(vm, vf);
      });
    };

    if (cfg_.metric.type == MetricKind::Type::MSE) {
      double sum = 0.0;
      std::int64_t count = 0;
      visit([&](double vm, double vf) {
        sum += (vm - vf) * (vm - vf);
        ++count;
      });
      if (count == 0) throw Error(ErrorCode::InvalidArgument, "refinement mask selects no voxels");
      return sum / static_cast<double>(count);
    }
    hist_.clear();
    visit([&](double vm, double vf) { hist_.add((vm - m_lo_) * m_scale_, (vf - f_lo_) * f_scale_); });
    return -hist_.mutual_information();
  }

  std::int64_t evaluations = 0;

 private:
  static std::pair<double, double> range(const Volume& v) {
    const auto [lo, hi] = std::minmax_element(v.data().begin(), v.data().end());
    const double a = *lo;
    const double b = *hi;
    return {a, b > a ? 1.0 / (b - a) : 0.0};
  }

  const Volume& m_;
  const Volume& f_;
  const RefineConfig& cfg_;
  double m_lo_ = 0.0, m_scale_ = 0.0, f_lo_ = 0.0, f_scale_ = 0.0;
  detail::JointHistogram hist_{cfg_.metric.bins};
};

}  // namespace

std::string MetricKind::name() const {
  return type == Type::MSE ? "mse" : "mi" + std::to_string(bins);
}

void RefineConfig::validate() const {
  if (iterations < 1) throw Error(ErrorCode::InvalidArgument, "refinement needs at least one iteration");
  for (double s : initial_step) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorCode::InvalidArgument, "refinement steps must be > 0");
  }
  if (metric.type == MetricKind::Type::MI && metric.bins < 8) {
    throw Error(ErrorCode::InvalidArgument, "mutual information needs at least 8 bins");
  }
  if (!(min_step > 0.0) || min_step >= 1.0) throw Error(ErrorCode::InvalidArgument, "min_step must be in (0, 1)");
}

double refine_cost(const Volume& m, const Volume& f, const RigidTransform& t, const RefineConfig& cfg) {
  cfg.validate();
  Cost cost(m, f, cfg);
  return cost(t);
}

RefineResult refine_rigid(const Volume& m, const Volume& f, const RigidTransform& t0, const RefineConfig& cfg) {
  cfg.validate();
  Cost cost(m, f, cfg);

  const Vec3 c = f.geometry().center();
  const RigidTransform to_center = RigidTransform::from_translation(c);
  const RigidTransform from_center = RigidTransform::from_translation(-c);
  const RigidTransform left = cfg.use_halfway_space ? sqrt_rigid(t0) : t0;
  const RigidTransform right = cfg.use_halfway_space ? compose(from_center, left) : from_center;
  const RigidTransform left_c = compose(left, to_center);
  auto transform_at = [&](const Params& x) {
    const RigidTransform d = exp_se3(Twist{Vec3(x[0], x[1], x[2]), Vec3(x[3], x[4], x[5])});
    return compose(left_c, compose(d, right));
  };
  auto eval = [&](const Params& x) { return cost(transform_at(x)); };

  Params x{};
  double best = eval(x);
  if (!std::isfinite(best)) throw Error(ErrorCode::DivergedStep, "refinement cost is not finite at the start");

  RefineResult result;
  result.initial_cost = best;
  result.trace.push_back({0, best, 0.0});

  for (int it = 1; it <= cfg.iterations; ++it) {
    Params g{};
    for (std::size_t i = 0; i < 6; ++i) {
      Params xp = x;
      Params xm = x;
      xp[i] += kGradStep[i];
      xm[i] -= kGradStep[i];
      g[i] = (eval(xp) - eval(xm)) / (2.0 * kGradStep[i]);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < 6; ++i) norm += (cfg.initial_step[i] * g[i]) * (cfg.initial_step[i] * g[i]);
    norm = std::sqrt(norm);
    if (!std::isfinite(norm)) {
      if (it == 1) throw Error(ErrorCode::DivergedStep, "refinement gradient is not finite");
      break;
    }
    if (norm == 0.0) {
      result.trace.push_back({it, best, 0.0});
      break;
    }
    Params d{};
    for (std::size_t i = 0; i < 6; ++i) d[i] = -cfg.initial_step[i] * cfg.initial_step[i] * g[i] / norm;

    double alpha = 1.0;
    bool moved = false;
    while (alpha >= cfg.min_step) {
      Params cand = x;
      for (std::size_t i = 0; i < 6; ++i) cand[i] += alpha * d[i];
      const double value = eval(cand);
      if (value < best) {
        x = cand;
        best = value;
        moved = true;
        break;
      }
      alpha *= 0.5;
    }
    result.trace.push_back({it, best, moved ? alpha : 0.0});
    if (!moved) break;
  }

  result.transform = transform_at(x);
  result.final_cost = best;
  result.evaluations = cost.evaluations;
  return result;
}

}  // namespace longreg
