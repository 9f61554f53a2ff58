#include "longreg/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>

#include "longreg/errors.hpp"
#include "longreg/filters.hpp"

namespace longreg {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::InvalidArgument, "synth config: " + what);
}

double parse_double(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw Error(ErrorCode::InvalidArgument, "synth config: " + key + " expects a number, got '" + text + "'");
  }
  return v;
}

std::int64_t parse_int(const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw Error(ErrorCode::InvalidArgument, "synth config: " + key + " expects an integer, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw Error(ErrorCode::InvalidArgument, "synth config: " + key + " expects an unsigned integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "off" || text == "no") return false;
  throw Error(ErrorCode::InvalidArgument, "synth config: " + key + " expects a boolean, got '" + text + "'");
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, ptr};
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Axis-aligned grid with `spacing_mm` that covers the world bounding box of
// `g`, sharing its centre.
Geometry coarse_cover(const Geometry& g, double spacing_mm) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int c = 0; c < 8; ++c) {
    const Vec3 ijk((c & 1) ? static_cast<double>(g.dims[0] - 1) : 0.0,
                   (c & 2) ? static_cast<double>(g.dims[1] - 1) : 0.0,
                   (c & 4) ? static_cast<double>(g.dims[2] - 1) : 0.0);
    const Vec3 w = g.to_world(ijk);
    lo = lo.cwiseMin(w);
    hi = hi.cwiseMax(w);
  }
  Dims dims{};
  for (int a = 0; a < 3; ++a) {
    dims[static_cast<std::size_t>(a)] =
        std::max<std::int64_t>(2, static_cast<std::int64_t>(std::ceil((hi[a] - lo[a]) / spacing_mm)) + 1);
  }
  return Geometry::centered(dims, spacing_mm, g.center());
}

// Clamp-to-border trilinear lookup in x-fastest data.
double clamped_linear(const std::vector<double>& data, const Dims& n, const Vec3& ijk) {
  double w[3];
  std::int64_t lo[3];
  std::int64_t hi[3];
  for (int a = 0; a < 3; ++a) {
    const auto na = static_cast<double>(n[static_cast<std::size_t>(a)]);
    const double c = std::clamp(ijk[a], 0.0, na - 1.0);
    const double f = std::min(std::floor(c), std::max(na - 2.0, 0.0));
    lo[a] = static_cast<std::int64_t>(f);
    hi[a] = std::min<std::int64_t>(lo[a] + 1, n[static_cast<std::size_t>(a)] - 1);
    w[a] = c - f;
  }
  auto at = [&](std::int64_t i, std::int64_t j, std::int64_t k) {
    return data[static_cast<std::size_t>(i + n[0] * (j + n[1] * k))];
  };
  const double c00 = at(lo[0], lo[1], lo[2]) * (1 - w[0]) + at(hi[0], lo[1], lo[2]) * w[0];
  const double c10 = at(lo[0], hi[1], lo[2]) * (1 - w[0]) + at(hi[0], hi[1], lo[2]) * w[0];
  const double c01 = at(lo[0], lo[1], hi[2]) * (1 - w[0]) + at(hi[0], lo[1], hi[2]) * w[0];
  const double c11 = at(lo[0], hi[1], hi[2]) * (1 - w[0]) + at(hi[0], hi[1], hi[2]) * w[0];
  const double c0 = c00 * (1 - w[1]) + c10 * w[1];
  const double c1 = c01 * (1 - w[1]) + c11 * w[1];
  return c0 * (1 - w[2]) + c1 * w[2];
}

// Map from target voxel indices to coarse voxel coordinates.
Mat4 target_to_coarse(const Geometry& coarse, const Geometry& target) {
  return coarse.world_to_voxel() * target.voxel_to_world;
}

VelocityField scaled(const VelocityField& v, double s) {
  VelocityField out(v.geometry());
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(v.vectors().size()); ++i) out[i] = v[i] * s;
  return out;
}

bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

DisplacementField resample_field(const DisplacementField& u, const Geometry& target) {
  DisplacementField out(target);
  std::int64_t idx = 0;
  for (std::int64_t k = 0; k < target.dims[2]; ++k) {
    for (std::int64_t j = 0; j < target.dims[1]; ++j) {
      for (std::int64_t i = 0; i < target.dims[0]; ++i, ++idx) {
        out[idx] = u.sample(target.to_world(Vec3(static_cast<double>(i), static_cast<double>(j),
                                                 static_cast<double>(k))));
      }
    }
  }
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  require(std::isfinite(max_rotation_deg) && max_rotation_deg >= 0.0 && max_rotation_deg < 180.0,
          "max_rotation_deg must be in [0, 180)");
  require(std::isfinite(max_translation_mm) && max_translation_mm >= 0.0, "max_translation_mm must be >= 0");
  require(std::isfinite(deformation_strength) && deformation_strength >= 0.0,
          "deformation_strength must be >= 0");
  require(std::isfinite(smoothness_level) && smoothness_level >= 0.0, "smoothness_level must be >= 0");
  require(intensity_range[0] >= 0.0 && intensity_range[1] <= 1.0 && intensity_range[0] < intensity_range[1],
          "intensity_range must satisfy 0 <= low < high <= 1");
  require(std::isfinite(bias_field_strength) && bias_field_strength >= 0.0, "bias_field_strength must be >= 0");
  require(std::isfinite(noise_sigma_max) && noise_sigma_max >= 0.0, "noise_sigma_max must be >= 0");
  require(std::isfinite(gamma_sigma) && gamma_sigma >= 0.0, "gamma_sigma must be >= 0");
  require(is_power_of_two(downsample_factor), "downsample_factor must be a power of two");
  require(std::isfinite(svf_spacing_mm) && svf_spacing_mm > 0.0, "svf_spacing_mm must be > 0");
  require(integration_steps >= 1 && integration_steps <= 30, "integration_steps must be in [1, 30]");
  require(std::isfinite(bias_spacing_mm) && bias_spacing_mm > 0.0, "bias_spacing_mm must be > 0");
}

void SynthConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "max_rotation_deg") {
    max_rotation_deg = parse_double(key, value);
  } else if (key == "max_translation_mm") {
    max_translation_mm = parse_double(key, value);
  } else if (key == "deformation_strength") {
    deformation_strength = parse_double(key, value);
  } else if (key == "smoothness_level") {
    smoothness_level = parse_double(key, value);
  } else if (key == "intensity_low") {
    intensity_range[0] = parse_double(key, value);
  } else if (key == "intensity_high") {
    intensity_range[1] = parse_double(key, value);
  } else if (key == "intensity_range") {
    const auto comma = value.find(',');
    if (comma == std::string::npos) {
      throw Error(ErrorCode::InvalidArgument, "synth config: intensity_range expects 'low,high'");
    }
    intensity_range[0] = parse_double(key, trim(value.substr(0, comma)));
    intensity_range[1] = parse_double(key, trim(value.substr(comma + 1)));
  } else if (key == "bias_field_strength") {
    bias_field_strength = parse_double(key, value);
  } else if (key == "noise_sigma_max") {
    noise_sigma_max = parse_double(key, value);
  } else if (key == "gamma_sigma") {
    gamma_sigma = parse_double(key, value);
  } else if (key == "downsample_factor") {
    downsample_factor = static_cast<int>(parse_int(key, value));
  } else if (key == "seed") {
    seed = parse_uint(key, value);
  } else if (key == "svf_spacing_mm") {
    svf_spacing_mm = parse_double(key, value);
  } else if (key == "integration_steps") {
    integration_steps = static_cast<int>(parse_int(key, value));
  } else if (key == "bias_spacing_mm") {
    bias_spacing_mm = parse_double(key, value);
  } else if (key == "same_contrast") {
    same_contrast = parse_bool(key, value);
  } else {
    throw Error(ErrorCode::InvalidArgument, "synth config: unknown key '" + key + "'");
  }
}

void SynthConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open synth config " + path.string());
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::MalformedFile, path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

std::map<std::string, std::string> SynthConfig::entries() const {
  return {
      {"max_rotation_deg", format_double(max_rotation_deg)},
      {"max_translation_mm", format_double(max_translation_mm)},
      {"deformation_strength", format_double(deformation_strength)},
      {"smoothness_level", format_double(smoothness_level)},
      {"intensity_low", format_double(intensity_range[0])},
      {"intensity_high", format_double(intensity_range[1])},
      {"bias_field_strength", format_double(bias_field_strength)},
      {"noise_sigma_max", format_double(noise_sigma_max)},
      {"gamma_sigma", format_double(gamma_sigma)},
      {"downsample_factor", std::to_string(downsample_factor)},
      {"seed", std::to_string(seed)},
      {"svf_spacing_mm", format_double(svf_spacing_mm)},
      {"integration_steps", std::to_string(integration_steps)},
      {"bias_spacing_mm", format_double(bias_spacing_mm)},
      {"same_contrast", same_contrast ? "true" : "false"},
  };
}

RigidTransform sample_rigid(const SynthConfig& cfg, Rng& rng) {
  const Vec3 axis = rng.unit_vector();
  const double angle = rng.uniform(0.0, cfg.max_rotation_deg) * std::numbers::pi / 180.0;
  Vec3 t;
  for (int a = 0; a < 3; ++a) t[a] = rng.uniform(-cfg.max_translation_mm, cfg.max_translation_mm);
  const RigidTransform r = RigidTransform::from_axis_angle(axis, angle);
  return {r.rotation(), t};
}

VelocityField sample_svf(const Geometry& geometry, double strength, double smoothness, Rng& rng,
                         double coarse_spacing_mm, int steps) {
  if (!(strength >= 0.0) || !(smoothness >= 0.0) || !std::isfinite(strength) || !std::isfinite(smoothness)) {
    throw Error(ErrorCode::InvalidArgument, "sample_svf needs finite strength >= 0 and smoothness >= 0");
  }
  VelocityField v(geometry);
  if (strength == 0.0) return v;

  const Geometry coarse = coarse_cover(geometry, coarse_spacing_mm);
  const auto nc = static_cast<std::size_t>(coarse.voxel_count());
  std::array<std::vector<double>, 3> comp;
  for (auto& c : comp) c.resize(nc);
  for (std::size_t i = 0; i < nc; ++i) {
    for (auto& c : comp) c[i] = rng.normal();
  }
  const double sigma = 2.0 * std::exp2(smoothness);
  for (auto& c : comp) gaussian_smooth(c, coarse.dims, Vec3::Constant(sigma), Boundary::Clamp);

  const Mat4 m = target_to_coarse(coarse, geometry);
  const Mat3 lin = m.topLeftCorner<3, 3>();
  const Vec3 off = m.topRightCorner<3, 1>();
  std::int64_t idx = 0;
  const Dims& n = geometry.dims;
  for (std::int64_t k = 0; k < n[2]; ++k) {
    for (std::int64_t j = 0; j < n[1]; ++j) {
      for (std::int64_t i = 0; i < n[0]; ++i, ++idx) {
        const Vec3 p = lin * Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)) + off;
        v[idx] = Vec3(clamped_linear(comp[0], coarse.dims, p), clamped_linear(comp[1], coarse.dims, p),
                      clamped_linear(comp[2], coarse.dims, p));
      }
    }
  }

  // The integrated magnitude is close to linear in the scale for smooth
  // fields, so a few secant-style corrections converge.
  double base = 0.0;
  for (const auto& x : v.vectors()) base += x.norm();
  base /= static_cast<double>(geometry.voxel_count());
  if (!(base > 0.0)) return VelocityField(geometry);
  double scale = strength / base;
  for (int it = 0; it < 12; ++it) {
    const double got = mean_magnitude(integrate_svf(scaled(v, scale), steps));
    if (!(got > 0.0)) break;
    const double ratio = strength / got;
    scale *= ratio;
    if (std::abs(ratio - 1.0) < 1e-6) break;
  }
  return scaled(v, scale);
}

DisplacementField integrate_svf(const VelocityField& v, int steps) {
  if (steps < 1) throw Error(ErrorCode::InvalidArgument, "integrate_svf needs steps >= 1");
  const Geometry& g = v.geometry();
  DisplacementField u(g);
  const double s = std::ldexp(1.0, -steps);
  for (std::int64_t i = 0; i < g.voxel_count(); ++i) u[i] = v[i] * s;

  const Mat4 w2v = g.world_to_voxel();
  const Mat3 lin = w2v.topLeftCorner<3, 3>();
  DisplacementField next(g);
  for (int step = 0; step < steps; ++step) {
    std::int64_t idx = 0;
    for (std::int64_t k = 0; k < g.dims[2]; ++k) {
      for (std::int64_t j = 0; j < g.dims[1]; ++j) {
        for (std::int64_t i = 0; i < g.dims[0]; ++i, ++idx) {
          const Vec3 ijk(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
          next[idx] = u[idx] + u.sample_voxel(ijk + lin * u[idx]);
        }
      }
    }
    std::swap(u, next);
  }
  return u;
}

DisplacementField compose_displacements(const DisplacementField& a, const DisplacementField& b) {
  if (!same_geometry(a.geometry(), b.geometry())) {
    throw Error(ErrorCode::GeometryMismatch, "compose_displacements needs fields on one grid");
  }
  const Geometry& g = b.geometry();
  const Mat3 lin = g.world_to_voxel().topLeftCorner<3, 3>();
  DisplacementField out(g);
  std::int64_t idx = 0;
  for (std::int64_t k = 0; k < g.dims[2]; ++k) {
    for (std::int64_t j = 0; j < g.dims[1]; ++j) {
      for (std::int64_t i = 0; i < g.dims[0]; ++i, ++idx) {
        const Vec3 ijk(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
        out[idx] = b[idx] + a.sample_voxel(ijk + lin * b[idx]);
      }
    }
  }
  return out;
}

double mean_magnitude(const DisplacementField& u) {
  if (u.vectors().empty()) return 0.0;
  double s = 0.0;
  for (const auto& x : u.vectors()) s += x.norm();
  return s / static_cast<double>(u.vectors().size());
}

ContrastModel draw_contrast(const LabelMap& labels, const SynthConfig& cfg, Rng& rng) {
  ContrastModel model;
  for (auto l : label_set(labels)) {
    model.label_intensity[l] = rng.uniform(cfg.intensity_range[0], cfg.intensity_range[1]);
  }

  const Geometry& g = labels.geometry();
  model.log_bias = Volume(g, 0.0f);
  if (cfg.bias_field_strength > 0.0) {
    const Geometry coarse = coarse_cover(g, cfg.bias_spacing_mm);
    std::vector<double> b(static_cast<std::size_t>(coarse.voxel_count()));
    double peak = 0.0;
    for (auto& x : b) {
      x = rng.normal();
      peak = std::max(peak, std::abs(x));
    }
    // Peak |log bias| equals the configured strength.
    for (auto& x : b) x *= peak > 0.0 ? cfg.bias_field_strength / peak : 0.0;
    const Mat4 m = target_to_coarse(coarse, g);
    const Mat3 lin = m.topLeftCorner<3, 3>();
    const Vec3 off = m.topRightCorner<3, 1>();
    std::int64_t idx = 0;
    for (std::int64_t k = 0; k < g.dims[2]; ++k) {
      for (std::int64_t j = 0; j < g.dims[1]; ++j) {
        for (std::int64_t i = 0; i < g.dims[0]; ++i, ++idx) {
          const Vec3 p = lin * Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k)) + off;
          model.log_bias[idx] = static_cast<float>(clamped_linear(b, coarse.dims, p));
        }
      }
    }
  }
  model.noise_sigma = rng.uniform(0.0, cfg.noise_sigma_max);
  model.gamma_exponent = std::exp(cfg.gamma_sigma * rng.normal());
  return model;
}

Volume render_clean(const LabelMap& labels, const ContrastModel& model) {
  if (!same_geometry(labels.geometry(), model.log_bias.geometry())) {
    throw Error(ErrorCode::GeometryMismatch, "contrast model was drawn for another grid");
  }
  Volume out(labels.geometry());
  for (std::int64_t i = 0; i < labels.size(); ++i) {
    const auto it = model.label_intensity.find(labels[i]);
    if (it == model.label_intensity.end()) {
      throw Error(ErrorCode::UnknownClass, "label " + std::to_string(labels[i]) + " has no intensity");
    }
    out[i] = static_cast<float>(it->second * std::exp(static_cast<double>(model.log_bias[i])));
  }
  return out;
}

Volume corrupt(const Volume& clean, const ContrastModel& model, Rng& noise_rng) {
  std::vector<double> v(clean.data().begin(), clean.data().end());
  if (model.noise_sigma > 0.0) {
    for (auto& x : v) x += model.noise_sigma * noise_rng.normal();
  }
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double vmin = v.empty() ? 0.0 : *lo;
  const double range = v.empty() ? 0.0 : *hi - vmin;
  Volume out(clean.geometry());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double n = range > 0.0 ? std::clamp((v[i] - vmin) / range, 0.0, 1.0) : 0.0;
    out[static_cast<std::int64_t>(i)] = static_cast<float>(std::pow(n, model.gamma_exponent));
  }
  return out;
}

Volume synthesize_image(const LabelMap& labels, const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  const ContrastModel model = draw_contrast(labels, cfg, rng);
  return corrupt(render_clean(labels, model), model, rng);
}

TrainingPair make_pair(const LabelMap& source, const SynthConfig& cfg) {
  cfg.validate();
  enum Stream : std::uint64_t { RigidM, RigidF, SvfM, SvfF, ContrastM, ContrastF, NoiseM, NoiseF };
  auto stream = [&](Stream s) { return Rng(Rng::derive_seed(cfg.seed, s)); };

  const Geometry& g = source.geometry();
  const Vec3 center = g.center();
  auto side_rigid = [&](Stream s) {
    Rng rng = stream(s);
    const RigidTransform r = sample_rigid(cfg, rng);
    return RigidTransform::about_center(r.rotation(), center, r.translation());
  };
  auto side_warp = [&](Stream s) {
    if (cfg.deformation_strength == 0.0) return DisplacementField(g);
    Rng rng = stream(s);
    const VelocityField v = sample_svf(g, cfg.deformation_strength, cfg.smoothness_level, rng,
                                       cfg.svf_spacing_mm, cfg.integration_steps);
    return integrate_svf(v, cfg.integration_steps);
  };

  const RigidTransform r_m = side_rigid(RigidM);
  const RigidTransform r_f = side_rigid(RigidF);
  TrainingPair pair;
  pair.moving_warp = side_warp(SvfM);
  pair.fixed_warp = side_warp(SvfF);
  pair.true_rigid = compose(invert(r_m), r_f);
  pair.moving_labels = warp(source, r_m, pair.moving_warp, g);
  pair.fixed_labels = warp(source, r_f, pair.fixed_warp, g);

  Rng contrast_m = stream(ContrastM);
  Rng contrast_f = stream(cfg.same_contrast ? ContrastM : ContrastF);
  const ContrastModel model_m = draw_contrast(source, cfg, contrast_m);
  const ContrastModel model_f = draw_contrast(source, cfg, contrast_f);
  Rng noise_m = stream(NoiseM);
  Rng noise_f = stream(NoiseF);
  pair.moving_image =
      corrupt(warp(render_clean(source, model_m), r_m, pair.moving_warp, g, Padding::Border), model_m, noise_m);
  pair.fixed_image =
      corrupt(warp(render_clean(source, model_f), r_f, pair.fixed_warp, g, Padding::Border), model_f, noise_f);

  for (int f = cfg.downsample_factor; f > 1; f /= 2) {
    pair.moving_image = downsample2(pair.moving_image);
    pair.fixed_image = downsample2(pair.fixed_image);
    pair.moving_labels = downsample2(pair.moving_labels);
    pair.fixed_labels = downsample2(pair.fixed_labels);
  }
  if (cfg.downsample_factor > 1) {
    pair.moving_warp = resample_field(pair.moving_warp, pair.moving_image.geometry());
    pair.fixed_warp = resample_field(pair.fixed_warp, pair.fixed_image.geometry());
  }
  return pair;
}

}  // namespace longreg
