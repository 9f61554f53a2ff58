#include "longreg/labels.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "longreg/errors.hpp"
#include "sampling.hpp"

namespace longreg {

namespace {

void check_classes(std::span<const std::int32_t> classes) {
  std::set<std::int32_t> seen;
  for (auto c : classes) {
    if (c < 0) throw Error(ErrorCode::UnknownClass, "class " + std::to_string(c) + " is not a valid label");
    if (!seen.insert(c).second) {
      throw Error(ErrorCode::UnknownClass, "class " + std::to_string(c) + " requested twice");
    }
  }
}

// Dense label -> channel index table (-1 for labels not requested).
std::vector<int> channel_lookup(std::span<const std::int32_t> classes, std::int32_t max_label) {
  std::int32_t top = max_label;
  for (auto c : classes) top = std::max(top, c);
  std::vector<int> lut(static_cast<std::size_t>(top) + 1, -1);
  for (std::size_t i = 0; i < classes.size(); ++i) lut[static_cast<std::size_t>(classes[i])] = static_cast<int>(i);
  return lut;
}

std::int32_t max_label(const LabelMap& labels) {
  std::int32_t m = 0;
  for (auto v : labels.data()) {
    if (v < 0) throw Error(ErrorCode::InvalidArgument, "label maps must be non-negative");
    m = std::max(m, v);
  }
  return m;
}

}  // namespace

std::vector<Volume> one_hot(const LabelMap& labels, std::span<const std::int32_t> classes) {
  check_classes(classes);
  const auto lut = channel_lookup(classes, max_label(labels));
  std::vector<Volume> channels;
  channels.reserve(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) channels.emplace_back(labels.geometry(), 0.0f);
  for (std::int64_t i = 0; i < labels.size(); ++i) {
    const int ch = lut[static_cast<std::size_t>(labels[i])];
    if (ch >= 0) channels[static_cast<std::size_t>(ch)][i] = 1.0f;
  }
  return channels;
}

MergeTable::MergeTable(std::map<std::int32_t, std::int32_t> mapping, std::string name)
    : mapping_(std::move(mapping)), name_(std::move(name)) {
  for (const auto& [src, dst] : mapping_) {
    if (src < 0 || dst < 0) throw Error(ErrorCode::InvalidArgument, "merge table entries must be non-negative");
  }
}

MergeTable MergeTable::identity(std::span<const std::int32_t> labels) {
  std::map<std::int32_t, std::int32_t> m;
  for (auto l : labels) m[l] = l;
  return MergeTable(std::move(m), "identity");
}

namespace {

// FreeSurfer / SynthSeg label numbers.
constexpr std::int32_t kLeftCerebralWm = 2, kLeftCortex = 3, kLeftLatVent = 4, kLeftInfLatVent = 5,
                       kLeftCerebellumWm = 7, kLeftCerebellumCortex = 8, kLeftThalamus = 10,
                       kLeftCaudate = 11, kLeftPutamen = 12, kLeftPallidum = 13, kThirdVent = 14,
                       kFourthVent = 15, kBrainstem = 16, kLeftHippocampus = 17, kLeftAmygdala = 18,
                       kCsf = 24, kLeftAccumbens = 26, kLeftVentralDc = 28;
constexpr std::int32_t kRightCerebralWm = 41, kRightCortex = 42, kRightLatVent = 43,
                       kRightInfLatVent = 44, kRightCerebellumWm = 46, kRightCerebellumCortex = 47,
                       kRightThalamus = 49, kRightCaudate = 50, kRightPutamen = 51, kRightPallidum = 52,
                       kRightHippocampus = 53, kRightAmygdala = 54, kRightAccumbens = 58,
                       kRightVentralDc = 60;

const std::vector<std::int32_t> kLeftSubcortical = {kLeftThalamus, kLeftCaudate, kLeftPutamen,
                                                    kLeftPallidum, kLeftHippocampus, kLeftAmygdala,
                                                    kLeftAccumbens, kLeftVentralDc};
const std::vector<std::int32_t> kRightSubcortical = {kRightThalamus, kRightCaudate, kRightPutamen,
                                                     kRightPallidum, kRightHippocampus, kRightAmygdala,
                                                     kRightAccumbens, kRightVentralDc};
const std::vector<std::int32_t> kCerebellum = {kLeftCerebellumWm, kLeftCerebellumCortex,
                                               kRightCerebellumWm, kRightCerebellumCortex};
const std::vector<std::int32_t> kMidline = {kThirdVent, kFourthVent, kBrainstem, kCsf};

}  // namespace

MergeTable MergeTable::j3() {
  std::map<std::int32_t, std::int32_t> m{{0, 0}};
  for (auto l : {kLeftCerebralWm, kLeftCortex, kLeftLatVent, kLeftInfLatVent}) m[l] = 1;
  for (auto l : kLeftSubcortical) m[l] = 1;
  for (auto l : {kRightCerebralWm, kRightCortex, kRightLatVent, kRightInfLatVent}) m[l] = 2;
  for (auto l : kRightSubcortical) m[l] = 2;
  for (auto l : kCerebellum) m[l] = 3;
  for (auto l : kMidline) m[l] = 0;
  return MergeTable(std::move(m), "J3");
}

MergeTable MergeTable::j5() {
  std::map<std::int32_t, std::int32_t> m{{0, 0}};
  m[kLeftCortex] = 1;
  m[kRightCortex] = 2;
  for (auto l : kLeftSubcortical) m[l] = 3;
  for (auto l : kRightSubcortical) m[l] = 4;
  for (auto l : kCerebellum) m[l] = 5;
  for (auto l : {kLeftCerebralWm, kLeftLatVent, kLeftInfLatVent, kRightCerebralWm, kRightLatVent,
                 kRightInfLatVent}) {
    m[l] = 0;
  }
  for (auto l : kMidline) m[l] = 0;
  return MergeTable(std::move(m), "J5");
}

MergeTable MergeTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open merge table " + path.string());
  std::map<std::int32_t, std::int32_t> m;
  int line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::int64_t src = 0;
    std::int64_t dst = 0;
    if (!(fields >> src)) continue;
    std::string extra;
    if (!(fields >> dst) || (fields >> extra) || src < 0 || dst < 0 || src > INT32_MAX || dst > INT32_MAX) {
      throw Error(ErrorCode::MalformedFile,
                  path.string() + ":" + std::to_string(line_no) + ": expected 'source target'");
    }
    m[static_cast<std::int32_t>(src)] = static_cast<std::int32_t>(dst);
  }
  return MergeTable(std::move(m), path.filename().string());
}

MergeTable MergeTable::from_spec(const std::string& spec) {
  if (spec == "J3" || spec == "j3") return j3();
  if (spec == "J5" || spec == "j5") return j5();
  return load(spec);
}

std::int32_t MergeTable::map(std::int32_t label) const {
  if (auto it = mapping_.find(label); it != mapping_.end()) return it->second;
  if (label == 0) return 0;
  throw Error(ErrorCode::UnknownClass, "label " + std::to_string(label) + " is not in merge table " + name_);
}

std::vector<std::int32_t> MergeTable::classes() const {
  std::set<std::int32_t> out;
  for (const auto& [src, dst] : mapping_) {
    if (dst != 0) out.insert(dst);
  }
  return {out.begin(), out.end()};
}

LabelMap merge_classes(const LabelMap& labels, const MergeTable& table) {
  std::vector<std::int32_t> out(labels.data().begin(), labels.data().end());
  std::map<std::int32_t, std::int32_t> cache;
  for (auto& v : out) {
    auto it = cache.find(v);
    if (it == cache.end()) it = cache.emplace(v, table.map(v)).first;
    v = it->second;
  }
  return LabelMap(labels.geometry(), std::move(out));
}

double halfway_label_mse(const LabelMap& moving, const LabelMap& fixed, const RigidTransform& t,
                         std::span<const std::int32_t> classes) {
  if (!same_geometry(moving.geometry(), fixed.geometry())) {
    throw Error(ErrorCode::GeometryMismatch, "halfway_label_mse needs label maps on one grid");
  }
  check_classes(classes);
  const RigidTransform half = sqrt_rigid(t);
  const Geometry& grid = fixed.geometry();
  const auto map_m = detail::voxel_map(moving.geometry(), half, grid);
  const auto map_f = detail::voxel_map(fixed.geometry(), invert(half), grid);
  const auto lut = channel_lookup(classes, std::max(max_label(moving), max_label(fixed)));

  const std::size_t nc = classes.size();
  std::vector<double> pm(nc);
  std::vector<double> pf(nc);
  auto accumulate = [&](const LabelMap& labels, const Vec3& p, std::vector<double>& acc) {
    std::fill(acc.begin(), acc.end(), 0.0);
    detail::Stencil s;
    if (!detail::make_stencil(labels.dims(), p.x(), p.y(), p.z(), s)) return;
    for (int c = 0; c < 8; ++c) {
      if (s.index[c] < 0 || s.weight[c] == 0.0) continue;
      const int ch = lut[static_cast<std::size_t>(labels[s.index[c]])];
      if (ch >= 0) acc[static_cast<std::size_t>(ch)] += s.weight[c];
    }
  };

  double total = 0.0;
  const Dims& n = grid.dims;
  for (std::int64_t k = 0; k < n[2]; ++k) {
    double slab = 0.0;
    for (std::int64_t j = 0; j < n[1]; ++j) {
      for (std::int64_t i = 0; i < n[0]; ++i) {
        const auto di = static_cast<double>(i);
        const auto dj = static_cast<double>(j);
        const auto dk = static_cast<double>(k);
        accumulate(moving, map_m(di, dj, dk), pm);
        accumulate(fixed, map_f(di, dj, dk), pf);
        for (std::size_t c = 0; c < nc; ++c) {
          const double d = pm[c] - pf[c];
          slab += d * d;
        }
      }
    }
    total += slab;
  }
  return total / static_cast<double>(grid.voxel_count());
}

double DiceScores::mean() const {
  if (per_class.empty()) return 0.0;
  double s = 0.0;
  for (double d : per_class) s += d;
  return s / static_cast<double>(per_class.size());
}

DiceScores dice_scores(const LabelMap& a, const LabelMap& b, std::span<const std::int32_t> classes) {
  if (!same_geometry(a.geometry(), b.geometry())) {
    throw Error(ErrorCode::GeometryMismatch, "dice needs label maps on one grid");
  }
  check_classes(classes);
  const auto lut = channel_lookup(classes, std::max(max_label(a), max_label(b)));
  std::vector<std::int64_t> count_a(classes.size(), 0);
  std::vector<std::int64_t> count_b(classes.size(), 0);
  std::vector<std::int64_t> both(classes.size(), 0);
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const int ca = lut[static_cast<std::size_t>(a[i])];
    const int cb = lut[static_cast<std::size_t>(b[i])];
    if (ca >= 0) ++count_a[static_cast<std::size_t>(ca)];
    if (cb >= 0) ++count_b[static_cast<std::size_t>(cb)];
    if (ca >= 0 && ca == cb) ++both[static_cast<std::size_t>(ca)];
  }
  DiceScores out;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const auto denom = count_a[c] + count_b[c];
    if (denom == 0) {
      out.per_class.push_back(1.0);
      out.empty_classes.push_back(classes[c]);
    } else {
      out.per_class.push_back(2.0 * static_cast<double>(both[c]) / static_cast<double>(denom));
    }
  }
  return out;
}

std::vector<double> dice(const LabelMap& a, const LabelMap& b, std::span<const std::int32_t> classes) {
  return dice_scores(a, b, classes).per_class;
}

}  // namespace longreg
