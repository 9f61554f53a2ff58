#include <doctest.h>

#include <random>

#include "helpers.hpp"
#include "longreg/detector.hpp"
#include "longreg/errors.hpp"
#include "longreg/filters.hpp"
#include "longreg/labels.hpp"
#include "longreg/nifti.hpp"
#include "longreg/phantom.hpp"

using namespace longreg;
using testing_util::kDeg;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error raised");
  return ErrorCode::Io;
}

FeatureMaps from_channels(const std::vector<Volume>& channels) {
  std::vector<float> values;
  for (const auto& c : channels) values.insert(values.end(), c.data().begin(), c.data().end());
  return FeatureMaps(channels.front().geometry(), static_cast<std::int64_t>(channels.size()), std::move(values));
}

std::vector<Volume> split(const FeatureMaps& fm) {
  std::vector<Volume> out;
  for (std::int64_t c = 0; c < fm.channels(); ++c) {
    const auto ch = fm.channel(c);
    out.emplace_back(fm.geometry(), std::vector<float>(ch.begin(), ch.end()));
  }
  return out;
}

// Plain centroid of voxels carrying `label`, world mm.
Vec3 label_centroid(const LabelMap& l, std::int32_t label) {
  Vec3 sum = Vec3::Zero();
  double n = 0;
  const Dims d = l.dims();
  for (std::int64_t k = 0; k < d[2]; ++k)
    for (std::int64_t j = 0; j < d[1]; ++j)
      for (std::int64_t i = 0; i < d[0]; ++i)
        if (l.at(i, j, k) == label) {
          sum += Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
          n += 1;
        }
  return l.geometry().to_world(sum / n);
}

double max_abs_diff(const RigidTransform& a, const RigidTransform& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("feature map construction checks its input") {
  const Geometry g = Geometry::centered({2, 2, 2}, 1.0);
  CHECK(code_of([&] { FeatureMaps(g, 1, std::vector<float>(8, -0.5f)); }) == ErrorCode::NegativeActivation);
  CHECK(code_of([&] { FeatureMaps(g, 2, std::vector<float>(8, 1.0f)); }) == ErrorCode::InvalidArgument);
  std::vector<float> nan(8, 0.0f);
  nan[3] = NAN;
  CHECK(code_of([&] { FeatureMaps(g, 1, nan); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("barycenters") {
  const Geometry g = Geometry::centered({6, 5, 4}, 2.0, Vec3(10, 0, -3));

  SUBCASE("single voxel") {
    std::vector<float> v(static_cast<std::size_t>(g.voxel_count()), 0.0f);
    v[static_cast<std::size_t>(g.index(4, 1, 3))] = 0.25f;
    const WeightedBarycenters b = barycenters(FeatureMaps(g, 1, v));
    CHECK((b.points[0] - g.to_world(Vec3(4, 1, 3))).norm() < 1e-12);
    CHECK(b.channel_weights[0] == 1.0);
  }
  SUBCASE("uniform cube gives its centroid") {
    Volume c(g);
    for (std::int64_t k = 1; k < 4; ++k)
      for (std::int64_t j = 0; j < 4; ++j)
        for (std::int64_t i = 2; i < 6; ++i) c.at(i, j, k) = 0.7f;
    const WeightedBarycenters b = barycenters(from_channels({c}));
    CHECK((b.points[0] - g.to_world(Vec3(3.5, 1.5, 2.0))).norm() < 1e-12);
  }
  SUBCASE("weights are channel shares of the total") {
    Volume a(g), b(g), empty(g);
    a.at(0, 0, 0) = 1.0f;
    b.at(1, 1, 1) = 1.5f;
    b.at(2, 2, 2) = 1.5f;
    const WeightedBarycenters w = barycenters(from_channels({a, empty, b}));
    CHECK(w.channel_weights[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(w.channel_weights[1] == 0.0);
    CHECK(w.channel_weights[2] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(w.empty_channels == std::vector<std::int64_t>{1});
    CHECK((w.points[1] - g.center()).norm() < 1e-12);
  }
  SUBCASE("all empty") {
    const Volume z(g);
    CHECK(code_of([&] { barycenters(from_channels({z, z, z})); }) == ErrorCode::AllChannelsEmpty);
  }
}

TEST_CASE("label centroid detector") {
  const LabelMap p = make_brain_phantom(48, 2.5);

  SUBCASE("one binary channel per label without blur") {
    const Geometry g = Geometry::centered({4, 4, 4}, 1.0);
    LabelMap l(g);
    l.at(0, 0, 0) = 3;
    l.at(1, 2, 3) = 8;
    l.at(3, 3, 3) = 5;
    l.at(2, 2, 2) = 5;
    const FeatureMaps fm = label_centroid_detector(l);
    REQUIRE(fm.channels() == 3);
    const std::int32_t order[3] = {3, 5, 8};
    for (std::int64_t c = 0; c < 3; ++c) {
      const auto ch = fm.channel(c);
      for (std::int64_t i = 0; i < l.size(); ++i) {
        CHECK(ch[static_cast<std::size_t>(i)] == (l[i] == order[c] ? 1.0f : 0.0f));
      }
    }
    CHECK(code_of([&] { label_centroid_detector(LabelMap(g)); }) == ErrorCode::AllChannelsEmpty);
  }

  SUBCASE("blurred barycenters stay on the label centroids") {
    const LabelMap j3 = merge_classes(p, MergeTable::j3());
    const FeatureMaps fm = label_centroid_detector(j3, 3.0);
    const WeightedBarycenters b = barycenters(fm);
    REQUIRE(fm.channels() == 3);
    for (std::int32_t c = 1; c <= 3; ++c) {
      // activations are stored as float, which costs a few nm
      CHECK((b.points[static_cast<std::size_t>(c - 1)] - label_centroid(j3, c)).norm() < 1e-7);
    }
  }

  SUBCASE("the blur kernel itself keeps centroids to 1e-9") {
    const LabelMap j3 = merge_classes(p, MergeTable::j3());
    const Dims n = j3.dims();
    for (std::int32_t c = 1; c <= 3; ++c) {
      std::vector<double> mask(static_cast<std::size_t>(j3.size()));
      for (std::int64_t i = 0; i < j3.size(); ++i) mask[static_cast<std::size_t>(i)] = j3[i] == c;
      gaussian_smooth(mask, n, Vec3::Constant(3.0 / 2.5), Boundary::Zero);
      Vec3 m = Vec3::Zero();
      double total = 0;
      for (std::int64_t k = 0; k < n[2]; ++k)
        for (std::int64_t j = 0; j < n[1]; ++j)
          for (std::int64_t i = 0; i < n[0]; ++i) {
            const double w = mask[static_cast<std::size_t>(j3.geometry().index(i, j, k))];
            m += w * Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k));
            total += w;
          }
      CHECK((j3.geometry().to_world(m / total) - label_centroid(j3, c)).norm() < 1e-9);
    }
  }

  SUBCASE("explicit class lists keep channel order and allow absent classes") {
    const std::vector<std::int32_t> classes{41, 999, 2};
    const FeatureMaps fm = label_centroid_detector(p, classes);
    const WeightedBarycenters b = barycenters(fm);
    CHECK(b.empty_channels == std::vector<std::int64_t>{1});
    CHECK((b.points[0] - label_centroid(p, 41)).norm() < 1e-9);
    CHECK((b.points[2] - label_centroid(p, 2)).norm() < 1e-9);
  }
}

TEST_CASE("register_keypoints") {
  const LabelMap p = merge_classes(make_brain_phantom(64, 2.0), MergeTable::j5());
  const FeatureMaps moving = label_centroid_detector(p, 4.0);
  const Geometry& g = p.geometry();

  SUBCASE("identical maps give the identity") {
    CHECK(max_abs_diff(register_keypoints(moving, moving), RigidTransform::identity()) < 1e-9);
  }

  SUBCASE("recovers a small known rigid") {
    const RigidTransform t = RigidTransform::about_center(
        RigidTransform::from_axis_angle(Vec3(1, 2, -1), 2.0 * kDeg).rotation(), g.center(), Vec3(1.2, -0.6, 0.8));
    std::vector<Volume> fixed_channels;
    for (const auto& ch : split(moving)) fixed_channels.push_back(resample(ch, t, g));
    const RigidTransform got = register_keypoints(moving, from_channels(fixed_channels));
    CHECK(rotation_error(got, t) < 0.1 * kDeg);
    CHECK(translation_error(got, t) < 0.1);
  }

  SUBCASE("a faint corrupted channel barely moves the fit") {
    const RigidTransform t = RigidTransform::from_translation(Vec3(2, 0, -2));
    std::vector<Volume> fixed_channels;
    for (const auto& ch : split(moving)) fixed_channels.push_back(resample(ch, t, g));
    std::vector<Volume> dropped = fixed_channels;
    dropped[4] = Volume(g);
    std::vector<Volume> faint = dropped;
    faint[4].at(0, 0, 0) = 1e-6f;  // far corner, tiny share of the mass
    const RigidTransform ref = register_keypoints(moving, from_channels(dropped));
    const RigidTransform got = register_keypoints(moving, from_channels(faint));
    CHECK(max_abs_diff(ref, got) < 1e-6);
  }

  SUBCASE("swapping the sides inverts the fit") {
    const RigidTransform t = RigidTransform::about_center(
        RigidTransform::from_axis_angle(Vec3(0, 0, 1), 7.0 * kDeg).rotation(), g.center(), Vec3(3, 1, 0));
    std::vector<Volume> fixed_channels;
    for (const auto& ch : split(moving)) fixed_channels.push_back(resample(ch, t, g));
    const FeatureMaps fixed = from_channels(fixed_channels);
    CHECK(max_abs_diff(register_keypoints(moving, fixed), invert(register_keypoints(fixed, moving))) < 1e-9);
  }

  SUBCASE("scaling one side's activations changes nothing") {
    const RigidTransform t = RigidTransform::from_translation(Vec3(1, -1, 2));
    std::vector<Volume> fixed_channels;
    for (const auto& ch : split(moving)) fixed_channels.push_back(resample(ch, t, g));
    const FeatureMaps fixed = from_channels(fixed_channels);
    const RigidTransform ref = register_keypoints(moving, fixed);
    const WeightedBarycenters bref = barycenters(fixed);
    for (float c : {4.0f, 0.5f, 3.7f}) {
      std::vector<float> scaled(fixed.values().begin(), fixed.values().end());
      for (auto& v : scaled) v *= c;
      const FeatureMaps fs(g, fixed.channels(), scaled);
      // powers of two scale exactly; other factors only pick up float rounding
      const double tol = c == 3.7f ? 1e-6 : 1e-12;
      const WeightedBarycenters bs = barycenters(fs);
      for (std::size_t i = 0; i < bs.points.size(); ++i) {
        CHECK((bs.points[i] - bref.points[i]).norm() < tol);
        CHECK(std::abs(bs.channel_weights[i] - bref.channel_weights[i]) < tol);
      }
      CHECK(max_abs_diff(register_keypoints(moving, fs), ref) < tol);
    }
  }

  SUBCASE("channel mismatch and degenerate layouts") {
    const FeatureMaps two = label_centroid_detector(p, std::vector<std::int32_t>{1, 2});
    CHECK(code_of([&] { register_keypoints(moving, two); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { register_keypoints(two, two); }) == ErrorCode::DegenerateGeometry);
  }
}

TEST_CASE("barycenters follow whole-voxel shifts") {
  const Geometry g = Geometry::centered({20, 18, 16}, 1.5);
  std::mt19937_64 r(21);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<Volume> channels(4, Volume(g));
  // random blobs kept away from the border so the shift loses nothing
  for (auto& c : channels)
    for (std::int64_t k = 5; k < 11; ++k)
      for (std::int64_t j = 5; j < 12; ++j)
        for (std::int64_t i = 4; i < 13; ++i) c.at(i, j, k) = u(r);
  const std::int64_t di = 3, dj = -2, dk = 4;
  std::vector<Volume> shifted(4, Volume(g));
  for (std::size_t c = 0; c < 4; ++c)
    for (std::int64_t k = 5; k < 11; ++k)
      for (std::int64_t j = 5; j < 12; ++j)
        for (std::int64_t i = 4; i < 13; ++i) shifted[c].at(i + di, j + dj, k + dk) = channels[c].at(i, j, k);
  const WeightedBarycenters a = barycenters(from_channels(channels));
  const WeightedBarycenters b = barycenters(from_channels(shifted));
  const Vec3 offset = g.to_world(Vec3(di, dj, dk)) - g.to_world(Vec3::Zero());
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK((b.points[c] - a.points[c] - offset).norm() < 1e-9);
    CHECK(b.channel_weights[c] == a.channel_weights[c]);
  }
}

TEST_CASE("feature map files") {
  testing_util::TempDir dir("features");
  Geometry g;
  g.dims = {5, 4, 3};
  g.voxel_to_world << 0, 0, 2, -4, -1.5, 0, 0, 7, 0, 1, 0, 1, 0, 0, 0, 1;

  SUBCASE("round trip is bitwise") {
    std::mt19937_64 r(22);
    std::uniform_real_distribution<float> u(0.0f, 5.0f);
    std::vector<float> v(static_cast<std::size_t>(g.voxel_count() * 6));
    for (auto& x : v) x = u(r);
    const FeatureMaps fm(g, 6, v);
    for (const char* name : {"f.nii", "f.nii.gz"}) {
      save_feature_maps(fm, dir / name);
      const FeatureMaps back = load_feature_maps(dir / name);
      CHECK(back.geometry() == g);
      CHECK(back.channels() == 6);
      CHECK(std::equal(back.values().begin(), back.values().end(), v.begin(), v.end()));
    }
  }

  SUBCASE("negative activations are rejected on load") {
    std::vector<float> v(static_cast<std::size_t>(g.voxel_count() * 3), 1.0f);
    v[17] = -0.01f;
    write_nifti(dir / "neg.nii", g, 3, NiftiType::Float32, v);
    CHECK(code_of([&] { load_feature_maps(dir / "neg.nii"); }) == ErrorCode::NegativeActivation);
  }

  SUBCASE("256 single-voxel channels") {
    const Geometry cube = Geometry::centered({8, 8, 8}, 2.0);
    std::vector<float> v(static_cast<std::size_t>(cube.voxel_count() * 256), 0.0f);
    for (std::int64_t c = 0; c < 256; ++c) v[static_cast<std::size_t>(c * 512 + 2 * c)] = 1.0f + c;
    save_feature_maps(FeatureMaps(cube, 256, v), dir / "k256.nii.gz");
    const WeightedBarycenters b = barycenters(load_feature_maps(dir / "k256.nii.gz"));
    REQUIRE(b.points.size() == 256);
    for (std::int64_t c = 0; c < 256; ++c) {
      const std::int64_t idx = 2 * c;
      const Vec3 ijk(static_cast<double>(idx % 8), static_cast<double>((idx / 8) % 8), static_cast<double>(idx / 64));
      CHECK((b.points[static_cast<std::size_t>(c)] - cube.to_world(ijk)).norm() < 1e-12);
    }
  }
}
