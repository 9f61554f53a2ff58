#include "longreg/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <type_traits>

#include <zlib.h>

#include "longreg/errors.hpp"

static_assert(std::endian::native == std::endian::little, "NIfTI I/O assumes a little-endian host");

namespace longreg {

namespace {

constexpr std::size_t kHeaderSize = 348;
constexpr std::size_t kDataOffset = 352;

// NIfTI-1 header field offsets.
namespace off {
constexpr std::size_t sizeof_hdr = 0;
constexpr std::size_t dim = 40;
constexpr std::size_t datatype = 70;
constexpr std::size_t bitpix = 72;
constexpr std::size_t pixdim = 76;
constexpr std::size_t vox_offset = 108;
constexpr std::size_t scl_slope = 112;
constexpr std::size_t scl_inter = 116;
constexpr std::size_t xyzt_units = 123;
constexpr std::size_t descrip = 148;
constexpr std::size_t qform_code = 252;
constexpr std::size_t sform_code = 254;
constexpr std::size_t quatern_b = 256;
constexpr std::size_t qoffset_x = 268;
constexpr std::size_t srow_x = 280;
constexpr std::size_t magic = 344;
}  // namespace off

template <typename T>
T get(const std::vector<unsigned char>& buf, std::size_t offset) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

template <typename T>
void put(std::vector<unsigned char>& buf, std::size_t offset, T v) {
  std::memcpy(buf.data() + offset, &v, sizeof(T));
}

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  gzFile f = gzopen(path.string().c_str(), "rb");
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<unsigned char> out;
  unsigned char chunk[1 << 16];
  for (;;) {
    const int n = gzread(f, chunk, sizeof(chunk));
    if (n < 0) {
      gzclose(f);
      throw Error(ErrorCode::MalformedFile, "corrupt compressed stream in " + path.string());
    }
    if (n == 0) break;
    out.insert(out.end(), chunk, chunk + n);
  }
  gzclose(f);
  return out;
}

bool has_gz_suffix(const std::filesystem::path& path) { return path.extension() == ".gz"; }

void write_all(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  if (has_gz_suffix(path)) {
    gzFile f = gzopen(path.string().c_str(), "wb6");
    if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    std::size_t done = 0;
    while (done < bytes.size()) {
      const auto n = static_cast<unsigned>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
      if (gzwrite(f, bytes.data() + done, n) != static_cast<int>(n)) {
        gzclose(f);
        throw Error(ErrorCode::Io, "failed writing " + path.string());
      }
      done += n;
    }
    if (gzclose(f) != Z_OK) throw Error(ErrorCode::Io, "failed closing " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

int bytes_per_voxel(NiftiType t) {
  switch (t) {
    case NiftiType::UInt8: return 1;
    case NiftiType::Int16: return 2;
    case NiftiType::Int32: return 4;
    case NiftiType::Float32: return 4;
    case NiftiType::Float64: return 8;
  }
  return 0;
}

bool known_type(std::int16_t code) {
  switch (static_cast<NiftiType>(code)) {
    case NiftiType::UInt8:
    case NiftiType::Int16:
    case NiftiType::Int32:
    case NiftiType::Float32:
    case NiftiType::Float64:
      return true;
  }
  return false;
}

Mat4 affine_from_header(const std::vector<unsigned char>& hdr) {
  const auto sform_code = get<std::int16_t>(hdr, off::sform_code);
  const auto qform_code = get<std::int16_t>(hdr, off::qform_code);
  Mat4 m = Mat4::Identity();
  if (sform_code > 0) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        m(r, c) = get<float>(hdr, off::srow_x + static_cast<std::size_t>(16 * r + 4 * c));
      }
    }
    return m;
  }
  double pix[4];
  for (int i = 0; i < 4; ++i) pix[i] = get<float>(hdr, off::pixdim + static_cast<std::size_t>(4 * i));
  for (int i = 1; i < 4; ++i) {
    if (!(pix[i] > 0.0)) pix[i] = 1.0;
  }
  if (qform_code > 0) {
    const double b = get<float>(hdr, off::quatern_b);
    const double c = get<float>(hdr, off::quatern_b + 4);
    const double d = get<float>(hdr, off::quatern_b + 8);
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
    Mat3 r;
    r << a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c),
         2 * (b * c + a * d), a * a + c * c - b * b - d * d, 2 * (c * d - a * b),
         2 * (b * d - a * c), 2 * (c * d + a * b), a * a + d * d - c * c - b * b;
    const double qfac = pix[0] < 0.0 ? -1.0 : 1.0;
    m.topLeftCorner<3, 3>() = r * Eigen::Vector3d(pix[1], pix[2], qfac * pix[3]).asDiagonal();
    for (int i = 0; i < 3; ++i) m(i, 3) = get<float>(hdr, off::qoffset_x + static_cast<std::size_t>(4 * i));
    return m;
  }
  m(0, 0) = pix[1];
  m(1, 1) = pix[2];
  m(2, 2) = pix[3];
  return m;
}

}  // namespace

NiftiData read_nifti(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  const std::string name = path.string();
  if (bytes.size() < kHeaderSize) throw Error(ErrorCode::MalformedFile, name + ": truncated header");
  const auto sizeof_hdr = get<std::int32_t>(bytes, off::sizeof_hdr);
  if (sizeof_hdr != static_cast<std::int32_t>(kHeaderSize)) {
    if (static_cast<std::int32_t>(__builtin_bswap32(static_cast<std::uint32_t>(sizeof_hdr))) == static_cast<std::int32_t>(kHeaderSize)) {
      throw Error(ErrorCode::MalformedFile, name + ": big-endian NIfTI is not supported");
    }
    throw Error(ErrorCode::MalformedFile, name + ": not a NIfTI-1 file");
  }
  if (std::memcmp(bytes.data() + off::magic, "n+1", 4) != 0) {
    throw Error(ErrorCode::MalformedFile, name + ": only single-file NIfTI-1 (magic n+1) is supported");
  }

  std::int16_t dim[8];
  for (int i = 0; i < 8; ++i) dim[i] = get<std::int16_t>(bytes, off::dim + static_cast<std::size_t>(2 * i));
  const int ndim = dim[0];
  if (ndim < 1 || ndim > 7) throw Error(ErrorCode::MalformedFile, name + ": bad dim[0]");
  auto extent = [&](int axis) -> std::int64_t { return axis <= ndim ? std::max<std::int16_t>(dim[axis], 1) : 1; };
  for (int axis = 5; axis <= ndim; ++axis) {
    if (extent(axis) != 1) throw Error(ErrorCode::MalformedFile, name + ": more than four dimensions");
  }

  const auto code = get<std::int16_t>(bytes, off::datatype);
  if (!known_type(code)) {
    throw Error(ErrorCode::MalformedFile, name + ": unsupported datatype " + std::to_string(code));
  }

  NiftiData out;
  out.datatype = static_cast<NiftiType>(code);
  out.geometry.dims = {extent(1), extent(2), extent(3)};
  out.geometry.voxel_to_world = affine_from_header(bytes);
  out.geometry.validate();
  out.frames = extent(4);

  const double vox_offset = get<float>(bytes, off::vox_offset);
  const auto data_start = static_cast<std::size_t>(std::max(vox_offset, static_cast<double>(kHeaderSize)));
  const auto count = static_cast<std::size_t>(out.geometry.voxel_count() * out.frames);
  const auto width = static_cast<std::size_t>(bytes_per_voxel(out.datatype));
  if (bytes.size() < data_start + count * width) {
    throw Error(ErrorCode::MalformedFile, name + ": file shorter than its header claims");
  }

  double slope = get<float>(bytes, off::scl_slope);
  double inter = get<float>(bytes, off::scl_inter);
  if (slope == 0.0 || !std::isfinite(slope)) {
    slope = 1.0;
    inter = 0.0;
  }
  const bool scaled = slope != 1.0 || inter != 0.0;

  out.values.resize(count);
  const unsigned char* src = bytes.data() + data_start;
  auto decode = [&]<typename T>(T) {
    for (std::size_t i = 0; i < count; ++i) {
      T v;
      std::memcpy(&v, src + i * sizeof(T), sizeof(T));
      out.values[i] = scaled ? static_cast<float>(slope * static_cast<double>(v) + inter) : static_cast<float>(v);
    }
  };
  switch (out.datatype) {
    case NiftiType::UInt8: decode(std::uint8_t{}); break;
    case NiftiType::Int16: decode(std::int16_t{}); break;
    case NiftiType::Int32: decode(std::int32_t{}); break;
    case NiftiType::Float32: decode(float{}); break;
    case NiftiType::Float64: decode(double{}); break;
  }
  return out;
}

void write_nifti(const std::filesystem::path& path, const Geometry& geometry, std::int64_t frames,
                 NiftiType datatype, std::span<const float> values) {
  geometry.validate();
  if (frames < 1) throw Error(ErrorCode::InvalidArgument, "frame count must be positive");
  const auto count = static_cast<std::size_t>(geometry.voxel_count() * frames);
  if (values.size() != count) throw Error(ErrorCode::InvalidArgument, "value count does not match grid");
  for (int a = 0; a < 3; ++a) {
    if (geometry.dims[a] > std::numeric_limits<std::int16_t>::max()) {
      throw Error(ErrorCode::InvalidArgument, "grid too large for NIfTI-1");
    }
  }
  if (frames > std::numeric_limits<std::int16_t>::max()) {
    throw Error(ErrorCode::InvalidArgument, "too many frames for NIfTI-1");
  }

  const auto width = static_cast<std::size_t>(bytes_per_voxel(datatype));
  std::vector<unsigned char> bytes(kDataOffset + count * width, 0);
  put<std::int32_t>(bytes, off::sizeof_hdr, static_cast<std::int32_t>(kHeaderSize));
  const std::int16_t ndim = frames > 1 ? 4 : 3;
  const std::int16_t dim[8] = {ndim,
                               static_cast<std::int16_t>(geometry.dims[0]),
                               static_cast<std::int16_t>(geometry.dims[1]),
                               static_cast<std::int16_t>(geometry.dims[2]),
                               static_cast<std::int16_t>(frames),
                               1, 1, 1};
  for (int i = 0; i < 8; ++i) put<std::int16_t>(bytes, off::dim + static_cast<std::size_t>(2 * i), dim[i]);
  put<std::int16_t>(bytes, off::datatype, static_cast<std::int16_t>(datatype));
  put<std::int16_t>(bytes, off::bitpix, static_cast<std::int16_t>(8 * width));

  const Vec3 spacing = geometry.spacing();
  const float pixdim[8] = {1.0f, static_cast<float>(spacing[0]), static_cast<float>(spacing[1]),
                           static_cast<float>(spacing[2]), 1.0f, 1.0f, 1.0f, 1.0f};
  for (int i = 0; i < 8; ++i) put<float>(bytes, off::pixdim + static_cast<std::size_t>(4 * i), pixdim[i]);
  put<float>(bytes, off::vox_offset, static_cast<float>(kDataOffset));
  put<float>(bytes, off::scl_slope, 1.0f);
  put<float>(bytes, off::scl_inter, 0.0f);
  bytes[off::xyzt_units] = 2;  // mm
  std::memcpy(bytes.data() + off::descrip, "longreg", 7);
  put<std::int16_t>(bytes, off::qform_code, 0);
  put<std::int16_t>(bytes, off::sform_code, 1);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      put<float>(bytes, off::srow_x + static_cast<std::size_t>(16 * r + 4 * c),
                 static_cast<float>(geometry.voxel_to_world(r, c)));
    }
  }
  std::memcpy(bytes.data() + off::magic, "n+1", 4);

  unsigned char* dst = bytes.data() + kDataOffset;
  auto encode = [&]<typename T>(T) {
    for (std::size_t i = 0; i < count; ++i) {
      T v;
      if constexpr (std::is_integral_v<T>) {
        const double r = std::nearbyint(static_cast<double>(values[i]));
        v = static_cast<T>(std::clamp(r, static_cast<double>(std::numeric_limits<T>::min()),
                                      static_cast<double>(std::numeric_limits<T>::max())));
      } else {
        v = static_cast<T>(values[i]);
      }
      std::memcpy(dst + i * sizeof(T), &v, sizeof(T));
    }
  };
  switch (datatype) {
    case NiftiType::UInt8: encode(std::uint8_t{}); break;
    case NiftiType::Int16: encode(std::int16_t{}); break;
    case NiftiType::Int32: encode(std::int32_t{}); break;
    case NiftiType::Float32: encode(float{}); break;
    case NiftiType::Float64: encode(double{}); break;
  }
  write_all(path, bytes);
}

Volume read_volume(const std::filesystem::path& path) {
  auto nii = read_nifti(path);
  if (nii.frames != 1) throw Error(ErrorCode::MalformedFile, path.string() + ": expected a 3D image");
  return Volume(nii.geometry, std::move(nii.values));
}

LabelMap read_labels(const std::filesystem::path& path) {
  const auto nii = read_nifti(path);
  if (nii.frames != 1) throw Error(ErrorCode::MalformedFile, path.string() + ": expected a 3D label map");
  std::vector<std::int32_t> labels(nii.values.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float v = nii.values[i];
    if (!(v >= 0.0f) || v != std::floor(v) || v > 2147483520.0f) {
      throw Error(ErrorCode::MalformedFile, path.string() + ": label maps must hold non-negative integers");
    }
    labels[i] = static_cast<std::int32_t>(v);
  }
  return LabelMap(nii.geometry, std::move(labels));
}

void write_volume(const std::filesystem::path& path, const Volume& vol) {
  write_nifti(path, vol.geometry(), 1, NiftiType::Float32, vol.data());
}

void write_labels(const std::filesystem::path& path, const LabelMap& labels) {
  std::int32_t top = 0;
  for (auto v : labels.data()) {
    if (v < 0) throw Error(ErrorCode::InvalidArgument, "label maps must be non-negative");
    top = std::max(top, v);
  }
  if (top > (1 << 24)) throw Error(ErrorCode::InvalidArgument, "label values above 2^24 cannot be stored exactly");
  const NiftiType type = top <= 255 ? NiftiType::UInt8
                         : top <= std::numeric_limits<std::int16_t>::max() ? NiftiType::Int16
                                                                           : NiftiType::Int32;
  std::vector<float> values(labels.data().begin(), labels.data().end());
  write_nifti(path, labels.geometry(), 1, type, values);
}

}  // namespace longreg
