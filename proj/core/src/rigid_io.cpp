#include "longreg/rigid_io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "longreg/errors.hpp"

namespace longreg {

std::string format_transform(const RigidTransform& t, const std::string& comment) {
  std::ostringstream out;
  out << "# longreg rigid transform: fixed (RAS mm) -> moving (RAS mm)\n";
  if (!comment.empty()) {
    std::istringstream lines(comment);
    for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
  }
  const Mat4 m = t.matrix();
  out << std::setprecision(17);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out << (c ? " " : "") << m(r, c);
    out << '\n';
  }
  return out.str();
}

RigidTransform parse_transform(const std::string& text) {
  std::istringstream in(text);
  Mat4 m;
  int row = 0;
  for (std::string line; std::getline(in, line);) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    if (row == 4) throw Error(ErrorCode::MalformedFile, "transform has more than four rows");
    std::istringstream fields(line);
    for (int c = 0; c < 4; ++c) {
      if (!(fields >> m(row, c))) {
        throw Error(ErrorCode::MalformedFile, "transform row " + std::to_string(row + 1) +
                                                  " does not hold four numbers");
      }
    }
    std::string extra;
    if (fields >> extra) {
      throw Error(ErrorCode::MalformedFile, "trailing data on transform row " + std::to_string(row + 1));
    }
    ++row;
  }
  if (row != 4) throw Error(ErrorCode::MalformedFile, "transform must have four rows");
  return RigidTransform::from_matrix(m);
}

void write_transform(const std::filesystem::path& path, const RigidTransform& t,
                     const std::string& comment) {
  if (!is_valid_rotation(t.rotation()) || !t.translation().allFinite()) {
    throw Error(ErrorCode::InvalidTransform, "refusing to write a non-rigid transform");
  }
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out << format_transform(t, comment);
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

RigidTransform read_transform(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_transform(buffer.str());
}

}  // namespace longreg
