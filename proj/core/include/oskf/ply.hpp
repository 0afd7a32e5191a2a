#pragma once

#include <filesystem>
#include <istream>
#include <string>
#include <vector>

#include "oskf/geometry.hpp"

namespace oskf {

/// Reads x/y/z of the "vertex" element from an ASCII PLY stream. Other
/// elements and vertex properties are skipped. Throws ParseError with the
/// offending line number.
std::vector<Vec3> parse_ply_points(std::istream& in, const std::string& source = "<stream>");
std::vector<Vec3> read_ply_points(const std::filesystem::path& path);

void write_ply_points(const std::filesystem::path& path, const std::vector<Vec3>& points);

}  // namespace oskf
