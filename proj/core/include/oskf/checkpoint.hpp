#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "oskf/refiner_params.hpp"

namespace oskf {

struct Checkpoint {
  RefinerConfig config;
  RefinerParams params;
};

/// One JSON header line (config echo plus a name/shape table) followed by
/// the tensors as little-endian float64 in table order. The output depends
/// only on the values, so identical parameters give identical bytes.
void write_checkpoint(std::ostream& out, const RefinerConfig& config, const RefinerParams& params);
void write_checkpoint(const std::filesystem::path& path, const RefinerConfig& config,
                      const RefinerParams& params);

/// Throws ParseError on a malformed header, unexpected tensor names or
/// shapes, truncated payload or trailing bytes.
Checkpoint read_checkpoint(std::istream& in, const std::string& source = "<stream>");
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace oskf
