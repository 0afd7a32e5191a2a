#include "oskf/error.hpp"

#include <sstream>

namespace oskf {

namespace {

std::string behind_camera_message(std::size_t index, double depth) {
  std::ostringstream os;
  os << "point " << index << " is behind the camera (z = " << depth << ")";
  return os.str();
}

std::string parse_message(const std::string& source, std::size_t line, const std::string& what) {
  std::ostringstream os;
  os << source;
  if (line > 0) os << ":" << line;
  os << ": " << what;
  return os.str();
}

std::string key_mismatch_message(const std::vector<std::string>& unmatched) {
  std::ostringstream os;
  os << unmatched.size() << " unmatched instance(s):";
  for (const auto& key : unmatched) os << " " << key;
  return os.str();
}

}  // namespace

BehindCamera::BehindCamera(std::size_t index, double depth)
    : InputError(behind_camera_message(index, depth)), index_(index) {}

ParseError::ParseError(std::string source, std::size_t line, const std::string& what)
    : InputError(parse_message(source, line, what)), source_(std::move(source)), line_(line) {}

KeyMismatch::KeyMismatch(std::vector<std::string> unmatched)
    : InputError(key_mismatch_message(unmatched)), unmatched_(std::move(unmatched)) {}

DivergenceDetected::DivergenceDetected(std::size_t step, double loss)
    : Error("training diverged at step " + std::to_string(step) +
            " (loss = " + std::to_string(loss) + ")"),
      step_(step) {}

}  // namespace oskf
