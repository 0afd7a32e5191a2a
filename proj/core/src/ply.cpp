#include "oskf/ply.hpp"

#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "oskf/error.hpp"

namespace oskf {

namespace {

struct ElementSpec {
  std::string name;
  std::size_t count = 0;
  std::vector<std::string> properties;
  bool has_list = false;
};

std::string trim_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

}  // namespace

std::vector<Vec3> parse_ply_points(std::istream& in, const std::string& source) {
  std::size_t line_no = 0;
  std::string line;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    line = trim_cr(line);
    return true;
  };

  if (!next_line() || line != "ply") throw ParseError(source, line_no, "missing 'ply' magic");

  std::vector<ElementSpec> elements;
  bool saw_format = false;
  for (;;) {
    if (!next_line()) throw ParseError(source, line_no, "unexpected end of header");
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "end_header") break;
    if (keyword == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "ascii") throw ParseError(source, line_no, "only ascii PLY is supported, got '" + fmt + "'");
      saw_format = true;
    } else if (keyword == "element") {
      ElementSpec e;
      long long count = -1;
      if (!(ls >> e.name >> count) || count < 0) {
        throw ParseError(source, line_no, "malformed element declaration");
      }
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (keyword == "property") {
      if (elements.empty()) throw ParseError(source, line_no, "property before any element");
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type, name;
        if (!(ls >> count_type >> item_type >> name)) {
          throw ParseError(source, line_no, "malformed list property");
        }
        elements.back().has_list = true;
        elements.back().properties.push_back(name);
      } else {
        std::string name;
        if (!(ls >> name)) throw ParseError(source, line_no, "malformed property");
        elements.back().properties.push_back(name);
      }
    } else {
      throw ParseError(source, line_no, "unknown header keyword '" + keyword + "'");
    }
  }
  if (!saw_format) throw ParseError(source, line_no, "missing format line");

  std::vector<Vec3> points;
  bool found_vertex = false;
  for (const ElementSpec& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i) {
        if (!next_line()) throw ParseError(source, line_no, "truncated '" + e.name + "' element");
      }
      continue;
    }
    found_vertex = true;
    if (e.has_list) throw ParseError(source, line_no, "list properties on vertex are not supported");
    int ix = -1, iy = -1, iz = -1;
    for (std::size_t p = 0; p < e.properties.size(); ++p) {
      if (e.properties[p] == "x") ix = static_cast<int>(p);
      if (e.properties[p] == "y") iy = static_cast<int>(p);
      if (e.properties[p] == "z") iz = static_cast<int>(p);
    }
    if (ix < 0 || iy < 0 || iz < 0) {
      throw ParseError(source, line_no, "vertex element lacks x, y or z");
    }
    points.reserve(e.count);
    std::vector<double> values(e.properties.size());
    for (std::size_t i = 0; i < e.count; ++i) {
      if (!next_line()) throw ParseError(source, line_no + 1, "truncated vertex list");
      std::istringstream ls(line);
      for (double& v : values) {
        if (!(ls >> v)) throw ParseError(source, line_no, "expected " +
                                                             std::to_string(values.size()) +
                                                             " numbers in vertex row");
      }
      points.emplace_back(values[ix], values[iy], values[iz]);
    }
    break;
  }
  if (!found_vertex) throw ParseError(source, line_no, "no vertex element");
  return points;
}

std::vector<Vec3> read_ply_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), 0, "cannot open file");
  return parse_ply_points(in, path.string());
}

void write_ply_points(const std::filesystem::path& path, const std::vector<Vec3>& points) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const Vec3& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

}  // namespace oskf
