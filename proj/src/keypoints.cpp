#include "densecorr/keypoints.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "densecorr/binary_io.hpp"

namespace densecorr {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

double parse_double(const std::string& s, int lineno) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end)
    throw InvalidArgument("annotation line " + std::to_string(lineno) + ": bad number '" + s + "'");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<KeypointSet> parse_annotations(const std::string& text) {
  std::vector<KeypointSet> sets;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() < 5 || (f.size() - 5) % 4 != 0)
      throw InvalidArgument("annotation line " + std::to_string(lineno) + ": expected id, bbox and (name,x,y,visible) tuples");
    KeypointSet set;
    set.image_id = f[0];
    set.bbox = {parse_double(f[1], lineno), parse_double(f[2], lineno), parse_double(f[3], lineno),
                parse_double(f[4], lineno)};
    if (!(set.bbox.w > 0 && set.bbox.h > 0))
      throw InvalidArgument("annotation line " + std::to_string(lineno) + ": bbox needs positive size");
    for (std::size_t k = 5; k < f.size(); k += 4) {
      Keypoint kp{parse_double(f[k + 1], lineno), parse_double(f[k + 2], lineno), f[k + 3] == "1"};
      if (f[k + 3] != "0" && f[k + 3] != "1")
        throw InvalidArgument("annotation line " + std::to_string(lineno) + ": visibility must be 0 or 1");
      if (kp.visible && !(std::isfinite(kp.x) && std::isfinite(kp.y)))
        throw InvalidArgument("annotation line " + std::to_string(lineno) + ": visible keypoint needs finite coordinates");
      set.points[f[k]] = kp;
    }
    sets.push_back(std::move(set));
  }
  if (!header_seen) throw InvalidArgument("annotation file is missing its header line");
  return sets;
}

std::string format_annotations(const std::vector<KeypointSet>& sets) {
  std::string out = "image_id,bbox_x,bbox_y,bbox_w,bbox_h,keypoints(name,x,y,visible)...\n";
  for (const auto& s : sets) {
    out += s.image_id;
    for (double v : {s.bbox.x, s.bbox.y, s.bbox.w, s.bbox.h}) out += "," + format_double(v);
    for (const auto& [name, kp] : s.points)
      out += "," + name + "," + format_double(kp.x) + "," + format_double(kp.y) + (kp.visible ? ",1" : ",0");
    out += "\n";
  }
  return out;
}

std::vector<KeypointSet> read_annotations(const std::filesystem::path& path) {
  return parse_annotations(io::read_file(path));
}

void write_annotations(const std::vector<KeypointSet>& sets, const std::filesystem::path& path) {
  io::write_file_atomic(path, format_annotations(sets));
}

}  // namespace densecorr
