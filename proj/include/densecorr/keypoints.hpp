#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "densecorr/types.hpp"

namespace densecorr {

struct BoundingBox {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  bool visible = false;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct KeypointSet {
  std::string image_id;
  BoundingBox bbox;
  std::map<std::string, Keypoint> points;

  friend bool operator==(const KeypointSet&, const KeypointSet&) = default;
};

/// Annotation CSV: a header line, then one record per image:
///   image_id,bbox_x,bbox_y,bbox_w,bbox_h,name,x,y,visible,name,x,y,visible,...
std::vector<KeypointSet> parse_annotations(const std::string& text);
std::string format_annotations(const std::vector<KeypointSet>& sets);
std::vector<KeypointSet> read_annotations(const std::filesystem::path& path);
void write_annotations(const std::vector<KeypointSet>& sets, const std::filesystem::path& path);

}  // namespace densecorr
