#pragma once

// Dataset manifest: one tab-separated record per image.
//
//   image_id  image  grids  global  annotations  category  split
//
// `grids` is `layer=path[,layer=path...]`. Any path column may be `-`.
// Relative paths resolve against the manifest's directory. Lines starting
// with `#` and blank lines are ignored.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "densecorr/keypoints.hpp"

namespace densecorr {

enum class Split { train, val };

struct ManifestRecord {
  std::string id;
  std::optional<std::filesystem::path> image;
  std::map<std::string, std::filesystem::path> grids;
  std::optional<std::filesystem::path> global;
  std::optional<std::filesystem::path> annotations;
  std::string category;
  Split split = Split::train;
};

class ManifestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Manifest {
 public:
  Manifest() = default;

  /// Checks unique ids and that every referenced file exists.
  static Manifest load(const std::filesystem::path& path);
  static Manifest parse(const std::string& text, const std::filesystem::path& base_dir);

  /// Paths are written relative to the directory of `path` when possible.
  void write(const std::filesystem::path& path) const;

  void add(ManifestRecord record);
  const std::vector<ManifestRecord>& records() const { return records_; }
  const ManifestRecord* find(const std::string& id) const;
  const ManifestRecord& at(const std::string& id) const;

  /// Records in `category` (all when empty), optionally restricted to a split.
  std::vector<const ManifestRecord*> select(const std::string& category, std::optional<Split> split) const;

  /// The annotation of `record`, looked up by image id in its annotation
  /// file. Returns nothing when the record has no annotation file. Files are
  /// cached, so concurrent calls need external locking.
  std::optional<KeypointSet> keypoints(const ManifestRecord& record) const;

 private:
  std::vector<ManifestRecord> records_;
  std::map<std::string, std::size_t> by_id_;
  mutable std::map<std::filesystem::path, std::map<std::string, KeypointSet>> annotation_cache_;
};

std::string to_string(Split split);

}  // namespace densecorr
