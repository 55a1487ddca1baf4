#include "densecorr/manifest.hpp"

#include <sstream>

#include "densecorr/binary_io.hpp"

namespace densecorr {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto at = s.find(sep, start);
    out.push_back(s.substr(start, at - start));
    if (at == std::string::npos) break;
    start = at + 1;
  }
  return out;
}

std::optional<fs::path> optional_path(const std::string& field, const fs::path& base) {
  if (field == "-" || field.empty()) return std::nullopt;
  const fs::path p(field);
  return p.is_absolute() ? p : (base / p).lexically_normal();
}

std::string relative_text(const std::optional<fs::path>& p, const fs::path& base) {
  if (!p) return "-";
  const fs::path rel = p->lexically_relative(base);
  return (rel.empty() ? *p : rel).generic_string();
}

void require_file(const fs::path& p, const std::string& id, int lineno) {
  if (!fs::is_regular_file(p))
    throw ManifestError("manifest line " + std::to_string(lineno) + " (" + id + "): missing file " + p.string());
}

}  // namespace

std::string to_string(Split split) { return split == Split::train ? "train" : "val"; }

Manifest Manifest::parse(const std::string& text, const fs::path& base_dir) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto f = split_on(line, '\t');
    if (f.size() != 7)
      throw ManifestError("manifest line " + std::to_string(lineno) + ": expected 7 tab-separated fields, got " +
                          std::to_string(f.size()));
    ManifestRecord r;
    r.id = f[0];
    if (r.id.empty()) throw ManifestError("manifest line " + std::to_string(lineno) + ": empty image id");
    r.image = optional_path(f[1], base_dir);
    if (f[2] != "-" && !f[2].empty())
      for (const auto& entry : split_on(f[2], ',')) {
        const auto eq = entry.find('=');
        if (eq == std::string::npos || eq == 0)
          throw ManifestError("manifest line " + std::to_string(lineno) + ": grid entry '" + entry +
                              "' is not layer=path");
        if (!r.grids.emplace(entry.substr(0, eq), *optional_path(entry.substr(eq + 1), base_dir)).second)
          throw ManifestError("manifest line " + std::to_string(lineno) + ": layer listed twice");
      }
    r.global = optional_path(f[3], base_dir);
    r.annotations = optional_path(f[4], base_dir);
    r.category = f[5];
    if (f[6] == "train")
      r.split = Split::train;
    else if (f[6] == "val")
      r.split = Split::val;
    else
      throw ManifestError("manifest line " + std::to_string(lineno) + ": split must be train or val");

    for (const auto* p : {&r.image, &r.global, &r.annotations})
      if (*p) require_file(**p, r.id, lineno);
    for (const auto& [layer, p] : r.grids) require_file(p, r.id, lineno);
    if (m.find(r.id)) throw ManifestError("manifest line " + std::to_string(lineno) + ": duplicate id " + r.id);
    m.add(std::move(r));
  }
  return m;
}

Manifest Manifest::load(const fs::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ManifestError(e.what());
  }
  return parse(text, path.parent_path());
}

void Manifest::write(const fs::path& path) const {
  const fs::path base = fs::absolute(path).parent_path();
  auto rel = [&](const std::optional<fs::path>& p) {
    return relative_text(p ? std::optional<fs::path>(fs::absolute(*p).lexically_normal()) : std::nullopt, base);
  };
  std::string out = "# image_id\timage\tgrids\tglobal\tannotations\tcategory\tsplit\n";
  for (const auto& r : records_) {
    std::string grids;
    for (const auto& [layer, p] : r.grids) grids += (grids.empty() ? "" : ",") + layer + "=" + rel(p);
    out += r.id + "\t" + rel(r.image) + "\t" + (grids.empty() ? "-" : grids) + "\t" + rel(r.global) + "\t" +
           rel(r.annotations) + "\t" + r.category + "\t" + to_string(r.split) + "\n";
  }
  io::write_file_atomic(path, out);
}

void Manifest::add(ManifestRecord record) {
  if (!by_id_.emplace(record.id, records_.size()).second) throw ManifestError("duplicate id " + record.id);
  records_.push_back(std::move(record));
}

const ManifestRecord* Manifest::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

const ManifestRecord& Manifest::at(const std::string& id) const {
  if (const auto* r = find(id)) return *r;
  throw ManifestError("unknown image id " + id);
}

std::vector<const ManifestRecord*> Manifest::select(const std::string& category, std::optional<Split> split) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records_)
    if ((category.empty() || r.category == category) && (!split || r.split == *split)) out.push_back(&r);
  return out;
}

std::optional<KeypointSet> Manifest::keypoints(const ManifestRecord& record) const {
  if (!record.annotations) return std::nullopt;
  auto it = annotation_cache_.find(*record.annotations);
  if (it == annotation_cache_.end()) {
    std::map<std::string, KeypointSet> sets;
    for (auto& s : read_annotations(*record.annotations)) sets[s.image_id] = std::move(s);
    it = annotation_cache_.emplace(*record.annotations, std::move(sets)).first;
  }
  auto found = it->second.find(record.id);
  if (found == it->second.end())
    throw ManifestError("annotation file " + record.annotations->string() + " has no record for " + record.id);
  return found->second;
}

}  // namespace densecorr
