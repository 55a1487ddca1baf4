#include "densecorr/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "densecorr/binary_io.hpp"
#include "densecorr/descriptors.hpp"
#include "densecorr/flow.hpp"
#include "densecorr/manifest.hpp"
#include "densecorr/nn_index.hpp"
#include "densecorr/parallel.hpp"
#include "densecorr/parts.hpp"
#include "densecorr/pck.hpp"
#include "densecorr/visualize.hpp"

namespace densecorr {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::mutex log_mutex;

template <typename... Args>
void log(const Args&... args) {
  std::ostringstream line;
  (line << ... << args);
  std::lock_guard lock(log_mutex);
  std::cerr << line.str() << '\n';
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct Globals {
  std::string manifest;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int threads = 0;

  int thread_count() const { return threads > 0 ? threads : default_thread_count(); }
  fs::path out(const fs::path& rel) const {
    const fs::path p = fs::path(out_dir) / rel;
    fs::create_directories(p.parent_path());
    return p;
  }
  Manifest load() const {
    if (manifest.empty()) throw UsageError("--manifest is required");
    return Manifest::load(manifest);
  }
};

// Grids are read on demand; the layer must exist for every record used.
FeatureGrid load_grid(const ManifestRecord& r, const std::string& layer) {
  auto it = r.grids.find(layer);
  if (it == r.grids.end()) {
    std::string known;
    for (const auto& [name, path] : r.grids) known += (known.empty() ? "" : ", ") + name;
    throw UsageError("image " + r.id + " has no grid for layer '" + layer + "' (available: " +
                     (known.empty() ? "none" : known) + ")");
  }
  FeatureGrid g = read_grid(it->second);
  g.set_source_id(r.id);
  return g;
}

std::vector<float> load_global(const ManifestRecord& r, const std::string& layer) {
  if (r.global) {
    const FeatureGrid g = read_grid(*r.global);
    std::vector<float> v(g.data().begin(), g.data().end());
    return v;
  }
  return global_descriptor(load_grid(r, layer));
}

Image load_image(const ManifestRecord& r) {
  if (!r.image) throw std::runtime_error("image " + r.id + " has no image file");
  return read_png(*r.image);
}

void check_layer_everywhere(const std::vector<const ManifestRecord*>& records, const std::string& layer) {
  for (const auto* r : records)
    if (!r->grids.count(layer)) load_grid(*r, layer);  // throws the usage error
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("not a number list: " + text);
    }
  }
  if (out.empty()) throw UsageError("empty number list");
  return out;
}

void report_failures(const std::vector<std::string>& failed) {
  if (failed.empty()) return;
  std::string ids;
  for (const auto& f : failed) ids += " " + f;
  log("failed:", ids);
}

// ---------------------------------------------------------------- features

struct FeaturesArgs {
  std::string layer = "dense";
  DenseDescriptorConfig descriptor;
  int box = 0;
};

int cmd_features(const Globals& g, const FeaturesArgs& a) {
  a.descriptor.validate();
  const Manifest m = g.load();
  std::vector<ManifestRecord> out(m.records().begin(), m.records().end());
  std::vector<std::optional<KeypointSet>> kps;
  for (const auto& r : m.records()) kps.push_back(m.keypoints(r));
  if (a.box > 0)
    for (std::size_t i = 0; i < kps.size(); ++i)
      if (!kps[i]) throw UsageError("--box needs annotations (bounding boxes) for " + out[i].id);

  std::vector<std::string> errors(out.size());
  std::vector<KeypointSet> boxed(out.size());
  parallel_for(out.size(), g.thread_count(), [&](std::size_t i) {
    ManifestRecord& r = out[i];
    try {
      Image img = load_image(r);
      if (a.box > 0) {
        const BoundingBox b = kps[i]->bbox;
        img = crop_resize(img, b.x, b.y, b.w, b.h, a.box, a.box);
        KeypointSet k = *kps[i];
        const double sx = b.w / a.box, sy = b.h / a.box;
        for (auto& [name, p] : k.points) {
          p.x = (p.x - b.x + 0.5) / sx - 0.5;
          p.y = (p.y - b.y + 0.5) / sy - 0.5;
        }
        k.bbox = {0, 0, double(a.box), double(a.box)};
        boxed[i] = std::move(k);
        const fs::path ip = g.out("images/" + r.id + ".png");
        write_png(img, ip);
        r.image = ip;
      }
      const FeatureGrid grid = dense_descriptors(img, a.descriptor);
      const fs::path gp = g.out("grids/" + r.id + "_" + a.layer + ".dcfg");
      write_grid(grid, gp);
      r.grids[a.layer] = gp;
      if (!r.global || a.box > 0) {
        const auto v = global_descriptor(grid);
        const fs::path vp = g.out("global/" + r.id + ".dcfg");
        write_grid(FeatureGrid(1, 1, static_cast<int>(v.size()), {}, v), vp);
        r.global = vp;
      }
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });

  std::vector<std::string> failed;
  Manifest result;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!errors[i].empty()) {
      log(out[i].id, ": ", errors[i]);
      failed.push_back(out[i].id);
      continue;
    }
    if (a.box > 0) out[i].annotations = g.out("annotations.csv");
    result.add(out[i]);
  }
  if (a.box > 0) {
    std::vector<KeypointSet> sets;
    for (std::size_t i = 0; i < out.size(); ++i)
      if (errors[i].empty()) sets.push_back(boxed[i]);
    write_annotations(sets, g.out("annotations.csv"));
  }
  result.write(g.out("manifest.tsv"));
  log("features: ", result.records().size(), " images, layer ", a.layer, ", manifest ",
      (fs::path(g.out_dir) / "manifest.tsv").string());
  report_failures(failed);
  return failed.empty() ? 0 : 1;
}

// ---------------------------------------------------------------- align

struct FlowArgs {
  std::string layer;
  FlowConfig flow;
};

void add_flow_options(CLI::App* cmd, FlowArgs& a) {
  cmd->add_option("--layer", a.layer, "Feature layer name")->required();
  cmd->add_option("--beta", a.flow.beta, "Smoothness weight")->capture_default_str();
  cmd->add_option("--label-radius", a.flow.label_radius, "Displacement window in cells")->capture_default_str();
  cmd->add_option("--iterations", a.flow.bp_iterations, "BP sweeps")->capture_default_str();
  cmd->add_option("--damping", a.flow.damping, "Message damping")->capture_default_str();
}

struct AlignArgs {
  std::string source, target;
  FlowArgs f;
};

int cmd_align(const Globals& g, AlignArgs a) {
  a.f.flow.threads = g.thread_count();
  a.f.flow.validate();
  const Manifest m = g.load();
  const auto& src = m.at(a.source);
  const auto& tgt = m.at(a.target);
  const FeatureGrid sg = load_grid(src, a.f.layer);
  const FeatureGrid tg = load_grid(tgt, a.f.layer);
  log("align ", a.source, " -> ", a.target, " layer=", a.f.layer, " beta=", fmt(a.f.flow.beta),
      " label_radius=", a.f.flow.label_radius);
  const Alignment al = bp_align(sg, tg, a.f.flow);
  const std::string stem = "align/" + a.source + "__" + a.target + "_" + a.f.layer;
  write_flow(al, g.out(stem + ".dcfw"));
  if (tgt.image) write_png(warp_image(load_image(tgt), al.flow, tg.geometry()), g.out(stem + ".png"));
  const std::string line = a.source + "," + a.target + "," + a.f.layer + "," + fmt(al.energy.data_term) + "," +
                           fmt(al.energy.smoothness_term) + "," + fmt(al.energy.total);
  io::write_file_atomic(g.out(stem + ".csv"), "source,target,layer,data,smoothness,total\n" + line + "\n");
  std::cout << line << '\n';
  return 0;
}

// ---------------------------------------------------------------- transfer

struct TransferArgs {
  std::vector<std::string> targets;
  std::string split = "val";
  std::string pool = "train";
  std::string category;
  std::size_t k = 25;
  std::size_t top_n = 5;
  FlowArgs f;
};

std::optional<Split> parse_split(const std::string& s) {
  if (s == "all") return std::nullopt;
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  throw UsageError("split must be train, val or all");
}

using MethodPredictions = std::pair<std::string, const std::vector<KeypointSet>*>;

// One row per (method, alpha), one column per category.
std::string pck_table(const Manifest& m, const std::vector<MethodPredictions>& methods,
                      const std::vector<double>& alphas) {
  std::set<std::string> categories;
  std::vector<std::map<std::string, std::vector<KeypointSet>>> truth_by_cat(methods.size()), pred_by_cat(methods.size());
  for (std::size_t k = 0; k < methods.size(); ++k)
    for (const auto& p : *methods[k].second) {
      const auto& r = m.at(p.image_id);
      auto t = m.keypoints(r);
      if (!t) continue;
      categories.insert(r.category);
      truth_by_cat[k][r.category].push_back(*t);
      pred_by_cat[k][r.category].push_back(p);
    }
  const std::vector<std::string> cols(categories.begin(), categories.end());
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  for (std::size_t k = 0; k < methods.size(); ++k)
    for (double alpha : alphas) {
      std::vector<double> vals;
      for (const auto& cat : cols) vals.push_back(pck(pred_by_cat[k][cat], truth_by_cat[k][cat], alpha).mean);
      rows.emplace_back(methods[k].first + "@" + fmt(alpha), vals);
    }
  return format_pck_table(cols, rows);
}

int cmd_transfer(const Globals& g, TransferArgs a) {
  a.f.flow.threads = 1;
  a.f.flow.validate();
  if (a.top_n < 1 || a.k < 1) throw UsageError("--k and --top-n must be >= 1");
  const Manifest m = g.load();
  std::vector<const ManifestRecord*> targets;
  if (!a.targets.empty())
    for (const auto& id : a.targets) targets.push_back(&m.at(id));
  else
    targets = m.select(a.category, parse_split(a.split));
  if (targets.empty()) throw UsageError("no target images selected");

  std::vector<const ManifestRecord*> pool;
  std::vector<KeypointSet> pool_kps;
  for (const auto* r : m.select(a.category, parse_split(a.pool)))
    if (auto k = m.keypoints(*r)) {
      pool.push_back(r);
      pool_kps.push_back(*k);
    }
  check_layer_everywhere(targets, a.f.layer);
  check_layer_everywhere(pool, a.f.layer);

  NNIndex index;
  std::vector<FeatureGrid> pool_grids;
  for (const auto* r : pool) {
    index.add(r->id, load_global(*r, a.f.layer));
    pool_grids.push_back(load_grid(*r, a.f.layer));
  }
  std::vector<std::optional<KeypointSet>> truths;
  for (const auto* t : targets) truths.push_back(m.keypoints(*t));

  std::vector<KeypointSet> predictions;
  std::vector<std::string> failed;
  for (std::size_t ti = 0; ti < targets.size(); ++ti) {
    const auto& target = *targets[ti];
    try {
      const FeatureGrid tg = load_grid(target, a.f.layer);
      // Exclude the target itself from its own neighbor list.
      std::size_t available = index.size();
      for (std::size_t i = 0; i < index.size(); ++i) available -= index.id(i) == target.id;
      if (a.k > available)
        throw UsageError("--k " + std::to_string(a.k) + " exceeds the " + std::to_string(available) +
                         " annotated images available for " + target.id);
      auto nn = index.knn(load_global(target, a.f.layer), std::min(index.size(), a.k + 1));
      nn.erase(std::remove_if(nn.begin(), nn.end(), [&](const Neighbor& n) { return n.id == target.id; }), nn.end());
      nn.resize(a.k);

      std::vector<Alignment> aligned(nn.size());
      std::vector<KeypointSet> moved(nn.size());
      parallel_for(nn.size(), g.thread_count(), [&](std::size_t i) {
        const std::size_t p = nn[i].index;
        aligned[i] = bp_align(pool_grids[p], tg, a.f.flow);
        moved[i] = transfer_keypoints(pool_kps[p], aligned[i].flow, pool_grids[p].geometry());
      });
      std::vector<KeypointSet> ranked;
      for (std::size_t i : rank_by_deformation(aligned)) ranked.push_back(moved[i]);
      KeypointSet pred = aggregate_median(ranked, a.top_n);
      pred.image_id = target.id;
      if (truths[ti]) pred.bbox = truths[ti]->bbox;
      predictions.push_back(std::move(pred));
      log("transfer ", target.id, ": ", nn.size(), " neighbors, nearest ", nn.front().id);
    } catch (const UsageError&) {
      throw;
    } catch (const std::exception& e) {
      log(target.id, ": ", e.what());
      failed.push_back(target.id);
    }
  }
  const std::string stem = "transfer/" + a.f.layer;
  write_annotations(predictions, g.out(stem + "_predictions.csv"));
  std::vector<KeypointSet> scored;
  for (const auto& p : predictions)
    if (m.keypoints(m.at(p.image_id))) scored.push_back(p);
  if (!scored.empty()) {
    const std::string table = pck_table(m, {{a.f.layer + "_flow", &scored}}, {0.1, 0.05, 0.025});
    io::write_file_atomic(g.out(stem + "_pck.csv"), table);
    std::cout << table;
  }
  report_failures(failed);
  return failed.empty() ? 0 : 1;
}

// ---------------------------------------------------------------- classifiers

struct KeypointSamples {
  std::vector<std::string> types;             // sorted
  std::vector<std::vector<float>> features;
  std::vector<int> label;                     // index into types
};

KeypointSamples collect_samples(const Manifest& m, const std::vector<const ManifestRecord*>& records,
                                const std::string& layer, int neighborhood, const std::vector<std::string>& types) {
  KeypointSamples s;
  std::set<std::string> names(types.begin(), types.end());
  std::vector<std::pair<std::string, std::vector<float>>> raw;
  for (const auto* r : records) {
    const auto kps = m.keypoints(*r);
    if (!kps) continue;
    const FeatureGrid grid = load_grid(*r, layer);
    for (const auto& [name, kp] : kps->points) {
      if (!kp.visible) continue;
      if (!types.empty() && !names.count(name)) continue;
      const Cell c = nearest_cell(grid.geometry(), grid.height(), grid.width(), {kp.x, kp.y});
      raw.emplace_back(name, stack_neighborhood(grid, c, neighborhood));
      if (types.empty()) names.insert(name);
    }
  }
  s.types.assign(names.begin(), names.end());
  for (auto& [name, f] : raw) {
    s.label.push_back(static_cast<int>(std::lower_bound(s.types.begin(), s.types.end(), name) - s.types.begin()));
    s.features.push_back(std::move(f));
  }
  return s;
}

std::vector<LinearModel> train_one_vs_all(const KeypointSamples& s, const std::vector<std::size_t>& rows, double c,
                                          std::uint64_t seed, int threads) {
  std::vector<LinearModel> models(s.types.size());
  parallel_for(s.types.size(), threads, [&](std::size_t t) {
    SampleMatrix pos, neg;
    for (std::size_t r : rows) (s.label[r] == static_cast<int>(t) ? pos : neg).add(s.features[r]);
    if (pos.empty() || neg.empty()) {
      // A type absent from this fold can never win.
      models[t] = {std::vector<double>(s.features.front().size(), 0.0), -1e300, s.types[t]};
      return;
    }
    SvmOptions opt;
    opt.c = c;
    opt.seed = seed;
    models[t] = train_svm(pos, neg, opt).model;
    models[t].class_label = s.types[t];
  });
  return models;
}

double accuracy(const KeypointSamples& s, const std::vector<std::size_t>& rows, const std::vector<LinearModel>& models) {
  if (rows.empty()) return 0.0;
  int correct = 0;
  for (std::size_t r : rows) correct += classify_keypoint(models, s.features[r]).label == s.types[s.label[r]];
  return double(correct) / double(rows.size());
}

struct ClassifierArgs {
  std::string category, layer;
  double c = 1e-6;
  std::string sweep;
  int folds = 5;
  int neighborhood = 1;
  std::string split = "val";
};

fs::path classifier_dir(const ClassifierArgs& a) { return fs::path("classifiers") / a.category / a.layer; }

int cmd_train_classifier(const Globals& g, const ClassifierArgs& a) {
  if (!(a.c > 0)) throw UsageError("--c must be > 0");
  const Manifest m = g.load();
  const auto records = m.select(a.category, Split::train);
  if (records.empty()) throw UsageError("no training images for category '" + a.category + "'");
  check_layer_everywhere(records, a.layer);
  const KeypointSamples s = collect_samples(m, records, a.layer, a.neighborhood, {});
  if (s.types.size() < 2)
    throw UsageError("category '" + a.category + "' has fewer than 2 keypoint types");
  log("train-classifier ", a.category, " layer=", a.layer, " c=", fmt(a.c), " samples=", s.features.size(),
      " types=", s.types.size());

  std::vector<std::size_t> all(s.features.size());
  std::iota(all.begin(), all.end(), 0);
  const auto models = train_one_vs_all(s, all, a.c, g.seed, g.thread_count());
  const fs::path dir = classifier_dir(a);
  std::string listing;
  for (const auto& model : models) {
    write_model(model, g.out(dir / (model.class_label + ".dclm")));
    listing += model.class_label + "\n";
  }
  io::write_file_atomic(g.out(dir / "models.txt"), listing);

  if (!a.sweep.empty()) {
    if (a.folds < 2) throw UsageError("--folds must be >= 2");
    std::vector<std::size_t> order = all;
    std::mt19937_64 rng(g.seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::string csv = "c,cv_accuracy\n";
    for (double c : parse_list(a.sweep)) {
      if (!(c > 0)) throw UsageError("sweep values must be > 0");
      int correct_total = 0;
      for (int f = 0; f < a.folds; ++f) {
        std::vector<std::size_t> train, held;
        for (std::size_t i = 0; i < order.size(); ++i) (static_cast<int>(i % a.folds) == f ? held : train).push_back(order[i]);
        if (held.empty() || train.empty()) continue;
        const auto fold_models = train_one_vs_all(s, train, c, g.seed, g.thread_count());
        correct_total += static_cast<int>(std::lround(accuracy(s, held, fold_models) * held.size()));
      }
      const std::string row = fmt(c) + "," + fmt(double(correct_total) / double(order.size()));
      csv += row + "\n";
      log("sweep c=", fmt(c), " cv_accuracy=", fmt(double(correct_total) / double(order.size())));
    }
    io::write_file_atomic(g.out(dir / "sweep.csv"), csv);
    std::cout << csv;
  }
  return 0;
}

std::vector<LinearModel> load_models(const fs::path& dir) {
  const fs::path listing = dir / "models.txt";
  if (!fs::exists(listing)) throw std::runtime_error("no models found in " + dir.string());
  std::vector<LinearModel> models;
  std::istringstream in(io::read_file(listing));
  std::string name;
  while (std::getline(in, name))
    if (!name.empty()) models.push_back(read_model(dir / (name + ".dclm")));
  return models;
}

int cmd_classify(const Globals& g, const ClassifierArgs& a) {
  const Manifest m = g.load();
  const auto records = m.select(a.category, parse_split(a.split));
  if (records.empty()) throw UsageError("no images for category '" + a.category + "' in split " + a.split);
  check_layer_everywhere(records, a.layer);
  const auto models = load_models(fs::path(g.out_dir) / classifier_dir(a));
  std::vector<std::string> types;
  for (const auto& mdl : models) types.push_back(mdl.class_label);
  const KeypointSamples s = collect_samples(m, records, a.layer, a.neighborhood, types);
  std::vector<std::size_t> all(s.features.size());
  std::iota(all.begin(), all.end(), 0);
  const double acc = accuracy(s, all, models);
  const std::string csv = "category,layer,split,samples,accuracy\n" + a.category + "," + a.layer + "," + a.split +
                          "," + std::to_string(all.size()) + "," + fmt(acc) + "\n";
  io::write_file_atomic(g.out(classifier_dir(a) / ("accuracy_" + a.split + ".csv")), csv);
  std::cout << csv;
  return 0;
}

// ---------------------------------------------------------------- detectors

struct DetectorArgs {
  std::string category, layer;
  std::vector<std::string> keypoints;
  DetectorConfig config;
  std::string split = "val";
  std::string alphas = "0.1";
};

fs::path detector_dir(const DetectorArgs& a) { return fs::path("detectors") / a.category / a.layer; }

int cmd_train_detector(const Globals& g, DetectorArgs a) {
  a.config.seed = g.seed;
  a.config.threads = 1;
  a.config.validate();
  const Manifest m = g.load();
  const auto records = m.select(a.category, Split::train);
  if (records.empty()) throw UsageError("no training images for category '" + a.category + "'");
  check_layer_everywhere(records, a.layer);
  std::vector<FeatureGrid> grids;
  std::vector<KeypointSet> kps;
  std::set<std::string> names;
  for (const auto* r : records) {
    auto k = m.keypoints(*r);
    if (!k) throw std::runtime_error("missing annotations for " + r->id);
    for (const auto& [name, p] : k->points) names.insert(name);
    grids.push_back(load_grid(*r, a.layer));
    kps.push_back(std::move(*k));
  }
  std::vector<std::string> todo = a.keypoints.empty() ? std::vector<std::string>(names.begin(), names.end()) : a.keypoints;
  std::vector<AnnotatedGrid> data;
  for (std::size_t i = 0; i < grids.size(); ++i) data.push_back({&grids[i], &kps[i]});
  log("train-detector ", a.category, " layer=", a.layer, " c=", fmt(a.config.c), " neighborhood=",
      a.config.neighborhood, " keypoints=", todo.size());

  std::vector<std::string> errors(todo.size());
  parallel_for(todo.size(), g.thread_count(), [&](std::size_t t) {
    try {
      const TrainingSet set = build_training_set(data, todo[t], a.config);
      const MiningResult r = train_detector(set, todo[t], a.config);
      write_model(r.model, g.out(detector_dir(a) / (todo[t] + ".dclm")));
      log("detector ", todo[t], ": ", set.positives.size(), " positives, ", r.active.size(), " of ",
          set.negatives.size(), " negatives active after ", r.scans, " scans");
    } catch (const std::exception& e) {
      errors[t] = e.what();
    }
  });
  std::vector<std::string> failed;
  std::string listing;
  for (std::size_t t = 0; t < todo.size(); ++t) {
    if (errors[t].empty()) {
      listing += todo[t] + "\n";
    } else {
      log(todo[t], ": ", errors[t]);
      failed.push_back(todo[t]);
    }
  }
  io::write_file_atomic(g.out(detector_dir(a) / "models.txt"), listing);
  report_failures(failed);
  return failed.empty() ? 0 : 1;
}

int cmd_predict(const Globals& g, DetectorArgs a) {
  a.config.threads = g.thread_count();
  a.config.validate();
  const Manifest m = g.load();
  const auto targets = m.select(a.category, parse_split(a.split));
  if (targets.empty()) throw UsageError("no images for category '" + a.category + "' in split " + a.split);
  const auto train = m.select(a.category, Split::train);
  check_layer_everywhere(targets, a.layer);
  const auto models = load_models(fs::path(g.out_dir) / detector_dir(a));
  log("predict ", a.category, " layer=", a.layer, " eta=", fmt(a.config.eta), " sigma=", fmt(a.config.sigma));

  // Prior: keypoints of the nearest annotated training instance.
  NNIndex index;
  std::vector<KeypointSet> train_kps;
  for (const auto* r : train)
    if (auto k = m.keypoints(*r)) {
      index.add(r->id, load_global(*r, a.layer));
      train_kps.push_back(std::move(*k));
    }

  std::vector<KeypointSet> plain, fused;
  for (const auto* r : targets) {
    const FeatureGrid grid = load_grid(*r, a.layer);
    const auto truth = m.keypoints(*r);
    const KeypointSet* neighbor = nullptr;
    if (index.size() > 0) {
      auto nn = index.knn(load_global(*r, a.layer), std::min<std::size_t>(2, index.size()));
      for (const auto& n : nn)
        if (n.id != r->id) {
          neighbor = &train_kps[n.index];
          break;
        }
    }
    KeypointSet p0, p1;
    p0.image_id = p1.image_id = r->id;
    if (truth) p0.bbox = p1.bbox = truth->bbox;
    for (const auto& model : models) {
      DetectorConfig flat = a.config;
      flat.eta = 0.0;
      const auto d = predict_keypoint(grid, model, std::nullopt, flat);
      p0.points[model.class_label] = {d.location.x, d.location.y, true};
      std::optional<Point> mu;
      if (neighbor)
        if (auto it = neighbor->points.find(model.class_label); it != neighbor->points.end() && it->second.visible)
          mu = Point{it->second.x, it->second.y};
      const auto f = predict_keypoint(grid, model, mu, a.config);
      p1.points[model.class_label] = {f.location.x, f.location.y, true};
    }
    plain.push_back(std::move(p0));
    fused.push_back(std::move(p1));
  }
  const std::string stem = "predict/" + a.category + "_" + a.layer;
  write_annotations(plain, g.out(stem + "_detector.csv"));
  write_annotations(fused, g.out(stem + "_prior.csv"));
  const auto alphas = parse_list(a.alphas);
  const std::string table =
      pck_table(m, {{a.layer + "_detector", &plain}, {a.layer + "_detector+prior", &fused}}, alphas);
  io::write_file_atomic(g.out(stem + "_pck.csv"), table);
  std::cout << table;
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string predictions;
  std::string alphas = "0.1,0.05,0.025";
  std::string method = "predicted";
};

int cmd_evaluate(const Globals& g, const EvaluateArgs& a) {
  const Manifest m = g.load();
  const auto preds = read_annotations(a.predictions);
  const std::string table = pck_table(m, {{a.method, &preds}}, parse_list(a.alphas));
  io::write_file_atomic(g.out("evaluate_" + a.method + ".csv"), table);
  std::cout << table;
  return 0;
}

// ---------------------------------------------------------------- db and viz

struct DbArgs {
  std::string layer;
  std::string split = "all";
  std::string output;
  bool rf = true;
};

int cmd_build_db(const Globals& g, const DbArgs& a) {
  const Manifest m = g.load();
  const auto records = m.select("", parse_split(a.split));
  check_layer_everywhere(records, a.layer);
  std::optional<PatchDatabase> db;
  for (const auto* r : records) {
    if (!r->image) continue;
    const Image img = load_image(*r);
    const FeatureGrid grid = load_grid(*r, a.layer);
    if (!db) db.emplace(grid.dim(), img.channels, grid.geometry().stride, a.rf ? grid.geometry().rf_size : 0);
    db->add_image(r->id, img, grid);
  }
  if (!db) throw UsageError("no images with layer '" + a.layer + "' to build a database from");
  const fs::path out = a.output.empty() ? g.out("db_" + a.layer + ".dcpd") : fs::path(a.output);
  db->save(out);
  log("build-db: ", db->size(), " patches -> ", out.string());
  return 0;
}

struct VizArgs {
  std::string image, layer, db;
  int k = 1;
  std::string cell = "0,0";
};

PatchDatabase load_db(const std::string& path) {
  if (path.empty()) throw UsageError("--db is required");
  if (!fs::exists(path)) throw std::runtime_error("missing patch database " + path);
  return PatchDatabase::load(path);
}

int cmd_viz_patches(const Globals& g, const VizArgs& a) {
  const Manifest m = g.load();
  const auto& r = m.at(a.image);
  const FeatureGrid grid = load_grid(r, a.layer);
  const PatchDatabase db = load_db(a.db);
  if (a.k < 1 || static_cast<std::size_t>(a.k) > db.size())
    throw UsageError("--k must lie in [1, " + std::to_string(db.size()) + "]");
  const Image out = patch_reconstruction(load_image(r), grid, db, a.k);
  const fs::path p = g.out("viz/" + a.image + "_" + a.layer + "_patches_k" + std::to_string(a.k) + ".png");
  write_png(out, p);
  log("viz patches -> ", p.string());
  return 0;
}

int cmd_viz_uniform(const Globals& g, const VizArgs& a) {
  const Manifest m = g.load();
  const auto& r = m.at(a.image);
  const GridGeometry geom = load_grid(r, a.layer).geometry();
  std::vector<Image> pool;
  for (const auto& other : m.records())
    if (other.id != r.id && other.image) pool.push_back(load_image(other));
  if (pool.empty()) pool.push_back(load_image(r));
  const Image out = uniform_rf_baseline(load_image(r), geom, pool, g.seed);
  const fs::path p = g.out("viz/" + a.image + "_" + a.layer + "_uniform_s" + std::to_string(g.seed) + ".png");
  write_png(out, p);
  log("viz uniform -> ", p.string());
  return 0;
}

int cmd_viz_rfavg(const Globals& g, const VizArgs& a) {
  const Manifest m = g.load();
  const auto& r = m.at(a.image);
  const FeatureGrid grid = load_grid(r, a.layer);
  int row = 0, col = 0;
  if (std::sscanf(a.cell.c_str(), "%d,%d", &row, &col) != 2 || !grid.contains({row, col}))
    throw UsageError("--cell must be row,col inside the grid");
  const PatchDatabase db = load_db(a.db);
  if (a.k < 1 || static_cast<std::size_t>(a.k) > db.size())
    throw UsageError("--k " + std::to_string(a.k) + " exceeds the database size " + std::to_string(db.size()));
  const Image out = rf_average(grid.at({row, col}), db, a.k);
  const fs::path p = g.out("viz/" + a.image + "_" + a.layer + "_r" + std::to_string(row) + "c" + std::to_string(col) +
                           "_rfavg_k" + std::to_string(a.k) + ".png");
  write_png(out, p);
  log("viz rfavg -> ", p.string());
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Dense correspondence, keypoint transfer and part detection over feature grids"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--manifest", g.manifest, "Dataset manifest (tab-separated)");
  app.add_option("--out-dir", g.out_dir, "Output directory")->capture_default_str();
  app.add_option("--seed", g.seed, "Seed for all randomness")->capture_default_str();
  app.add_option("--threads", g.threads, "Worker threads (0: DENSECORR_THREADS, else 1)")->capture_default_str();

  FeaturesArgs fa;
  auto* features = app.add_subcommand("features", "Compute dense gradient descriptors for every image");
  features->add_option("--layer", fa.layer, "Layer name to store the grids under")->capture_default_str();
  features->add_option("--stride", fa.descriptor.grid_stride)->capture_default_str();
  features->add_option("--radius", fa.descriptor.radius, "Half-width of the support")->capture_default_str();
  features->add_option("--spatial-bins", fa.descriptor.spatial_bins)->capture_default_str();
  features->add_option("--orientation-bins", fa.descriptor.orientation_bins)->capture_default_str();
  features->add_option("--box", fa.box, "Crop each bounding box and resize to this square side first");

  AlignArgs aa;
  auto* align = app.add_subcommand("align", "Align two images and warp the target into the source frame");
  align->add_option("--source", aa.source)->required();
  align->add_option("--target", aa.target)->required();
  add_flow_options(align, aa.f);

  TransferArgs ta;
  auto* transfer = app.add_subcommand("transfer", "Predict keypoints by aligning nearest neighbors");
  transfer->add_option("--target", ta.targets, "Target ids (default: every image of --split)");
  transfer->add_option("--split", ta.split, "Targets when none are named: train, val or all")->capture_default_str();
  transfer->add_option("--pool", ta.pool, "Neighbor pool split: train, val or all")->capture_default_str();
  transfer->add_option("--category", ta.category, "Restrict targets and pool to a category");
  transfer->add_option("--k", ta.k, "Neighbors to align")->capture_default_str();
  transfer->add_option("--top-n", ta.top_n, "Least deformed neighbors in the median")->capture_default_str();
  add_flow_options(transfer, ta.f);

  ClassifierArgs ca;
  auto* train_cls = app.add_subcommand("train-classifier", "Train one-vs-all keypoint classifiers");
  auto* classify = app.add_subcommand("classify", "Validation accuracy of trained keypoint classifiers");
  for (auto* cmd : {train_cls, classify}) {
    cmd->add_option("--category", ca.category)->required();
    cmd->add_option("--layer", ca.layer)->required();
    cmd->add_option("--neighborhood", ca.neighborhood, "Stacked cells per side")->capture_default_str();
  }
  train_cls->add_option("--c", ca.c, "SVM trade-off")->capture_default_str();
  train_cls->add_option("--sweep", ca.sweep, "Comma-separated C values for cross-validation");
  train_cls->add_option("--folds", ca.folds)->capture_default_str();
  classify->add_option("--split", ca.split)->capture_default_str();

  DetectorArgs da;
  auto* train_det = app.add_subcommand("train-detector", "Train sliding-window keypoint detectors");
  auto* predict = app.add_subcommand("predict", "Predict keypoints with detectors and a location prior");
  for (auto* cmd : {train_det, predict}) {
    cmd->add_option("--category", da.category)->required();
    cmd->add_option("--layer", da.layer)->required();
    cmd->add_option("--neighborhood", da.config.neighborhood, "Stacked cells per side")->capture_default_str();
  }
  train_det->add_option("--keypoint", da.keypoints, "Keypoint names (default: all)");
  train_det->add_option("--c", da.config.c)->capture_default_str();
  train_det->add_option("--positives", da.config.positives_per_keypoint)->capture_default_str();
  train_det->add_option("--hnm-rounds", da.config.hnm_rounds)->capture_default_str();
  train_det->add_option("--hnm-batch", da.config.hnm_batch)->capture_default_str();
  predict->add_option("--eta", da.config.eta, "Prior weight in the fusion")->capture_default_str();
  predict->add_option("--sigma", da.config.sigma, "Prior standard deviation in pixels")->capture_default_str();
  predict->add_option("--split", da.split)->capture_default_str();
  predict->add_option("--alpha", da.alphas, "Comma-separated PCK thresholds")->capture_default_str();

  EvaluateArgs ea;
  auto* evaluate = app.add_subcommand("evaluate", "PCK of a prediction file against the manifest annotations");
  evaluate->add_option("--predictions", ea.predictions)->required();
  evaluate->add_option("--alpha", ea.alphas)->capture_default_str();
  evaluate->add_option("--method", ea.method)->capture_default_str();

  DbArgs ba;
  auto* build_db = app.add_subcommand("build-db", "Build a patch database from images and their grids");
  build_db->add_option("--layer", ba.layer)->required();
  build_db->add_option("--split", ba.split)->capture_default_str();
  build_db->add_option("--output", ba.output, "Database path (default <out-dir>/db_<layer>.dcpd)");
  build_db->add_flag("!--no-rf", ba.rf, "Do not store rf crops");

  VizArgs va;
  auto* viz = app.add_subcommand("viz", "Feature visualizations");
  viz->require_subcommand(1);
  auto* viz_patches = viz->add_subcommand("patches", "Patch nearest-neighbor reconstruction");
  auto* viz_uniform = viz->add_subcommand("uniform", "Uniform-rf control reconstruction");
  auto* viz_rfavg = viz->add_subcommand("rfavg", "Average rf of a feature's nearest neighbors");
  for (auto* cmd : {viz_patches, viz_uniform, viz_rfavg}) {
    cmd->add_option("--image", va.image)->required();
    cmd->add_option("--layer", va.layer)->required();
  }
  for (auto* cmd : {viz_patches, viz_rfavg}) {
    cmd->add_option("--db", va.db, "Patch database file");
    cmd->add_option("--k", va.k, "Nearest neighbors to average")->capture_default_str();
  }
  viz_rfavg->add_option("--cell", va.cell, "Seed cell as row,col")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*features) return cmd_features(g, fa);
    if (*align) return cmd_align(g, aa);
    if (*transfer) return cmd_transfer(g, ta);
    if (*train_cls) return cmd_train_classifier(g, ca);
    if (*classify) return cmd_classify(g, ca);
    if (*train_det) return cmd_train_detector(g, da);
    if (*predict) return cmd_predict(g, da);
    if (*evaluate) return cmd_evaluate(g, ea);
    if (*build_db) return cmd_build_db(g, ba);
    if (*viz_patches) return cmd_viz_patches(g, va);
    if (*viz_uniform) return cmd_viz_uniform(g, va);
    if (*viz_rfavg) return cmd_viz_rfavg(g, va);
  } catch (const UsageError& e) {
    log("usage error: ", e.what());
    return 2;
  } catch (const InvalidArgument& e) {
    log("invalid argument: ", e.what());
    return 2;
  } catch (const std::exception& e) {
    log("error: ", e.what());
    return 1;
  }
  return 2;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<std::string> copy = args;
  std::vector<char*> argv;
  for (auto& s : copy) argv.push_back(s.data());
  argv.push_back(nullptr);
  return run_cli(static_cast<int>(copy.size()), argv.data());
}

}  // namespace densecorr
