#pragma once

// Task fixtures: the in-memory TaskDataset, the EMB1 embedding file format
// with its JSON manifest, a seeded Gaussian-blob generator and the global
// class registry.
//
// EMB1 layout (little-endian):
//   "EMB1" | version u32 = 1 | dim u32 | class_count u32 | record_count u64
//   record_count × [ label u32 | dim × f32 ]
//
// Manifest (JSON):
//   { "name": ..., "task_id": ..., "dim": ..., "classes": [...],
//     "files": { "train": ..., "val": ..., "test": ... } }
// File paths are resolved relative to the manifest's directory.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "skill/binio.hpp"
#include "skill/error.hpp"
#include "skill/numkit.hpp"

namespace skill {

struct Split {
  std::vector<std::uint32_t> labels;
  Matrix x;  // one row per record

  Split() = default;
  explicit Split(std::size_t dim) : x(0, dim) {}

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return x.cols(); }

  void push(std::uint32_t label, std::span<const double> v) {
    x.append_row(v);
    labels.push_back(label);
  }

  bool operator==(const Split&) const = default;
};

struct TaskDataset {
  std::uint32_t task_id = 0;
  std::string name;
  std::size_t dim = 0;
  std::vector<std::string> classes;
  Split train;
  Split val;
  Split test;

  std::size_t num_classes() const noexcept { return classes.size(); }

  void validate() const {
    require(dim >= 1, ErrorCode::InvalidArgument, "task '" + name + "': dim must be >= 1");
    require(!classes.empty(), ErrorCode::InvalidArgument, "task '" + name + "': no classes");
    std::set<std::string> seen(classes.begin(), classes.end());
    require(seen.size() == classes.size(), ErrorCode::InvalidArgument,
            "task '" + name + "': duplicate class names");
    std::unordered_set<std::string> keys;
    for (const Split* s : {&train, &val, &test}) {
      require(s->labels.size() == s->x.rows(), ErrorCode::ShapeMismatch, "split label/row count mismatch");
      require(s->size() == 0 || s->dim() == dim, ErrorCode::DimMismatch,
              "task '" + name + "': split dim " + std::to_string(s->dim()) + " != " + std::to_string(dim));
      for (std::uint32_t l : s->labels)
        require(l < classes.size(), ErrorCode::LabelOutOfRange,
                "task '" + name + "': label " + std::to_string(l) + " >= " + std::to_string(classes.size()));
    }
    // splits must not share a record; identical records inside one split are allowed
    for (const Split* s : {&train, &val, &test}) {
      std::unordered_set<std::string> mine;
      for (std::size_t i = 0; i < s->size(); ++i) {
        std::string key(reinterpret_cast<const char*>(&s->labels[i]), sizeof(std::uint32_t));
        const auto row = s->x.row(i);
        key.append(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(double));
        require(!keys.contains(key), ErrorCode::InvalidArgument, "task '" + name + "': splits are not disjoint");
        mine.insert(std::move(key));
      }
      keys.merge(mine);
    }
  }

  bool operator==(const TaskDataset&) const = default;
};

// ---------------------------------------------------------------------------
// EMB1

inline Bytes encode_emb1(const Split& split, std::size_t dim, std::size_t class_count) {
  ByteWriter w;
  w.raw("EMB1");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(dim));
  w.u32(static_cast<std::uint32_t>(class_count));
  w.u64(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    w.u32(split.labels[i]);
    w.f32s(split.x.row(i));
  }
  return w.take();
}

inline Split decode_emb1(std::span<const std::uint8_t> bytes, std::size_t dim, std::size_t class_count,
                         const std::string& what = "EMB1") {
  ByteReader r(bytes, what);
  if (bytes.size() < 4 || r.str(4) != "EMB1") fail(ErrorCode::BadMagic, what + ": missing EMB1 magic");
  const std::uint32_t version = r.u32();
  require(version == 1, ErrorCode::BadMagic, what + ": unsupported version " + std::to_string(version));
  const std::uint32_t file_dim = r.u32();
  const std::uint32_t file_classes = r.u32();
  require(file_dim == dim, ErrorCode::DimMismatch,
          what + ": dim " + std::to_string(file_dim) + " != manifest " + std::to_string(dim));
  require(file_classes == class_count, ErrorCode::DimMismatch,
          what + ": class_count " + std::to_string(file_classes) + " != manifest " + std::to_string(class_count));
  const std::uint64_t count = r.u64();
  Split s(dim);
  std::vector<double> row(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t label = r.u32();
    require(label < class_count, ErrorCode::LabelOutOfRange,
            what + ": record " + std::to_string(i) + " label " + std::to_string(label));
    r.f32s(row);
    s.push(label, row);
  }
  require(r.done(), ErrorCode::TruncatedFile, what + ": trailing bytes after declared records");
  return s;
}

inline std::string file_stem_for(std::string_view name) {
  std::string out;
  for (char ch : name) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '_';
  return out.empty() ? std::string("task") : out;
}

inline std::filesystem::path write_task(const TaskDataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  const std::string stem = file_stem_for(ds.name);
  nlohmann::ordered_json files;
  for (auto [split_name, split] : {std::pair{"train", &ds.train}, std::pair{"val", &ds.val}, std::pair{"test", &ds.test}}) {
    const std::string file = stem + "." + split_name + ".emb";
    write_file(dir / file, encode_emb1(*split, ds.dim, ds.num_classes()));
    files[split_name] = file;
  }
  nlohmann::ordered_json manifest;
  manifest["name"] = ds.name;
  manifest["task_id"] = ds.task_id;
  manifest["dim"] = ds.dim;
  manifest["classes"] = ds.classes;
  manifest["files"] = files;
  const auto path = dir / (stem + ".json");
  write_text(path, manifest.dump(2) + "\n");
  return path;
}

inline TaskDataset load_task(const std::filesystem::path& manifest_path) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, manifest_path.string() + ": " + e.what());
  }
  TaskDataset ds;
  try {
    ds.name = m.at("name").get<std::string>();
    ds.task_id = m.value("task_id", 0u);
    ds.dim = m.at("dim").get<std::size_t>();
    ds.classes = m.at("classes").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoError, manifest_path.string() + ": " + e.what());
  }
  require(ds.dim >= 1, ErrorCode::InvalidArgument, manifest_path.string() + ": dim must be >= 1");
  const auto base = manifest_path.parent_path();
  const auto& files = m.at("files");
  for (auto [split_name, split] : {std::pair{"train", &ds.train}, std::pair{"val", &ds.val}, std::pair{"test", &ds.test}}) {
    if (!files.contains(split_name)) {
      *split = Split(ds.dim);
      continue;
    }
    const auto path = base / files.at(split_name).get<std::string>();
    *split = decode_emb1(read_file(path), ds.dim, ds.classes.size(), path.string());
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian blobs

struct SynthSpec {
  std::size_t num_classes = 5;
  std::size_t dim = 32;
  std::size_t train_per_class = 100;
  std::size_t val_per_class = 20;
  std::size_t test_per_class = 50;
  double separation = 8.0;
  double stddev = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    require(num_classes >= 1, ErrorCode::InvalidArgument, "synth: num_classes must be >= 1");
    require(dim >= 1, ErrorCode::InvalidArgument, "synth: dim must be >= 1");
    require(separation >= 0.0, ErrorCode::InvalidArgument, "synth: separation must be >= 0");
    require(stddev > 0.0, ErrorCode::InvalidArgument, "synth: stddev must be > 0");
  }
};

// Class means: seeded random unit directions scaled by the separation. When
// there are no more classes than dimensions the directions are made mutually
// orthogonal, so classes inside one task never collapse onto each other.
inline Matrix synth_class_means(const SynthSpec& spec) {
  spec.validate();
  RngStream rng = RngStream::derive(spec.seed, 0x6d65616e);
  Matrix means(spec.num_classes, spec.dim);
  const bool orthogonal = spec.num_classes <= spec.dim;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    auto row = means.row(c);
    for (;;) {
      for (double& v : row) v = rng.normal();
      if (orthogonal)
        for (std::size_t p = 0; p < c; ++p) {
          const double proj = dot(row, means.row(p));
          for (std::size_t j = 0; j < spec.dim; ++j) row[j] -= proj * means(p, j);
        }
      const double n = std::sqrt(dot(row, row));
      if (n > 1e-8) {
        for (double& v : row) v /= n;
        break;
      }
    }
  }
  for (double& v : means.data()) v *= spec.separation;
  return means;
}

inline std::vector<std::string> default_class_names(std::string_view task_name, std::size_t c) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < c; ++i) names.push_back(std::string(task_name) + "/class_" + std::to_string(i));
  return names;
}

// Samples are rounded to f32 so the in-memory dataset equals its EMB1 reload.
inline TaskDataset synth_task_from_means(const Matrix& means, const SynthSpec& spec, std::uint32_t task_id,
                                         std::string name, std::vector<std::string> class_names = {}) {
  spec.validate();
  require(means.rows() == spec.num_classes && means.cols() == spec.dim, ErrorCode::ShapeMismatch,
          "synth: means shape does not match spec");
  TaskDataset ds;
  ds.task_id = task_id;
  ds.name = std::move(name);
  ds.dim = spec.dim;
  ds.classes = class_names.empty() ? default_class_names(ds.name, spec.num_classes) : std::move(class_names);
  require(ds.classes.size() == spec.num_classes, ErrorCode::CountMismatch, "synth: class name count");
  RngStream rng = RngStream::derive(spec.seed, 0x73616d70);
  std::vector<double> v(spec.dim);
  auto fill = [&](Split& split, std::size_t per_class) {
    split = Split(spec.dim);
    for (std::size_t c = 0; c < spec.num_classes; ++c)
      for (std::size_t i = 0; i < per_class; ++i) {
        for (std::size_t j = 0; j < spec.dim; ++j) v[j] = to_f32(means(c, j) + spec.stddev * rng.normal());
        split.push(static_cast<std::uint32_t>(c), v);
      }
  };
  fill(ds.train, spec.train_per_class);
  fill(ds.val, spec.val_per_class);
  fill(ds.test, spec.test_per_class);
  return ds;
}

inline TaskDataset synth_task(const SynthSpec& spec, std::uint32_t task_id = 0, std::string name = "synth",
                              std::vector<std::string> class_names = {}) {
  return synth_task_from_means(synth_class_means(spec), spec, task_id, std::move(name), std::move(class_names));
}

// ---------------------------------------------------------------------------
// Global class registry: (task_id, class index) → flat global index.

class GlobalClassRegistry {
 public:
  struct Entry {
    std::uint32_t task_id;
    std::uint32_t class_index;
    std::string name;
    bool operator==(const Entry&) const = default;
  };

  void add_task(std::uint32_t task_id, const std::vector<std::string>& classes) {
    require(!has_task(task_id), ErrorCode::DuplicateTask, "registry already has task " + std::to_string(task_id));
    std::vector<Entry> added;
    for (std::size_t i = 0; i < classes.size(); ++i)
      added.push_back({task_id, static_cast<std::uint32_t>(i), classes[i]});
    const auto pos = std::lower_bound(entries_.begin(), entries_.end(), task_id,
                                      [](const Entry& e, std::uint32_t t) { return e.task_id < t; });
    entries_.insert(pos, added.begin(), added.end());
  }

  bool has_task(std::uint32_t task_id) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.task_id == task_id; });
  }

  std::size_t size() const noexcept { return entries_.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const Entry& at(std::size_t global) const { return entries_.at(global); }

  std::size_t global_index(std::uint32_t task_id, std::uint32_t class_index) const {
    const auto it = std::lower_bound(entries_.begin(), entries_.end(), std::pair{task_id, class_index},
                                     [](const Entry& e, const std::pair<std::uint32_t, std::uint32_t>& k) {
                                       return std::pair{e.task_id, e.class_index} < k;
                                     });
    require(it != entries_.end() && it->task_id == task_id && it->class_index == class_index,
            ErrorCode::InvalidArgument,
            "registry has no (" + std::to_string(task_id) + ", " + std::to_string(class_index) + ")");
    return static_cast<std::size_t>(it - entries_.begin());
  }

  const std::string& name(std::uint32_t task_id, std::uint32_t class_index) const {
    return entries_[global_index(task_id, class_index)].name;
  }

  bool operator==(const GlobalClassRegistry&) const = default;

 private:
  std::vector<Entry> entries_;
};

}  // namespace skill
