#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "skill/dataset.hpp"

namespace skill {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("skill_dataset_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorCode::InvalidArgument;
}

void write_manifest(const fs::path& dir, std::size_t dim, std::vector<std::string> classes) {
  nlohmann::json m;
  m["name"] = "hand";
  m["dim"] = dim;
  m["classes"] = classes;
  m["files"] = {{"train", "train.emb"}};
  std::ofstream(dir / "hand.json") << m.dump();
}

TEST(Emb1, MinimalFileLoads) {
  const auto dir = scratch_dir("minimal");
  Split s(3);
  s.push(0, std::vector<double>{1, 2, 3});
  s.push(1, std::vector<double>{-1, 0.5, 4});
  write_file(dir / "train.emb", encode_emb1(s, 3, 2));
  write_manifest(dir, 3, {"a", "b"});
  const TaskDataset ds = load_task(dir / "hand.json");
  EXPECT_EQ(ds.train.size(), 2u);
  EXPECT_EQ(ds.train.labels[1], 1u);
  EXPECT_EQ(ds.train.x(1, 1), 0.5);
  EXPECT_EQ(ds.test.size(), 0u);
}

TEST(Emb1, HeaderBytesAreLittleEndian) {
  Split s(2);
  s.push(1, std::vector<double>{1.0, -2.0});
  const Bytes b = encode_emb1(s, 2, 3);
  ASSERT_EQ(b.size(), 4u + 4 + 4 + 4 + 8 + 4 + 8);
  EXPECT_EQ(std::string(b.begin(), b.begin() + 4), "EMB1");
  EXPECT_EQ(b[4], 1);   // version
  EXPECT_EQ(b[8], 2);   // dim
  EXPECT_EQ(b[12], 3);  // class_count
  EXPECT_EQ(b[16], 1);  // record_count
  EXPECT_EQ(b[24], 1);  // label
  // 1.0f = 0x3F800000
  EXPECT_EQ(b[28], 0x00);
  EXPECT_EQ(b[31], 0x3F);
}

TEST(Emb1, LabelOutOfRange) {
  const auto dir = scratch_dir("label");
  Split s(3);
  s.push(2, std::vector<double>{0, 0, 0});
  write_file(dir / "train.emb", encode_emb1(s, 3, 3));  // encoded with 3 classes, manifest says 2
  Bytes b = encode_emb1(s, 3, 2);
  write_file(dir / "train.emb", b);
  write_manifest(dir, 3, {"a", "b"});
  EXPECT_EQ(code_of([&] { load_task(dir / "hand.json"); }), ErrorCode::LabelOutOfRange);
}

TEST(Emb1, BadMagicTruncationAndDim) {
  Split s(3);
  s.push(0, std::vector<double>{1, 2, 3});
  Bytes good = encode_emb1(s, 3, 1);
  Bytes bad = good;
  bad[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_emb1(bad, 3, 1); }), ErrorCode::BadMagic);
  Bytes cut(good.begin(), good.end() - 2);
  EXPECT_EQ(code_of([&] { decode_emb1(cut, 3, 1); }), ErrorCode::TruncatedFile);
  EXPECT_EQ(code_of([&] { decode_emb1(good, 4, 1); }), ErrorCode::DimMismatch);
}

TEST(WriteTask, RoundTripIsExact) {
  SynthSpec spec;
  spec.num_classes = 3;
  spec.dim = 6;
  spec.test_per_class = 0;
  spec.seed = 99;
  const TaskDataset ds = synth_task(spec, 4, "three way");
  const auto dir = scratch_dir("roundtrip");
  const auto manifest = write_task(ds, dir);
  const TaskDataset back = load_task(manifest);
  EXPECT_EQ(back, ds);
  EXPECT_EQ(back.test.size(), 0u);
  // payload bytes identical after re-encoding
  EXPECT_EQ(encode_emb1(back.train, 6, 3), encode_emb1(ds.train, 6, 3));
}

TEST(WriteTask, DimZeroRejected) {
  TaskDataset ds;
  ds.name = "empty";
  ds.classes = {"a"};
  const auto dir = scratch_dir("dimzero");
  EXPECT_EQ(code_of([&] { write_task(ds, dir); }), ErrorCode::InvalidArgument);
  EXPECT_TRUE(fs::is_empty(dir));
}

double nearest_mean_accuracy(const TaskDataset& ds, const Matrix& means) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ds.test.size(); ++i) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t c = 0; c < means.rows(); ++c) {
      double d = 0;
      for (std::size_t j = 0; j < ds.dim; ++j) d += std::pow(ds.test.x(i, j) - means(c, j), 2);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    hits += best == ds.test.labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(ds.test.size());
}

TEST(SynthTask, SeparatedClassesAreNearestMeanPerfect) {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.dim = 2;
  spec.separation = 10.0;
  spec.stddev = 1.0;
  spec.test_per_class = 500;
  spec.seed = 3;
  const TaskDataset ds = synth_task(spec);
  EXPECT_EQ(nearest_mean_accuracy(ds, synth_class_means(spec)), 1.0);
}

TEST(SynthTask, ZeroSeparationIsChance) {
  SynthSpec spec;
  spec.num_classes = 2;
  spec.dim = 2;
  spec.separation = 0.0;
  spec.test_per_class = 500;
  spec.seed = 3;
  const TaskDataset ds = synth_task(spec);
  // both clouds share one mean; classify by the sample means of the train split
  Matrix means(2, 2);
  std::vector<double> n(2, 0);
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    for (std::size_t j = 0; j < 2; ++j) means(ds.train.labels[i], j) += ds.train.x(i, j);
    n[ds.train.labels[i]] += 1;
  }
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t j = 0; j < 2; ++j) means(c, j) /= n[c];
  EXPECT_NEAR(nearest_mean_accuracy(ds, means), 0.5, 0.05);
}

TEST(SynthTask, DeterministicAndSeedSensitive) {
  SynthSpec spec;
  spec.seed = 17;
  EXPECT_EQ(synth_task(spec), synth_task(spec));
  SynthSpec other = spec;
  other.seed = 18;
  EXPECT_NE(synth_task(spec).train, synth_task(other).train);
}

TEST(SynthTask, MeansAreOrthogonalWithinATask) {
  SynthSpec spec;
  spec.num_classes = 5;
  spec.dim = 8;
  spec.separation = 3.0;
  const Matrix m = synth_class_means(spec);
  for (std::size_t a = 0; a < 5; ++a) {
    EXPECT_NEAR(std::sqrt(dot(m.row(a), m.row(a))), 3.0, 1e-12);
    for (std::size_t b = a + 1; b < 5; ++b) EXPECT_NEAR(dot(m.row(a), m.row(b)), 0.0, 1e-10);
  }
}

TEST(SynthSpec, RejectsNonPositiveStd) {
  SynthSpec spec;
  spec.stddev = 0.0;
  EXPECT_EQ(code_of([&] { synth_task(spec); }), ErrorCode::InvalidArgument);
}

TEST(GlobalClassRegistry, CountAndOrderStability) {
  GlobalClassRegistry a, b;
  a.add_task(2, {"x", "y"});
  a.add_task(0, {"p", "q", "r"});
  a.add_task(1, {"m"});
  b.add_task(0, {"p", "q", "r"});
  b.add_task(1, {"m"});
  b.add_task(2, {"x", "y"});
  EXPECT_EQ(a.size(), 6u);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.global_index(1, 0), 3u);
  EXPECT_EQ(a.name(2, 1), "y");
  EXPECT_EQ(code_of([&] { a.add_task(1, {"again"}); }), ErrorCode::DuplicateTask);
}

TEST(TaskDataset, OverlappingSplitsRejected) {
  TaskDataset ds;
  ds.name = "dup";
  ds.dim = 2;
  ds.classes = {"a", "b"};
  ds.train = Split(2);
  ds.val = Split(2);
  ds.test = Split(2);
  ds.train.push(0, std::vector<double>{1, 1});
  ds.test.push(0, std::vector<double>{1, 1});
  EXPECT_EQ(code_of([&] { ds.validate(); }), ErrorCode::InvalidArgument);
}

}  // namespace
}  // namespace skill
