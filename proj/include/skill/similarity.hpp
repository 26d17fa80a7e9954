#pragma once

// Label embeddings (LBL1 files) and the class-by-class cosine similarity
// matrix built from them.
//
// LBL1 layout (little-endian):
//   "LBL1" | count u32 | E u32 | count × [ name_len u16 | UTF-8 name | E × f32 ]

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "skill/binio.hpp"
#include "skill/dataset.hpp"
#include "skill/error.hpp"
#include "skill/numkit.hpp"

namespace skill {

struct LabelEmbeddings {
  std::vector<std::string> names;
  Matrix vectors;  // names.size() × E

  bool operator==(const LabelEmbeddings&) const = default;
};

inline Bytes encode_lbl1(const LabelEmbeddings& le) {
  require(le.names.size() == le.vectors.rows(), ErrorCode::CountMismatch, "LBL1: names vs vectors");
  ByteWriter w;
  w.raw("LBL1");
  w.u32(static_cast<std::uint32_t>(le.names.size()));
  w.u32(static_cast<std::uint32_t>(le.vectors.cols()));
  for (std::size_t i = 0; i < le.names.size(); ++i) {
    require(le.names[i].size() <= 0xFFFF, ErrorCode::InvalidArgument, "LBL1: name too long");
    w.u16(static_cast<std::uint16_t>(le.names[i].size()));
    w.raw(le.names[i]);
    w.f32s(le.vectors.row(i));
  }
  return w.take();
}

inline LabelEmbeddings decode_lbl1(std::span<const std::uint8_t> bytes, const std::string& what = "LBL1") {
  ByteReader r(bytes, what);
  if (bytes.size() < 4 || r.str(4) != "LBL1") fail(ErrorCode::BadMagic, what + ": missing LBL1 magic");
  const std::uint32_t count = r.u32();
  const std::uint32_t e = r.u32();
  LabelEmbeddings le;
  le.vectors = Matrix(0, e);
  std::vector<double> row(e);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    le.names.push_back(r.str(len));
    r.f32s(row);
    le.vectors.append_row(row);
  }
  require(r.done(), ErrorCode::TruncatedFile, what + ": trailing bytes");
  return le;
}

inline LabelEmbeddings load_label_embeddings(const std::filesystem::path& path) {
  return decode_lbl1(read_file(path), path.string());
}

class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;

  // Cosine similarity between every pair of label embeddings.
  explicit SimilarityMatrix(const LabelEmbeddings& le)
      : names_(le.names), dim_(le.vectors.cols()), sims_(le.names.size(), le.names.size()) {
    require(le.names.size() == le.vectors.rows(), ErrorCode::CountMismatch, "label names vs vectors");
    const std::size_t n = le.names.size();
    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) {
      norms[i] = std::sqrt(dot(le.vectors.row(i), le.vectors.row(i)));
      require(norms[i] > 0.0, ErrorCode::ZeroNormEmbedding, "zero-norm embedding for '" + le.names[i] + "'");
    }
    for (std::size_t i = 0; i < n; ++i) {
      sims_(i, i) = 1.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double c = std::clamp(dot(le.vectors.row(i), le.vectors.row(j)) / (norms[i] * norms[j]), -1.0, 1.0);
        sims_(i, j) = c;
        sims_(j, i) = c;
      }
    }
  }

  std::size_t size() const noexcept { return names_.size(); }
  std::size_t embedding_dim() const noexcept { return dim_; }
  const std::vector<std::string>& names() const noexcept { return names_; }
  double operator()(std::size_t i, std::size_t j) const { return sims_(i, j); }

 private:
  std::vector<std::string> names_;
  std::size_t dim_ = 0;
  Matrix sims_;
};

// Similarity matrix indexed by the registry's global class order. The label
// file must hold exactly one embedding per registered class, in that order.
inline SimilarityMatrix similarity_matrix(const LabelEmbeddings& le, const GlobalClassRegistry& registry) {
  require(le.names.size() == registry.size(), ErrorCode::CountMismatch,
          "label file has " + std::to_string(le.names.size()) + " entries, registry has " +
              std::to_string(registry.size()));
  for (std::size_t i = 0; i < registry.size(); ++i)
    require(le.names[i] == registry.at(i).name, ErrorCode::CountMismatch,
            "label entry " + std::to_string(i) + " is '" + le.names[i] + "', registry expects '" +
                registry.at(i).name + "'");
  return SimilarityMatrix(le);
}

inline SimilarityMatrix similarity_matrix(const std::filesystem::path& path, const GlobalClassRegistry& registry) {
  return similarity_matrix(load_label_embeddings(path), registry);
}

}  // namespace skill
