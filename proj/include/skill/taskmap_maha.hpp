#pragma once

// Mahalanobis task mapper. Teachers share their class means plus a few
// exemplars per class; students pool every exemplar, fit one tied covariance
// and route a test input to the owner of the nearest class mean under it.
//
// Share wire layout (little-endian):
//   task_id u32 | c u32 | D u32 | m u32 | counts c×u32 | means c×D f32 |
//   exemplars Σcounts×D f32 (class-major)

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skill/binio.hpp"
#include "skill/dataset.hpp"
#include "skill/error.hpp"
#include "skill/numkit.hpp"

namespace skill {

inline constexpr std::size_t kDefaultExemplarsPerClass = 5;

inline Matrix class_means(const Split& data, std::size_t num_classes) {
  require(num_classes >= 1, ErrorCode::InvalidArgument, "class_means needs at least one class");
  Matrix means(num_classes, data.dim());
  std::vector<std::size_t> count(num_classes, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::uint32_t y = data.labels[i];
    require(y < num_classes, ErrorCode::LabelOutOfRange, "label out of range in class_means");
    ++count[y];
    for (std::size_t j = 0; j < data.dim(); ++j) means(y, j) += data.x(i, j);
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    require(count[c] > 0, ErrorCode::EmptyClass, "class " + std::to_string(c) + " has no samples");
    for (std::size_t j = 0; j < data.dim(); ++j) means(c, j) /= static_cast<double>(count[c]);
  }
  return means;
}

struct MahaTeacherShare {
  std::uint32_t task_id = 0;
  std::uint32_t m = 0;             // requested exemplars per class
  Matrix means;                    // c×D
  std::vector<Matrix> exemplars;   // per class, rows are samples

  std::size_t classes() const noexcept { return means.rows(); }
  std::size_t dim() const noexcept { return means.cols(); }
  std::size_t exemplar_count() const {
    std::size_t n = 0;
    for (const auto& e : exemplars) n += e.rows();
    return n;
  }

  void validate() const {
    require(classes() >= 1, ErrorCode::InvalidArgument, "share has no classes");
    require(exemplars.size() == classes(), ErrorCode::ShapeMismatch, "share exemplar groups != classes");
    for (const auto& e : exemplars) {
      require(e.rows() >= 1, ErrorCode::EmptyClass, "share class has no exemplars");
      require(e.cols() == dim(), ErrorCode::DimMismatch, "exemplar dim != mean dim");
    }
  }

  bool operator==(const MahaTeacherShare&) const = default;
};

// m exemplars per class without replacement (the whole class when smaller),
// kept in their original order.
inline MahaTeacherShare sample_shared(const Split& data, std::size_t num_classes, std::size_t m,
                                      std::uint64_t seed, std::uint32_t task_id = 0) {
  require(m >= 1, ErrorCode::InvalidArgument, "m must be >= 1");
  MahaTeacherShare share;
  share.task_id = task_id;
  share.m = static_cast<std::uint32_t>(m);
  share.means = class_means(data, num_classes);
  RngStream rng = RngStream::derive(seed, 0x6d616861ULL ^ task_id);
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  for (auto& idx : by_class) {
    if (idx.size() > m) {
      rng.shuffle(idx);
      idx.resize(m);
      std::sort(idx.begin(), idx.end());
    }
    Matrix e(0, data.dim());
    for (std::size_t i : idx) e.append_row(data.x.row(i));
    share.exemplars.push_back(std::move(e));
  }
  return share;
}

struct MahaAssignment {
  std::uint32_t task_id = 0;
  std::uint32_t class_index = 0;
  std::size_t bank_index = 0;
  double distance = 0.0;  // squared
};

class MahaBank {
 public:
  struct Owner {
    std::uint32_t task_id;
    std::uint32_t class_index;
    bool operator==(const Owner&) const = default;
  };

  // Shares are kept sorted by task_id so pooling does not depend on arrival.
  void add_share(MahaTeacherShare share) {
    share.validate();
    require(!has_task(share.task_id), ErrorCode::DuplicateTask,
            "bank already holds task " + std::to_string(share.task_id));
    require(shares_.empty() || share.dim() == dim(), ErrorCode::DimMismatch, "share dim differs from bank");
    const auto pos = std::lower_bound(shares_.begin(), shares_.end(), share.task_id,
                                      [](const MahaTeacherShare& s, std::uint32_t t) { return s.task_id < t; });
    shares_.insert(pos, std::move(share));
    chol_.reset();
  }

  bool has_task(std::uint32_t task_id) const {
    return std::any_of(shares_.begin(), shares_.end(), [&](const auto& s) { return s.task_id == task_id; });
  }

  // Σ̂ = (1/N) Σ_c Σ_{i∈c} (xᵢ−x̄_c)(xᵢ−x̄_c)ᵀ over pooled exemplars, where x̄_c
  // is the exemplar mean of class c; then ε = 1e-6·tr(Σ̂)/D (1e-6 when the
  // trace is zero) is added to the diagonal before factorizing.
  void finalize() {
    if (chol_) return;
    require(!shares_.empty(), ErrorCode::EmptyBank, "no shares to finalize");
    const std::size_t d = dim();
    owners_.clear();
    means_ = Matrix(0, d);
    Matrix scatter(d, d);
    std::size_t pooled = 0;
    Vector diff(d);
    for (const auto& s : shares_) {
      for (std::size_t c = 0; c < s.classes(); ++c) {
        owners_.push_back({s.task_id, static_cast<std::uint32_t>(c)});
        means_.append_row(s.means.row(c));
        const Matrix& e = s.exemplars[c];
        Vector xbar(d, 0.0);
        for (std::size_t i = 0; i < e.rows(); ++i)
          for (std::size_t j = 0; j < d; ++j) xbar[j] += e(i, j);
        for (double& v : xbar) v /= static_cast<double>(e.rows());
        for (std::size_t i = 0; i < e.rows(); ++i) {
          for (std::size_t j = 0; j < d; ++j) diff[j] = e(i, j) - xbar[j];
          for (std::size_t a = 0; a < d; ++a)
            for (std::size_t b = 0; b <= a; ++b) scatter(a, b) += diff[a] * diff[b];
        }
        pooled += e.rows();
      }
    }
    double trace = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b <= a; ++b) {
        scatter(a, b) /= static_cast<double>(pooled);
        scatter(b, a) = scatter(a, b);
      }
      trace += scatter(a, a);
    }
    epsilon_ = trace > 0.0 ? 1e-6 * trace / static_cast<double>(d) : 1e-6;
    pooled_ = pooled;
    cov_ = scatter;
    factorize();
  }

  // Finalized bank from explicit means and covariance; no exemplars, ε = 0.
  static MahaBank from_parts(std::vector<Owner> owners, Matrix means, Matrix covariance) {
    require(owners.size() == means.rows() && !owners.empty(), ErrorCode::ShapeMismatch, "owners != mean rows");
    require(covariance.rows() == means.cols() && covariance.cols() == means.cols(), ErrorCode::DimMismatch,
            "covariance shape != D×D");
    MahaBank b;
    b.owners_ = std::move(owners);
    b.means_ = std::move(means);
    b.cov_ = std::move(covariance);
    b.epsilon_ = 0.0;
    b.factorize();
    return b;
  }

  bool finalized() const noexcept { return chol_.has_value(); }
  std::size_t dim() const {
    if (!shares_.empty()) return shares_.front().dim();
    return means_.cols();
  }
  std::size_t class_count() const noexcept { return owners_.size(); }
  std::size_t pooled_count() const noexcept { return pooled_; }
  double epsilon() const noexcept { return epsilon_; }
  const Matrix& covariance() const noexcept { return cov_; }
  const Matrix& means() const noexcept { return means_; }
  const std::vector<Owner>& owners() const noexcept { return owners_; }
  const std::vector<MahaTeacherShare>& shares() const noexcept { return shares_; }
  std::vector<std::uint32_t> tasks() const {
    std::vector<std::uint32_t> out;
    for (const auto& s : shares_) out.push_back(s.task_id);
    return out;
  }

  // L⁻¹x for the Cholesky factor L of Σ̂+εI.
  Vector whiten(std::span<const double> x) const {
    require(finalized(), ErrorCode::NotFinalized, "mahalanobis bank not finalized");
    return chol_->forward(x);
  }

  // Squared distance between a whitened query and class mean `index`.
  double whitened_distance(std::span<const double> z, std::size_t index) const {
    const auto w = white_means_.row(index);
    double s = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) s += (z[j] - w[j]) * (z[j] - w[j]);
    return s;
  }

  double distance(std::span<const double> x, std::size_t index) const {
    return whitened_distance(whiten(x), index);
  }

  bool operator==(const MahaBank& o) const {
    return shares_ == o.shares_ && owners_ == o.owners_ && means_ == o.means_ && cov_ == o.cov_ &&
           epsilon_ == o.epsilon_ && pooled_ == o.pooled_ && finalized() == o.finalized();
  }

 private:
  void factorize() {
    Matrix reg = cov_;
    for (std::size_t a = 0; a < reg.rows(); ++a) reg(a, a) += epsilon_;
    try {
      chol_.emplace(reg);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotPositiveDefinite) throw;
      fail(ErrorCode::SingularAfterRegularization, std::string("tied covariance: ") + e.what());
    }
    white_means_ = Matrix(0, means_.cols());
    for (std::size_t i = 0; i < means_.rows(); ++i) white_means_.append_row(chol_->forward(means_.row(i)));
  }

  std::vector<MahaTeacherShare> shares_;
  std::vector<Owner> owners_;
  Matrix means_;
  Matrix cov_;
  double epsilon_ = 0.0;
  std::size_t pooled_ = 0;
  std::optional<Cholesky> chol_;
  Matrix white_means_;
};

inline MahaBank fit_tied_covariance(std::vector<MahaTeacherShare> shares) {
  require(!shares.empty(), ErrorCode::EmptyBank, "fit_tied_covariance needs at least one share");
  MahaBank bank;
  for (auto& s : shares) bank.add_share(std::move(s));
  bank.finalize();
  return bank;
}

// argmin_c (x−μ_c)ᵀ(Σ̂+εI)⁻¹(x−μ_c); ties go to the lowest (task_id, class).
inline MahaAssignment map_task_maha(const MahaBank& bank, std::span<const double> x) {
  require(bank.finalized(), ErrorCode::NotFinalized, "mahalanobis bank not finalized");
  require(x.size() == bank.dim(), ErrorCode::DimMismatch, "query dim != bank dim");
  MahaAssignment best;
  best.distance = std::numeric_limits<double>::infinity();
  const Vector z = bank.whiten(x);
  for (std::size_t i = 0; i < bank.class_count(); ++i) {
    const double d = bank.whitened_distance(z, i);
    if (d < best.distance) {
      best = {bank.owners()[i].task_id, bank.owners()[i].class_index, i, d};
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Serialization

inline void encode_share(ByteWriter& w, const MahaTeacherShare& s) {
  w.u32(s.task_id);
  w.u32(static_cast<std::uint32_t>(s.classes()));
  w.u32(static_cast<std::uint32_t>(s.dim()));
  w.u32(s.m);
  for (const auto& e : s.exemplars) w.u32(static_cast<std::uint32_t>(e.rows()));
  w.f32s(s.means.data());
  for (const auto& e : s.exemplars) w.f32s(e.data());
}

inline MahaTeacherShare decode_share(ByteReader& r) {
  MahaTeacherShare s;
  s.task_id = r.u32();
  const std::uint32_t c = r.u32();
  const std::uint32_t d = r.u32();
  s.m = r.u32();
  r.need(static_cast<std::size_t>(c) * 4);
  std::vector<std::uint32_t> counts(c);
  std::size_t total = 0;
  for (auto& n : counts) {
    n = r.u32();
    total += n;
  }
  r.need((static_cast<std::size_t>(c) + total) * d * 4);
  s.means = Matrix(c, d);
  r.f32s(s.means.data());
  for (std::uint32_t n : counts) {
    Matrix e(n, d);
    r.f32s(e.data());
    s.exemplars.push_back(std::move(e));
  }
  s.validate();
  return s;
}

inline std::size_t share_wire_size(std::size_t c, std::size_t d, std::size_t exemplars) {
  return 16 + 4 * c + 4 * d * (c + exemplars);
}

}  // namespace skill
