#pragma once

// Per-task linear classification heads over the frozen feature space:
// softmax cross-entropy training, prediction, p-norm row normalization,
// cherry-picked concatenation and similarity-driven transfer initialization.
//
// Wire layout (little-endian):
//   task_id u32 | c u32 | D u32 | norm tag u8 | c×D f32 weights | c f32 bias
// norm tag: 0 = unnormalized, 255 = infinity norm, otherwise the integer p.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skill/binio.hpp"
#include "skill/dataset.hpp"
#include "skill/error.hpp"
#include "skill/numkit.hpp"
#include "skill/similarity.hpp"

namespace skill {

inline constexpr double kInfNorm = std::numeric_limits<double>::infinity();

inline double pnorm(std::span<const double> v, double p) {
  if (std::isinf(p)) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  }
  double s = 0.0;
  for (double x : v) s += std::pow(std::abs(x), p);
  return std::pow(s, 1.0 / p);
}

struct Head {
  std::uint32_t task_id = 0;
  Matrix weights;  // c × D
  Vector bias;     // c
  std::optional<double> norm_p;

  std::size_t classes() const noexcept { return weights.rows(); }
  std::size_t dim() const noexcept { return weights.cols(); }

  void validate() const {
    require(classes() >= 1, ErrorCode::InvalidArgument, "head has no classes");
    require(bias.size() == classes(), ErrorCode::ShapeMismatch, "head bias length != class count");
    for (double v : weights.data()) require(std::isfinite(v), ErrorCode::InvalidArgument, "non-finite head weight");
    for (double v : bias) require(std::isfinite(v), ErrorCode::InvalidArgument, "non-finite head bias");
  }

  bool operator==(const Head&) const = default;
};

inline Vector predict(const Head& h, std::span<const double> x) {
  require(x.size() == h.dim(), ErrorCode::DimMismatch,
          "predict: |x|=" + std::to_string(x.size()) + ", head D=" + std::to_string(h.dim()));
  Vector s = matvec(h.weights, x);
  for (std::size_t i = 0; i < s.size(); ++i) s[i] += h.bias[i];
  return s;
}

inline std::uint32_t predict_class(const Head& h, std::span<const double> x) {
  return static_cast<std::uint32_t>(argmax(predict(h, x)));
}

inline double head_accuracy(const Head& h, const Split& split) {
  if (split.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < split.size(); ++i) hits += predict_class(h, split.x.row(i)) == split.labels[i];
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

inline Head normalize_rows(const Head& h, double p = kInfNorm) {
  require(p >= 1.0, ErrorCode::InvalidArgument, "norm order must be >= 1");
  Head out = h;
  for (std::size_t r = 0; r < h.classes(); ++r) {
    const double n = pnorm(h.weights.row(r), p);
    require(n > 0.0, ErrorCode::ZeroNormRow, "row " + std::to_string(r) + " has zero norm");
    for (double& v : out.weights.row(r)) v /= n;
    out.bias[r] /= n;
  }
  out.norm_p = p;
  return out;
}

// ---------------------------------------------------------------------------
// Loss and gradient

struct LossGrad {
  double loss = 0.0;
  Matrix grad_w;
  Vector grad_b;
};

namespace detail {

// ∂‖w‖_p / ∂w, accumulated as coef · ∇n into g.
inline void add_norm_gradient(std::span<const double> w, double p, double n, double coef, std::span<double> g) {
  if (std::isinf(p)) {
    std::size_t j = 0;
    for (std::size_t k = 1; k < w.size(); ++k)
      if (std::abs(w[k]) > std::abs(w[j])) j = k;
    g[j] += coef * (w[j] > 0 ? 1.0 : (w[j] < 0 ? -1.0 : 0.0));
    return;
  }
  const double denom = std::pow(n, p - 1.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double s = w[k] > 0 ? 1.0 : (w[k] < 0 ? -1.0 : 0.0);
    g[k] += coef * s * std::pow(std::abs(w[k]), p - 1.0) / denom;
  }
}

}  // namespace detail

// Mean softmax cross-entropy over the selected rows plus 0.5·l2·‖W‖².
// With norm_p set, scores are computed through row-normalized parameters
// (w/‖w‖_p, b/‖w‖_p) and the gradient flows through the normalization.
inline LossGrad softmax_loss_grad(const Matrix& w, std::span<const double> b, const Matrix& x,
                                  std::span<const std::uint32_t> labels, std::span<const std::size_t> rows,
                                  double l2 = 0.0, std::optional<double> norm_p = std::nullopt) {
  const std::size_t c = w.rows();
  const std::size_t d = w.cols();
  require(x.cols() == d, ErrorCode::DimMismatch, "loss: feature dim != head dim");
  LossGrad out{0.0, Matrix(c, d), Vector(c, 0.0)};
  std::vector<double> norms(c, 1.0);
  if (norm_p)
    for (std::size_t k = 0; k < c; ++k) {
      norms[k] = pnorm(w.row(k), *norm_p);
      require(norms[k] > 0.0, ErrorCode::ZeroNormRow, "normalized training hit a zero-norm row");
    }
  std::vector<double> raw(c), z(c), norm_coef(c, 0.0);
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (std::size_t idx : rows) {
    const auto xi = x.row(idx);
    for (std::size_t k = 0; k < c; ++k) {
      raw[k] = dot(w.row(k), xi) + b[k];
      z[k] = raw[k] / norms[k];
    }
    const double lse = logsumexp(z);
    const std::uint32_t y = labels[idx];
    out.loss += (lse - z[y]) * inv_n;
    for (std::size_t k = 0; k < c; ++k) {
      const double delta = (std::exp(z[k] - lse) - (k == y ? 1.0 : 0.0)) * inv_n;
      if (delta == 0.0) continue;
      auto g = out.grad_w.row(k);
      const double s = delta / norms[k];
      for (std::size_t j = 0; j < d; ++j) g[j] += s * xi[j];
      out.grad_b[k] += s;
      if (norm_p) norm_coef[k] -= delta * raw[k] / (norms[k] * norms[k]);
    }
  }
  if (norm_p)
    for (std::size_t k = 0; k < c; ++k) detail::add_norm_gradient(w.row(k), *norm_p, norms[k], norm_coef[k], out.grad_w.row(k));
  if (l2 > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < w.data().size(); ++i) {
      sq += w.data()[i] * w.data()[i];
      out.grad_w.data()[i] += l2 * w.data()[i];
    }
    out.loss += 0.5 * l2 * sq;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training

enum class Optimizer { SgdMomentum, Adam };

struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 0.01;
  std::size_t batch_size = 32;
  double momentum = 0.9;
  double l2 = 0.0;
  std::uint64_t seed = 0;
  bool normalized = false;  // train through w/‖w‖_p and store the normalized head
  double norm_p = kInfNorm;
  Optimizer optimizer = Optimizer::SgdMomentum;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const {
    require(epochs >= 1, ErrorCode::InvalidArgument, "epochs must be >= 1");
    require(lr >= 0.0 && std::isfinite(lr), ErrorCode::InvalidArgument, "lr must be finite and >= 0");
    require(batch_size >= 1, ErrorCode::InvalidArgument, "batch_size must be >= 1");
    require(momentum >= 0.0 && momentum < 1.0, ErrorCode::InvalidArgument, "momentum must be in [0, 1)");
    require(norm_p >= 1.0, ErrorCode::InvalidArgument, "norm_p must be >= 1");
  }
};

// Called once before the first update (epoch 0) and after every epoch with the
// full-training-set loss and the head as it would be returned at that point.
using EpochCallback = std::function<void(std::size_t epoch, double loss, const Head& head)>;

namespace detail {

class ParamUpdater {
 public:
  ParamUpdater(const TrainConfig& cfg, std::size_t n) : cfg_(cfg), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    if (cfg_.optimizer == Optimizer::Adam) {
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
        v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
        params[i] -= cfg_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.adam_eps);
      }
      return;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = cfg_.momentum * m_[i] - cfg_.lr * grad[i];
      params[i] += m_[i];
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

inline void check_class_coverage(const Split& train, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::uint32_t l : train.labels) {
    require(l < num_classes, ErrorCode::LabelOutOfRange, "training label out of range");
    ++counts[l];
  }
  for (std::size_t k = 0; k < num_classes; ++k)
    require(counts[k] > 0, ErrorCode::MissingClassSamples, "class " + std::to_string(k) + " has no training samples");
}

inline std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace detail

// Continues training from `init` (its norm mode is ignored; cfg.normalized
// decides how the parameters are used).
inline Head train_head_from(Head init, const Split& train, const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  init.validate();
  require(init.classes() >= 2, ErrorCode::InvalidArgument, "a head needs at least 2 classes to decide");
  require(train.dim() == init.dim(), ErrorCode::DimMismatch,
          "train split dim " + std::to_string(train.dim()) + " != head dim " + std::to_string(init.dim()));
  detail::check_class_coverage(train, init.classes());

  std::optional<double> norm;
  if (cfg.normalized) norm.emplace(cfg.norm_p);
  Head raw = std::move(init);
  raw.norm_p.reset();
  auto current = [&] { return cfg.normalized ? normalize_rows(raw, cfg.norm_p) : raw; };
  const auto all_rows = detail::iota_rows(train.size());
  auto full_loss = [&] {
    return softmax_loss_grad(raw.weights, raw.bias, train.x, train.labels, all_rows, cfg.l2, norm).loss;
  };
  if (on_epoch) on_epoch(0, full_loss(), current());

  detail::ParamUpdater upd_w(cfg, raw.weights.data().size());
  detail::ParamUpdater upd_b(cfg, raw.bias.size());
  RngStream rng = RngStream::derive(cfg.seed, 0x68656164);
  std::vector<std::size_t> order = all_rows;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, end - start);
      const LossGrad g = softmax_loss_grad(raw.weights, raw.bias, train.x, train.labels, batch, cfg.l2, norm);
      upd_w.step(raw.weights.data(), g.grad_w.data());
      upd_b.step(raw.bias, g.grad_b);
    }
    if (on_epoch) on_epoch(epoch, full_loss(), current());
  }
  Head out = current();
  out.validate();
  return out;
}

inline Head train_head(const Split& train, std::size_t num_classes, const TrainConfig& cfg, std::uint32_t task_id = 0,
                       const EpochCallback& on_epoch = {}) {
  require(num_classes >= 2, ErrorCode::InvalidArgument, "a head needs at least 2 classes to decide");
  require(train.dim() >= 1, ErrorCode::DimMismatch, "training split has no feature dimension");
  detail::check_class_coverage(train, num_classes);
  Head init{task_id, Matrix(num_classes, train.dim()), Vector(num_classes, 0.0), std::nullopt};
  if (cfg.normalized) {
    // zero rows have no norm to divide by
    RngStream rng = RngStream::derive(cfg.seed, 0x696e6974);
    const double scale = 1.0 / std::sqrt(static_cast<double>(train.dim()));
    for (double& v : init.weights.data()) v = scale * rng.normal();
  }
  return train_head_from(std::move(init), train, cfg, on_epoch);
}

// ---------------------------------------------------------------------------
// Concatenation and transfer

struct HeadSelection {
  const Head* head;
  std::vector<std::uint32_t> rows;
};

inline Head concat_heads(const std::vector<HeadSelection>& selected, std::uint32_t task_id) {
  require(!selected.empty(), ErrorCode::InvalidArgument, "concat_heads: nothing selected");
  const Head& first = *selected.front().head;
  Head out{task_id, Matrix(0, first.dim()), {}, first.norm_p};
  for (const auto& sel : selected) {
    require(sel.head->dim() == first.dim(), ErrorCode::DimMismatch, "concat_heads: source dims differ");
    require(sel.head->norm_p == first.norm_p, ErrorCode::MixedNormModes, "concat_heads: sources use different norms");
    for (std::uint32_t r : sel.rows) {
      require(r < sel.head->classes(), ErrorCode::InvalidArgument, "concat_heads: row out of range");
      out.weights.append_row(sel.head->weights.row(r));
      out.bias.push_back(sel.head->bias[r]);
    }
  }
  out.validate();
  return out;
}

// Rows for the classes of `new_task_id` (as listed in the registry): copied
// from the most similar old class when its similarity reaches the threshold,
// infinity-normalized; otherwise seeded N(0, 1/D) with zero bias. Ties go to
// the lowest (task_id, class index).
inline Head transfer_init(std::uint32_t new_task_id, const GlobalClassRegistry& registry,
                          const std::map<std::uint32_t, Head>& old_heads, const SimilarityMatrix& sims,
                          double threshold, std::size_t dim, std::uint64_t seed) {
  require(sims.size() == registry.size(), ErrorCode::CountMismatch, "similarity matrix does not cover the registry");
  RngStream rng = RngStream::derive(seed, 0x7866657200ULL + new_task_id);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  Head out{new_task_id, Matrix(0, dim), {}, std::nullopt};
  std::vector<double> row(dim);
  for (std::size_t g = 0; g < registry.size(); ++g) {
    if (registry.at(g).task_id != new_task_id) continue;
    std::optional<std::size_t> best;
    for (std::size_t o = 0; o < registry.size(); ++o) {
      const auto& e = registry.at(o);
      if (e.task_id == new_task_id || !old_heads.contains(e.task_id)) continue;
      if (!best || sims(g, o) > sims(g, *best)) best = o;
    }
    if (best && sims(g, *best) >= threshold) {
      const auto& e = registry.at(*best);
      const Head& src = old_heads.at(e.task_id);
      require(src.dim() == dim, ErrorCode::DimMismatch, "transfer source head dim mismatch");
      const double n = pnorm(src.weights.row(e.class_index), kInfNorm);
      require(n > 0.0, ErrorCode::ZeroNormRow, "transfer source row has zero norm");
      for (std::size_t j = 0; j < dim; ++j) row[j] = src.weights(e.class_index, j) / n;
      out.weights.append_row(row);
      out.bias.push_back(src.bias[e.class_index] / n);
    } else {
      for (double& v : row) v = scale * rng.normal();
      out.weights.append_row(row);
      out.bias.push_back(0.0);
    }
  }
  require(out.classes() >= 1, ErrorCode::InvalidArgument, "registry has no classes for the new task");
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::uint8_t norm_tag(const std::optional<double>& p) {
  if (!p) return 0;
  if (std::isinf(*p)) return 255;
  require(*p >= 1.0 && *p < 255.0 && *p == std::floor(*p), ErrorCode::InvalidArgument,
          "only integer p in [1, 254] or infinity can be serialized");
  return static_cast<std::uint8_t>(*p);
}

inline std::optional<double> norm_from_tag(std::uint8_t tag) {
  if (tag == 0) return std::nullopt;
  if (tag == 255) return kInfNorm;
  return static_cast<double>(tag);
}

inline void encode_head(ByteWriter& w, const Head& h) {
  w.u32(h.task_id);
  w.u32(static_cast<std::uint32_t>(h.classes()));
  w.u32(static_cast<std::uint32_t>(h.dim()));
  w.u8(norm_tag(h.norm_p));
  w.f32s(h.weights.data());
  w.f32s(h.bias);
}

inline Head decode_head(ByteReader& r) {
  Head h;
  h.task_id = r.u32();
  const std::uint32_t c = r.u32();
  const std::uint32_t d = r.u32();
  h.norm_p = norm_from_tag(r.u8());
  r.need(static_cast<std::size_t>(c) * (d + 1) * 4);
  std::vector<double> w(static_cast<std::size_t>(c) * d);
  r.f32s(w);
  h.weights = Matrix(c, d, std::move(w));
  h.bias.resize(c);
  r.f32s(h.bias);
  return h;
}

inline std::size_t head_wire_size(std::size_t c, std::size_t d) { return 13 + 4 * c * d + 4 * c; }

// The head as it exists after a trip through its f32 wire format.
inline Head quantize_head(const Head& h) {
  ByteWriter w;
  encode_head(w, h);
  ByteReader r(w.bytes());
  return decode_head(r);
}

}  // namespace skill
