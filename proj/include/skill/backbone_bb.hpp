#pragma once

// Desk-scale frozen backbone with Beneficial Biases: one learnable additive
// bias per FC neuron / conv output channel, trained per task by
// backpropagation through frozen weights. Also the Head2Toe variant, a
// linear head over the activations picked by the largest |B| plus the final
// task logits.
//
// Layer output:  y = W·x + b + B   (FC)
//                y = conv3x3(x) + b + B   (conv, B broadcast over the map)
// followed by ReLU on every layer but the last.
//
// Backbone weight file (little-endian):
//   "BKB1" | version u32 = 1 | in_channels u32 | height u32 | width u32 | layer_count u32
//   per layer: kind u8 (0 = FC, 1 = conv3x3) | in u32 | out u32 | weights f32… | bias f32…
// FC weights are out×in row-major; conv kernels are out×in×3×3.
// BB file: 𝒩 × f32 in layer order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "skill/binio.hpp"
#include "skill/dataset.hpp"
#include "skill/error.hpp"
#include "skill/head.hpp"
#include "skill/numkit.hpp"

namespace skill {

enum class LayerKind : std::uint8_t { FullyConnected = 0, Conv3x3 = 1 };

struct Layer {
  LayerKind kind = LayerKind::FullyConnected;
  std::size_t in_ch = 0;   // FC: input width
  std::size_t out_ch = 0;  // FC: output width
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::vector<double> weights;
  std::vector<double> bias;

  std::size_t out_h() const { return kind == LayerKind::Conv3x3 ? in_h - 2 : 1; }
  std::size_t out_w() const { return kind == LayerKind::Conv3x3 ? in_w - 2 : 1; }
  std::size_t input_size() const { return in_ch * in_h * in_w; }
  std::size_t output_size() const { return out_ch * out_h() * out_w(); }
  std::size_t weight_count() const { return kind == LayerKind::Conv3x3 ? out_ch * in_ch * 9 : out_ch * in_ch; }
  std::size_t macs() const {
    return kind == LayerKind::Conv3x3 ? out_ch * in_ch * 9 * out_h() * out_w() : out_ch * in_ch;
  }

  bool operator==(const Layer&) const = default;
};

struct ToyBackboneSpec {
  std::size_t in_channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  std::vector<std::size_t> conv_channels{8, 16};
  std::vector<std::size_t> fc_widths{128, 64};
};

class ToyBackbone {
 public:
  ToyBackbone() = default;

  ToyBackbone(std::size_t in_channels, std::size_t height, std::size_t width, std::vector<Layer> layers)
      : in_channels_(in_channels), height_(height), width_(width), layers_(std::move(layers)) {
    require(!layers_.empty(), ErrorCode::ShapeMismatch, "backbone needs at least one layer");
    std::size_t ch = in_channels_, h = height_, w = width_;
    bool flat = false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Layer& l = layers_[i];
      if (l.kind == LayerKind::Conv3x3) {
        require(!flat, ErrorCode::ShapeMismatch, "conv layer after an FC layer");
        require(l.in_ch == ch && h >= 3 && w >= 3, ErrorCode::ShapeMismatch,
                "conv layer " + std::to_string(i) + " does not fit its input");
        l.in_h = h;
        l.in_w = w;
        ch = l.out_ch;
        h -= 2;
        w -= 2;
      } else {
        require(l.in_ch == ch * h * w, ErrorCode::ShapeMismatch,
                "FC layer " + std::to_string(i) + " expects " + std::to_string(l.in_ch) + " inputs, gets " +
                    std::to_string(ch * h * w));
        l.in_h = l.in_w = 1;
        flat = true;
        ch = l.out_ch;
        h = w = 1;
      }
      require(l.out_ch >= 1, ErrorCode::ShapeMismatch, "layer with zero outputs");
      require(l.weights.size() == l.weight_count() && l.bias.size() == l.out_ch, ErrorCode::ShapeMismatch,
              "layer " + std::to_string(i) + " parameter count mismatch");
    }
  }

  // Seeded He-scaled weights, small frozen biases; values rounded to f32 so a
  // saved backbone reloads identically.
  static ToyBackbone random(const ToyBackboneSpec& spec, std::uint64_t seed) {
    RngStream rng = RngStream::derive(seed, 0x626b626e);
    std::vector<Layer> layers;
    std::size_t ch = spec.in_channels, h = spec.height, w = spec.width;
    auto init = [&](Layer& l, std::size_t fan_in) {
      const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
      l.weights.resize(l.weight_count());
      for (double& v : l.weights) v = to_f32(scale * rng.normal());
      l.bias.resize(l.out_ch);
      for (double& v : l.bias) v = to_f32(0.05 * rng.normal());
    };
    for (std::size_t c : spec.conv_channels) {
      Layer l{LayerKind::Conv3x3, ch, c, h, w, {}, {}};
      init(l, ch * 9);
      layers.push_back(std::move(l));
      ch = c;
      h -= 2;
      w -= 2;
    }
    std::size_t in = ch * h * w;
    for (std::size_t width : spec.fc_widths) {
      Layer l{LayerKind::FullyConnected, in, width, 1, 1, {}, {}};
      init(l, in);
      layers.push_back(std::move(l));
      in = width;
    }
    return ToyBackbone(spec.in_channels, spec.height, spec.width, std::move(layers));
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t in_channels() const noexcept { return in_channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t input_dim() const noexcept { return in_channels_ * height_ * width_; }
  std::size_t embed_dim() const { return layers_.back().output_size(); }

  // 𝒩: one bias per FC neuron / conv output channel.
  std::size_t bias_unit_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.out_ch;
    return n;
  }
  std::size_t weight_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight_count();
    return n;
  }
  std::size_t forward_macs() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.macs();
    return n;
  }

  bool operator==(const ToyBackbone&) const = default;

 private:
  std::size_t in_channels_ = 0, height_ = 0, width_ = 0;
  std::vector<Layer> layers_;
};

class BeneficialBias {
 public:
  BeneficialBias() = default;
  explicit BeneficialBias(const ToyBackbone& bk) {
    for (const auto& l : bk.layers()) per_layer_.emplace_back(l.out_ch, 0.0);
  }

  static BeneficialBias from_flat(const ToyBackbone& bk, std::span<const double> flat) {
    BeneficialBias bb(bk);
    require(flat.size() == bb.count(), ErrorCode::ShapeMismatch, "BB length != backbone bias units");
    std::size_t k = 0;
    for (auto& layer : bb.per_layer_)
      for (double& v : layer) v = flat[k++];
    return bb;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& v : per_layer_) n += v.size();
    return n;
  }
  const std::vector<Vector>& layers() const noexcept { return per_layer_; }
  std::vector<Vector>& layers() noexcept { return per_layer_; }

  Vector flat() const {
    Vector out;
    for (const auto& v : per_layer_) out.insert(out.end(), v.begin(), v.end());
    return out;
  }

  bool operator==(const BeneficialBias&) const = default;

 private:
  std::vector<Vector> per_layer_;
};

struct ForwardTrace {
  std::vector<Vector> pre;   // per layer, before ReLU
  std::vector<Vector> post;  // per layer, after ReLU (identity on the last)
  const Vector& embedding() const { return post.back(); }
};

inline ForwardTrace forward(const ToyBackbone& bk, const BeneficialBias* bb, std::span<const double> x) {
  require(x.size() == bk.input_dim(), ErrorCode::ShapeMismatch,
          "backbone input has " + std::to_string(x.size()) + " values, expects " + std::to_string(bk.input_dim()));
  if (bb) require(bb->layers().size() == bk.layers().size(), ErrorCode::ShapeMismatch, "BB layer count mismatch");
  ForwardTrace t;
  std::span<const double> in = x;
  const std::size_t last = bk.layers().size() - 1;
  for (std::size_t li = 0; li <= last; ++li) {
    const Layer& l = bk.layers()[li];
    Vector pre(l.output_size());
    if (l.kind == LayerKind::FullyConnected) {
      for (std::size_t o = 0; o < l.out_ch; ++o)
        pre[o] = dot({l.weights.data() + o * l.in_ch, l.in_ch}, in) + l.bias[o];
    } else {
      const std::size_t oh = l.out_h(), ow = l.out_w();
      for (std::size_t o = 0; o < l.out_ch; ++o)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t xx = 0; xx < ow; ++xx) {
            double s = l.bias[o];
            for (std::size_t i = 0; i < l.in_ch; ++i) {
              const double* k = l.weights.data() + (o * l.in_ch + i) * 9;
              const double* src = in.data() + i * l.in_h * l.in_w;
              for (std::size_t ky = 0; ky < 3; ++ky)
                for (std::size_t kx = 0; kx < 3; ++kx) s += k[ky * 3 + kx] * src[(y + ky) * l.in_w + xx + kx];
            }
            pre[(o * oh + y) * ow + xx] = s;
          }
    }
    if (bb) {
      const Vector& b = bb->layers()[li];
      const std::size_t plane = l.out_h() * l.out_w();
      for (std::size_t o = 0; o < l.out_ch; ++o)
        for (std::size_t p = 0; p < plane; ++p) pre[o * plane + p] += b[o];
    }
    Vector post = pre;
    if (li != last)
      for (double& v : post) v = std::max(0.0, v);
    t.pre.push_back(std::move(pre));
    t.post.push_back(std::move(post));
    in = t.post.back();
  }
  return t;
}

inline Vector embed(const ToyBackbone& bk, const BeneficialBias* bb, std::span<const double> x) {
  return forward(bk, bb, x).embedding();
}

// Backbone embeddings for every row of a split (no BB).
inline Split embed_split(const ToyBackbone& bk, const Split& s) {
  Split out(bk.embed_dim());
  for (std::size_t i = 0; i < s.size(); ++i) out.push(s.labels[i], embed(bk, nullptr, s.x.row(i)));
  return out;
}

namespace detail {

// Accumulates ∂L/∂B into grad (flat, layer order) given ∂L/∂embedding.
inline void backprop_bias(const ToyBackbone& bk, const ForwardTrace& t, Vector d_post, std::span<double> grad) {
  const auto& layers = bk.layers();
  std::vector<std::size_t> offset(layers.size() + 1, 0);
  for (std::size_t i = 0; i < layers.size(); ++i) offset[i + 1] = offset[i] + layers[i].out_ch;
  for (std::size_t li = layers.size(); li-- > 0;) {
    const Layer& l = layers[li];
    Vector& d_pre = d_post;
    if (li + 1 != layers.size())
      for (std::size_t i = 0; i < d_pre.size(); ++i)
        if (t.pre[li][i] <= 0.0) d_pre[i] = 0.0;
    const std::size_t plane = l.out_h() * l.out_w();
    for (std::size_t o = 0; o < l.out_ch; ++o) {
      double s = 0.0;
      for (std::size_t p = 0; p < plane; ++p) s += d_pre[o * plane + p];
      grad[offset[li] + o] += s;
    }
    if (li == 0) break;
    Vector d_in(l.input_size(), 0.0);
    if (l.kind == LayerKind::FullyConnected) {
      for (std::size_t o = 0; o < l.out_ch; ++o) {
        const double g = d_pre[o];
        if (g == 0.0) continue;
        const double* w = l.weights.data() + o * l.in_ch;
        for (std::size_t i = 0; i < l.in_ch; ++i) d_in[i] += g * w[i];
      }
    } else {
      const std::size_t oh = l.out_h(), ow = l.out_w();
      for (std::size_t o = 0; o < l.out_ch; ++o)
        for (std::size_t y = 0; y < oh; ++y)
          for (std::size_t xx = 0; xx < ow; ++xx) {
            const double g = d_pre[(o * oh + y) * ow + xx];
            if (g == 0.0) continue;
            for (std::size_t i = 0; i < l.in_ch; ++i) {
              const double* k = l.weights.data() + (o * l.in_ch + i) * 9;
              double* dst = d_in.data() + i * l.in_h * l.in_w;
              for (std::size_t ky = 0; ky < 3; ++ky)
                for (std::size_t kx = 0; kx < 3; ++kx) dst[(y + ky) * l.in_w + xx + kx] += g * k[ky * 3 + kx];
            }
          }
    }
    d_post = std::move(d_in);
  }
}

}  // namespace detail

struct BbLossGrad {
  double loss = 0.0;
  Vector grad_bb;  // flat, layer order
  Matrix grad_w;
  Vector grad_b;
};

// Mean softmax cross-entropy of head(forward(x; B)) over `rows`, with
// gradients for the head and for B. Backbone weights receive no gradient.
inline BbLossGrad bb_loss_grad(const ToyBackbone& bk, const BeneficialBias& bb, const Head& head, const Split& data,
                               std::span<const std::size_t> rows, double l2 = 0.0) {
  require(head.dim() == bk.embed_dim(), ErrorCode::DimMismatch, "head dim != backbone embedding dim");
  const std::size_t c = head.classes();
  BbLossGrad out{0.0, Vector(bb.count(), 0.0), Matrix(c, head.dim()), Vector(c, 0.0)};
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  Vector z(c);
  for (std::size_t idx : rows) {
    const ForwardTrace t = forward(bk, &bb, data.x.row(idx));
    const Vector& e = t.embedding();
    for (std::size_t k = 0; k < c; ++k) z[k] = dot(head.weights.row(k), e) + head.bias[k];
    const double lse = logsumexp(z);
    const std::uint32_t y = data.labels[idx];
    out.loss += (lse - z[y]) * inv_n;
    Vector d_emb(e.size(), 0.0);
    for (std::size_t k = 0; k < c; ++k) {
      const double delta = (std::exp(z[k] - lse) - (k == y ? 1.0 : 0.0)) * inv_n;
      auto gw = out.grad_w.row(k);
      const auto wk = head.weights.row(k);
      for (std::size_t j = 0; j < e.size(); ++j) {
        gw[j] += delta * e[j];
        d_emb[j] += delta * wk[j];
      }
      out.grad_b[k] += delta;
    }
    detail::backprop_bias(bk, t, std::move(d_emb), out.grad_bb);
  }
  if (l2 > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < head.weights.data().size(); ++i) {
      const double w = head.weights.data()[i];
      sq += w * w;
      out.grad_w.data()[i] += l2 * w;
    }
    out.loss += 0.5 * l2 * sq;
  }
  return out;
}

struct BbModel {
  BeneficialBias bb;
  Head head;
  bool operator==(const BbModel&) const = default;
};

inline Vector bb_scores(const ToyBackbone& bk, const BbModel& m, std::span<const double> x) {
  return predict(m.head, embed(bk, &m.bb, x));
}

inline double bb_accuracy(const ToyBackbone& bk, const BbModel& m, const Split& split) {
  if (split.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < split.size(); ++i) hits += argmax(bb_scores(bk, m, split.x.row(i))) == split.labels[i];
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

// Trains B (from zero) jointly with a linear head; the backbone stays frozen.
// Uses the same optimizer settings as train_head; head normalization is not
// applied on this path.
inline BbModel train_bb(const ToyBackbone& bk, const Split& train, std::size_t num_classes, const TrainConfig& cfg,
                        std::uint32_t task_id = 0) {
  cfg.validate();
  require(num_classes >= 2, ErrorCode::InvalidArgument, "a head needs at least 2 classes to decide");
  require(train.dim() == bk.input_dim(), ErrorCode::DimMismatch, "train split dim != backbone input dim");
  detail::check_class_coverage(train, num_classes);
  BbModel m{BeneficialBias(bk), Head{task_id, Matrix(num_classes, bk.embed_dim()), Vector(num_classes, 0.0), std::nullopt}};
  Vector bb_flat = m.bb.flat();
  detail::ParamUpdater upd_bb(cfg, bb_flat.size()), upd_w(cfg, m.head.weights.data().size()), upd_b(cfg, num_classes);
  RngStream rng = RngStream::derive(cfg.seed, 0x62627472);
  std::vector<std::size_t> order = detail::iota_rows(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const BbLossGrad g = bb_loss_grad(bk, m.bb, m.head, train, {order.data() + start, end - start}, cfg.l2);
      upd_bb.step(bb_flat, g.grad_bb);
      upd_w.step(m.head.weights.data(), g.grad_w.data());
      upd_b.step(m.head.bias, g.grad_b);
      m.bb = BeneficialBias::from_flat(bk, bb_flat);
    }
  }
  m.head.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Head2Toe

// The ⌈fraction·𝒩⌉ indices with the largest |B|, ties to the lower index,
// returned in ascending order.
inline std::vector<std::uint32_t> head2toe_select(const BeneficialBias& bb, double fraction) {
  require(fraction > 0.0 && fraction <= 1.0, ErrorCode::InvalidArgument, "fraction must be in (0, 1]");
  const Vector b = bb.flat();
  // a relative guard keeps exact products such as 0.1·30 from rounding up
  const double want = fraction * static_cast<double>(b.size());
  const std::size_t count = std::min(b.size(), static_cast<std::size_t>(std::ceil(want - 1e-9 * want)));
  std::vector<std::uint32_t> idx(b.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t c) { return std::abs(b[a]) > std::abs(b[c]); });
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

struct H2tHead {
  std::vector<std::uint32_t> selected;
  Head linear;  // over [selected activations ∥ task logits]
  bool operator==(const H2tHead&) const = default;
};

// Per-unit activations in BB order: FC neurons as-is, conv channels averaged
// over their spatial map.
inline Vector pooled_activations(const ToyBackbone& bk, const ForwardTrace& t) {
  Vector out;
  for (std::size_t li = 0; li < bk.layers().size(); ++li) {
    const Layer& l = bk.layers()[li];
    const std::size_t plane = l.out_h() * l.out_w();
    for (std::size_t o = 0; o < l.out_ch; ++o) {
      double s = 0.0;
      for (std::size_t p = 0; p < plane; ++p) s += t.post[li][o * plane + p];
      out.push_back(s / static_cast<double>(plane));
    }
  }
  return out;
}

inline Vector h2t_features(const ToyBackbone& bk, const BbModel& m, std::span<const std::uint32_t> selected,
                           std::span<const double> x) {
  const ForwardTrace t = forward(bk, &m.bb, x);
  const Vector pooled = pooled_activations(bk, t);
  Vector f;
  f.reserve(selected.size() + m.head.classes());
  for (std::uint32_t i : selected) f.push_back(pooled[i]);
  const Vector logits = predict(m.head, t.embedding());
  f.insert(f.end(), logits.begin(), logits.end());
  return f;
}

inline Vector h2t_scores(const ToyBackbone& bk, const BbModel& m, const H2tHead& h, std::span<const double> x) {
  return predict(h.linear, h2t_features(bk, m, h.selected, x));
}

inline double h2t_accuracy(const ToyBackbone& bk, const BbModel& m, const H2tHead& h, const Split& split) {
  if (split.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < split.size(); ++i) hits += argmax(h2t_scores(bk, m, h, split.x.row(i))) == split.labels[i];
  return static_cast<double>(hits) / static_cast<double>(split.size());
}

inline TrainConfig head2toe_defaults() {
  TrainConfig cfg;
  cfg.optimizer = Optimizer::Adam;
  cfg.lr = 0.001;
  cfg.epochs = 100;
  return cfg;
}

inline H2tHead train_head2toe(const ToyBackbone& bk, const BbModel& m, std::vector<std::uint32_t> selected,
                              const Split& train, const TrainConfig& cfg = head2toe_defaults(),
                              const EpochCallback& on_epoch = {}) {
  require(!selected.empty(), ErrorCode::EmptySelection, "Head2Toe needs at least one selected unit");
  require(std::is_sorted(selected.begin(), selected.end()) &&
              std::adjacent_find(selected.begin(), selected.end()) == selected.end(),
          ErrorCode::InvalidArgument, "selection must be sorted and unique");
  require(selected.back() < m.bb.count(), ErrorCode::InvalidArgument, "selected index beyond 𝒩");
  Split features(selected.size() + m.head.classes());
  for (std::size_t i = 0; i < train.size(); ++i)
    features.push(train.labels[i], h2t_features(bk, m, selected, train.x.row(i)));
  Head linear = train_head(features, m.head.classes(), cfg, m.head.task_id, on_epoch);
  return H2tHead{std::move(selected), std::move(linear)};
}

// ---------------------------------------------------------------------------
// Serialization

inline Bytes encode_backbone(const ToyBackbone& bk) {
  ByteWriter w;
  w.raw("BKB1");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(bk.in_channels()));
  w.u32(static_cast<std::uint32_t>(bk.height()));
  w.u32(static_cast<std::uint32_t>(bk.width()));
  w.u32(static_cast<std::uint32_t>(bk.layers().size()));
  for (const auto& l : bk.layers()) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.u32(static_cast<std::uint32_t>(l.in_ch));
    w.u32(static_cast<std::uint32_t>(l.out_ch));
    w.f32s(l.weights);
    w.f32s(l.bias);
  }
  return w.take();
}

inline ToyBackbone decode_backbone(std::span<const std::uint8_t> bytes, const std::string& what = "BKB1") {
  ByteReader r(bytes, what);
  if (bytes.size() < 4 || r.str(4) != "BKB1") fail(ErrorCode::BadMagic, what + ": missing BKB1 magic");
  require(r.u32() == 1, ErrorCode::BadMagic, what + ": unsupported version");
  const std::size_t ch = r.u32(), h = r.u32(), w = r.u32(), n = r.u32();
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < n; ++i) {
    Layer l;
    const std::uint8_t kind = r.u8();
    require(kind <= 1, ErrorCode::BadMagic, what + ": unknown layer kind");
    l.kind = static_cast<LayerKind>(kind);
    l.in_ch = r.u32();
    l.out_ch = r.u32();
    l.weights.resize(l.weight_count());
    r.need(4 * (l.weights.size() + l.out_ch));
    r.f32s(l.weights);
    l.bias.resize(l.out_ch);
    r.f32s(l.bias);
    layers.push_back(std::move(l));
  }
  require(r.done(), ErrorCode::TruncatedFile, what + ": trailing bytes");
  return ToyBackbone(ch, h, w, std::move(layers));
}

inline void encode_bb(ByteWriter& w, const BeneficialBias& bb) { w.f32s(bb.flat()); }

inline BeneficialBias decode_bb(ByteReader& r, const ToyBackbone& bk) {
  Vector flat(bk.bias_unit_count());
  r.need(4 * flat.size());
  r.f32s(flat);
  return BeneficialBias::from_flat(bk, flat);
}

inline void encode_h2t(ByteWriter& w, const H2tHead& h) {
  w.u32(static_cast<std::uint32_t>(h.selected.size()));
  for (std::uint32_t i : h.selected) w.u32(i);
  encode_head(w, h.linear);
}

inline H2tHead decode_h2t(ByteReader& r) {
  H2tHead h;
  const std::uint32_t n = r.u32();
  r.need(4 * static_cast<std::size_t>(n));
  for (std::uint32_t i = 0; i < n; ++i) h.selected.push_back(r.u32());
  h.linear = decode_head(r);
  return h;
}

}  // namespace skill
