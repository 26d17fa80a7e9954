#pragma once

// GMMC task anchors. Each teacher summarizes its training features with a
// diagonal-covariance Gaussian mixture; students pool every received
// component into one bank (remembering the owning task) and route a test
// input to the owner of its highest-posterior component.
//
// Anchor wire layout (little-endian):
//   task_id u32 | k u32 | D u32 | k × [ φ f32 | μ D×f32 | σ² D×f32 ]

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "skill/binio.hpp"
#include "skill/error.hpp"
#include "skill/numkit.hpp"

namespace skill {

inline constexpr double kGmmVarFloor = 1e-6;

struct GmmComponent {
  double weight = 0.0;
  Vector mean;
  Vector var;  // diagonal
  bool operator==(const GmmComponent&) const = default;
};

struct GmmcAnchor {
  std::uint32_t task_id = 0;
  std::vector<GmmComponent> components;

  std::size_t k() const noexcept { return components.size(); }
  std::size_t dim() const { return components.empty() ? 0 : components.front().mean.size(); }

  void validate(double var_floor = kGmmVarFloor) const {
    require(!components.empty(), ErrorCode::InvalidArgument, "anchor has no components");
    double total = 0.0;
    for (const auto& c : components) {
      require(c.mean.size() == dim() && c.var.size() == dim(), ErrorCode::DimMismatch, "anchor component dims differ");
      require(c.weight >= 0.0, ErrorCode::InvalidArgument, "negative mixture weight");
      for (double v : c.var) require(v >= var_floor, ErrorCode::InvalidArgument, "variance below floor");
      total += c.weight;
    }
    require(std::abs(total - 1.0) <= 1e-9, ErrorCode::InvalidArgument, "mixture weights do not sum to 1");
  }

  bool operator==(const GmmcAnchor&) const = default;
};

struct GmmFitOptions {
  std::size_t k = 25;
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double tol = 1e-4;  // on the mean per-sample log-likelihood
  double var_floor = kGmmVarFloor;
};

struct GmmFitReport {
  GmmcAnchor anchor;
  std::vector<double> mean_loglik;  // one entry per E-step
  std::size_t iterations = 0;       // E-steps performed
};

namespace detail {

inline double log_gauss_diag(std::span<const double> x, const GmmComponent& c) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - c.mean[j];
    s += std::log(2.0 * std::numbers::pi * c.var[j]) + d * d / c.var[j];
  }
  return -0.5 * s;
}

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
  return s;
}

// k-means++ seeding: first center uniform, then proportional to squared
// distance from the nearest chosen center (uniform when all distances are 0).
inline std::vector<std::size_t> kmeanspp(const Matrix& x, std::size_t k, RngStream& rng) {
  const std::size_t n = x.rows();
  std::vector<std::size_t> centers{static_cast<std::size_t>(rng.below(n))};
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(x.row(i), x.row(centers[0]));
  while (centers.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        if (d2[i] <= 0.0) continue;
        if (u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
      while (d2[pick] <= 0.0) --pick;  // guard against rounding past the last positive entry
    } else {
      pick = static_cast<std::size_t>(rng.below(n));
    }
    centers.push_back(pick);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(x.row(i), x.row(pick)));
  }
  return centers;
}

}  // namespace detail

// k-means++ seeding, one hard-assignment pass for initial weights and
// variances, then EM on diagonal Gaussians until max_iter E-steps or a mean
// log-likelihood gain below tol. Variances are floored in every M-step.
inline GmmFitReport fit_gmmc_report(const Matrix& x, const GmmFitOptions& opt, std::uint32_t task_id = 0) {
  const std::size_t n = x.rows(), d = x.cols(), k = opt.k;
  require(k >= 1, ErrorCode::InvalidArgument, "k must be >= 1");
  require(d >= 1, ErrorCode::DimMismatch, "features have no dimensions");
  require(n >= k, ErrorCode::TooFewSamples, "need n >= k (n=" + std::to_string(n) + ", k=" + std::to_string(k) + ")");
  require(opt.var_floor > 0.0, ErrorCode::InvalidArgument, "variance floor must be positive");

  RngStream rng = RngStream::derive(opt.seed, 0x676d6d63);
  const auto centers = detail::kmeanspp(x, k, rng);

  Vector global_var(d, 0.0), global_mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) global_mean[j] += x(i, j) / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) global_var[j] += std::pow(x(i, j) - global_mean[j], 2) / static_cast<double>(n);

  GmmFitReport rep;
  rep.anchor.task_id = task_id;
  auto& comps = rep.anchor.components;
  comps.resize(k);
  {
    std::vector<std::size_t> owner(n);
    std::vector<double> count(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = detail::sq_dist(x.row(i), x.row(centers[0]));
      for (std::size_t c = 1; c < k; ++c) {
        const double dd = detail::sq_dist(x.row(i), x.row(centers[c]));
        if (dd < best_d) {
          best_d = dd;
          best = c;
        }
      }
      owner[i] = best;
      count[best] += 1.0;
    }
    for (std::size_t c = 0; c < k; ++c) {
      comps[c].weight = count[c] / static_cast<double>(n);
      comps[c].mean.assign(x.row(centers[c]).begin(), x.row(centers[c]).end());
      comps[c].var.assign(d, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) comps[owner[i]].var[j] += std::pow(x(i, j) - comps[owner[i]].mean[j], 2);
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t j = 0; j < d; ++j)
        comps[c].var[j] = std::max(opt.var_floor, count[c] > 0 ? comps[c].var[j] / count[c] : global_var[j]);
  }

  Matrix resp(n, k);
  std::vector<double> lp(k);
  for (std::size_t iter = 0; iter < opt.max_iter; ++iter) {
    // E-step
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < k; ++c)
        lp[c] = comps[c].weight > 0.0 ? std::log(comps[c].weight) + detail::log_gauss_diag(x.row(i), comps[c])
                                      : -std::numeric_limits<double>::infinity();
      const double lse = logsumexp(lp);
      ll += lse;
      for (std::size_t c = 0; c < k; ++c) resp(i, c) = std::exp(lp[c] - lse);
    }
    ll /= static_cast<double>(n);
    rep.mean_loglik.push_back(ll);
    rep.iterations = iter + 1;
    if (iter > 0 && ll - rep.mean_loglik[iter - 1] < opt.tol) break;

    // M-step
    for (std::size_t c = 0; c < k; ++c) {
      double nk = 0.0;
      for (std::size_t i = 0; i < n; ++i) nk += resp(i, c);
      comps[c].weight = nk / static_cast<double>(n);
      if (nk <= 0.0) continue;  // dead component keeps its parameters
      Vector mu(d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        if (const double r = resp(i, c); r > 0.0)
          for (std::size_t j = 0; j < d; ++j) mu[j] += r * x(i, j);
      for (double& v : mu) v /= nk;
      Vector var(d, 0.0);
      for (std::size_t i = 0; i < n; ++i)
        if (const double r = resp(i, c); r > 0.0)
          for (std::size_t j = 0; j < d; ++j) var[j] += r * (x(i, j) - mu[j]) * (x(i, j) - mu[j]);
      for (double& v : var) v = std::max(opt.var_floor, v / nk);
      comps[c].mean = std::move(mu);
      comps[c].var = std::move(var);
    }
    double total = 0.0;
    for (const auto& c : comps) total += c.weight;
    for (auto& c : comps) c.weight /= total;
  }
  return rep;
}

inline GmmcAnchor fit_gmmc(const Matrix& x, const GmmFitOptions& opt, std::uint32_t task_id = 0) {
  return fit_gmmc_report(x, opt, task_id).anchor;
}

// ---------------------------------------------------------------------------
// Bank

struct TaskAssignment {
  std::uint32_t task_id = 0;
  std::size_t component = 0;  // index into the bank
  Vector posterior;           // over all bank components
};

class AnchorBank {
 public:
  struct Entry {
    std::uint32_t task_id;
    std::uint32_t component_index;
    GmmComponent component;
    double log_norm;  // log φ − ½ Σ log(2π σ²)
    bool operator==(const Entry&) const = default;
  };

  // Components are kept in canonical (task_id, component index) order no
  // matter in which order anchors arrive.
  void merge(const GmmcAnchor& anchor) {
    require(!has_task(anchor.task_id), ErrorCode::DuplicateTask,
            "bank already holds task " + std::to_string(anchor.task_id));
    require(entries_.empty() || anchor.dim() == dim(), ErrorCode::DimMismatch, "anchor dim differs from bank");
    std::vector<Entry> added;
    for (std::size_t i = 0; i < anchor.k(); ++i) {
      const GmmComponent& c = anchor.components[i];
      double ln = c.weight > 0.0 ? std::log(c.weight) : -std::numeric_limits<double>::infinity();
      for (double v : c.var) ln -= 0.5 * std::log(2.0 * std::numbers::pi * v);
      added.push_back({anchor.task_id, static_cast<std::uint32_t>(i), c, ln});
    }
    const auto pos = std::lower_bound(entries_.begin(), entries_.end(), anchor.task_id,
                                      [](const Entry& e, std::uint32_t t) { return e.task_id < t; });
    entries_.insert(pos, added.begin(), added.end());
  }

  bool has_task(std::uint32_t task_id) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.task_id == task_id; });
  }

  std::vector<std::uint32_t> tasks() const {
    std::vector<std::uint32_t> out;
    for (const auto& e : entries_)
      if (out.empty() || out.back() != e.task_id) out.push_back(e.task_id);
    return out;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  std::size_t dim() const { return entries_.empty() ? 0 : entries_.front().component.mean.size(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  Vector log_joint(std::span<const double> x) const {
    Vector lp(entries_.size());
    for (std::size_t m = 0; m < entries_.size(); ++m) {
      const auto& c = entries_[m].component;
      double q = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) {
        const double d = x[j] - c.mean[j];
        q += d * d / c.var[j];
      }
      lp[m] = entries_[m].log_norm - 0.5 * q;
    }
    return lp;
  }

  bool operator==(const AnchorBank&) const = default;

 private:
  std::vector<Entry> entries_;
};

// Best component log joint per task, in bank (task-id) order. The mapper's
// choice over any subset of tasks is the first maximum over that subset.
inline std::vector<std::pair<std::uint32_t, double>> task_log_scores(const AnchorBank& bank,
                                                                     std::span<const double> x) {
  require(x.size() == bank.dim(), ErrorCode::DimMismatch, "query dim != bank dim");
  const Vector lp = bank.log_joint(x);
  std::vector<std::pair<std::uint32_t, double>> out;
  for (std::size_t m = 0; m < lp.size(); ++m) {
    const std::uint32_t t = bank.entries()[m].task_id;
    if (out.empty() || out.back().first != t)
      out.emplace_back(t, lp[m]);
    else
      out.back().second = std::max(out.back().second, lp[m]);
  }
  return out;
}

inline AnchorBank merge_anchor(AnchorBank bank, const GmmcAnchor& anchor) {
  bank.merge(anchor);
  return bank;
}

// Posterior P(m | x) = φₘ𝒩(x|μₘ,Σₘ) / Σₙ φₙ𝒩(x|μₙ,Σₙ) over every bank
// component, computed in log space. Ties go to the lowest bank index.
inline TaskAssignment map_task(const AnchorBank& bank, std::span<const double> x) {
  require(!bank.empty(), ErrorCode::EmptyBank, "task mapper bank is empty");
  require(x.size() == bank.dim(), ErrorCode::DimMismatch, "query dim != bank dim");
  Vector lp = bank.log_joint(x);
  const double lse = logsumexp(lp);
  TaskAssignment out;
  out.component = argmax(lp);
  out.task_id = bank.entries()[out.component].task_id;
  for (double& v : lp) v = std::exp(v - lse);
  out.posterior = std::move(lp);
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline void encode_anchor(ByteWriter& w, const GmmcAnchor& a) {
  w.u32(a.task_id);
  w.u32(static_cast<std::uint32_t>(a.k()));
  w.u32(static_cast<std::uint32_t>(a.dim()));
  for (const auto& c : a.components) {
    w.f32(c.weight);
    w.f32s(c.mean);
    w.f32s(c.var);
  }
}

// Weights are renormalized and variances re-floored after the f32 trip so the
// decoded anchor still satisfies the anchor invariants.
inline GmmcAnchor decode_anchor(ByteReader& r) {
  GmmcAnchor a;
  a.task_id = r.u32();
  const std::uint32_t k = r.u32();
  const std::uint32_t d = r.u32();
  r.need(static_cast<std::size_t>(k) * (1 + 2 * static_cast<std::size_t>(d)) * 4);
  double total = 0.0;
  for (std::uint32_t i = 0; i < k; ++i) {
    GmmComponent c;
    c.weight = r.f32();
    c.mean.resize(d);
    r.f32s(c.mean);
    c.var.resize(d);
    r.f32s(c.var);
    for (double& v : c.var) v = std::max(v, kGmmVarFloor);
    total += c.weight;
    a.components.push_back(std::move(c));
  }
  require(k == 0 || total > 0.0, ErrorCode::InvalidArgument, "anchor weights sum to zero");
  for (auto& c : a.components) c.weight /= total;
  return a;
}

inline std::size_t anchor_wire_size(std::size_t k, std::size_t d) { return 12 + 4 * k * (1 + 2 * d); }

}  // namespace skill
