#pragma once

// Cost accounting. MAC counts follow fixed counting contracts rather than
// measurements; communication is converted to MACs at α MACs per byte.
//
//   head training      epochs·n·3·D·c       (forward D·c, backward 2·D·c)
//   BB training        epochs·n·3·F         (F = backbone forward MACs)
//   embedding pass     n·F
//   GMMC fit           iters·n·k·5·D        (E-step 3D, M-step 2D)
//   MAHA finalize      N·D(D+1)/2 + D³/3    (scatter + Cholesky, integer)

#include <algorithm>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "skill/error.hpp"

namespace skill {

using Macs = std::uint64_t;

inline constexpr double kDefaultAlpha = 1000.0;

inline Macs mac_head_train(Macs n, Macs dim, Macs classes, Macs epochs) { return epochs * n * 3 * dim * classes; }
inline Macs mac_bb_train(Macs n, Macs forward_macs, Macs epochs) { return epochs * n * 3 * forward_macs; }
inline Macs mac_embed(Macs n, Macs forward_macs) { return n * forward_macs; }
inline Macs mac_gmmc_fit(Macs n, Macs k, Macs dim, Macs iters) { return iters * n * k * 5 * dim; }
inline Macs mac_maha_finalize(Macs samples, Macs dim) { return samples * dim * (dim + 1) / 2 + dim * dim * dim / 3; }

inline double comm_to_macs(double bytes, double alpha = kDefaultAlpha) { return bytes * alpha; }

struct Speedup {
  double wall = 0.0;
  double speedup = 0.0;
  double efficiency = 0.0;
};

// The parallel run finishes when its slowest agent does.
inline Speedup speedup(double single_macs, const std::vector<double>& per_agent_macs) {
  require(!per_agent_macs.empty(), ErrorCode::InvalidArgument, "speedup needs at least one agent");
  Speedup s;
  s.wall = *std::max_element(per_agent_macs.begin(), per_agent_macs.end());
  require(s.wall > 0.0, ErrorCode::InvalidArgument, "parallel wall MACs must be positive");
  s.speedup = single_macs / s.wall;
  s.efficiency = s.speedup / static_cast<double>(per_agent_macs.size());
  return s;
}

// Normalized training time of experience replay when task t replays γ·(t−1)
// earlier tasks' worth of data.
struct ErCost {
  double summation = 0.0;    // Σ_{t=1..N} (1 + (t−1)γ) = N + γN(N−1)/2
  double paper_form = 0.0;   // N + γ(N−1)(N−2)/2
};

inline ErCost er_cost(std::uint64_t n, double gamma) {
  require(n >= 1, ErrorCode::InvalidArgument, "er_cost needs N >= 1");
  const double nn = static_cast<double>(n);
  const double tri_sum = static_cast<double>(n * (n - 1) / 2);
  const double tri_paper = n >= 2 ? static_cast<double>((n - 1) * (n - 2) / 2) : 0.0;
  return {nn + gamma * tri_sum, nn + gamma * tri_paper};
}

// ---------------------------------------------------------------------------

enum class ByteMode { Exact = 0, Paper = 1 };

inline const char* to_string(ByteMode m) { return m == ByteMode::Exact ? "exact" : "paper"; }

inline ByteMode parse_byte_mode(const std::string& s) {
  if (s == "exact") return ByteMode::Exact;
  if (s == "paper") return ByteMode::Paper;
  fail(ErrorCode::ConfigInvalid, "byte mode must be exact or paper, got '" + s + "'");
}

struct AgentCost {
  Macs teacher = 0;   // embedding, head and BB training
  Macs anchor = 0;    // GMMC fit or exemplar sampling
  Macs finalize = 0;  // student-side consolidation
  std::uint64_t egress[2] = {0, 0};
  std::uint64_t ingress[2] = {0, 0};

  void add(const AgentCost& o) {
    teacher += o.teacher;
    anchor += o.anchor;
    finalize += o.finalize;
    for (int m = 0; m < 2; ++m) {
      egress[m] += o.egress[m];
      ingress[m] += o.ingress[m];
    }
  }

  double wall_macs(ByteMode mode, double alpha) const {
    return static_cast<double>(teacher) + static_cast<double>(anchor) +
           comm_to_macs(static_cast<double>(ingress[static_cast<int>(mode)]), alpha) +
           static_cast<double>(finalize);
  }

  bool operator==(const AgentCost& o) const {
    return teacher == o.teacher && anchor == o.anchor && finalize == o.finalize &&
           std::equal(egress, egress + 2, o.egress) && std::equal(ingress, ingress + 2, o.ingress);
  }
};

// Per-agent counters. Each agent accumulates locally; ledgers merge by
// summing, which is commutative and associative.
class CostLedger {
 public:
  explicit CostLedger(double alpha = kDefaultAlpha) : alpha_(alpha) {
    require(alpha >= 0.0, ErrorCode::InvalidArgument, "alpha must be non-negative");
  }

  double alpha() const noexcept { return alpha_; }

  AgentCost& agent(std::uint32_t id) { return agents_[id]; }
  const std::map<std::uint32_t, AgentCost>& agents() const noexcept { return agents_; }

  void add_teacher(std::uint32_t id, Macs m) { agents_[id].teacher += m; }
  void add_anchor(std::uint32_t id, Macs m) { agents_[id].anchor += m; }
  void add_finalize(std::uint32_t id, Macs m) { agents_[id].finalize += m; }
  void add_egress(std::uint32_t id, std::uint64_t exact, std::uint64_t paper) {
    agents_[id].egress[0] += exact;
    agents_[id].egress[1] += paper;
  }
  void add_ingress(std::uint32_t id, std::uint64_t exact, std::uint64_t paper) {
    agents_[id].ingress[0] += exact;
    agents_[id].ingress[1] += paper;
  }

  void merge(const CostLedger& o) {
    require(alpha_ == o.alpha_, ErrorCode::InvalidArgument, "cannot merge ledgers with different alpha");
    for (const auto& [id, c] : o.agents_) agents_[id].add(c);
  }

  AgentCost total() const {
    AgentCost t;
    for (const auto& [id, c] : agents_) t.add(c);
    return t;
  }

  // Every broadcast byte is received by each of the other N−1 agents.
  bool conserved(std::size_t n_agents) const {
    const AgentCost t = total();
    const std::uint64_t peers = n_agents == 0 ? 0 : n_agents - 1;
    return t.egress[0] * peers == t.ingress[0] && t.egress[1] * peers == t.ingress[1];
  }

  // A lone agent trains every task itself and consolidates once, with no
  // communication.
  double single_agent_macs() const {
    double s = 0.0;
    Macs fin = 0;
    for (const auto& [id, c] : agents_) {
      s += static_cast<double>(c.teacher) + static_cast<double>(c.anchor);
      fin = std::max(fin, c.finalize);
    }
    return s + static_cast<double>(fin);
  }

  Speedup parallel(ByteMode mode) const {
    std::vector<double> wall;
    for (const auto& [id, c] : agents_) wall.push_back(c.wall_macs(mode, alpha_));
    return speedup(single_agent_macs(), wall);
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["alpha"] = alpha_;
    j["agents"] = nlohmann::ordered_json::array();
    for (const auto& [id, c] : agents_) {
      j["agents"].push_back({{"agent", id},
                             {"teacher_macs", c.teacher},
                             {"anchor_macs", c.anchor},
                             {"finalize_macs", c.finalize},
                             {"egress_bytes", {{"exact", c.egress[0]}, {"paper", c.egress[1]}}},
                             {"ingress_bytes", {{"exact", c.ingress[0]}, {"paper", c.ingress[1]}}}});
    }
    const AgentCost t = total();
    j["totals"] = {{"teacher_macs", t.teacher},
                   {"anchor_macs", t.anchor},
                   {"finalize_macs", t.finalize},
                   {"egress_bytes", {{"exact", t.egress[0]}, {"paper", t.egress[1]}}},
                   {"ingress_bytes", {{"exact", t.ingress[0]}, {"paper", t.ingress[1]}}}};
    j["single_agent_macs"] = single_agent_macs();
    j["conserved"] = conserved(agents_.size());
    for (ByteMode m : {ByteMode::Exact, ByteMode::Paper}) {
      if (agents_.empty()) break;
      const Speedup s = parallel(m);
      j["parallel"][to_string(m)] = {{"wall_macs", s.wall}, {"speedup", s.speedup}, {"efficiency", s.efficiency}};
    }
    return j;
  }

  // One row per byte mode with the cost and speedup columns.
  std::string summary_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "byte_mode,agents,alpha,teacher_macs,comm_bytes,comm_macs,student_macs,single_macs,wall_macs,speedup,"
          "efficiency\n";
    if (agents_.empty()) return os.str();
    const AgentCost t = total();
    for (ByteMode m : {ByteMode::Exact, ByteMode::Paper}) {
      const Speedup s = parallel(m);
      const auto bytes = t.ingress[static_cast<int>(m)];
      os << to_string(m) << ',' << agents_.size() << ',' << alpha_ << ',' << (t.teacher + t.anchor) << ','
         << bytes << ',' << comm_to_macs(static_cast<double>(bytes), alpha_) << ',' << t.finalize << ','
         << single_agent_macs() << ',' << s.wall << ',' << s.speedup << ',' << s.efficiency << '\n';
    }
    return os.str();
  }

  bool operator==(const CostLedger&) const = default;

 private:
  double alpha_;
  std::map<std::uint32_t, AgentCost> agents_;
};

}  // namespace skill
