#pragma once

// A lifelong-learning agent. As a teacher it learns a task on top of the
// frozen backbone and packages its head, optional beneficial biases and task
// anchor; as a student it stores received heads and consolidates the anchors
// into a task mapper. Inference routes an input through the mapper and then
// the chosen task's head, with no task oracle.

#include <bit>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "skill/accounting.hpp"
#include "skill/backbone_bb.hpp"
#include "skill/dataset.hpp"
#include "skill/head.hpp"
#include "skill/network.hpp"
#include "skill/taskmap_gmmc.hpp"
#include "skill/taskmap_maha.hpp"

namespace skill {

struct AgentConfig {
  MapperMode mapper = MapperMode::Gmmc;
  bool bb = false;
  bool h2t = false;
  double h2t_fraction = 0.01;
  TrainConfig head;
  TrainConfig h2t_train = head2toe_defaults();
  std::size_t gmm_k = 25;
  std::size_t gmm_max_iter = 100;
  double gmm_tol = 1e-4;
  std::size_t exemplars_per_class = kDefaultExemplarsPerClass;
  std::uint64_t seed = 0;
  std::optional<std::size_t> expected_tasks;

  void validate(bool has_backbone) const {
    head.validate();
    require(!bb || has_backbone, ErrorCode::ConfigInvalid, "BB needs a backbone");
    require(!h2t || bb, ErrorCode::ConfigInvalid, "Head2Toe needs BB");
    require(h2t_fraction > 0.0 && h2t_fraction <= 1.0, ErrorCode::ConfigInvalid, "h2t fraction must be in (0, 1]");
    require(gmm_k >= 1, ErrorCode::ConfigInvalid, "k must be >= 1");
    require(exemplars_per_class >= 1, ErrorCode::ConfigInvalid, "m must be >= 1");
  }
};

// Child seed for one task of one run, independent of which agent learns it.
inline std::uint64_t task_seed(std::uint64_t run_seed, std::uint32_t task_id, std::uint64_t salt = 0) {
  return RngStream::derive(run_seed ^ (salt * 0x9E3779B97F4A7C15ULL), task_id).next_u64();
}

struct StoredTask {
  std::vector<std::string> classes;
  Head head;
  std::optional<BeneficialBias> bb;
  std::optional<H2tHead> h2t;
  bool operator==(const StoredTask&) const = default;
};

struct Inference {
  std::uint32_t task_id = 0;
  std::uint32_t class_index = 0;
  std::string name;
};

class Agent {
 public:
  Agent(std::uint32_t id, AgentConfig cfg, std::shared_ptr<const ToyBackbone> backbone = nullptr,
        double alpha = kDefaultAlpha)
      : id_(id), cfg_(std::move(cfg)), backbone_(std::move(backbone)), ledger_(alpha) {
    cfg_.validate(backbone_ != nullptr);
    ledger_.agent(id_);
  }

  std::uint32_t id() const noexcept { return id_; }
  const AgentConfig& config() const noexcept { return cfg_; }
  const CostLedger& ledger() const noexcept { return ledger_; }
  const GlobalClassRegistry& registry() const noexcept { return registry_; }
  const std::map<std::uint32_t, StoredTask>& tasks() const noexcept { return tasks_; }
  const AnchorBank& anchor_bank() const noexcept { return anchors_; }
  const MahaBank& maha_bank() const noexcept { return maha_; }
  bool finalized() const noexcept { return finalized_; }
  bool knows(std::uint32_t task_id) const { return tasks_.count(task_id) != 0; }

  // Teacher role. The agent keeps exactly what it broadcasts (the packet
  // after its wire round trip) so teachers and students end up identical.
  KnowledgePacket learn_task(const TaskDataset& t) {
    require(!knows(t.task_id), ErrorCode::DuplicateTask, "agent already knows task " + std::to_string(t.task_id));
    t.validate();
    const std::size_t c = t.classes.size();
    const std::size_t n = t.train.size();
    if (backbone_) require(t.dim == backbone_->input_dim(), ErrorCode::DimMismatch, "task dim != backbone input dim");

    Split features = backbone_ ? embed_split(*backbone_, t.train) : t.train;
    const std::size_t d = features.dim();
    const std::size_t fwd = backbone_ ? backbone_->forward_macs() : 0;
    if (backbone_) ledger_.add_teacher(id_, mac_embed(n, fwd));

    KnowledgePacket p;
    p.task_id = t.task_id;
    p.mode = cfg_.mapper;
    p.class_names = t.classes;

    TrainConfig hc = cfg_.head;
    hc.seed = task_seed(cfg_.seed, t.task_id, 1);
    if (cfg_.bb) {
      BbModel m = train_bb(*backbone_, t.train, c, hc, t.task_id);
      ledger_.add_teacher(id_, mac_bb_train(n, fwd, hc.epochs) + mac_head_train(n, d, c, hc.epochs));
      if (cfg_.h2t) {
        TrainConfig tc = cfg_.h2t_train;
        tc.seed = task_seed(cfg_.seed, t.task_id, 2);
        auto selected = head2toe_select(m.bb, cfg_.h2t_fraction);
        const std::size_t f = selected.size() + c;
        p.h2t = train_head2toe(*backbone_, m, std::move(selected), t.train, tc);
        ledger_.add_teacher(id_, mac_embed(n, fwd) + mac_head_train(n, f, c, tc.epochs));
      }
      p.head = std::move(m.head);
      p.bb = m.bb.flat();
    } else {
      p.head = train_head(features, c, hc, t.task_id);
      ledger_.add_teacher(id_, mac_head_train(n, d, c, hc.epochs));
    }

    if (cfg_.mapper == MapperMode::Gmmc) {
      GmmFitOptions opt;
      opt.k = cfg_.gmm_k;
      opt.seed = task_seed(cfg_.seed, t.task_id, 3);
      opt.max_iter = cfg_.gmm_max_iter;
      opt.tol = cfg_.gmm_tol;
      GmmFitReport rep = fit_gmmc_report(features.x, opt, t.task_id);
      ledger_.add_anchor(id_, mac_gmmc_fit(n, opt.k, d, rep.iterations));
      p.anchor = std::move(rep.anchor);
    } else {
      p.share = sample_shared(features, c, cfg_.exemplars_per_class, task_seed(cfg_.seed, t.task_id, 4), t.task_id);
    }

    KnowledgePacket wire = deserialize_packet(serialize_packet(p));
    absorb(wire);
    return wire;
  }

  // Student role.
  void receive(const KnowledgePacket& p) {
    require(!knows(p.task_id), ErrorCode::DuplicateTask, "agent already knows task " + std::to_string(p.task_id));
    require(p.mode == cfg_.mapper, ErrorCode::PayloadMismatch, "packet mapper mode differs from agent's");
    p.validate();
    absorb(p);
  }

  void receive(std::span<const std::uint8_t> bytes) { receive(deserialize_packet(bytes)); }

  void finalize() {
    if (finalized_) return;
    require(!tasks_.empty(), ErrorCode::EmptyBank, "agent knows no tasks");
    if (cfg_.expected_tasks)
      require(tasks_.size() == *cfg_.expected_tasks, ErrorCode::NotAllReceived,
              "agent " + std::to_string(id_) + " has " + std::to_string(tasks_.size()) + " of " +
                  std::to_string(*cfg_.expected_tasks) + " tasks");
    if (cfg_.mapper == MapperMode::Maha) {
      maha_.finalize();
      ledger_.add_finalize(id_, mac_maha_finalize(maha_.pooled_count(), maha_.dim()));
    } else {
      ledger_.add_finalize(id_, 0);
    }
    finalized_ = true;
  }

  std::uint32_t map(std::span<const double> x) const {
    require(finalized_, ErrorCode::NotFinalized, "agent not finalized");
    const Vector f = mapper_features(x);
    return cfg_.mapper == MapperMode::Gmmc ? map_task(anchors_, f).task_id : map_task_maha(maha_, f).task_id;
  }

  // Per-task best anchor log joint for raw input x (GMMC mapper only).
  std::vector<std::pair<std::uint32_t, double>> task_log_scores(std::span<const double> x) const {
    require(finalized_, ErrorCode::NotFinalized, "agent not finalized");
    require(cfg_.mapper == MapperMode::Gmmc, ErrorCode::InvalidArgument, "task_log_scores needs the GMMC mapper");
    return skill::task_log_scores(anchors_, mapper_features(x));
  }

  // Class scores of one task's head for raw input x.
  Vector task_scores(std::uint32_t task_id, std::span<const double> x) const {
    const auto it = tasks_.find(task_id);
    require(it != tasks_.end(), ErrorCode::TaskNeverLearned, "agent does not know task " + std::to_string(task_id));
    const StoredTask& st = it->second;
    if (st.h2t) return h2t_scores(*backbone_, BbModel{*st.bb, st.head}, *st.h2t, x);
    if (st.bb) return predict(st.head, embed(*backbone_, &*st.bb, x));
    return predict(st.head, mapper_features(x));
  }

  Inference infer(std::span<const double> x) const { return infer_as(map(x), x); }

  // Test hook: skip the mapper and use the given task's head.
  Inference infer_as(std::uint32_t task_id, std::span<const double> x) const {
    const auto cls = static_cast<std::uint32_t>(argmax(task_scores(task_id, x)));
    return {task_id, cls, registry_.name(task_id, cls)};
  }

  // Everything learned or received, in canonical order and at full double
  // precision. Agent id and cost counters are excluded.
  Bytes serialize_state() const {
    ByteWriter w;
    const auto f64 = [&](double v) { w.u64(std::bit_cast<std::uint64_t>(v)); };
    const auto f64s = [&](std::span<const double> vs) {
      for (double v : vs) f64(v);
    };
    w.raw("SKS1");
    w.u8(static_cast<std::uint8_t>(cfg_.mapper));
    w.u8(finalized_ ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(registry_.size()));
    for (const auto& e : registry_.entries()) {
      w.u32(e.task_id);
      w.u32(e.class_index);
      w.u16(static_cast<std::uint16_t>(e.name.size()));
      w.raw(e.name);
    }
    w.u32(static_cast<std::uint32_t>(tasks_.size()));
    for (const auto& [tid, st] : tasks_) {
      w.u32(tid);
      w.u32(static_cast<std::uint32_t>(st.head.classes()));
      w.u32(static_cast<std::uint32_t>(st.head.dim()));
      w.u8(norm_tag(st.head.norm_p));
      f64s(st.head.weights.data());
      f64s(st.head.bias);
      const Vector bb = st.bb ? st.bb->flat() : Vector{};
      w.u32(static_cast<std::uint32_t>(bb.size()));
      f64s(bb);
      w.u8(st.h2t ? 1 : 0);
      if (st.h2t) {
        w.u32(static_cast<std::uint32_t>(st.h2t->selected.size()));
        for (auto i : st.h2t->selected) w.u32(i);
        f64s(st.h2t->linear.weights.data());
        f64s(st.h2t->linear.bias);
      }
    }
    if (cfg_.mapper == MapperMode::Gmmc) {
      w.u32(static_cast<std::uint32_t>(anchors_.size()));
      for (const auto& e : anchors_.entries()) {
        w.u32(e.task_id);
        w.u32(e.component_index);
        f64(e.component.weight);
        f64s(e.component.mean);
        f64s(e.component.var);
      }
    } else {
      w.u32(static_cast<std::uint32_t>(maha_.class_count()));
      for (const auto& o : maha_.owners()) {
        w.u32(o.task_id);
        w.u32(o.class_index);
      }
      f64s(maha_.means().data());
      f64s(maha_.covariance().data());
      f64(maha_.epsilon());
      w.u64(maha_.pooled_count());
    }
    return w.take();
  }

 private:
  Vector mapper_features(std::span<const double> x) const {
    if (backbone_) return embed(*backbone_, nullptr, x);
    return Vector(x.begin(), x.end());
  }

  void absorb(const KnowledgePacket& p) {
    StoredTask st;
    st.classes = p.class_names;
    st.head = p.head;
    if (!p.bb.empty()) {
      require(backbone_ != nullptr, ErrorCode::PayloadMismatch, "BB payload but agent has no backbone");
      st.bb = BeneficialBias::from_flat(*backbone_, p.bb);
    }
    st.h2t = p.h2t;
    registry_.add_task(p.task_id, p.class_names);
    if (p.mode == MapperMode::Gmmc)
      anchors_.merge(*p.anchor);
    else
      maha_.add_share(*p.share);
    tasks_.emplace(p.task_id, std::move(st));
    finalized_ = false;
  }

  std::uint32_t id_;
  AgentConfig cfg_;
  std::shared_ptr<const ToyBackbone> backbone_;
  CostLedger ledger_;
  GlobalClassRegistry registry_;
  std::map<std::uint32_t, StoredTask> tasks_;
  AnchorBank anchors_;
  MahaBank maha_;
  bool finalized_ = false;
};

}  // namespace skill
