#pragma once

// End-to-end runs: learn (agents in parallel) -> broadcast -> finalize ->
// evaluate, then write the report bundle. Every output byte is a function of
// the config and its seeds.

#include <atomic>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "skill/accounting.hpp"
#include "skill/agent.hpp"
#include "skill/config.hpp"
#include "skill/dataset.hpp"
#include "skill/network.hpp"
#include "skill/similarity.hpp"
#include "skill/synergy_eval.hpp"

namespace skill {

// Reference task-mapper trend line, reported next to each run's own fit. Its
// stated zero crossing is kept verbatim beside the value the line implies.
inline constexpr double kReferenceMapperSlope = -0.0012;
inline constexpr double kReferenceMapperIntercept = 0.952;
inline constexpr double kReferenceStatedZeroCrossing = 800.0;

inline std::vector<TaskDataset> materialize_tasks(const RunConfig& cfg) {
  std::vector<TaskDataset> out;
  for (const auto& t : cfg.tasks) {
    if (t.manifest) {
      out.push_back(load_task(*t.manifest));
    } else {
      out.push_back(synth_task(*t.synth, t.task_id, t.name));
    }
  }
  return out;
}

// Label similarity used for corrective accuracy when no label-embedding file
// is configured: classes are equivalent exactly when their names match.
inline LabelEmbeddings name_identity_embeddings(const GlobalClassRegistry& registry) {
  std::map<std::string, std::size_t> slot;
  for (const auto& e : registry.entries()) slot.emplace(e.name, slot.size());
  LabelEmbeddings le;
  le.vectors = Matrix(registry.size(), slot.size());
  for (std::size_t i = 0; i < registry.size(); ++i) {
    le.names.push_back(registry.at(i).name);
    le.vectors(i, slot.at(registry.at(i).name)) = 1.0;
  }
  return le;
}

struct RunReport {
  RunHistory history;
  CostLedger ledger;
  std::vector<Delivery> deliveries;
  bool states_identical = false;
  bool conserved = false;
  double end_to_end_accuracy = 0.0;  // pooled over every test sample
  double average_accuracy = 0.0;     // mean of per-task accuracies
  double mapper_accuracy = 0.0;
  double plain_accuracy = 0.0;
  std::map<double, double> corrective;  // θ -> accuracy
  std::optional<LineFit> mapper_fit;
  std::string deliveries_csv;
};

namespace detail {

inline std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F&& body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Test-split tallies per checkpoint; step s covers tasks[0..s].
struct EvalCounts {
  std::vector<std::vector<std::size_t>> hits;    // [step][task position]
  std::vector<std::vector<std::size_t>> forced;  // [step][task position]
  std::vector<std::size_t> mapped;               // [step]
  std::vector<TaskClass> final_pred, final_truth;

  explicit EvalCounts(std::size_t steps) : hits(steps), forced(steps), mapped(steps, 0) {
    for (std::size_t s = 0; s < steps; ++s) {
      hits[s].assign(s + 1, 0);
      forced[s].assign(s + 1, 0);
    }
  }
  bool operator==(const EvalCounts&) const = default;
};

// An observer receives the packets in task order and is rescored after each.
inline EvalCounts evaluate_incremental(Agent& observer, const std::vector<TaskDataset>& tasks,
                                       const std::map<std::uint32_t, KnowledgePacket>& packets) {
  EvalCounts c(tasks.size());
  for (std::size_t step = 0; step < tasks.size(); ++step) {
    observer.receive(packets.at(tasks[step].task_id));
    observer.finalize();
    for (std::size_t j = 0; j <= step; ++j) {
      const TaskDataset& t = tasks[j];
      for (std::size_t i = 0; i < t.test.size(); ++i) {
        const auto row = t.test.x.row(i);
        const std::uint32_t label = t.test.labels[i];
        const auto out = observer.infer(row);
        c.mapped[step] += out.task_id == t.task_id;
        c.hits[step][j] += out.task_id == t.task_id && out.class_index == label;
        c.forced[step][j] += observer.infer_as(t.task_id, row).class_index == label;
        if (step + 1 == tasks.size()) {
          c.final_pred.push_back({out.task_id, out.class_index});
          c.final_truth.push_back({t.task_id, label});
        }
      }
    }
  }
  return c;
}

// GMMC only. A task's anchor scores do not depend on the other tasks in the
// bank, so the mapper at step s is the first maximum (in task-id order) over
// the tasks known at s, read off one fully informed agent.
inline EvalCounts evaluate_prefix(const Agent& full, const std::vector<TaskDataset>& tasks) {
  const std::size_t steps = tasks.size();
  EvalCounts c(steps);
  std::map<std::uint32_t, std::size_t> position;
  for (std::size_t j = 0; j < steps; ++j) position[tasks[j].task_id] = j;
  std::vector<double> score(steps);
  std::vector<std::size_t> rank(steps);
  for (std::size_t j = 0; j < steps; ++j) {
    const TaskDataset& t = tasks[j];
    for (std::size_t i = 0; i < t.test.size(); ++i) {
      const auto row = t.test.x.row(i);
      const std::uint32_t label = t.test.labels[i];
      const auto scores = full.task_log_scores(row);
      for (std::size_t r = 0; r < scores.size(); ++r) {
        const std::size_t p = position.at(scores[r].first);
        score[p] = scores[r].second;
        rank[p] = r;
      }
      std::map<std::uint32_t, std::uint32_t> cls;
      const auto head_class = [&](std::uint32_t task) {
        auto it = cls.find(task);
        if (it == cls.end()) it = cls.emplace(task, full.infer_as(task, row).class_index).first;
        return it->second;
      };
      const bool forced_ok = head_class(t.task_id) == label;
      std::size_t best = 0;
      for (std::size_t s = 0; s < steps; ++s) {
        if (score[s] > score[best] || (score[s] == score[best] && rank[s] < rank[best])) best = s;
        if (s < j) continue;
        const std::uint32_t mapped = tasks[best].task_id;
        c.mapped[s] += mapped == t.task_id;
        c.hits[s][j] += mapped == t.task_id && head_class(mapped) == label;
        c.forced[s][j] += forced_ok;
        if (s + 1 == steps) {
          c.final_pred.push_back({mapped, head_class(mapped)});
          c.final_truth.push_back({t.task_id, label});
        }
      }
    }
  }
  return c;
}

inline void record_history(const EvalCounts& c, const std::vector<TaskDataset>& tasks, RunReport& rep) {
  for (std::size_t s = 0; s < tasks.size(); ++s) {
    Checkpoint cp;
    cp.learned = s + 1;
    std::size_t total = 0, hits = 0;
    double sum = 0.0;
    for (std::size_t j = 0; j <= s; ++j) {
      const double n = std::max<double>(1.0, static_cast<double>(tasks[j].test.size()));
      cp.accuracy[tasks[j].task_id] = static_cast<double>(c.hits[s][j]) / n;
      cp.forced[tasks[j].task_id] = static_cast<double>(c.forced[s][j]) / n;
      sum += static_cast<double>(c.hits[s][j]) / n;
      hits += c.hits[s][j];
      total += tasks[j].test.size();
    }
    cp.average_accuracy = sum / static_cast<double>(s + 1);
    cp.mapper_accuracy = total ? static_cast<double>(c.mapped[s]) / static_cast<double>(total) : 0.0;
    if (s + 1 == tasks.size()) rep.end_to_end_accuracy = total ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
    rep.history.add(std::move(cp));
  }
  rep.average_accuracy = rep.history.checkpoints().back().average_accuracy;
  rep.mapper_accuracy = rep.history.checkpoints().back().mapper_accuracy;
  if (rep.history.size() >= 2) rep.mapper_fit = mapper_accuracy_curve(rep.history).fit;
}

}  // namespace detail

inline RunReport run_experiment(const RunConfig& cfg) {
  const std::vector<TaskDataset> tasks = materialize_tasks(cfg);
  std::map<std::uint32_t, const TaskDataset*> by_id;
  for (const auto& t : tasks) by_id[t.task_id] = &t;

  std::shared_ptr<const ToyBackbone> backbone;
  if (cfg.backbone) backbone = std::make_shared<ToyBackbone>(ToyBackbone::random(*cfg.backbone, cfg.backbone_seed));

  AgentConfig acfg = cfg.agent;
  acfg.seed = cfg.seed;
  acfg.expected_tasks = tasks.size();
  std::vector<std::unique_ptr<Agent>> agents;
  for (std::size_t a = 0; a < cfg.agents; ++a)
    agents.push_back(std::make_unique<Agent>(static_cast<std::uint32_t>(a), acfg, backbone, cfg.alpha));

  // Learn: each agent owns its state; packets are collected per task.
  std::vector<std::map<std::uint32_t, KnowledgePacket>> produced(cfg.agents);
  detail::parallel_for(cfg.agents, cfg.workers, [&](std::size_t a) {
    for (std::uint32_t tid : cfg.assignment[a]) produced[a].emplace(tid, agents[a]->learn_task(*by_id.at(tid)));
  });

  // Share: committed in canonical (sender, task) order.
  std::vector<std::uint32_t> roster;
  for (std::size_t a = 0; a < cfg.agents; ++a) roster.push_back(static_cast<std::uint32_t>(a));
  SimNetwork net(roster, cfg.byte_mode);
  CostLedger traffic(cfg.alpha);
  std::map<std::uint32_t, KnowledgePacket> packets;
  for (std::size_t a = 0; a < cfg.agents; ++a) {
    for (const auto& [tid, p] : produced[a]) {
      net.broadcast(static_cast<std::uint32_t>(a), p, traffic,
                    [&](std::uint32_t r, std::span<const std::uint8_t> bytes) { agents[r]->receive(bytes); });
      packets.emplace(tid, p);
    }
  }

  detail::parallel_for(cfg.agents, cfg.workers, [&](std::size_t a) { agents[a]->finalize(); });

  RunReport rep;
  rep.ledger = CostLedger(cfg.alpha);
  for (const auto& a : agents) rep.ledger.merge(a->ledger());
  rep.ledger.merge(traffic);
  rep.conserved = rep.ledger.conserved(cfg.agents);
  rep.deliveries = net.log();
  rep.deliveries_csv = net.log_csv();

  const Bytes reference = agents.front()->serialize_state();
  rep.states_identical = std::all_of(agents.begin(), agents.end(),
                                     [&](const auto& a) { return a->serialize_state() == reference; });

  const bool prefix = cfg.agent.mapper == MapperMode::Gmmc;
  std::optional<Agent> observer;
  if (!prefix) {
    AgentConfig ocfg = acfg;
    ocfg.expected_tasks.reset();
    observer.emplace(static_cast<std::uint32_t>(cfg.agents), ocfg, backbone, cfg.alpha);
  }
  const detail::EvalCounts counts =
      prefix ? detail::evaluate_prefix(*agents.front(), tasks) : detail::evaluate_incremental(*observer, tasks, packets);
  if (observer) rep.states_identical = rep.states_identical && observer->serialize_state() == reference;
  detail::record_history(counts, tasks, rep);

  const GlobalClassRegistry& registry = agents.front()->registry();
  const SimilarityMatrix sims = cfg.labels ? similarity_matrix(*cfg.labels, registry)
                                           : similarity_matrix(name_identity_embeddings(registry), registry);
  rep.plain_accuracy = plain_accuracy(counts.final_pred, counts.final_truth);
  for (double th : cfg.thetas)
    rep.corrective[th] = corrective_accuracy(counts.final_pred, counts.final_truth, registry, sims, th);
  return rep;
}

inline nlohmann::ordered_json summary_json(const RunConfig& cfg, const RunReport& rep) {
  nlohmann::ordered_json j;
  j["run"] = {{"seed", cfg.seed},
              {"tasks", cfg.task_count()},
              {"agents", cfg.agents},
              {"mapper", to_string(cfg.agent.mapper)},
              {"bb", cfg.agent.bb},
              {"h2t", cfg.agent.h2t},
              {"k", cfg.agent.gmm_k},
              {"m", cfg.agent.exemplars_per_class},
              {"alpha", cfg.alpha},
              {"byte_mode", to_string(cfg.byte_mode)}};
  nlohmann::ordered_json corr = nlohmann::ordered_json::object();
  for (const auto& [th, acc] : rep.corrective) corr[detail::fmt(th)] = acc;
  j["accuracy"] = {{"average", rep.average_accuracy},
                   {"end_to_end", rep.end_to_end_accuracy},
                   {"mapper", rep.mapper_accuracy},
                   {"plain", rep.plain_accuracy},
                   {"corrective", corr}};
  if (rep.mapper_fit) {
    j["mapper_curve"] = {{"slope", rep.mapper_fit->slope}, {"intercept", rep.mapper_fit->intercept}};
    j["mapper_curve"]["zero_crossing"] =
        rep.mapper_fit->zero_crossing ? nlohmann::ordered_json(*rep.mapper_fit->zero_crossing) : nlohmann::ordered_json(nullptr);
  }
  j["reference_mapper_line"] = {
      {"slope", kReferenceMapperSlope},
      {"intercept", kReferenceMapperIntercept},
      {"stated_zero_crossing", kReferenceStatedZeroCrossing},
      {"recomputed_zero_crossing", *zero_crossing(kReferenceMapperSlope, kReferenceMapperIntercept)}};
  for (ByteMode m : {ByteMode::Exact, ByteMode::Paper}) {
    const Speedup s = rep.ledger.parallel(m);
    j["parallel"][to_string(m)] = {{"speedup", s.speedup}, {"efficiency", s.efficiency}};
  }
  j["checks"] = {{"states_identical", rep.states_identical}, {"ledger_conserved", rep.conserved}};
  return j;
}

// Accuracy and cost summary, one row per byte-counting mode.
inline std::string summary_csv(const RunConfig& cfg, const RunReport& rep) {
  std::ostringstream os;
  os << "mapper,bb,h2t,tasks,agents,average_accuracy,mapper_accuracy";
  for (const auto& [th, acc] : rep.corrective) os << ",corrective_" << detail::fmt(th);
  os << ",byte_mode,teacher_macs,comm_bytes,comm_macs,student_macs,speedup,efficiency\n";
  const AgentCost total = rep.ledger.total();
  for (ByteMode m : {ByteMode::Exact, ByteMode::Paper}) {
    const Speedup s = rep.ledger.parallel(m);
    const auto bytes = total.ingress[static_cast<int>(m)];
    os << to_string(cfg.agent.mapper) << ',' << cfg.agent.bb << ',' << cfg.agent.h2t << ',' << cfg.task_count() << ','
       << cfg.agents << ',' << detail::fmt(rep.average_accuracy) << ',' << detail::fmt(rep.mapper_accuracy);
    for (const auto& [th, acc] : rep.corrective) os << ',' << detail::fmt(acc);
    os << ',' << to_string(m) << ',' << (total.teacher + total.anchor) << ',' << bytes << ','
       << detail::fmt(comm_to_macs(static_cast<double>(bytes), cfg.alpha)) << ',' << total.finalize << ','
       << detail::fmt(s.speedup) << ',' << detail::fmt(s.efficiency) << '\n';
  }
  return os.str();
}

inline const std::vector<std::string>& report_files() {
  static const std::vector<std::string> files{"summary.json",          "summary.csv",     "history.csv",
                                              "normalized_accuracy.csv", "mapper_curve.csv", "costs.json",
                                              "deliveries.csv"};
  return files;
}

inline void write_report(const RunConfig& cfg, const RunReport& rep, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "summary.json", summary_json(cfg, rep).dump(2) + "\n");
  write_text(dir / "summary.csv", summary_csv(cfg, rep));
  write_text(dir / "history.csv", history_csv(rep.history));
  write_text(dir / "normalized_accuracy.csv", normalized_accuracy_csv(rep.history));
  write_text(dir / "mapper_curve.csv", mapper_curve_csv(rep.history));
  write_text(dir / "costs.json", rep.ledger.to_json().dump(2) + "\n");
  write_text(dir / "deliveries.csv", rep.deliveries_csv);
}

}  // namespace skill
