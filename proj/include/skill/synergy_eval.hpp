#pragma once

// Evaluation: corrective accuracy over a label-similarity matrix, run
// histories with normalized per-task accuracy, and the task-mapper accuracy
// trend with its least-squares line.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "skill/dataset.hpp"
#include "skill/error.hpp"
#include "skill/similarity.hpp"

namespace skill {

struct TaskClass {
  std::uint32_t task_id = 0;
  std::uint32_t class_index = 0;
  bool operator==(const TaskClass&) const = default;
};

// A prediction counts when it names the right (task, class) or a global class
// whose label similarity to the truth is at least θ.
inline double corrective_accuracy(const std::vector<TaskClass>& predicted, const std::vector<TaskClass>& truth,
                                  const GlobalClassRegistry& registry, const SimilarityMatrix& sims, double theta) {
  require(predicted.size() == truth.size(), ErrorCode::CountMismatch, "predictions vs truth length");
  require(theta >= 0.0 && theta <= 1.0, ErrorCode::InvalidArgument, "theta must be in [0, 1]");
  require(sims.size() == registry.size(), ErrorCode::CountMismatch, "similarity matrix vs registry size");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == truth[i]) {
      ++hits;
      continue;
    }
    const std::size_t gp = registry.global_index(predicted[i].task_id, predicted[i].class_index);
    const std::size_t gt = registry.global_index(truth[i].task_id, truth[i].class_index);
    hits += sims(gp, gt) >= theta;
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

inline double plain_accuracy(const std::vector<TaskClass>& predicted, const std::vector<TaskClass>& truth) {
  require(predicted.size() == truth.size(), ErrorCode::CountMismatch, "predictions vs truth length");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

// ---------------------------------------------------------------------------

struct Checkpoint {
  std::size_t learned = 0;                       // tasks known at this checkpoint
  std::map<std::uint32_t, double> accuracy;      // end-to-end, per learned task
  std::map<std::uint32_t, double> forced;        // with the correct task forced
  double mapper_accuracy = 0.0;
  double average_accuracy = 0.0;
};

// Checkpoint t covers exactly the first t tasks of the learning order.
class RunHistory {
 public:
  void add(Checkpoint cp) {
    require(cp.accuracy.size() == cp.learned, ErrorCode::InvalidArgument, "checkpoint must cover every learned task");
    require(checkpoints_.empty() || cp.learned == checkpoints_.back().learned + 1, ErrorCode::InvalidArgument,
            "checkpoints must add one task at a time");
    if (!checkpoints_.empty())
      for (const auto& [tid, acc] : checkpoints_.back().accuracy)
        require(cp.accuracy.count(tid) != 0, ErrorCode::InvalidArgument, "checkpoint dropped a learned task");
    checkpoints_.push_back(std::move(cp));
  }

  const std::vector<Checkpoint>& checkpoints() const noexcept { return checkpoints_; }
  std::size_t size() const noexcept { return checkpoints_.size(); }

  // Index of the checkpoint at which the task first appears.
  std::size_t learned_at(std::uint32_t task_id) const {
    for (std::size_t i = 0; i < checkpoints_.size(); ++i)
      if (checkpoints_[i].accuracy.count(task_id)) return i;
    fail(ErrorCode::TaskNeverLearned, "task " + std::to_string(task_id) + " never appears in the history");
  }

 private:
  std::vector<Checkpoint> checkpoints_;
};

struct CurvePoint {
  std::size_t learned;
  double value;
};

// Accuracy divided by its value at the learning checkpoint, from that
// checkpoint onwards. A zero initial accuracy yields a curve of zeros.
inline std::vector<CurvePoint> normalized_accuracy(const RunHistory& h, std::uint32_t task_id, bool forced = false) {
  const std::size_t start = h.learned_at(task_id);
  const auto pick = [&](const Checkpoint& cp) { return (forced ? cp.forced : cp.accuracy).at(task_id); };
  const double initial = pick(h.checkpoints()[start]);
  std::vector<CurvePoint> out;
  for (std::size_t i = start; i < h.size(); ++i) {
    const auto& cp = h.checkpoints()[i];
    out.push_back({cp.learned, i == start ? 1.0 : (initial > 0.0 ? pick(cp) / initial : 0.0)});
  }
  if (initial <= 0.0) out.front().value = 0.0;
  return out;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::optional<double> zero_crossing;  // none for a flat line
};

inline LineFit least_squares(const std::vector<double>& xs, const std::vector<double>& ys) {
  require(xs.size() == ys.size() && xs.size() >= 2, ErrorCode::InvalidArgument, "least squares needs >= 2 points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i] / n;
    my += ys[i] / n;
  }
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  require(sxx > 0.0, ErrorCode::InvalidArgument, "least squares needs distinct x values");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (f.slope != 0.0) f.zero_crossing = -f.intercept / f.slope;
  return f;
}

inline std::optional<double> zero_crossing(double slope, double intercept) {
  if (slope == 0.0) return std::nullopt;
  return -intercept / slope;
}

struct MapperCurve {
  std::vector<CurvePoint> points;
  LineFit fit;
};

inline MapperCurve mapper_accuracy_curve(const RunHistory& h) {
  require(h.size() >= 2, ErrorCode::InvalidArgument, "mapper curve needs >= 2 checkpoints");
  MapperCurve c;
  std::vector<double> xs, ys;
  for (const auto& cp : h.checkpoints()) {
    c.points.push_back({cp.learned, cp.mapper_accuracy});
    xs.push_back(static_cast<double>(cp.learned));
    ys.push_back(cp.mapper_accuracy);
  }
  c.fit = least_squares(xs, ys);
  return c;
}

// ---------------------------------------------------------------------------
// CSV export

namespace detail {
inline std::ostringstream csv_stream() {
  std::ostringstream os;
  os.precision(10);
  return os;
}
}  // namespace detail

inline std::string history_csv(const RunHistory& h) {
  auto os = detail::csv_stream();
  os << "learned,task_id,accuracy,forced_accuracy,mapper_accuracy,average_accuracy\n";
  for (const auto& cp : h.checkpoints())
    for (const auto& [tid, acc] : cp.accuracy)
      os << cp.learned << ',' << tid << ',' << acc << ',' << cp.forced.at(tid) << ',' << cp.mapper_accuracy << ','
         << cp.average_accuracy << '\n';
  return os.str();
}

inline std::string normalized_accuracy_csv(const RunHistory& h) {
  auto os = detail::csv_stream();
  os << "task_id,learned,normalized_accuracy,normalized_forced_accuracy\n";
  if (h.size() == 0) return os.str();
  for (const auto& [tid, acc] : h.checkpoints().back().accuracy) {
    const auto plain = normalized_accuracy(h, tid);
    const auto forced = normalized_accuracy(h, tid, true);
    for (std::size_t i = 0; i < plain.size(); ++i)
      os << tid << ',' << plain[i].learned << ',' << plain[i].value << ',' << forced[i].value << '\n';
  }
  return os.str();
}

inline std::string mapper_curve_csv(const RunHistory& h) {
  auto os = detail::csv_stream();
  os << "learned,mapper_accuracy\n";
  for (const auto& cp : h.checkpoints()) os << cp.learned << ',' << cp.mapper_accuracy << '\n';
  if (h.size() >= 2) {
    const auto fit = mapper_accuracy_curve(h).fit;
    os << "# slope," << fit.slope << "\n# intercept," << fit.intercept << "\n# zero_crossing,";
    if (fit.zero_crossing)
      os << *fit.zero_crossing;
    else
      os << "none";
    os << '\n';
  }
  return os.str();
}

}  // namespace skill
