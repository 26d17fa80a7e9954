// Acceptance suite: one PASS/FAIL line per criterion.
//
//   skill_acceptance             run every criterion
//   skill_acceptance <name>...   run the named criteria
//   skill_acceptance --list      print the criterion names
//
// Exit status is nonzero when any selected criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "skill/experiment.hpp"

namespace fs = std::filesystem;
using namespace skill;

namespace {

// Pinned tolerances and thresholds.
constexpr double kEfficiencyTarget = 0.9966;
constexpr double kEfficiencyTol = 0.0005;
constexpr double kErClosedForm = 304.0;
constexpr double kErSummation = 308.04;
constexpr double kErTol = 1e-9;
constexpr double kEmMonotoneTol = 1e-9;
constexpr double kEmWeightTol = 1e-9;
constexpr double kFdStep = 1e-5;
constexpr double kFdRelTol = 1e-4;
constexpr double kMinMapperAccuracy = 0.95;
constexpr double kMinEndToEndAccuracy = 0.90;
constexpr double kMaxTransferRatio = 0.34;
constexpr double kEquivalentLabelSim = 0.95;

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("skill_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

RunConfig config_from(const std::string& text, const fs::path& base = ".") {
  const auto r = validate_config_text(text, base);
  if (!r.config) fail(ErrorCode::ConfigInvalid, r.errors.front());
  return *r.config;
}

// ---------------------------------------------------------------------------

Outcome byte_accounting() {
  constexpr std::size_t d = 2048, k = 25, c = 10, units = 17472;
  GmmcAnchor anchor{0, std::vector<GmmComponent>(k, GmmComponent{1.0 / k, Vector(d, 0.0), Vector(d, 1.0)})};
  KnowledgePacket gmmc;
  gmmc.class_names = default_class_names("t", c);
  gmmc.head = Head{0, Matrix(c, d), Vector(c, 0.0), std::nullopt};
  gmmc.bb = Vector(units, 0.0);
  gmmc.anchor = anchor;
  KnowledgePacket maha = gmmc;
  maha.mode = MapperMode::Maha;
  maha.bb.clear();
  maha.anchor.reset();
  maha.share = MahaTeacherShare{0, 5, Matrix(c, d), std::vector<Matrix>(c, Matrix(0, d))};

  const std::uint64_t anchor_b = paper_anchor_bytes(k, d), bb_b = paper_bb_bytes(units),
                      head_b = paper_head_bytes(c, d), ex_b = paper_exemplar_bytes();
  const bool ok = anchor_b == 409600 && bb_b == 69888 && head_b == 2048 * c * 4 && ex_b == 1341015 &&
                  packet_size(gmmc, ByteMode::Paper) == head_b + bb_b + anchor_b &&
                  packet_size(maha, ByteMode::Paper) == head_b + ex_b;
  std::ostringstream os;
  os << "anchor " << anchor_b << ", bb " << bb_b << ", head(c=10) " << head_b << ", exemplars " << ex_b
     << ", gmmc+bb packet " << packet_size(gmmc, ByteMode::Paper) << ", maha packet "
     << packet_size(maha, ByteMode::Paper);
  return {ok, os.str()};
}

Outcome parallel_efficiency_reference() {
  constexpr std::uint32_t n = 51;
  CostLedger ledger(1000.0);
  for (std::uint32_t a = 0; a < n; ++a) {
    ledger.add_teacher(a, 169'000'000'000'000ULL);
    ledger.add_ingress(a, 6'720'000'000ULL, 6'720'000'000ULL);
    ledger.add_finalize(a, 5'000'000'000ULL);
  }
  const Speedup s = ledger.parallel(ByteMode::Paper);
  const bool ok = std::abs(s.efficiency - kEfficiencyTarget) <= kEfficiencyTol;
  return {ok, "efficiency " + fmt("%.6f", s.efficiency) + " (target " + fmt("%.4f", kEfficiencyTarget) + " ± " +
                  fmt("%.4f", kEfficiencyTol) + "), speedup " + fmt("%.3f", s.speedup) + " of N=51"};
}

Outcome er_analytic_cost() {
  const ErCost e = er_cost(102, 0.04);
  const bool ok = std::abs(e.paper_form - kErClosedForm) <= kErTol && std::abs(e.summation - kErSummation) <= kErTol;
  return {ok, "closed form " + fmt("%.2f", e.paper_form) + ", summation " + fmt("%.2f", e.summation)};
}

Outcome em_correctness() {
  RngStream rng(2024);
  std::size_t iterations = 0, bad_ll = 0, bad_w = 0;
  double worst_drop = 0.0, worst_w = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t d = 1 + rng.below(8), k = 1 + rng.below(5), n = std::max<std::size_t>(k, 20 + rng.below(481));
    Matrix centers(k, d);
    for (double& v : centers.data()) v = 4.0 * rng.normal();
    Matrix x(0, d);
    std::vector<double> row(d);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = rng.below(k);
      const double scale = 0.3 + rng.uniform();
      for (std::size_t j = 0; j < d; ++j) row[j] = centers(c, j) + scale * rng.normal();
      x.append_row(row);
    }
    GmmFitOptions opt;
    opt.k = k;
    opt.seed = 1000 + static_cast<std::uint64_t>(inst);
    opt.max_iter = 100;
    opt.tol = 1e-10;
    const GmmFitReport rep = fit_gmmc_report(x, opt);
    iterations += rep.iterations;
    for (std::size_t i = 1; i < rep.mean_loglik.size(); ++i) {
      const double drop = rep.mean_loglik[i - 1] - rep.mean_loglik[i];
      worst_drop = std::max(worst_drop, drop);
      bad_ll += drop > kEmMonotoneTol;
    }
    double sum = 0.0;
    for (const auto& c : rep.anchor.components) sum += c.weight;
    worst_w = std::max(worst_w, std::abs(sum - 1.0));
    bad_w += std::abs(sum - 1.0) > kEmWeightTol;
  }
  return {bad_ll == 0 && bad_w == 0, "100 instances, " + std::to_string(iterations) + " E-steps, largest LL drop " +
                                         fmt("%.2e", worst_drop) + ", largest |Σφ−1| " + fmt("%.2e", worst_w)};
}

// ‖a − n‖ / max(‖a‖, ‖n‖)
double rel_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, an = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    an += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(std::max(an, nn)), 1e-12);
}

template <typename Loss>
std::vector<double> central_differences(std::vector<double> params, Loss&& loss) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + kFdStep;
    const double up = loss(params);
    params[i] = keep - kFdStep;
    const double down = loss(params);
    params[i] = keep;
    g[i] = (up - down) / (2.0 * kFdStep);
  }
  return g;
}

Outcome gradient_checks() {
  RngStream rng(77);
  double worst_bb = 0.0, worst_head = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    ToyBackboneSpec spec;
    spec.in_channels = 1 + rng.below(2);
    spec.height = 5 + rng.below(3);
    spec.width = 5 + rng.below(3);
    spec.conv_channels.assign(1 + rng.below(2), 0);
    for (auto& ch : spec.conv_channels) ch = 2 + rng.below(2);
    spec.fc_widths.assign(1 + rng.below(2), 0);
    for (auto& w : spec.fc_widths) w = 3 + rng.below(4);
    const ToyBackbone bk = ToyBackbone::random(spec, 500 + static_cast<std::uint64_t>(inst));
    const std::size_t classes = 2 + rng.below(3), n = 6;
    BeneficialBias bb(bk);
    for (auto& layer : bb.layers())
      for (double& v : layer) v = 0.3 * rng.normal();
    Head head{0, Matrix(classes, bk.embed_dim()), Vector(classes), std::nullopt};
    for (double& v : head.weights.data()) v = rng.normal();
    for (double& v : head.bias) v = rng.normal();
    Split data(bk.input_dim());
    std::vector<double> x(bk.input_dim());
    for (std::size_t i = 0; i < n; ++i) {
      for (double& v : x) v = rng.normal();
      data.push(static_cast<std::uint32_t>(i % classes), x);
    }
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0);

    // Beneficial biases and the head on top of the backbone.
    const BbLossGrad g = bb_loss_grad(bk, bb, head, data, rows);
    const auto fd_bb = central_differences(bb.flat(), [&](const std::vector<double>& p) {
      return bb_loss_grad(bk, BeneficialBias::from_flat(bk, p), head, data, rows).loss;
    });
    worst_bb = std::max(worst_bb, rel_error(g.grad_bb, fd_bb));
    std::vector<double> hp(head.weights.data().begin(), head.weights.data().end());
    hp.insert(hp.end(), head.bias.begin(), head.bias.end());
    const auto fd_head = central_differences(hp, [&](const std::vector<double>& p) {
      Head h = head;
      std::copy(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(h.weights.data().size()), h.weights.data().begin());
      std::copy(p.end() - static_cast<std::ptrdiff_t>(h.bias.size()), p.end(), h.bias.begin());
      return bb_loss_grad(bk, bb, h, data, rows).loss;
    });
    std::vector<double> ga(g.grad_w.data().begin(), g.grad_w.data().end());
    ga.insert(ga.end(), g.grad_b.begin(), g.grad_b.end());
    worst_head = std::max(worst_head, rel_error(ga, fd_head));

    // The plain head on embeddings, unnormalized and through p-norm rows.
    const Split emb = embed_split(bk, data);
    for (std::optional<double> p : {std::optional<double>{}, std::optional<double>{2.0}, std::optional<double>{kInfNorm}}) {
      const LossGrad lg = softmax_loss_grad(head.weights, head.bias, emb.x, emb.labels, rows, 0.01, p);
      const auto fd = central_differences(hp, [&](const std::vector<double>& q) {
        Matrix w = head.weights;
        std::copy(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(w.data().size()), w.data().begin());
        const std::vector<double> b(q.end() - static_cast<std::ptrdiff_t>(head.bias.size()), q.end());
        return softmax_loss_grad(w, b, emb.x, emb.labels, rows, 0.01, p).loss;
      });
      std::vector<double> a(lg.grad_w.data().begin(), lg.grad_w.data().end());
      a.insert(a.end(), lg.grad_b.begin(), lg.grad_b.end());
      worst_head = std::max(worst_head, rel_error(a, fd));
    }
  }
  const bool ok = worst_bb <= kFdRelTol && worst_head <= kFdRelTol;
  return {ok, "20 backbones, worst relative error: bb " + fmt("%.2e", worst_bb) + ", head " + fmt("%.2e", worst_head) +
                  " (tol " + fmt("%.0e", kFdRelTol) + ")"};
}

Outcome maha_oracle() {
  RngStream rng(31);
  constexpr std::size_t d = 6;
  std::vector<MahaBank::Owner> owners;
  Matrix means(0, d);
  std::vector<double> row(d);
  for (std::uint32_t t = 0; t < 4; ++t)
    for (std::uint32_t c = 0; c < 5; ++c) {
      owners.push_back({t, c});
      for (double& v : row) v = 3.0 * rng.normal();
      means.append_row(row);
    }
  const MahaBank bank = MahaBank::from_parts(owners, means, Matrix::identity(d));
  std::size_t agree = 0;
  for (int q = 0; q < 1000; ++q) {
    for (double& v : row) v = 4.0 * rng.normal();
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < means.rows(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (row[j] - means(i, j)) * (row[j] - means(i, j));
      if (s < best_d) {
        best_d = s;
        best = i;
      }
    }
    const MahaAssignment a = map_task_maha(bank, row);
    agree += a.task_id == owners[best].task_id && a.class_index == owners[best].class_index;
  }
  return {agree == 1000, std::to_string(agree) + "/1000 queries match brute-force nearest mean"};
}

const char* kDeskRun = R"(
seed = 1
agents = 5
mapper = "gmmc"
k = 5
workers = 1
[train]
epochs = 20
[synth]
count = 10
classes = 5
dim = 32
separation = 8.0
stddev = 1.0
)";

Outcome desk_scale_run() {
  const RunConfig cfg = config_from(kDeskRun);
  const RunReport rep = run_experiment(cfg);
  const bool ok = rep.mapper_accuracy >= kMinMapperAccuracy && rep.end_to_end_accuracy >= kMinEndToEndAccuracy &&
                  rep.states_identical && rep.conserved;
  return {ok, "mapper " + fmt("%.4f", rep.mapper_accuracy) + ", end-to-end " + fmt("%.4f", rep.end_to_end_accuracy) +
                  ", 5 states identical " + (rep.states_identical ? "yes" : "no") + ", ledger conserved " +
                  (rep.conserved ? "yes" : "no")};
}

Outcome parameter_isolation() {
  const std::vector<std::pair<std::string, std::string>> variants{
      {"gmmc", "mapper = \"gmmc\"\nk = 4\n[synth]\ncount = 8\nclasses = 4\ndim = 16\nseparation = 5.0\n"},
      {"maha", "mapper = \"maha\"\n[synth]\ncount = 8\nclasses = 4\ndim = 16\nseparation = 5.0\n"},
      {"gmmc+bb", "mapper = \"gmmc\"\nbb = true\nk = 3\n[train]\nepochs = 5\n[backbone]\nconv = [4]\nfc = [16]\n"
                  "[synth]\ncount = 5\nclasses = 3\ndim = 64\nseparation = 5.0\ntrain_per_class = 30\n"}};
  std::ostringstream os;
  bool ok = true;
  std::size_t compared = 0;
  for (const auto& [label, text] : variants) {
    const RunConfig cfg = config_from("seed = 4\n" + text);
    const auto tasks = materialize_tasks(cfg);
    std::shared_ptr<const ToyBackbone> bk;
    if (cfg.backbone) bk = std::make_shared<ToyBackbone>(ToyBackbone::random(*cfg.backbone, cfg.backbone_seed));
    AgentConfig acfg = cfg.agent;
    acfg.seed = cfg.seed;
    Agent teacher(0, acfg, bk), observer(1, acfg, bk);
    std::map<std::uint32_t, KnowledgePacket> packets;
    for (const auto& t : tasks) packets.emplace(t.task_id, teacher.learn_task(t));
    const auto counts = detail::evaluate_incremental(observer, tasks, packets);
    std::size_t mismatches = 0;
    for (std::size_t s = 0; s < tasks.size(); ++s)
      for (std::size_t j = 0; j <= s; ++j) {
        ++compared;
        mismatches += counts.forced[s][j] != counts.forced[j][j];
      }
    ok = ok && mismatches == 0;
    os << label << " " << mismatches << " changes; ";
  }
  os << compared << " (checkpoint, task) pairs";
  return {ok, os.str()};
}

Outcome corrective_evaluation() {
  const fs::path dir = scratch_dir("corrective");
  SynthSpec spec;
  spec.num_classes = 3;
  spec.dim = 16;
  spec.separation = 6.0;
  spec.seed = 8;
  const Matrix shared = synth_class_means(spec);
  Matrix other = synth_class_means([&] {
    SynthSpec s = spec;
    s.seed = 9;
    return s;
  }());
  // Task 1's "Kitchen" is drawn from the same distribution as task 0's "kitchen".
  Matrix second(0, spec.dim);
  second.append_row(shared.row(0));
  second.append_row(other.row(1));
  second.append_row(other.row(2));
  SynthSpec s1 = spec;
  s1.seed = 18;
  const auto m0 = write_task(synth_task_from_means(shared, spec, 0, "indoor", {"kitchen", "forest", "beach"}), dir / "t0");
  const auto m1 = write_task(synth_task_from_means(second, s1, 1, "rooms", {"Kitchen", "desert", "glacier"}), dir / "t1");

  LabelEmbeddings le;
  le.names = {"kitchen", "forest", "beach", "Kitchen", "desert", "glacier"};
  le.vectors = Matrix(6, 6);
  for (std::size_t i = 0; i < 6; ++i) le.vectors(i, i) = 1.0;
  le.vectors(3, 3) = 0.2;
  le.vectors(3, 0) = 1.0;  // cos ≈ 0.98 with "kitchen"
  write_file(dir / "labels.lbl", encode_lbl1(le));

  const RunConfig cfg = config_from("seed = 3\nk = 3\ntheta = [0.5, 0.9, 0.95, 0.99]\nlabels = \"labels.lbl\"\n"
                                    "[[task]]\nmanifest = \"" + m0.string() + "\"\n[[task]]\nmanifest = \"" + m1.string() + "\"\n",
                                    dir);
  const RunReport rep = run_experiment(cfg);
  const double sim = SimilarityMatrix(decode_lbl1(read_file(dir / "labels.lbl")))(0, 3);
  bool ok = sim >= kEquivalentLabelSim && rep.corrective.at(0.95) > rep.plain_accuracy;
  for (const auto& [th, acc] : rep.corrective) ok = ok && acc >= rep.plain_accuracy;

  // Every other run: corrective never below plain.
  std::size_t runs = 1;
  for (const char* mapper : {"gmmc", "maha"}) {
    const RunReport r = run_experiment(config_from(std::string("seed = 5\nagents = 2\nmapper = \"") + mapper +
                                                   "\"\nk = 3\n[synth]\ncount = 4\nclasses = 4\ndim = 16\nseparation = 3.0\n"));
    for (const auto& [th, acc] : r.corrective) ok = ok && acc >= r.plain_accuracy;
    ++runs;
  }
  fs::remove_all(dir);
  return {ok, "fixture sim " + fmt("%.4f", sim) + ": plain " + fmt("%.4f", rep.plain_accuracy) + ", corrective@0.95 " +
                  fmt("%.4f", rep.corrective.at(0.95)) + "; corrective >= plain on " + std::to_string(runs) + " runs"};
}

// Paired tasks: B reuses the first half of A's class means (and names). The
// learning speed of those classes in B is compared for random and transfer
// initialization: epochs until the random run's final accuracy is reached.
Outcome transfer_initialization() {
  constexpr std::size_t c = 6, d = 32, shared = 3, pairs = 10;
  double worst = 0.0, sum_ratio = 0.0, sum_rand = 0.0, sum_xfer = 0.0;
  bool ok = true;
  for (std::size_t pair = 0; pair < pairs; ++pair) {
    SynthSpec sa;
    sa.num_classes = c;
    sa.dim = d;
    sa.separation = 3.0;
    sa.test_per_class = 100;
    sa.seed = 100 + pair;
    SynthSpec sb = sa;
    sb.seed = 900 + pair;
    const Matrix ma = synth_class_means(sa), fresh = synth_class_means(sb);
    Matrix mb(0, d);
    std::vector<std::string> na, nb;
    for (std::size_t i = 0; i < c; ++i) {
      na.push_back("a" + std::to_string(i));
      mb.append_row(i < shared ? ma.row(i) : fresh.row(i));
      nb.push_back(i < shared ? na[i] : "b" + std::to_string(i));
    }
    const TaskDataset a = synth_task_from_means(ma, sa, 0, "A", na);
    const TaskDataset b = synth_task_from_means(mb, sb, 1, "B", nb);

    TrainConfig old_cfg;
    old_cfg.epochs = 30;
    old_cfg.lr = 0.01;
    old_cfg.batch_size = 32;
    old_cfg.normalized = true;
    old_cfg.seed = 5;
    const Head ha = train_head(a.train, c, old_cfg, 0);

    TrainConfig new_cfg = old_cfg;
    new_cfg.batch_size = b.train.size();
    auto shared_accuracy = [&](const Head& h) {
      std::size_t hit = 0, n = 0;
      for (std::size_t i = 0; i < b.test.size(); ++i)
        if (b.test.labels[i] < shared) {
          ++n;
          hit += predict_class(h, b.test.x.row(i)) == b.test.labels[i];
        }
      return static_cast<double>(hit) / static_cast<double>(n);
    };
    std::vector<double> random_curve, transfer_curve;
    train_head(b.train, c, new_cfg, 1, [&](std::size_t, double, const Head& h) { random_curve.push_back(shared_accuracy(h)); });
    GlobalClassRegistry reg;
    reg.add_task(0, na);
    reg.add_task(1, nb);
    const Head init = transfer_init(1, reg, {{0, ha}}, similarity_matrix(name_identity_embeddings(reg), reg),
                                    kEquivalentLabelSim, d, 7);
    train_head_from(init, b.train, new_cfg, [&](std::size_t, double, const Head& h) { transfer_curve.push_back(shared_accuracy(h)); });

    const double target = random_curve.back();
    auto epochs_to = [&](const std::vector<double>& curve) {
      for (std::size_t e = 0; e < curve.size(); ++e)
        if (curve[e] >= target) return static_cast<double>(e);
      return std::numeric_limits<double>::infinity();
    };
    const double er = epochs_to(random_curve), et = epochs_to(transfer_curve);
    const double ratio = er > 0.0 ? et / er : (et == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    worst = std::max(worst, ratio);
    sum_ratio += ratio;
    sum_rand += er;
    sum_xfer += et;
    ok = ok && ratio <= kMaxTransferRatio;
  }
  return {ok, std::to_string(pairs) + " pairs sharing " + std::to_string(shared) + "/" + std::to_string(c) +
                  " means: mean epochs random " + fmt("%.1f", sum_rand / pairs) + ", transfer " +
                  fmt("%.1f", sum_xfer / pairs) + "; ratio mean " + fmt("%.3f", sum_ratio / pairs) + ", worst " +
                  fmt("%.3f", worst) + " (limit " + fmt("%.2f", kMaxTransferRatio) + ")"};
}

Outcome full_determinism() {
  const std::vector<std::string> configs{
      std::string(kDeskRun) + "\n",
      "seed = 9\nagents = 3\nmapper = \"maha\"\nworkers = 3\nalpha = 10\nbyte_mode = \"exact\"\n[synth]\ncount = 6\n"
      "classes = 4\ndim = 16\nseparation = 4.0\n",
      "seed = 2\nagents = 2\nbb = true\nh2t = true\nh2t_fraction = 0.25\nk = 3\nworkers = 2\n[train]\nepochs = 5\n"
      "[h2t_train]\nepochs = 5\n[backbone]\nconv = [4]\nfc = [16]\n[synth]\ncount = 3\nclasses = 3\ndim = 64\n"
      "train_per_class = 30\n"};
  const fs::path dir = scratch_dir("determinism");
  std::size_t files = 0, diffs = 0;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    for (const char* copy : {"a", "b"}) {
      const RunConfig cfg = config_from(configs[i]);
      write_report(cfg, run_experiment(cfg), dir / std::to_string(i) / copy);
    }
    for (const auto& f : report_files()) {
      ++files;
      diffs += read_file(dir / std::to_string(i) / "a" / f) != read_file(dir / std::to_string(i) / "b" / f);
    }
  }
  fs::remove_all(dir);
  return {diffs == 0, std::to_string(configs.size()) + " configs, " + std::to_string(files) + " files compared, " +
                          std::to_string(diffs) + " differ"};
}

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"byte_accounting", 1, byte_accounting},
      {"parallel_efficiency_reference", 1, parallel_efficiency_reference},
      {"er_analytic_cost", 1, er_analytic_cost},
      {"em_correctness", 30, em_correctness},
      {"gradient_checks", 60, gradient_checks},
      {"maha_oracle", 10, maha_oracle},
      {"desk_scale_run", 120, desk_scale_run},
      {"parameter_isolation", 60, parameter_isolation},
      {"corrective_evaluation", 60, corrective_evaluation},
      {"transfer_initialization", 60, transfer_initialization},
      {"full_determinism", 120, full_determinism},
  };
  return all;
}

bool run_one(const Criterion& c) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = c.run();
  } catch (const std::exception& e) {
    out = {false, std::string("error: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs <= c.budget_s;
  const bool pass = out.pass && in_time;
  std::printf("%s  %-29s [%.2f s / %.0f s%s]  %s\n", pass ? "PASS" : "FAIL", c.name, secs, c.budget_s,
              in_time ? "" : ", over budget", out.detail.c_str());
  std::fflush(stdout);
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> names(argv + 1, argv + argc);
  if (names.size() == 1 && names[0] == "--list") {
    for (const auto& c : criteria()) std::printf("%s\n", c.name);
    return 0;
  }
  bool all_pass = true;
  std::size_t ran = 0;
  for (const auto& c : criteria()) {
    if (!names.empty() && std::find(names.begin(), names.end(), c.name) == names.end()) continue;
    all_pass = run_one(c) && all_pass;
    ++ran;
  }
  if (ran != (names.empty() ? criteria().size() : names.size())) {
    std::fprintf(stderr, "unknown criterion name\n");
    return 2;
  }
  return all_pass ? 0 : 1;
}
