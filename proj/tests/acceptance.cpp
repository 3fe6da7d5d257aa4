// Acceptance suite: one pass/fail line per criterion. Heavy criteria train
// real models; expect a long run. --only N,M limits the set, --work DIR
// relocates scratch space, --jobs N bounds concurrent training runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "checkpoint.hpp"
#include "config.hpp"
#include "metrics.hpp"
#include "scene.hpp"
#include "trainer.hpp"

using namespace ccap;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Tuning block: scales fixed by pilot runs. Spec-pinned thresholds (1e-4,
// 1e-12, 0.85, 0.90, 1e-6, byte equality) live in the criteria themselves.
// ---------------------------------------------------------------------------
struct Scales {
  // Criterion 5: the default desk-scale run.
  size_t full_train = 2000, full_val = 200, full_test = 400;
  size_t full_image = 64;
  double full_shift = 4.0;
  size_t full_pretrain_epochs = 10;
  size_t full_adapt_epochs = 40;
  double pretrain_lr = 1e-3;
  double adapt_lr = 1e-3;

  // Criteria 2/4/6/7/8: reduced battery scale.
  size_t red_train = 320, red_val = 80, red_test = 160;
  size_t red_image = 48;
  double red_shift = 4.0;
  size_t red_pretrain_epochs = 8;
  size_t red_adapt_epochs = 16;

  // Criterion 10 determinism scale.
  size_t det_train = 60, det_val = 12, det_test = 20;

  uint64_t battery_seeds[3] = {11, 23, 37};
};

Scales g_scales;
fs::path g_work = "acceptance_work";
size_t g_jobs = 2;

void run_parallel(std::vector<std::function<void()>> tasks, size_t jobs) {
  std::vector<std::thread> pool;
  std::mutex mu;
  size_t next = 0;
  for (size_t t = 0; t < std::min(jobs, tasks.size()); ++t) {
    pool.emplace_back([&]() {
      while (true) {
        size_t idx;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= tasks.size()) return;
          idx = next++;
        }
        tasks[idx]();
      }
    });
  }
  for (auto& th : pool) th.join();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("missing file: " + p.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

ModelConfig desk_model() {
  ModelConfig m;  // header defaults are the desk-scale configuration
  return m;
}

DatasetConfig reduced_dataset(double shift_bound, uint64_t data_seed = 1) {
  DatasetConfig d;
  d.train_pairs = g_scales.red_train;
  d.val_pairs = g_scales.red_val;
  d.test_pairs = g_scales.red_test;
  d.image_size = g_scales.red_image;
  d.shift_bound = shift_bound;
  d.seed = data_seed;
  return d;
}

struct SwitchSet {
  const char* name;
  bool adapters, fused, vrf, sem;
  const char* fusion;
};

constexpr SwitchSet kBaseline = {"baseline", false, false, false, false, "add"};
constexpr SwitchSet kFaie = {"faie", true, true, false, false, "add"};
constexpr SwitchSet kFaieVrf = {"faie_vrf", true, true, true, false, "add"};
constexpr SwitchSet kFull = {"full", true, true, true, true, "add"};
constexpr SwitchSet kNoVrf = {"faie_sem", true, true, false, true, "add"};
constexpr SwitchSet kSubtract = {"fuse_sub", true, true, true, true, "subtract"};
constexpr SwitchSet kConcat = {"fuse_cat", true, true, true, true, "concat"};

TrainConfig adapt_config(const SwitchSet& sw, uint64_t seed, const std::string& pretrain_ckpt,
                         size_t epochs, double lr) {
  TrainConfig cfg;
  cfg.phase = "adapt";
  cfg.epochs = epochs;
  cfg.lr = lr;
  cfg.seed = seed;
  cfg.pretrain_checkpoint = pretrain_ckpt;
  cfg.adapters = sw.adapters;
  cfg.fused_adapters = sw.fused;
  cfg.vrf = sw.vrf;
  cfg.sem = sw.sem;
  cfg.fusion = sw.fusion;
  return cfg;
}

std::string battery_pretrain(uint64_t seed) {
  return (g_work / ("battery/pre_s" + std::to_string(seed)) / "best.ckpt").string();
}

std::string battery_run_dir(const SwitchSet& sw, uint64_t seed) {
  return (g_work / ("battery/" + std::string(sw.name) + "_s" + std::to_string(seed)))
      .string();
}

void ensure_battery_dataset() {
  static std::once_flag once;
  std::call_once(once, []() {
    const fs::path dir = g_work / "battery/data";
    if (!fs::exists(dir / "dataset_config.json")) {
      build_dataset(reduced_dataset(g_scales.red_shift), dir.string());
    }
  });
}

void ensure_battery_pretrains() {
  ensure_battery_dataset();
  static std::once_flag once;
  std::call_once(once, []() {
    std::vector<std::function<void()>> tasks;
    for (uint64_t seed : g_scales.battery_seeds) {
      if (fs::exists(battery_pretrain(seed))) continue;
      tasks.push_back([seed]() {
        TrainConfig cfg;
        cfg.phase = "pretrain";
        cfg.epochs = g_scales.red_pretrain_epochs;
        cfg.lr = g_scales.pretrain_lr;
        cfg.seed = seed;
        Trainer tr(cfg, desk_model(), (g_work / "battery/data").string(),
                   (g_work / ("battery/pre_s" + std::to_string(seed))).string());
        tr.run();
      });
    }
    run_parallel(std::move(tasks), g_jobs);
  });
}

void ensure_battery_runs(const std::vector<SwitchSet>& switch_sets) {
  ensure_battery_pretrains();
  std::vector<std::function<void()>> tasks;
  for (const SwitchSet& sw : switch_sets) {
    for (uint64_t seed : g_scales.battery_seeds) {
      const std::string dir = battery_run_dir(sw, seed);
      if (fs::exists(fs::path(dir) / "best.ckpt")) continue;
      const SwitchSet sw_copy = sw;
      tasks.push_back([sw_copy, seed, dir]() {
        TrainConfig cfg = adapt_config(sw_copy, seed, battery_pretrain(seed),
                                       g_scales.red_adapt_epochs, g_scales.adapt_lr);
        Trainer tr(cfg, desk_model(), (g_work / "battery/data").string(), dir);
        tr.run();
      });
    }
  }
  run_parallel(std::move(tasks), g_jobs);
}

double battery_test_metric(const SwitchSet& sw, uint64_t seed, const std::string& metric,
                           const std::string& dataset_dir) {
  EvalOptions opts;
  opts.split = "test";
  EvalResult r = evaluate((fs::path(battery_run_dir(sw, seed)) / "best.ckpt").string(),
                          dataset_dir, opts);
  auto v = r.ranked_metric(metric);
  if (!v) throw std::runtime_error("metric unavailable: " + metric);
  return *v;
}

double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

bool criterion1_gradients(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckSummary summary = run_gradcheck_suite();
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::ostringstream msg;
  msg << "max_rel_err=" << summary.worst << " over " << summary.entries.size()
      << " checks in " << secs << "s";
  detail = msg.str();
  return summary.pass(1e-4) && secs < 300.0;
}

bool criterion2_identity_at_init(std::string& detail) {
  ensure_battery_pretrains();
  const uint64_t seed = g_scales.battery_seeds[0];
  TrainConfig cfg = adapt_config(kFull, seed, battery_pretrain(seed), 1, g_scales.adapt_lr);
  Trainer tr(cfg, desk_model(), (g_work / "battery/data").string(),
             (g_work / "c2_scratch").string());
  tr.prepare();

  auto records = load_split((g_work / "battery/data").string(), "val");
  NoGradGuard ng;
  size_t compared = 0;
  for (size_t i = 0; i < std::min<size_t>(records.size(), 5); ++i) {
    Tensor img1 = records[i].before_image.to_tensor();
    Tensor img2 = records[i].after_image.to_tensor();
    std::vector<size_t> inputs = {Vocabulary::kBos};
    for (size_t id : tr.vocab().encode(records[i].captions[0])) inputs.push_back(id);
    Tensor live = tr.model().caption_logits_for_pair(img1, img2, inputs);
    Tensor ref = tr.model().reference_step0_logits(img1, img2, inputs);
    if (live.shape() != ref.shape()) {
      detail = "shape mismatch";
      return false;
    }
    for (size_t k = 0; k < live.size(); ++k) {
      if (live[k] != ref[k]) {
        std::ostringstream msg;
        msg << "pair " << i << " logit " << k << ": " << live[k] << " != " << ref[k];
        detail = msg.str();
        return false;
      }
      compared++;
    }
  }
  detail = std::to_string(compared) + " logits elementwise identical";
  return true;
}

bool criterion3_warp_oracle(std::string& detail) {
  auto oracle = [](const std::vector<double>& grid, const std::vector<double>& flow, size_t d,
                   size_t h, size_t w) {
    std::vector<double> out(d * h * w, 0.0);
    for (size_t c = 0; c < d; ++c) {
      for (size_t m = 0; m < h; ++m) {
        for (size_t n = 0; n < w; ++n) {
          double sx = static_cast<double>(n) + flow[m * w + n];
          double sy = static_cast<double>(m) + flow[h * w + m * w + n];
          sx = std::min(std::max(sx, 0.0), static_cast<double>(w - 1));
          sy = std::min(std::max(sy, 0.0), static_cast<double>(h - 1));
          const long x0 = static_cast<long>(std::floor(sx));
          const long y0 = static_cast<long>(std::floor(sy));
          double acc = 0.0;
          for (long dy = 0; dy <= 1; ++dy) {
            for (long dx = 0; dx <= 1; ++dx) {
              const long xx = std::min<long>(x0 + dx, static_cast<long>(w) - 1);
              const long yy = std::min<long>(y0 + dy, static_cast<long>(h) - 1);
              const double wx = dx == 0 ? 1.0 - (sx - static_cast<double>(x0))
                                        : sx - static_cast<double>(x0);
              const double wy = dy == 0 ? 1.0 - (sy - static_cast<double>(y0))
                                        : sy - static_cast<double>(y0);
              acc += wx * wy * grid[c * h * w + static_cast<size_t>(yy) * w +
                                    static_cast<size_t>(xx)];
            }
          }
          out[c * h * w + m * w + n] = acc;
        }
      }
    }
    return out;
  };

  double worst = 0.0;
  size_t cases = 0;
  Rng rng(20240817);
  for (int rep = 0; rep < 200; ++rep) {
    const size_t d = 1 + rng.below(4);
    const size_t h = 2 + rng.below(7);
    const size_t w = 2 + rng.below(7);
    Tensor grid = Tensor::zeros({d, h, w});
    for (double& v : grid.values()) v = rng.uniform(-4.0, 4.0);
    Tensor flow = Tensor::zeros({2, h, w});
    for (double& v : flow.values()) v = rng.uniform(-3.0, 3.0);
    Tensor out = bilinear_warp(grid, flow);
    auto expect = oracle(grid.values(), flow.values(), d, h, w);
    for (size_t i = 0; i < out.size(); ++i) {
      worst = std::max(worst, std::fabs(out[i] - expect[i]));
    }
    cases++;
  }

  // Constant-field preservation under arbitrary flows.
  for (int rep = 0; rep < 20; ++rep) {
    Tensor grid = Tensor::full({3, 6, 6}, rng.uniform(-5.0, 5.0));
    Tensor flow = Tensor::zeros({2, 6, 6});
    for (double& v : flow.values()) v = rng.uniform(-6.0, 6.0);
    Tensor out = bilinear_warp(grid, flow);
    for (size_t i = 0; i < out.size(); ++i) {
      worst = std::max(worst, std::fabs(out[i] - grid[0]));
    }
    cases++;
  }

  // Integer shifts reduce to index shifts with border clamping.
  for (int rep = 0; rep < 20; ++rep) {
    const size_t h = 5, w = 5;
    Tensor grid = Tensor::zeros({2, h, w});
    for (double& v : grid.values()) v = rng.uniform(-2.0, 2.0);
    const double sx = static_cast<double>(static_cast<long>(rng.below(5)) - 2);
    const double sy = static_cast<double>(static_cast<long>(rng.below(5)) - 2);
    Tensor flow = Tensor::zeros({2, h, w});
    for (size_t i = 0; i < h * w; ++i) {
      flow.values()[i] = sx;
      flow.values()[h * w + i] = sy;
    }
    Tensor out = bilinear_warp(grid, flow);
    for (size_t c = 0; c < 2; ++c) {
      for (size_t m = 0; m < h; ++m) {
        for (size_t n = 0; n < w; ++n) {
          const size_t mm = static_cast<size_t>(
              std::clamp(static_cast<double>(m) + sy, 0.0, static_cast<double>(h - 1)));
          const size_t nn = static_cast<size_t>(
              std::clamp(static_cast<double>(n) + sx, 0.0, static_cast<double>(w - 1)));
          worst = std::max(
              worst, std::fabs(out[c * h * w + m * w + n] - grid[c * h * w + mm * w + nn]));
        }
      }
    }
    cases++;
  }

  std::ostringstream msg;
  msg << "max_abs_err=" << worst << " over " << cases << " cases";
  detail = msg.str();
  return worst < 1e-12;
}

bool criterion4_freeze_contract(std::string& detail) {
  ensure_battery_pretrains();
  const uint64_t seed = g_scales.battery_seeds[0];
  TrainConfig cfg = adapt_config(kFull, seed, battery_pretrain(seed), 3, g_scales.adapt_lr);
  const fs::path dir = g_work / "c4_run";
  Trainer tr(cfg, desk_model(), (g_work / "battery/data").string(), dir.string());
  tr.prepare();

  save_checkpoint((dir / "frozen_before.ckpt").string(), tr.frozen_params());
  TrainResult result = tr.run();
  save_checkpoint((dir / "frozen_after.ckpt").string(), tr.frozen_params());

  const std::string before = slurp(dir / "frozen_before.ckpt");
  const std::string after = slurp(dir / "frozen_after.ckpt");
  const bool bytes_ok = before == after && !before.empty();

  std::ostringstream msg;
  msg << tr.frozen_params().size() << " frozen tensors, bytes "
      << (bytes_ok ? "identical" : "DIFFER") << ", grads "
      << (result.frozen_grads_clean ? "clean" : "DIRTY");
  detail = msg.str();
  return bytes_ok && result.frozen_grads_clean;
}

bool criterion5_training_convergence(std::string& detail) {
  const fs::path data = g_work / "full/data";
  if (!fs::exists(data / "dataset_config.json")) {
    DatasetConfig d;
    d.train_pairs = g_scales.full_train;
    d.val_pairs = g_scales.full_val;
    d.test_pairs = g_scales.full_test;
    d.image_size = g_scales.full_image;
    d.shift_bound = g_scales.full_shift;
    build_dataset(d, data.string());
  }

  const fs::path pre_dir = g_work / "full/pre";
  if (!fs::exists(pre_dir / "best.ckpt")) {
    TrainConfig cfg;
    cfg.phase = "pretrain";
    cfg.epochs = g_scales.full_pretrain_epochs;
    cfg.lr = g_scales.pretrain_lr;
    cfg.seed = 7;
    Trainer tr(cfg, desk_model(), data.string(), pre_dir.string());
    tr.run();
  }

  const fs::path run_dir = g_work / "full/adapt";
  if (!fs::exists(run_dir / "best.ckpt")) {
    TrainConfig cfg = adapt_config(kFull, 7, (pre_dir / "best.ckpt").string(),
                                   g_scales.full_adapt_epochs, g_scales.adapt_lr);
    Trainer tr(cfg, desk_model(), data.string(), run_dir.string());
    tr.run();
  }

  EvalOptions opts;
  opts.split = "test";
  opts.out_prefix = (g_work / "full/eval/test").string();
  EvalResult r = evaluate((run_dir / "best.ckpt").string(), data.string(), opts);
  const double em = r.ranked_metric("exact_match").value_or(0.0);
  const double bleu = r.ranked_metric("bleu4").value_or(0.0);
  std::ostringstream msg;
  msg << "ranked exact_match=" << em << " (need >= 0.85), BLEU-4=" << bleu
      << " (need >= 0.90); generated exact_match="
      << r.generated_metric("exact_match").value_or(0.0);
  detail = msg.str();
  return em >= 0.85 && bleu >= 0.90;
}

bool criterion6_module_ordering(std::string& detail) {
  ensure_battery_runs({kBaseline, kFaie, kFaieVrf, kFull});
  const std::string data = (g_work / "battery/data").string();
  std::map<std::string, std::vector<double>> cider;
  for (const SwitchSet* sw : {&kBaseline, &kFaie, &kFaieVrf, &kFull}) {
    for (uint64_t seed : g_scales.battery_seeds) {
      cider[sw->name].push_back(battery_test_metric(*sw, seed, "cider_d", data));
    }
  }
  const double m_base = mean(cider["baseline"]);
  const double m_faie = mean(cider["faie"]);
  const double m_fv = mean(cider["faie_vrf"]);
  const double m_full = mean(cider["full"]);
  std::vector<double> gaps;
  for (size_t i = 0; i < 3; ++i) {
    gaps.push_back(cider["full"][i] - cider["baseline"][i]);
  }
  const double margin = mean(gaps);
  const double sd = sample_std(gaps);

  std::ostringstream msg;
  msg << "mean CIDEr-D: full=" << m_full << " faie+vrf=" << m_fv << " faie=" << m_faie
      << " baseline=" << m_base << "; full-baseline margin=" << margin << " sd=" << sd;
  detail = msg.str();
  return m_full >= m_fv && m_fv >= m_faie && m_faie >= m_base && margin > sd;
}

bool criterion7_viewpoint_robustness(std::string& detail) {
  ensure_battery_runs({kFull, kNoVrf});
  // Evaluation datasets at swept shift bounds (same generator seed).
  const double bounds[4] = {0.0, 2.0, 4.0, 8.0};
  std::map<double, std::string> shift_data;
  for (double s : bounds) {
    const fs::path dir = g_work / ("battery/shift_" + std::to_string(static_cast<int>(s)));
    if (!fs::exists(dir / "dataset_config.json")) {
      DatasetConfig d = reduced_dataset(s, /*data_seed=*/2);
      d.train_pairs = 2;  // only the test split is consumed
      d.val_pairs = 2;
      build_dataset(d, dir.string());
    }
    shift_data[s] = dir.string();
  }

  auto em_at = [&](const SwitchSet& sw, uint64_t seed, double bound) {
    EvalOptions opts;
    opts.split = "test";
    EvalResult r = evaluate((fs::path(battery_run_dir(sw, seed)) / "best.ckpt").string(),
                            shift_data[bound], opts);
    return r.ranked_metric("exact_match").value_or(0.0);
  };

  std::vector<double> drop_full, drop_novrf;
  std::ostringstream curve;
  for (uint64_t seed : g_scales.battery_seeds) {
    const double f0 = em_at(kFull, seed, 0.0);
    const double f8 = em_at(kFull, seed, 8.0);
    const double n0 = em_at(kNoVrf, seed, 0.0);
    const double n8 = em_at(kNoVrf, seed, 8.0);
    drop_full.push_back(f0 - f8);
    drop_novrf.push_back(n0 - n8);
    curve << " s" << seed << ": full " << f0 << "->" << f8 << ", no-vrf " << n0 << "->" << n8
          << ";";
  }
  std::ostringstream msg;
  msg << "mean drop S=0..8: no-vrf=" << mean(drop_novrf) << " full=" << mean(drop_full) << ";"
      << curve.str();
  detail = msg.str();
  return mean(drop_novrf) > mean(drop_full);
}

bool criterion8_fusion_ordering(std::string& detail) {
  ensure_battery_runs({kFull, kSubtract, kConcat});
  const std::string data = (g_work / "battery/data").string();
  std::vector<double> add_scores, sub_scores, cat_scores;
  for (uint64_t seed : g_scales.battery_seeds) {
    add_scores.push_back(battery_test_metric(kFull, seed, "cider_d", data));
    sub_scores.push_back(battery_test_metric(kSubtract, seed, "cider_d", data));
    cat_scores.push_back(battery_test_metric(kConcat, seed, "cider_d", data));
  }
  std::ostringstream msg;
  msg << "mean CIDEr-D: add=" << mean(add_scores) << " subtract=" << mean(sub_scores)
      << " concat=" << mean(cat_scores);
  detail = msg.str();
  return mean(add_scores) >= mean(sub_scores) && mean(add_scores) >= mean(cat_scores);
}

bool criterion9_metric_selftests(std::string& detail) {
  auto tok = [](const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
  };
  auto entry = [&](const std::string& h, std::vector<std::string> refs) {
    EvalEntry e;
    e.hypothesis = tok(h);
    for (const auto& r : refs) e.references.push_back(tok(r));
    return e;
  };

  double worst = 0.0;
  // Hand corpus: p1=11/12, p2=8/9, p3=5/6, p4=2/3, BP=1.
  EvalCorpus hand = {
      entry("the red cube moved", {"the red cube moved"}),
      entry("a blue sphere vanished", {"a blue sphere appeared"}),
      entry("no change was made", {"the two scenes seem identical", "no change was made"}),
  };
  const double bleu_expected =
      std::pow((11.0 / 12.0) * (8.0 / 9.0) * (5.0 / 6.0) * (2.0 / 3.0), 0.25);
  worst = std::max(worst, std::fabs(bleu4(hand) - bleu_expected));

  // ROUGE-L hand case: LCS 3 with P = R = 3/4 collapses to F = 0.75.
  EvalCorpus rl = {entry("a b c d", {"a c d e"})};
  worst = std::max(worst, std::fabs(rouge_l(rl) - 0.75));

  // Identical corpora are maximal.
  EvalCorpus ident = {
      entry("the red cube moved", {"the red cube moved"}),
      entry("a new small blue sphere appeared", {"a new small blue sphere appeared"}),
      entry("no change was made", {"no change was made"}),
  };
  worst = std::max(worst, std::fabs(bleu4(ident) - 1.0));
  worst = std::max(worst, std::fabs(rouge_l(ident) - 1.0));
  worst = std::max(worst, std::fabs(exact_match(ident) - 1.0));
  worst = std::max(worst, std::fabs(cider_d(ident) - 10.0));

  std::ostringstream msg;
  msg << "worst deviation from hand oracles = " << worst;
  detail = msg.str();
  return worst < 1e-6;
}

bool criterion10_determinism(std::string& detail) {
  auto run_once = [&](const fs::path& root) {
    DatasetConfig d;
    d.train_pairs = g_scales.det_train;
    d.val_pairs = g_scales.det_val;
    d.test_pairs = g_scales.det_test;
    d.image_size = g_scales.red_image;
    d.seed = 3;
    build_dataset(d, (root / "data").string());

    TrainConfig pre;
    pre.phase = "pretrain";
    pre.epochs = 2;
    pre.lr = g_scales.pretrain_lr;
    pre.seed = 5;
    Trainer tp(pre, desk_model(), (root / "data").string(), (root / "pre").string());
    TrainResult rp = tp.run();

    TrainConfig ad = adapt_config(kFull, 5, rp.checkpoint_path, 2, g_scales.adapt_lr);
    Trainer ta(ad, desk_model(), (root / "data").string(), (root / "adapt").string());
    TrainResult ra = ta.run();

    EvalOptions opts;
    opts.split = "test";
    opts.out_prefix = (root / "eval/test").string();
    evaluate(ra.checkpoint_path, (root / "data").string(), opts);
  };

  const fs::path a = g_work / "det/a";
  const fs::path b = g_work / "det/b";
  fs::remove_all(a);
  fs::remove_all(b);
  run_once(a);
  run_once(b);

  const char* files[] = {
      "data/train.jsonl",
      "data/val.jsonl",
      "data/test.jsonl",
      "data/vocab.txt",
      "data/train/train_000000_before.ppm",
      "pre/train_log.jsonl",
      "adapt/train_log.jsonl",
      "adapt/best.ckpt",
      "eval/test_report.json",
      "eval/test_hypotheses.jsonl",
  };
  for (const char* f : files) {
    if (slurp(a / f) != slurp(b / f)) {
      detail = std::string("mismatch in ") + f;
      return false;
    }
  }
  detail = "datasets, logs, checkpoints, and reports byte-identical across reruns";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tokstr;
      while (std::getline(ss, tokstr, ',')) only.insert(std::stoi(tokstr));
    } else if (arg == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else if (arg == "--jobs" && i + 1 < argc) {
      g_jobs = static_cast<size_t>(std::stoul(argv[++i]));
    }
  }
  fs::create_directories(g_work);

  struct Criterion {
    int id;
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient suite (< 1e-4, < 5 min)", criterion1_gradients},
      {2, "identity at init (exact logits)", criterion2_identity_at_init},
      {3, "warp oracle (1e-12)", criterion3_warp_oracle},
      {4, "freeze contract (bytes + gradients)", criterion4_freeze_contract},
      {5, "training convergence (EM >= 0.85, BLEU-4 >= 0.90)",
       criterion5_training_convergence},
      {6, "module ordering (full >= faie+vrf >= faie >= baseline)",
       criterion6_module_ordering},
      {7, "viewpoint robustness (no-VRF drops more)", criterion7_viewpoint_robustness},
      {8, "fusion ordering (add best)", criterion8_fusion_ordering},
      {9, "metric self-tests (1e-6)", criterion9_metric_selftests},
      {10, "determinism (byte-identical reruns)", criterion10_determinism},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d: %s -- %s\n", ok ? "PASS" : "FAIL", c.id, c.name,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) failures++;
  }
  return failures == 0 ? 0 : 1;
}
