#pragma once

// Model comparison across seeds on fixed splits, and the keyframe-sparsity
// sweep. Models are named by preset; "<model>-smoothed" evaluates the
// <model> checkpoint of the same seed with B-spline smoothing.

#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "vgcn/training.hpp"

namespace vgcn {

inline constexpr const char* kSmoothedSuffix = "-smoothed";

inline bool is_smoothed(const std::string& model) { return model.ends_with(kSmoothedSuffix); }

/// The preset that is actually trained for `model`.
inline std::string trained_model(const std::string& model) {
  return is_smoothed(model) ? model.substr(0, model.size() - std::string(kSmoothedSuffix).size()) : model;
}

struct TrainedModel {
  std::string model;  // trained preset name
  std::uint64_t seed = 0;
  ModelConfig config;
  Params<float> params;
  std::vector<LossRecord> curve;
};

struct ModelRun {
  std::string model;
  std::uint64_t seed = 0;
  std::size_t interval = 0;  // K of the evaluation windows
  EvalReport report;
};

struct CompareOptions {
  std::vector<std::string> models{"sgcn", "sgcn-smoothed", "vgcn-basic", "vgcn"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  ModelConfig base;    // architecture; topology and motion come from each preset
  TrainConfig train;   // train.seed is replaced by the run's seed
  std::size_t threads = 1;
  std::ostream* log = nullptr;

  void validate() const {
    if (models.empty()) throw InvalidConfig("no models to compare");
    if (seeds.empty()) throw InvalidConfig("no seeds");
    for (const auto& m : models) model_preset(trained_model(m), base);
    train.validate();
  }
};

/// Distinct trained presets in first-mention order.
inline std::vector<std::string> trained_models(const std::vector<std::string>& models) {
  std::vector<std::string> out;
  for (const auto& m : models) {
    const std::string t = trained_model(m);
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
  }
  return out;
}

/// One training per trained preset and seed; parameters are initialized from
/// the seed and the same seed drives the shuffle.
inline std::vector<TrainedModel> train_models(const CompareOptions& opt, const std::vector<PreparedWindow>& train_windows) {
  opt.validate();
  std::vector<TrainedModel> out;
  for (std::uint64_t seed : opt.seeds) {
    for (const auto& name : trained_models(opt.models)) {
      TrainedModel tm{name, seed, model_preset(name, opt.base), {}, {}};
      TrainConfig tc = opt.train;
      tc.seed = seed;
      TrainHooks<float> hooks;
      hooks.threads = opt.threads;
      if (opt.log) *opt.log << "train " << name << " seed " << seed << "\n";
      auto r = train(tm.config, init_params<float>(tm.config, seed), train_windows, tc, hooks);
      tm.params = std::move(r.params);
      tm.curve = std::move(r.curve);
      out.push_back(std::move(tm));
    }
  }
  return out;
}

inline const TrainedModel& find_trained(const std::vector<TrainedModel>& trained, const std::string& model,
                                        std::uint64_t seed) {
  for (const auto& t : trained) {
    if (t.model == trained_model(model) && t.seed == seed) return t;
  }
  throw InvalidInput("no trained " + trained_model(model) + " for seed " + std::to_string(seed));
}

/// Evaluates every requested model for every seed on `test_windows`.
inline std::vector<ModelRun> evaluate_models(const std::vector<std::string>& models, const std::vector<std::uint64_t>& seeds,
                                             const std::vector<TrainedModel>& trained,
                                             const std::vector<PreparedWindow>& test_windows, std::size_t threads = 1) {
  if (test_windows.empty()) throw InvalidConfig("no test windows");
  std::vector<ModelRun> out;
  for (std::uint64_t seed : seeds) {
    for (const auto& m : models) {
      const TrainedModel& t = find_trained(trained, m, seed);
      EvalOptions eo;
      eo.smooth = is_smoothed(m);
      eo.threads = threads;
      out.push_back({m, seed, test_windows.front().interval(), evaluate(t.params, t.config, test_windows, eo)});
    }
  }
  return out;
}

struct BenchmarkResult {
  std::vector<TrainedModel> trained;
  std::vector<ModelRun> runs;
};

inline BenchmarkResult benchmark(const CompareOptions& opt, const std::vector<PreparedWindow>& train_windows,
                                 const std::vector<PreparedWindow>& test_windows) {
  BenchmarkResult r;
  r.trained = train_models(opt, train_windows);
  r.runs = evaluate_models(opt.models, opt.seeds, r.trained, test_windows, opt.threads);
  return r;
}

// ---------------------------------------------------------------------------
// Sparsity sweep

struct SweepOptions {
  CompareOptions compare;
  std::vector<std::size_t> intervals{5, 10, 15, 20};
  std::size_t train_interval = 10;  // used when not retraining
  bool retrain = false;             // false: train once, re-window the test split per K
  PrepareOptions prepare;
};

/// Evaluates every model at every K. Re-window mode trains once at
/// `train_interval` (or reuses `pretrained`) and only re-cuts the test split.
inline std::vector<ModelRun> sparsity_sweep(const std::vector<Sequence>& seqs, const Split& split,
                                            const SweepOptions& opt,
                                            const std::vector<TrainedModel>* pretrained = nullptr) {
  opt.compare.validate();
  if (opt.intervals.empty()) throw InvalidConfig("no keyframe intervals to sweep");
  PrepareOptions prep = opt.prepare;
  prep.points = opt.compare.base.points;
  std::vector<TrainedModel> trained;
  if (!opt.retrain) {
    if (pretrained) {
      trained = *pretrained;
    } else {
      trained = train_models(opt.compare, prepare_windows(seqs, split.train, opt.train_interval, prep,
                                                          opt.compare.threads, opt.compare.log));
    }
  }
  std::vector<ModelRun> out;
  for (std::size_t k : opt.intervals) {
    if (opt.compare.log) *opt.compare.log << "sweep K=" << k << "\n";
    if (opt.retrain) {
      trained = train_models(opt.compare, prepare_windows(seqs, split.train, k, prep, opt.compare.threads, opt.compare.log));
    }
    const auto test = prepare_windows(seqs, split.test, k, prep, opt.compare.threads, opt.compare.log);
    for (auto& r : evaluate_models(opt.compare.models, opt.compare.seeds, trained, test, opt.compare.threads)) {
      out.push_back(std::move(r));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aggregation and output

struct Stat {
  double mean = 0.0, std = 0.0;
  std::size_t n = 0;
};

inline Stat stat_of(const std::vector<double>& xs) {
  Stat s;
  s.n = xs.size();
  if (xs.empty()) return s;
  for (double x : xs) s.mean += x;
  s.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double v = 0.0;
    for (double x : xs) v += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(v / static_cast<double>(xs.size() - 1));
  }
  return s;
}

struct SummaryCell {
  Stat miou, nbcd, f1_1px, f1_2px;
  std::size_t frames = 0;
};

/// Per model (first-mention order) and report row: statistics over seeds.
/// Runs are grouped by (model, interval).
struct Summary {
  std::vector<std::string> models;
  std::vector<std::string> categories;  // report row names, "average" last
  std::map<std::pair<std::string, std::string>, SummaryCell> cells;

  const SummaryCell& at(const std::string& model, const std::string& category = kAverageRow) const {
    auto it = cells.find({model, category});
    if (it == cells.end()) throw InvalidInput("no summary for " + model + "/" + category);
    return it->second;
  }
};

inline Summary summarize(const std::vector<ModelRun>& runs) {
  Summary s;
  std::map<std::pair<std::string, std::string>, std::array<std::vector<double>, 4>> acc;
  std::set<std::string> cats;
  for (const auto& r : runs) {
    if (std::find(s.models.begin(), s.models.end(), r.model) == s.models.end()) s.models.push_back(r.model);
    for (const auto& row : r.report.rows) {
      if (row.category != kAverageRow) cats.insert(row.category);
      auto& a = acc[{r.model, row.category}];
      a[0].push_back(row.miou), a[1].push_back(row.nbcd), a[2].push_back(row.f1_1px), a[3].push_back(row.f1_2px);
      s.cells[{r.model, row.category}].frames = row.frames;
    }
  }
  s.categories.assign(cats.begin(), cats.end());
  s.categories.push_back(kAverageRow);
  for (auto& [key, a] : acc) {
    auto& c = s.cells[key];
    c.miou = stat_of(a[0]), c.nbcd = stat_of(a[1]), c.f1_1px = stat_of(a[2]), c.f1_2px = stat_of(a[3]);
  }
  return s;
}

inline std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

/// One row per run and report row.
inline std::string runs_csv(const std::vector<ModelRun>& runs) {
  std::string out = "model,seed,interval,category,miou,nbcd,f1_1px,f1_2px,frames\n";
  for (const auto& r : runs) {
    for (const auto& row : r.report.rows) {
      out += r.model + "," + std::to_string(r.seed) + "," + std::to_string(r.interval) + "," + row.category + "," +
             fmt("%.6f", row.miou) + "," + fmt("%.6f", row.nbcd) + "," + fmt("%.6f", row.f1_1px) + "," +
             fmt("%.6f", row.f1_2px) + "," + std::to_string(row.frames) + "\n";
    }
  }
  return out;
}

/// Sweep curves: one row per model and K, averaged over seeds.
inline std::string sweep_csv(const std::vector<ModelRun>& runs) {
  std::map<std::size_t, std::vector<ModelRun>> by_k;
  for (const auto& r : runs) by_k[r.interval].push_back(r);
  std::string out = "model,interval,miou_mean,miou_std,nbcd_mean,nbcd_std,f1_2px_mean,f1_2px_std,seeds\n";
  for (const auto& [k, rs] : by_k) {
    const Summary s = summarize(rs);
    for (const auto& m : s.models) {
      const auto& c = s.at(m);
      out += m + "," + std::to_string(k) + "," + fmt("%.6f", c.miou.mean) + "," + fmt("%.6f", c.miou.std) + "," +
             fmt("%.6f", c.nbcd.mean) + "," + fmt("%.6f", c.nbcd.std) + "," + fmt("%.6f", c.f1_2px.mean) + "," +
             fmt("%.6f", c.f1_2px.std) + "," + std::to_string(c.miou.n) + "\n";
    }
  }
  return out;
}

/// Model rows by category columns: mIoU (%) as mean ± std, then
/// "NBCD/F1(2px)" cells.
inline std::string summary_table(const Summary& s) {
  std::size_t w0 = 6;
  for (const auto& m : s.models) w0 = std::max(w0, m.size());
  auto pad = [](std::string x, std::size_t w) {
    if (x.size() < w) x.insert(0, w - x.size(), ' ');
    return x;
  };
  auto header = [&](const std::string& title) {
    std::string h = title + "\n" + std::string(w0, ' ');
    for (const auto& c : s.categories) h += " " + pad(c, 16);
    return h + "\n";
  };
  std::string out = header("mIoU (%)");
  for (const auto& m : s.models) {
    std::string line = m + std::string(w0 - m.size(), ' ');
    for (const auto& c : s.categories) {
      const auto& cell = s.at(m, c);
      line += " " + pad(fmt("%.2f", 100 * cell.miou.mean) + " ± " + fmt("%.2f", 100 * cell.miou.std), 16);
    }
    out += line + "\n";
  }
  out += "\n" + header("NBCD/F1(2px)");
  for (const auto& m : s.models) {
    std::string line = m + std::string(w0 - m.size(), ' ');
    for (const auto& c : s.categories) {
      const auto& cell = s.at(m, c);
      line += " " + pad(fmt("%.2f", cell.nbcd.mean) + "/" + fmt("%.3f", cell.f1_2px.mean), 16);
    }
    out += line + "\n";
  }
  std::string frames = "frames" + std::string(w0 - 6, ' ');
  for (const auto& c : s.categories) frames += " " + pad(std::to_string(s.at(s.models.front(), c).frames), 16);
  return out + frames + "\n";
}

}  // namespace vgcn
