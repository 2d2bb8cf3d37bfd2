#pragma once

// Command-line front end. Every subcommand reads an optional JSON config
// (--config), applies flag overrides on top, and writes the merged result to
// <out>/effective_config.json; running with that file alone reproduces the run.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "vgcn/benchmark.hpp"
#include "vgcn/checkpoint.hpp"
#include "vgcn/dataset.hpp"
#include "vgcn/inference.hpp"
#include "vgcn/training.hpp"
// service.hpp pulls in httplib, which must follow the Eigen-based headers.
#include "vgcn/service.hpp"

namespace vgcn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct DataConfig {
  std::string corpus;                   // corpus directory; empty generates `sequences` in memory
  std::size_t sequences = 200;
  SynthConfig synth;
  std::vector<double> split{0.8, 0.1, 0.1};
  std::uint64_t split_seed = 1;
};

struct CompareConfig {
  std::vector<std::string> models{"sgcn", "sgcn-smoothed", "vgcn-basic", "vgcn"};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> intervals{5, 10, 15, 20};
  bool retrain = false;
};

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string storage = "vgcn-store";
  std::size_t max_upload_bytes = 256u << 20;
  std::size_t workers = 1;
};

struct CliConfig {
  std::string command;
  std::string output = ".";      // not echoed: the snapshot must not depend on where it is written
  std::size_t threads = 0;       // 0: all hardware threads
  bool deterministic = false;
  int verbose = 0;
  std::string checkpoint;
  DataConfig data;
  std::string model = "vgcn";
  ModelConfig arch;              // topology and motion come from `model`
  TrainConfig train;
  PrepareOptions prepare;
  std::string supervision = "all_frames";
  EvalOptions eval;
  std::string part = "test";     // split part scored by evaluate: train|val|test|all
  CompareConfig compare;
  ServeConfig serve;
  std::string manifest;
  std::string boxes;

  std::size_t worker_threads() const {
    if (deterministic) return 1;
    if (threads) return threads;
    return std::max(1u, std::thread::hardware_concurrency());
  }
  ModelConfig model_config() const { return model_preset(model, arch); }
};

// ---------------------------------------------------------------------------
// JSON round trip. Absent keys keep their current values.

namespace detail {

template <class V>
void read(const json& j, const char* key, V& v) {
  if (j.contains(key)) v = j.at(key).get<V>();
}

inline json synth_json(const SynthConfig& s) {
  json fam = json::array();
  for (auto f : s.families) fam.push_back(to_string(f));
  return {{"width", s.width},
          {"height", s.height},
          {"frames", s.frames},
          {"vertices", s.vertices},
          {"families", fam},
          {"radius_min", s.radius_min},
          {"radius_max", s.radius_max},
          {"contrast_min", s.contrast_min},
          {"contrast_max", s.contrast_max},
          {"texture_amplitude", s.texture_amplitude},
          {"noise_sigma", s.noise_sigma},
          {"seed", s.seed},
          {"motion",
           {{"drift", s.motion.drift},
            {"wobble", s.motion.wobble},
            {"wobble_period", s.motion.wobble_period},
            {"rotation", s.motion.rotation},
            {"scale_amplitude", s.motion.scale_amplitude},
            {"deformation", s.motion.deformation}}}};
}

inline void synth_from_json(const json& j, SynthConfig& s) {
  read(j, "width", s.width), read(j, "height", s.height), read(j, "frames", s.frames);
  read(j, "vertices", s.vertices), read(j, "radius_min", s.radius_min), read(j, "radius_max", s.radius_max);
  read(j, "contrast_min", s.contrast_min), read(j, "contrast_max", s.contrast_max);
  read(j, "texture_amplitude", s.texture_amplitude), read(j, "noise_sigma", s.noise_sigma), read(j, "seed", s.seed);
  if (j.contains("families")) {
    s.families.clear();
    for (const auto& f : j["families"]) s.families.push_back(shape_family_from_string(f.get<std::string>()));
  }
  if (j.contains("motion")) {
    const auto& m = j["motion"];
    read(m, "drift", s.motion.drift), read(m, "wobble", s.motion.wobble);
    read(m, "wobble_period", s.motion.wobble_period), read(m, "rotation", s.motion.rotation);
    read(m, "scale_amplitude", s.motion.scale_amplitude), read(m, "deformation", s.motion.deformation);
  }
}

}  // namespace detail

inline json to_json(const CliConfig& c) {
  json model = model_config_json(c.arch);
  model.erase("topology");
  model.erase("use_motion_features");
  model["name"] = c.model;
  return {{"command", c.command},
          {"threads", c.threads},
          {"deterministic", c.deterministic},
          {"checkpoint", c.checkpoint},
          {"data",
           {{"corpus", c.data.corpus},
            {"sequences", c.data.sequences},
            {"synth", detail::synth_json(c.data.synth)},
            {"split", c.data.split},
            {"split_seed", c.data.split_seed}}},
          {"model", model},
          {"train",
           {{"learning_rate", c.train.learning_rate},
            {"lr_decay", c.train.lr_decay},
            {"decay_every", c.train.decay_every},
            {"epochs", c.train.epochs},
            {"batch_size", c.train.batch_size},
            {"max_steps", c.train.max_steps},
            {"seed", c.train.seed},
            {"supervision", c.supervision},
            {"loss_weights", {{"nbcd", c.train.weights.nbcd}, {"boundary", c.train.weights.boundary}}},
            {"frozen", c.train.frozen}}},
          {"prepare",
           {{"crop_size", c.prepare.crop_size},
            {"gt_points", c.prepare.gt_points},
            {"use_gt_boxes", c.prepare.use_gt_boxes},
            {"flow_alpha", c.prepare.flow.alpha},
            {"flow_iterations", c.prepare.flow.iterations}}},
          {"eval", {{"smooth", c.eval.smooth}, {"interior_knots", c.eval.interior_knots}, {"part", c.part}}},
          {"compare",
           {{"models", c.compare.models},
            {"seeds", c.compare.seeds},
            {"intervals", c.compare.intervals},
            {"retrain", c.compare.retrain}}},
          {"serve",
           {{"host", c.serve.host},
            {"port", c.serve.port},
            {"storage", c.serve.storage},
            {"max_upload_bytes", c.serve.max_upload_bytes},
            {"workers", c.serve.workers}}},
          {"infer", {{"manifest", c.manifest}, {"boxes", c.boxes}}}};
}

inline void from_json(const json& j, CliConfig& c) {
  using detail::read;
  try {
    read(j, "threads", c.threads), read(j, "deterministic", c.deterministic), read(j, "checkpoint", c.checkpoint);
    if (j.contains("data")) {
      const auto& d = j["data"];
      read(d, "corpus", c.data.corpus), read(d, "sequences", c.data.sequences);
      read(d, "split", c.data.split), read(d, "split_seed", c.data.split_seed);
      if (d.contains("synth")) detail::synth_from_json(d["synth"], c.data.synth);
    }
    if (j.contains("model")) {
      const auto& m = j["model"];
      read(m, "name", c.model);
      json arch = m;
      arch.erase("name");
      c.arch = model_config_from_json(arch, c.arch);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      read(t, "learning_rate", c.train.learning_rate), read(t, "lr_decay", c.train.lr_decay);
      read(t, "decay_every", c.train.decay_every), read(t, "epochs", c.train.epochs);
      read(t, "batch_size", c.train.batch_size), read(t, "max_steps", c.train.max_steps);
      read(t, "seed", c.train.seed), read(t, "supervision", c.supervision), read(t, "frozen", c.train.frozen);
      if (t.contains("loss_weights")) {
        read(t["loss_weights"], "nbcd", c.train.weights.nbcd);
        read(t["loss_weights"], "boundary", c.train.weights.boundary);
      }
    }
    if (j.contains("prepare")) {
      const auto& p = j["prepare"];
      read(p, "crop_size", c.prepare.crop_size), read(p, "gt_points", c.prepare.gt_points);
      read(p, "use_gt_boxes", c.prepare.use_gt_boxes);
      read(p, "flow_alpha", c.prepare.flow.alpha), read(p, "flow_iterations", c.prepare.flow.iterations);
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      read(e, "smooth", c.eval.smooth), read(e, "interior_knots", c.eval.interior_knots), read(e, "part", c.part);
    }
    if (j.contains("compare")) {
      const auto& b = j["compare"];
      read(b, "models", c.compare.models), read(b, "seeds", c.compare.seeds);
      read(b, "intervals", c.compare.intervals), read(b, "retrain", c.compare.retrain);
    }
    if (j.contains("serve")) {
      const auto& s = j["serve"];
      read(s, "host", c.serve.host), read(s, "port", c.serve.port), read(s, "storage", c.serve.storage);
      read(s, "max_upload_bytes", c.serve.max_upload_bytes), read(s, "workers", c.serve.workers);
    }
    if (j.contains("infer")) read(j["infer"], "manifest", c.manifest), read(j["infer"], "boxes", c.boxes);
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("config file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Shared plumbing

struct Context {
  CliConfig cfg;
  std::ostream& out;
  std::ostream& err;
  std::ostream* log() const { return cfg.verbose > 0 ? &err : nullptr; }
  fs::path dir() const { return cfg.output; }
};

inline void echo_config(const Context& ctx) {
  fs::create_directories(ctx.dir());
  write_file((ctx.dir() / "effective_config.json").string(), to_json(ctx.cfg).dump(2) + "\n");
}

inline std::vector<Sequence> corpus(const Context& ctx) {
  const auto& d = ctx.cfg.data;
  if (!d.corpus.empty()) return load_corpus(d.corpus);
  if (ctx.log()) *ctx.log() << "generating " << d.sequences << " sequences\n";
  return generate_corpus(d.synth, d.sequences);
}

inline Split corpus_split(const Context& ctx, std::size_t count) {
  const auto& r = ctx.cfg.data.split;
  if (r.size() != 3) throw InvalidConfig("split needs three ratios: train,val,test");
  return split(count, {r[0], r[1], r[2]}, ctx.cfg.data.split_seed);
}

inline std::vector<std::size_t> split_part(const Split& s, const std::string& part, std::size_t count) {
  if (part == "train") return s.train;
  if (part == "val") return s.val;
  if (part == "test") return s.test;
  if (part == "all") {
    std::vector<std::size_t> all(count);
    for (std::size_t i = 0; i < count; ++i) all[i] = i;
    return all;
  }
  throw InvalidConfig("unknown split part '" + part + "' (expected train|val|test|all)");
}

inline PrepareOptions prepare_options(const Context& ctx, const ModelConfig& m) {
  PrepareOptions p = ctx.cfg.prepare;
  p.points = m.points;
  return p;
}

inline TrainConfig train_config(const Context& ctx) {
  TrainConfig tc = ctx.cfg.train;
  tc.supervision = supervision_from_string(ctx.cfg.supervision);
  return tc;
}

inline std::string metrics_csv(const EvalReport& r) {
  std::string out = "category,miou,nbcd,f1_1px,f1_2px,frames\n";
  for (const auto& row : r.rows) {
    out += row.category + "," + fmt("%.6f", row.miou) + "," + fmt("%.6f", row.nbcd) + "," + fmt("%.6f", row.f1_1px) +
           "," + fmt("%.6f", row.f1_2px) + "," + std::to_string(row.frames) + "\n";
  }
  return out;
}

inline std::string curve_csv(const std::vector<LossRecord>& curve) {
  std::string out = "epoch,step,lr,loss,nbcd,boundary\n";
  for (const auto& r : curve) {
    out += std::to_string(r.epoch) + "," + std::to_string(r.step) + "," + fmt("%.6g", r.lr) + "," +
           fmt("%.6f", r.loss) + "," + fmt("%.6f", r.nbcd) + "," + fmt("%.6f", r.boundary) + "\n";
  }
  return out;
}

inline std::string require_path(const std::string& p, const char* flag) {
  if (p.empty()) throw InvalidConfig(std::string(flag) + " is required");
  return p;
}

/// Keyframe boxes in pixels: {"<frame>": [x0,y0,x1,y1], ...} or
/// [{"frame": k, "box": [x0,y0,x1,y1]}, ...].
inline std::map<std::size_t, PixelBox> parse_boxes(const std::string& text) {
  std::map<std::size_t, PixelBox> out;
  auto box = [](const json& b) {
    if (!b.is_array() || b.size() != 4) throw InvalidInput("box must be [x0, y0, x1, y1]");
    return PixelBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
  };
  try {
    const json j = json::parse(text);
    if (j.is_object()) {
      for (const auto& [k, b] : j.items()) out[std::stoul(k)] = box(b);
    } else if (j.is_array()) {
      for (const auto& e : j) out[e.at("frame").get<std::size_t>()] = box(e.at("box"));
    } else {
      throw InvalidInput("boxes file must hold an object or an array");
    }
  } catch (const json::exception& e) {
    throw InvalidInput(std::string("boxes file: ") + e.what());
  } catch (const std::logic_error& e) {
    if (dynamic_cast<const InvalidInput*>(&e)) throw;
    throw InvalidInput("boxes file: frame keys must be integers");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands

inline int cmd_generate(Context& ctx) {
  echo_config(ctx);
  write_corpus(ctx.dir(), generate_corpus(ctx.cfg.data.synth, ctx.cfg.data.sequences));
  ctx.out << "wrote " << ctx.cfg.data.sequences << " sequences to " << ctx.dir().string() << "\n";
  return 0;
}

inline int cmd_train(Context& ctx) {
  const ModelConfig mc = ctx.cfg.model_config();
  const TrainConfig tc = train_config(ctx);
  echo_config(ctx);
  const auto seqs = corpus(ctx);
  const Split s = corpus_split(ctx, seqs.size());
  const auto windows =
      prepare_windows(seqs, s.train, mc.interval, prepare_options(ctx, mc), ctx.cfg.worker_threads(), ctx.log());
  fs::create_directories(ctx.dir() / "checkpoints");
  TrainHooks<float> hooks;
  hooks.threads = ctx.cfg.worker_threads();
  hooks.log = ctx.log();
  hooks.on_epoch = [&](std::size_t epoch, const Params<float>& p) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", epoch + 1);
    save_checkpoint((ctx.dir() / "checkpoints" / name).string(), mc, p);
  };
  const auto r = train(mc, init_params<float>(mc, tc.seed), windows, tc, hooks);
  save_checkpoint((ctx.dir() / "model.ckpt").string(), mc, r.params);
  write_file((ctx.dir() / "loss_curve.csv").string(), curve_csv(r.curve));
  ctx.out << "trained " << ctx.cfg.model << " for " << r.steps << " steps on " << windows.size() << " windows";
  if (!r.curve.empty()) ctx.out << ", final loss " << fmt("%.4f", r.curve.back().loss);
  ctx.out << "\n";
  return 0;
}

inline int cmd_evaluate(Context& ctx) {
  const auto ck = load_checkpoint<float>(require_path(ctx.cfg.checkpoint, "--checkpoint"));
  echo_config(ctx);
  const auto seqs = corpus(ctx);
  const auto which = split_part(corpus_split(ctx, seqs.size()), ctx.cfg.part, seqs.size());
  const auto windows = prepare_windows(seqs, which, ck.config.interval, prepare_options(ctx, ck.config),
                                       ctx.cfg.worker_threads(), ctx.log());
  if (windows.empty()) throw InvalidInput("no windows to evaluate in split part '" + ctx.cfg.part + "'");
  EvalOptions eo = ctx.cfg.eval;
  eo.threads = ctx.cfg.worker_threads();
  const EvalReport rep = evaluate(ck.params, ck.config, windows, eo);
  write_file((ctx.dir() / "metrics.csv").string(), metrics_csv(rep));
  const std::string label = eo.smooth ? "checkpoint-smoothed" : "checkpoint";
  ctx.out << summary_table(summarize({ModelRun{label, 0, ck.config.interval, rep}}));
  return 0;
}

inline CompareOptions compare_options(const Context& ctx) {
  CompareOptions o;
  o.models = ctx.cfg.compare.models;
  o.seeds = ctx.cfg.compare.seeds;
  o.base = ctx.cfg.arch;
  o.train = train_config(ctx);
  o.threads = ctx.cfg.worker_threads();
  o.log = ctx.log();
  o.validate();
  return o;
}

inline void save_trained(const Context& ctx, const std::vector<TrainedModel>& trained) {
  fs::create_directories(ctx.dir() / "checkpoints");
  for (const auto& t : trained) {
    save_checkpoint((ctx.dir() / "checkpoints" / (t.model + "_seed" + std::to_string(t.seed) + ".ckpt")).string(),
                    t.config, t.params);
  }
}

inline int cmd_benchmark(Context& ctx) {
  const CompareOptions o = compare_options(ctx);
  echo_config(ctx);
  const auto seqs = corpus(ctx);
  const Split s = corpus_split(ctx, seqs.size());
  const PrepareOptions prep = prepare_options(ctx, o.base);
  const auto train_w = prepare_windows(seqs, s.train, o.base.interval, prep, o.threads, o.log);
  const auto test_w = prepare_windows(seqs, s.test, o.base.interval, prep, o.threads, o.log);
  const BenchmarkResult r = benchmark(o, train_w, test_w);
  save_trained(ctx, r.trained);
  write_file((ctx.dir() / "runs.csv").string(), runs_csv(r.runs));
  const std::string table = summary_table(summarize(r.runs));
  write_file((ctx.dir() / "summary.txt").string(), table);
  ctx.out << table;
  return 0;
}

inline int cmd_sweep(Context& ctx) {
  SweepOptions so;
  so.compare = compare_options(ctx);
  so.intervals = ctx.cfg.compare.intervals;
  so.train_interval = ctx.cfg.arch.interval;
  so.retrain = ctx.cfg.compare.retrain;
  so.prepare = prepare_options(ctx, so.compare.base);
  echo_config(ctx);
  const auto seqs = corpus(ctx);
  const auto runs = sparsity_sweep(seqs, corpus_split(ctx, seqs.size()), so);
  write_file((ctx.dir() / "runs.csv").string(), runs_csv(runs));
  const std::string curves = sweep_csv(runs);
  write_file((ctx.dir() / "sweep.csv").string(), curves);
  ctx.out << curves;
  return 0;
}

inline int cmd_infer(Context& ctx) {
  const auto ck = load_checkpoint<float>(require_path(ctx.cfg.checkpoint, "--checkpoint"));
  const Sequence seq = load_sequence(require_path(ctx.cfg.manifest, "--manifest"));
  const auto pixel = parse_boxes(read_file(require_path(ctx.cfg.boxes, "--boxes")));
  echo_config(ctx);
  std::map<std::size_t, Box> keys;
  for (const auto& [k, b] : pixel) keys[k] = normalized_box(b, seq.manifest.width, seq.manifest.height);
  const auto ann = annotate_sequence(ck.params, ck.config, seq, keys, prepare_options(ctx, ck.config),
                                     ctx.cfg.worker_threads(), false);
  std::string text;
  for (const auto& [k, a] : ann) {
    text += json{{"index", k}, {"points", vgcn::detail::points_json(a.polygon)}, {"origin", "machine"}}.dump() + "\n";
  }
  write_file((ctx.dir() / "polygons.jsonl").string(), text);
  ctx.out << "annotated " << ann.size() << " frames of " << seq.manifest.id << "\n";
  return 0;
}

inline int cmd_serve(Context& ctx) {
  auto ck = load_checkpoint<float>(require_path(ctx.cfg.checkpoint, "--checkpoint"));
  echo_config(ctx);
  ServiceOptions so;
  so.storage = ctx.cfg.serve.storage;
  so.max_upload_bytes = ctx.cfg.serve.max_upload_bytes;
  so.workers = ctx.cfg.serve.workers;
  so.inference_threads = ctx.cfg.worker_threads();
  so.prepare = prepare_options(ctx, ck.config);
  AnnotationService svc(ck.config, std::move(ck.params), so);
  httplib::Server srv;
  install_routes(srv, svc);
  ctx.out << "listening on " << ctx.cfg.serve.host << ":" << ctx.cfg.serve.port << "\n" << std::flush;
  if (!srv.listen(ctx.cfg.serve.host, ctx.cfg.serve.port)) {
    throw InvalidConfig("cannot listen on " + ctx.cfg.serve.host + ":" + std::to_string(ctx.cfg.serve.port));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Argument parsing

inline void add_common(CLI::App* s, CliConfig& c) {
  s->add_option("--config", "JSON config file; flags override its values");
  s->add_option("-o,--out", c.output, "Output directory")->capture_default_str();
  s->add_option("--threads", c.threads, "Worker thread cap (0: all cores)")->capture_default_str();
  s->add_flag("--deterministic", c.deterministic, "Force a single worker thread");
  s->add_flag("-v,--verbose", c.verbose, "Log progress to stderr");
}

inline void add_synth(CLI::App* s, CliConfig& c) {
  auto& y = c.data.synth;
  s->add_option("--sequences", c.data.sequences, "Number of synthetic sequences")->capture_default_str();
  s->add_option("--seed", y.seed, "Synthetic corpus seed")->capture_default_str();
  s->add_option("--width", y.width, "Frame width")->capture_default_str();
  s->add_option("--height", y.height, "Frame height")->capture_default_str();
  s->add_option("--frames", y.frames, "Frames per sequence")->capture_default_str();
  s->add_option("--radius-min", y.radius_min, "Smallest object radius in pixels")->capture_default_str();
  s->add_option("--radius-max", y.radius_max, "Largest object radius in pixels")->capture_default_str();
  s->add_option("--drift", y.motion.drift, "Largest object speed, px/frame")->capture_default_str();
  s->add_option("--wobble", y.motion.wobble, "Path deviation amplitude in pixels")->capture_default_str();
  s->add_option("--contrast-min", y.contrast_min, "Lowest object/background colour distance")->capture_default_str();
  s->add_option("--contrast-max", y.contrast_max, "Highest object/background colour distance")->capture_default_str();
  s->add_option("--texture", y.texture_amplitude, "Texture amplitude")->capture_default_str();
  s->add_option("--noise", y.noise_sigma, "Pixel noise sigma")->capture_default_str();
}

inline void add_data(CLI::App* s, CliConfig& c) {
  add_synth(s, c);
  s->add_option("--corpus", c.data.corpus, "Corpus directory (default: generate in memory)");
  s->add_option("--split", c.data.split, "train,val,test ratios")->delimiter(',')->expected(3)->capture_default_str();
  s->add_option("--split-seed", c.data.split_seed, "Split shuffle seed")->capture_default_str();
}

inline void add_prepare(CLI::App* s, CliConfig& c) {
  s->add_option("--crop", c.prepare.crop_size, "Crop side in pixels")->capture_default_str();
  s->add_option("--gt-points", c.prepare.gt_points, "Boundary samples per GT polygon")->capture_default_str();
  s->add_option("--flow-iterations", c.prepare.flow.iterations, "Optical flow iterations")->capture_default_str();
  s->add_option("--flow-alpha", c.prepare.flow.alpha, "Optical flow smoothness weight")->capture_default_str();
}

inline void add_arch(CLI::App* s, CliConfig& c) {
  s->add_option("--hidden", c.arch.hidden, "GCN hidden width")->capture_default_str();
  s->add_option("--blocks", c.arch.blocks, "Residual GCN blocks")->capture_default_str();
  s->add_option("--iterations", c.arch.iterations, "Refinement iterations")->capture_default_str();
  s->add_option("--points", c.arch.points, "Contour vertices N")->capture_default_str();
  s->add_option("--interval", c.arch.interval, "Keyframe interval K")->capture_default_str();
  s->add_option("--encoder-stage1", c.arch.encoder.stage1, "Encoder stage 1 channels")->capture_default_str();
  s->add_option("--encoder-stage2", c.arch.encoder.stage2, "Encoder stage 2 channels")->capture_default_str();
  s->add_option("--encoder-appearance", c.arch.encoder.appearance, "Appearance feature channels")->capture_default_str();
}

inline void add_train(CLI::App* s, CliConfig& c) {
  s->add_option("--epochs", c.train.epochs, "Training epochs")->capture_default_str();
  s->add_option("--lr", c.train.learning_rate, "Adam learning rate")->capture_default_str();
  s->add_option("--lr-decay", c.train.lr_decay, "Learning rate multiplier per decay period")->capture_default_str();
  s->add_option("--decay-every", c.train.decay_every, "Epochs per decay period (0: constant)")->capture_default_str();
  s->add_option("--batch", c.train.batch_size, "Windows per step")->capture_default_str();
  s->add_option("--max-steps", c.train.max_steps, "Step cap (0: none)")->capture_default_str();
  s->add_option("--train-seed", c.train.seed, "Initialization and shuffle seed")->capture_default_str();
  s->add_option("--supervision", c.supervision, "all_frames|keyframes_only")->capture_default_str();
  s->add_option("--freeze", c.train.frozen, "Frozen parameter groups")->delimiter(',');
}

inline void add_compare(CLI::App* s, CliConfig& c) {
  s->add_option("--models", c.compare.models, "Comma-separated model presets")->delimiter(',')->capture_default_str();
  s->add_option("--seeds", c.compare.seeds, "Comma-separated seeds")->delimiter(',')->capture_default_str();
}

/// The value of --config, if given; it is loaded before flags are parsed.
inline std::string config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].starts_with("--config=")) return args[i].substr(9);
  }
  return {};
}

inline const char* error_code(const std::exception& e) {
  if (dynamic_cast<const InvalidConfig*>(&e)) return "invalid_config";
  if (dynamic_cast<const InvalidInput*>(&e)) return "invalid_input";
  if (dynamic_cast<const FormatError*>(&e)) return "format_error";
  if (dynamic_cast<const ServiceError*>(&e)) return "service_error";
  return "internal";
}

/// Runs one command line (without the program name). Returns the exit code:
/// 0 success, 1 runtime failure, 2 usage error.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CliConfig cfg;
  try {
    if (const auto path = config_path(args); !path.empty()) from_json(json::parse(read_file(path)), cfg);
  } catch (const json::exception& e) {
    err << "error: invalid_config: config file: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << error_code(e) << ": " << e.what() << "\n";
    return 2;
  }

  CLI::App app{"Video region annotation with volumetric graph convolution", "vgcn"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  auto* gen = app.add_subcommand("generate", "Write a synthetic corpus");
  add_common(gen, cfg), add_synth(gen, cfg);

  auto* tr = app.add_subcommand("train", "Train one model; checkpoints every epoch");
  add_common(tr, cfg), add_data(tr, cfg), add_prepare(tr, cfg), add_arch(tr, cfg), add_train(tr, cfg);
  tr->add_option("--model", cfg.model, "Model preset")->capture_default_str();

  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on a split");
  add_common(ev, cfg), add_data(ev, cfg), add_prepare(ev, cfg);
  ev->add_option("--checkpoint", cfg.checkpoint, "Checkpoint file");
  ev->add_option("--part", cfg.part, "train|val|test|all")->capture_default_str();
  ev->add_flag("--gt-boxes", cfg.prepare.use_gt_boxes, "Crop with per-frame GT boxes instead of interpolated ones");
  ev->add_flag("--smooth", cfg.eval.smooth, "B-spline smoothing of each window before scoring");

  auto* bm = app.add_subcommand("benchmark", "Train and score several models over several seeds");
  add_common(bm, cfg), add_data(bm, cfg), add_prepare(bm, cfg), add_arch(bm, cfg), add_train(bm, cfg);
  add_compare(bm, cfg);

  auto* sw = app.add_subcommand("sweep", "Score models at several keyframe intervals");
  add_common(sw, cfg), add_data(sw, cfg), add_prepare(sw, cfg), add_arch(sw, cfg), add_train(sw, cfg);
  add_compare(sw, cfg);
  sw->add_option("--intervals", cfg.compare.intervals, "Comma-separated keyframe intervals")
      ->delimiter(',')
      ->capture_default_str();
  sw->add_flag("--retrain", cfg.compare.retrain, "Train at every interval instead of re-cutting test windows");

  auto* sv = app.add_subcommand("serve", "Run the annotation HTTP service");
  add_common(sv, cfg), add_prepare(sv, cfg);
  sv->add_option("--checkpoint", cfg.checkpoint, "Checkpoint file");
  sv->add_option("--host", cfg.serve.host, "Bind address")->capture_default_str();
  sv->add_option("--port", cfg.serve.port, "Port")->capture_default_str();
  sv->add_option("--storage", cfg.serve.storage, "Sequence store directory")->capture_default_str();
  sv->add_option("--max-upload", cfg.serve.max_upload_bytes, "Upload size limit in bytes")->capture_default_str();
  sv->add_option("--workers", cfg.serve.workers, "Concurrent inference jobs")->capture_default_str();

  auto* in = app.add_subcommand("infer", "Annotate one sequence from keyframe boxes");
  add_common(in, cfg), add_prepare(in, cfg);
  in->add_option("--checkpoint", cfg.checkpoint, "Checkpoint file");
  in->add_option("--manifest", cfg.manifest, "Sequence manifest");
  in->add_option("--boxes", cfg.boxes, "JSON keyframe boxes in pixels");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: usage: " << e.what() << "\n";
    auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  cfg.command = sub->get_name();
  Context ctx{cfg, out, err};
  try {
    if (cfg.command == "generate") return cmd_generate(ctx);
    if (cfg.command == "train") return cmd_train(ctx);
    if (cfg.command == "evaluate") return cmd_evaluate(ctx);
    if (cfg.command == "benchmark") return cmd_benchmark(ctx);
    if (cfg.command == "sweep") return cmd_sweep(ctx);
    if (cfg.command == "serve") return cmd_serve(ctx);
    if (cfg.command == "infer") return cmd_infer(ctx);
  } catch (const std::exception& e) {
    err << "error: " << error_code(e) << ": " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace vgcn::cli
